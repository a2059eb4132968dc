//! Daily single-price call auction.
//!
//! All of a day's orders for one token clear at one price. Volume is the
//! maximum over prices `p` of `min(demand_at(p), supply_at(p))`. Among the
//! volume-maximizing prices the engine keeps those at which every strictly
//! better order can fill in full, then those with the smallest
//! demand/supply imbalance, then the lowest contiguous run of what is
//! left; the clearing price is that run's midpoint rounded half up.
//! At-price orders on the heavy side are rationed by arrival index.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{AccountId, Ledger, LedgerError, TokenKind};

pub type OrderId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: OrderId,
    pub account: AccountId,
    pub token: TokenKind,
    pub side: Side,
    /// Currency units per token.
    pub price: u64,
    pub qty: u64,
    pub day: u32,
    /// Arrival index within the day; lower means earlier.
    pub arrival: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuctionError {
    #[error("order {order_id} has token {found}, book is {expected}")]
    MixedTokenBook {
        order_id: OrderId,
        expected: TokenKind,
        found: TokenKind,
    },
    #[error("order {order_id} is for day {found}, book is day {expected}")]
    MixedDayBook {
        order_id: OrderId,
        expected: u32,
        found: u32,
    },
    #[error("order {0} is on the wrong side of the book")]
    WrongSide(OrderId),
    #[error("order {0} has zero price or quantity")]
    NonPositive(OrderId),
    #[error("order {0}: insufficient tokens")]
    InsufficientTokens(OrderId),
    #[error("order {0}: insufficient currency")]
    InsufficientCurrency(OrderId),
    #[error("order {order_id}: {source}")]
    Ledger {
        order_id: OrderId,
        #[source]
        source: LedgerError,
    },
    #[error("settlement fault: {0}")]
    Settlement(String),
    #[error("order log line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl AuctionError {
    /// Order named by the error, when there is one.
    pub fn order_id(&self) -> Option<OrderId> {
        match self {
            AuctionError::MixedTokenBook { order_id, .. }
            | AuctionError::MixedDayBook { order_id, .. }
            | AuctionError::Ledger { order_id, .. } => Some(*order_id),
            AuctionError::WrongSide(id)
            | AuctionError::NonPositive(id)
            | AuctionError::InsufficientTokens(id)
            | AuctionError::InsufficientCurrency(id) => Some(*id),
            AuctionError::Settlement(_) | AuctionError::Parse { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderBook {
    pub day: u32,
    pub token: TokenKind,
    pub bids: Vec<Order>,
    pub asks: Vec<Order>,
}

impl OrderBook {
    pub fn new(day: u32, token: TokenKind) -> Self {
        Self {
            day,
            token,
            bids: Vec::new(),
            asks: Vec::new(),
        }
    }

    /// Sorts `orders` onto their sides. Errors if any order belongs to a
    /// different day or token.
    pub fn from_orders(
        day: u32,
        token: TokenKind,
        orders: impl IntoIterator<Item = Order>,
    ) -> Result<Self, AuctionError> {
        let mut book = Self::new(day, token);
        for o in orders {
            book.push(o)?;
        }
        Ok(book)
    }

    pub fn push(&mut self, order: Order) -> Result<(), AuctionError> {
        self.check(&order)?;
        match order.side {
            Side::Buy => self.bids.push(order),
            Side::Sell => self.asks.push(order),
        }
        Ok(())
    }

    fn check(&self, o: &Order) -> Result<(), AuctionError> {
        if o.token != self.token {
            return Err(AuctionError::MixedTokenBook {
                order_id: o.order_id,
                expected: self.token,
                found: o.token,
            });
        }
        if o.day != self.day {
            return Err(AuctionError::MixedDayBook {
                order_id: o.order_id,
                expected: self.day,
                found: o.day,
            });
        }
        if o.price == 0 || o.qty == 0 {
            return Err(AuctionError::NonPositive(o.order_id));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AuctionError> {
        for o in &self.bids {
            self.check(o)?;
            if o.side != Side::Buy {
                return Err(AuctionError::WrongSide(o.order_id));
            }
        }
        for o in &self.asks {
            self.check(o)?;
            if o.side != Side::Sell {
                return Err(AuctionError::WrongSide(o.order_id));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bids.len() + self.asks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    /// Total bid quantity with price >= `p`.
    pub fn demand_at(&self, p: u64) -> u64 {
        self.bids.iter().filter(|o| o.price >= p).map(|o| o.qty).sum()
    }

    /// Total ask quantity with price <= `p`.
    pub fn supply_at(&self, p: u64) -> u64 {
        self.asks.iter().filter(|o| o.price <= p).map(|o| o.qty).sum()
    }

    /// Step demand curve evaluated at each distinct bid price, ascending.
    pub fn demand_curve(&self) -> Vec<CurvePoint> {
        let prices: BTreeSet<u64> = self.bids.iter().map(|o| o.price).collect();
        prices
            .into_iter()
            .map(|p| CurvePoint {
                price: p,
                cumulative_qty: self.demand_at(p),
            })
            .collect()
    }

    /// Step supply curve evaluated at each distinct ask price, ascending.
    pub fn supply_curve(&self) -> Vec<CurvePoint> {
        let prices: BTreeSet<u64> = self.asks.iter().map(|o| o.price).collect();
        prices
            .into_iter()
            .map(|p| CurvePoint {
                price: p,
                cumulative_qty: self.supply_at(p),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub price: u64,
    pub cumulative_qty: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub order_id: OrderId,
    pub account: AccountId,
    pub side: Side,
    pub filled_qty: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub day: u32,
    pub token: TokenKind,
    pub price: Option<u64>,
    pub volume: u64,
    /// Orders with a positive fill, bids first, each side in time priority.
    pub fills: Vec<Fill>,
    /// Orders that received nothing, bids first, each side in time priority.
    pub rejected: Vec<OrderId>,
}

impl ClearingResult {
    pub fn filled_qty(&self, side: Side) -> u64 {
        self.fills
            .iter()
            .filter(|f| f.side == side)
            .map(|f| f.filled_qty)
            .sum()
    }

    pub fn contracted(&self, side: Side) -> usize {
        self.fills.iter().filter(|f| f.side == side).count()
    }
}

/// A run of consecutive integer prices over which both curves are flat.
#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: u64,
    hi: u64,
    volume: u64,
    imbalance: u64,
    feasible: bool,
}

fn segments(book: &OrderBook) -> Vec<Segment> {
    let prices: BTreeSet<u64> = book
        .bids
        .iter()
        .chain(&book.asks)
        .map(|o| o.price)
        .collect();
    let prices: Vec<u64> = prices.into_iter().collect();

    // Aggregate quantities per price level for O(n log n) evaluation.
    let mut bid_at: BTreeMap<u64, u64> = BTreeMap::new();
    let mut ask_at: BTreeMap<u64, u64> = BTreeMap::new();
    for o in &book.bids {
        *bid_at.entry(o.price).or_default() += o.qty;
    }
    for o in &book.asks {
        *ask_at.entry(o.price).or_default() += o.qty;
    }
    let total_bid: u64 = bid_at.values().sum();

    let mut out = Vec::with_capacity(prices.len() * 2);
    let mut bids_below = 0u64; // bid qty with price < current level
    let mut supply_below = 0u64; // ask qty with price < current level
    for (i, &p) in prices.iter().enumerate() {
        let at_bid = bid_at.get(&p).copied().unwrap_or(0);
        let at_ask = ask_at.get(&p).copied().unwrap_or(0);
        let demand = total_bid - bids_below;
        let supply = supply_below + at_ask;
        let strict_bids = demand - at_bid;
        let strict_asks = supply_below;
        let volume = demand.min(supply);
        out.push(Segment {
            lo: p,
            hi: p,
            volume,
            imbalance: demand.abs_diff(supply),
            feasible: strict_bids <= volume && strict_asks <= volume,
        });
        bids_below += at_bid;
        supply_below += at_ask;
        if let Some(&next) = prices.get(i + 1) {
            if next > p + 1 {
                // Strictly between levels nothing sits at the price.
                let demand = total_bid - bids_below;
                let supply = supply_below;
                let volume = demand.min(supply);
                out.push(Segment {
                    lo: p + 1,
                    hi: next - 1,
                    volume,
                    imbalance: demand.abs_diff(supply),
                    feasible: demand <= volume && supply <= volume,
                });
            }
        }
    }
    out
}

/// Chooses the clearing price and volume, or `None` if nothing crosses.
pub fn clearing_price(book: &OrderBook) -> Option<(u64, u64)> {
    let segs = segments(book);
    let volume = segs.iter().map(|s| s.volume).max().unwrap_or(0);
    if volume == 0 {
        return None;
    }
    let best_imbalance = segs
        .iter()
        .filter(|s| s.volume == volume && s.feasible)
        .map(|s| s.imbalance)
        .min()?;
    let mut run: Option<(u64, u64)> = None;
    for s in &segs {
        let keep = s.volume == volume && s.feasible && s.imbalance == best_imbalance;
        match run {
            // segments tile the price range, so consecutive ones are adjacent
            Some((lo, _)) if keep => run = Some((lo, s.hi)),
            Some(_) => break,
            None if keep => run = Some((s.lo, s.hi)),
            None => {}
        }
    }
    let (lo, hi) = run?;
    Some(((lo + hi).div_ceil(2), volume))
}

fn by_time(orders: &[Order]) -> Vec<&Order> {
    let mut v: Vec<&Order> = orders.iter().collect();
    v.sort_by_key(|o| (o.arrival, o.order_id));
    v
}

/// Clears one day's book for one token.
pub fn clear(book: &OrderBook) -> Result<ClearingResult, AuctionError> {
    book.validate()?;
    let mut result = ClearingResult {
        day: book.day,
        token: book.token,
        price: None,
        volume: 0,
        fills: Vec::new(),
        rejected: Vec::new(),
    };
    let Some((price, volume)) = clearing_price(book) else {
        result.rejected = by_time(&book.bids)
            .into_iter()
            .chain(by_time(&book.asks))
            .map(|o| o.order_id)
            .collect();
        return Ok(result);
    };
    result.price = Some(price);
    result.volume = volume;

    let fill_side = |orders: &[Order], side: Side, result: &mut ClearingResult| {
        let better = |o: &Order| match side {
            Side::Buy => o.price > price,
            Side::Sell => o.price < price,
        };
        let strict: u64 = orders.iter().filter(|o| better(o)).map(|o| o.qty).sum();
        let mut at_price: Vec<&Order> = orders.iter().filter(|o| o.price == price).collect();
        at_price.sort_by_key(|o| (o.arrival, o.order_id));
        let mut remaining = volume - strict;
        let mut fills: BTreeMap<OrderId, u64> = BTreeMap::new();
        for o in at_price {
            let q = remaining.min(o.qty);
            remaining -= q;
            fills.insert(o.order_id, q);
        }
        for o in by_time(orders) {
            let q = if better(o) {
                o.qty
            } else {
                fills.get(&o.order_id).copied().unwrap_or(0)
            };
            if q > 0 {
                result.fills.push(Fill {
                    order_id: o.order_id,
                    account: o.account.clone(),
                    side,
                    filled_qty: q,
                });
            } else {
                result.rejected.push(o.order_id);
            }
        }
    };
    fill_side(&book.bids, Side::Buy, &mut result);
    fill_side(&book.asks, Side::Sell, &mut result);
    debug_assert_eq!(result.filled_qty(Side::Buy), volume);
    debug_assert_eq!(result.filled_qty(Side::Sell), volume);
    Ok(result)
}

/// Per-day commitments of accepted orders, so that one account cannot
/// promise the same tokens or currency twice.
#[derive(Debug, Clone, Default)]
pub struct Escrow {
    tokens: BTreeMap<(AccountId, TokenKind), u64>,
    currency: BTreeMap<AccountId, u64>,
}

impl Escrow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reserved_tokens(&self, account: &AccountId, token: TokenKind) -> u64 {
        self.tokens
            .get(&(account.clone(), token))
            .copied()
            .unwrap_or(0)
    }

    pub fn reserved_currency(&self, account: &AccountId) -> u64 {
        self.currency.get(account).copied().unwrap_or(0)
    }

    /// Tokens still free to offer.
    pub fn free_tokens(&self, ledger: &Ledger, account: &AccountId, token: TokenKind) -> u64 {
        ledger
            .balance_of(account, token)
            .unwrap_or(0)
            .saturating_sub(self.reserved_tokens(account, token))
    }

    /// Currency still free to bid with.
    pub fn free_currency(&self, ledger: &Ledger, account: &AccountId) -> u64 {
        let cash = ledger.currency_of(account).unwrap_or(0).max(0) as u64;
        cash.saturating_sub(self.reserved_currency(account))
    }

    /// Accepts and escrows `order` or explains why it cannot be honoured.
    pub fn validate_order(&mut self, ledger: &Ledger, order: &Order) -> Result<(), AuctionError> {
        if order.price == 0 || order.qty == 0 {
            return Err(AuctionError::NonPositive(order.order_id));
        }
        ledger
            .balances(&order.account)
            .map_err(|source| AuctionError::Ledger {
                order_id: order.order_id,
                source,
            })?;
        match order.side {
            Side::Sell => {
                if self.free_tokens(ledger, &order.account, order.token) < order.qty {
                    return Err(AuctionError::InsufficientTokens(order.order_id));
                }
                *self
                    .tokens
                    .entry((order.account.clone(), order.token))
                    .or_default() += order.qty;
            }
            Side::Buy => {
                let cost = order
                    .price
                    .checked_mul(order.qty)
                    .ok_or(AuctionError::InsufficientCurrency(order.order_id))?;
                if self.free_currency(ledger, &order.account) < cost {
                    return Err(AuctionError::InsufficientCurrency(order.order_id));
                }
                *self.currency.entry(order.account.clone()).or_default() += cost;
            }
        }
        Ok(())
    }
}

/// Books a cleared day: tokens move seller to buyer and currency buyer to
/// seller at the clearing price. Buy and sell fills are paired greedily in
/// the order they appear in `result.fills`.
pub fn settle(ledger: &mut Ledger, result: &ClearingResult) -> Result<(), AuctionError> {
    let Some(price) = result.price else {
        return Ok(());
    };
    if result.volume == 0 {
        return Ok(());
    }
    let mut buys: Vec<(AccountId, u64)> = result
        .fills
        .iter()
        .filter(|f| f.side == Side::Buy)
        .map(|f| (f.account.clone(), f.filled_qty))
        .collect();
    let mut sells: Vec<(AccountId, u64)> = result
        .fills
        .iter()
        .filter(|f| f.side == Side::Sell)
        .map(|f| (f.account.clone(), f.filled_qty))
        .collect();
    let (mut bi, mut si) = (0, 0);
    let cause = format!("auction:{}", result.token);
    let fault = |e: LedgerError| AuctionError::Settlement(e.to_string());
    while bi < buys.len() && si < sells.len() {
        let q = buys[bi].1.min(sells[si].1);
        let (buyer, seller) = (&buys[bi].0, &sells[si].0);
        if buyer != seller {
            ledger
                .transfer(result.token, seller, buyer, q, result.day, &cause)
                .map_err(fault)?;
            ledger
                .pay(buyer, seller, q * price, result.day, &cause)
                .map_err(fault)?;
        }
        buys[bi].1 -= q;
        sells[si].1 -= q;
        if buys[bi].1 == 0 {
            bi += 1;
        }
        if sells[si].1 == 0 {
            si += 1;
        }
    }
    if bi != buys.len() || si != sells.len() {
        return Err(AuctionError::Settlement("unbalanced fills".into()));
    }
    Ok(())
}

/// Order log wire record. `order_id` is optional; missing ids are assigned
/// from the 1-based line number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_id: Option<OrderId>,
    pub day: u32,
    pub account: AccountId,
    pub token: TokenKind,
    pub side: Side,
    pub price: u64,
    pub qty: u64,
    pub arrival: u32,
}

impl From<&Order> for OrderRecord {
    fn from(o: &Order) -> Self {
        Self {
            order_id: Some(o.order_id),
            day: o.day,
            account: o.account.clone(),
            token: o.token,
            side: o.side,
            price: o.price,
            qty: o.qty,
            arrival: o.arrival,
        }
    }
}

/// Parses a JSON Lines order log.
pub fn read_orders<R: BufRead>(input: R) -> Result<Vec<Order>, AuctionError> {
    let mut orders = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| AuctionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: OrderRecord = serde_json::from_str(&line).map_err(|e| AuctionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.price == 0 || rec.qty == 0 {
            return Err(AuctionError::Parse {
                line: i + 1,
                message: "price and qty must be positive".into(),
            });
        }
        orders.push(Order {
            order_id: rec.order_id.unwrap_or(i as u64 + 1),
            account: rec.account,
            token: rec.token,
            side: rec.side,
            price: rec.price,
            qty: rec.qty,
            day: rec.day,
            arrival: rec.arrival,
        });
    }
    Ok(orders)
}

pub fn write_orders<W: std::io::Write>(orders: &[Order], mut out: W) -> std::io::Result<()> {
    for o in orders {
        let line = serde_json::to_string(&OrderRecord::from(o))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

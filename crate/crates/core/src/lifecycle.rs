//! The monthly protocol: issuance at the start of the month, daily
//! shortage issuance and auctions, and zero-net settlement at month end.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{self, AuctionError, ClearingResult, Escrow, Order, OrderBook, OrderId, Side};
use crate::ledger::{AccountId, Asset, Ledger, LedgerError, PerToken, TokenKind};

pub mod export;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonthConfig {
    pub days_in_month: u32,
    /// Dormitory headcount used to split last year's usage.
    pub num_students: u32,
    pub prev_year_usage_kwh: PerToken<u64>,
    pub base_price: PerToken<u64>,
    #[serde(default = "default_premium")]
    pub shortage_premium_factor: f64,
    #[serde(default = "default_discount")]
    pub settlement_discount_factor: f64,
    /// Month-end buyback price per token. Derived from the base price and
    /// the discount factor when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settlement_anchor: Option<PerToken<u64>>,
    /// Currency deposited to every student before issuance.
    #[serde(default)]
    pub initial_currency: u64,
    /// Robustness threshold handed through to the analysis stage.
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_premium() -> f64 {
    1.5
}

fn default_discount() -> f64 {
    0.8
}

fn default_theta() -> f64 {
    0.25
}

impl MonthConfig {
    pub fn validate(&self) -> Result<(), LifecycleError> {
        let bad = |m: &str| Err(LifecycleError::Config(m.to_owned()));
        if self.days_in_month == 0 {
            return bad("days_in_month must be positive");
        }
        if self.num_students == 0 {
            return bad("num_students must be positive");
        }
        if self.base_price.upx == 0 {
            return bad("base prices must be positive");
        }
        if self.base_price.spx <= self.base_price.upx {
            return bad("SPX base price must exceed the UPX base price");
        }
        if !(self.shortage_premium_factor > 1.0 && self.shortage_premium_factor.is_finite()) {
            return bad("shortage_premium_factor must be finite and above 1");
        }
        if !(self.settlement_discount_factor > 0.0 && self.settlement_discount_factor.is_finite()) {
            return bad("settlement_discount_factor must be finite and positive");
        }
        if let Some(a) = &self.settlement_anchor {
            if a.upx == 0 || a.spx == 0 {
                return bad("settlement anchor prices must be positive");
            }
        }
        if !(self.theta >= 0.0) {
            return bad("theta must be non-negative");
        }
        Ok(())
    }

    /// Tokens of `token` each student receives at the start of the month.
    pub fn allocation_per_student(&self, token: TokenKind) -> u64 {
        self.prev_year_usage_kwh.get(token) / self.num_students as u64
    }

    /// Price of a system shortage ask; strictly above base for any premium > 1.
    pub fn shortage_price(&self, token: TokenKind) -> u64 {
        let base = *self.base_price.get(token);
        let raw = (base as f64 * self.shortage_premium_factor - 1e-9).ceil() as u64;
        raw.max(base + 1)
    }

    /// Month-end buyback price.
    pub fn buyback_price(&self, token: TokenKind) -> u64 {
        match &self.settlement_anchor {
            Some(a) => *a.get(token),
            None => {
                let base = *self.base_price.get(token) as f64;
                ((base * self.settlement_discount_factor + 1e-9).floor() as u64).max(1)
            }
        }
    }

    /// Split of a cumulative token count into (UPX, SPX) following last
    /// year's grid/PV shares.
    pub fn split_consumption(&self, total: u64) -> PerToken<u64> {
        let u = self.prev_year_usage_kwh.upx as u128;
        let s = self.prev_year_usage_kwh.spx as u128;
        if u + s == 0 {
            return PerToken::new(total, 0);
        }
        let spx = (total as u128 * s / (u + s)) as u64;
        PerToken::new(total - spx, spx)
    }
}

#[derive(Debug, Error)]
pub enum LifecycleError {
    #[error("invalid month config: {0}")]
    Config(String),
    #[error("day {day}: {source}")]
    Ledger {
        day: u32,
        #[source]
        source: LedgerError,
    },
    #[error("day {day}: {source}")]
    Auction {
        day: u32,
        #[source]
        source: AuctionError,
    },
    #[error("day {day}: order source failed: {message}")]
    Source { day: u32, message: String },
}

#[derive(Clone, Copy)]
struct AtDay(u32);

impl AtDay {
    fn ledger(self) -> impl Fn(LedgerError) -> LifecycleError {
        move |source| LifecycleError::Ledger { day: self.0, source }
    }

    fn auction(self) -> impl Fn(AuctionError) -> LifecycleError {
        move |source| LifecycleError::Auction { day: self.0, source }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuanceReport {
    pub per_student: PerToken<u64>,
    pub minted: PerToken<u64>,
    pub retained_by_system: PerToken<u64>,
    /// Students who could not afford their full allocation: (account, token, tokens received).
    pub reduced: Vec<(AccountId, TokenKind, u64)>,
}

/// Deposits the configured starting currency into every student account.
pub fn fund_students(config: &MonthConfig, ledger: &mut Ledger) -> Result<(), LedgerError> {
    if config.initial_currency == 0 {
        return Ok(());
    }
    let students: Vec<AccountId> = ledger.students().cloned().collect();
    for s in &students {
        ledger.mint(Asset::Currency, s, config.initial_currency, 0, "deposit")?;
    }
    Ok(())
}

/// Start-of-month issuance: last year's usage is minted to the system and
/// each student buys `floor(usage / num_students)` tokens at base price.
/// Students short of currency receive what they can afford.
pub fn issue_monthly(config: &MonthConfig, ledger: &mut Ledger) -> Result<IssuanceReport, LedgerError> {
    let system = AccountId::system();
    let students: Vec<AccountId> = ledger.students().cloned().collect();
    let mut report = IssuanceReport::default();
    for token in TokenKind::ALL {
        let total = *config.prev_year_usage_kwh.get(token);
        let alloc = config.allocation_per_student(token);
        *report.per_student.get_mut(token) = alloc;
        if total == 0 {
            continue;
        }
        ledger.mint(token.into(), &system, total, 1, "issue")?;
        *report.minted.get_mut(token) = total;
        if alloc == 0 {
            *report.retained_by_system.get_mut(token) = total;
            continue;
        }
        let price = *config.base_price.get(token);
        let mut handed_out = 0;
        for s in &students {
            let cash = ledger.currency_of(s)?.max(0) as u64;
            let qty = alloc.min(cash / price);
            if qty < alloc {
                report.reduced.push((s.clone(), token, qty));
            }
            if qty == 0 {
                continue;
            }
            ledger.transfer(token, &system, s, qty, 1, "issue")?;
            ledger.pay(s, &system, qty * price, 1, "issue")?;
            handed_out += qty;
        }
        *report.retained_by_system.get_mut(token) = total - handed_out;
    }
    Ok(report)
}

/// System asks for every token whose student holdings fall short of the
/// forecast demand. Order ids and arrival indices are left at zero for the
/// caller to assign.
pub fn shortage_issue(
    config: &MonthConfig,
    ledger: &Ledger,
    forecast: &PerToken<u64>,
    day: u32,
) -> Vec<Order> {
    TokenKind::ALL
        .into_iter()
        .filter_map(|token| {
            let remaining = ledger.aggregate_remaining(token);
            let need = *forecast.get(token);
            (remaining < need).then(|| Order {
                order_id: 0,
                account: AccountId::system(),
                token,
                side: Side::Sell,
                price: config.shortage_price(token),
                qty: need - remaining,
                day,
                arrival: 0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSettlement {
    /// Total student surplus bought back.
    pub surplus: u64,
    /// Total uncovered consumption sold to students.
    pub deficit: u64,
    pub buy_price: u64,
    pub sell_price: u64,
    /// sell_price × deficit (billed).
    pub revenue: u64,
    /// buy_price × surplus.
    pub cost: u64,
    /// revenue − cost.
    pub residue: i64,
    /// Change in the system's currency over this leg.
    pub reserve_delta: i64,
    /// Deficit bills students could not pay.
    pub debts: Vec<(AccountId, u64)>,
    /// Whether both legs existed so that zero net was attainable.
    pub zero_net_feasible: bool,
    /// Tokens minted because the system held too few to cover deficits.
    pub minted: u64,
}

/// Month-end settlement. `uncovered` maps each student to consumption that
/// was not backed by tokens during the month.
pub fn settle_month(
    config: &MonthConfig,
    ledger: &mut Ledger,
    uncovered: &BTreeMap<AccountId, PerToken<u64>>,
) -> Result<PerToken<TokenSettlement>, LedgerError> {
    let day = config.days_in_month;
    let system = AccountId::system();
    let students: Vec<AccountId> = ledger.students().cloned().collect();
    let mut out: PerToken<TokenSettlement> = PerToken::default();
    for token in TokenKind::ALL {
        let surplus: Vec<(AccountId, u64)> = students
            .iter()
            .map(|s| Ok((s.clone(), ledger.balance_of(s, token)?)))
            .collect::<Result<Vec<_>, LedgerError>>()?
            .into_iter()
            .filter(|(_, q)| *q > 0)
            .collect();
        let deficit: Vec<(AccountId, u64)> = uncovered
            .iter()
            .map(|(s, d)| (s.clone(), *d.get(token)))
            .filter(|(_, q)| *q > 0)
            .collect();
        let s_total: u64 = surplus.iter().map(|(_, q)| q).sum();
        let d_total: u64 = deficit.iter().map(|(_, q)| q).sum();
        let b = config.buyback_price(token);
        let zero_net_feasible = s_total > 0 && d_total > 0;
        let sell = if zero_net_feasible {
            // round half up of S·b / D
            let num = s_total as u128 * b as u128;
            ((2 * num + d_total as u128) / (2 * d_total as u128)) as u64
        } else {
            b
        };
        let reserve_before = ledger.currency_of(&system)?;
        let mut leg = TokenSettlement {
            surplus: s_total,
            deficit: d_total,
            buy_price: b,
            sell_price: sell,
            revenue: sell * d_total,
            cost: b * s_total,
            zero_net_feasible,
            ..Default::default()
        };
        leg.residue = leg.revenue as i64 - leg.cost as i64;

        for (s, q) in &surplus {
            ledger.transfer(token, s, &system, *q, day, "settlement:buyback")?;
            ledger.pay(&system, s, q * b, day, "settlement:buyback")?;
        }
        let held = ledger.balance_of(&system, token)?;
        if held < d_total {
            ledger.mint(token.into(), &system, d_total - held, day, "settlement:issue")?;
            leg.minted = d_total - held;
        }
        for (s, q) in &deficit {
            ledger.transfer(token, &system, s, *q, day, "settlement:sale")?;
            ledger.burn(token.into(), s, *q, day, "consume")?;
            let bill = q * sell;
            let cash = ledger.currency_of(s)?.max(0) as u64;
            let paid = bill.min(cash);
            if paid > 0 {
                ledger.pay(s, &system, paid, day, "settlement:sale")?;
            }
            if paid < bill {
                leg.debts.push((s.clone(), bill - paid));
            }
        }
        leg.reserve_delta = ledger.currency_of(&system)? - reserve_before;
        *out.get_mut(token) = leg;
    }
    Ok(out)
}

/// A student order before the lifecycle assigns its id and arrival index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRequest {
    pub account: AccountId,
    pub token: TokenKind,
    pub side: Side,
    pub price: u64,
    pub qty: u64,
}

/// What an order source sees when asked for a day's orders.
pub struct DayView<'a> {
    pub day: u32,
    pub config: &'a MonthConfig,
    pub ledger: &'a Ledger,
    pub last_price: PerToken<u64>,
    /// Tokens consumed so far this month per student, backed or not.
    pub consumed_to_date: &'a BTreeMap<AccountId, PerToken<u64>>,
}

impl DayView<'_> {
    /// Days left including today.
    pub fn remaining_days(&self) -> u32 {
        self.config.days_in_month + 1 - self.day
    }

    /// Expected daily token consumption of `student`: the month-to-date
    /// mean, or last year's per-student daily mean before any data exists.
    pub fn projected_daily(&self, student: &AccountId) -> PerToken<f64> {
        let elapsed = self.day - 1;
        match self.consumed_to_date.get(student) {
            Some(c) if elapsed > 0 => c.map(|_, v| *v as f64 / elapsed as f64),
            _ => prev_year_daily_mean(self.config),
        }
    }
}

fn prev_year_daily_mean(config: &MonthConfig) -> PerToken<f64> {
    config.prev_year_usage_kwh.map(|_, v| {
        *v as f64 / config.num_students as f64 / config.days_in_month as f64
    })
}

/// Supplies the students of a month, their daily meter readings, and their
/// daily orders.
pub trait OrderSource {
    fn students(&self) -> Vec<AccountId>;

    /// kWh consumed on `day` by each student. Missing students consumed 0.
    fn usage(&mut self, day: u32) -> Result<BTreeMap<AccountId, f64>, String>;

    fn orders(&mut self, view: &DayView<'_>) -> Result<Vec<OrderRequest>, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedOrder {
    pub order: Order,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: u32,
    pub forecast: PerToken<u64>,
    pub aggregate_remaining: PerToken<u64>,
    pub books: PerToken<OrderBook>,
    pub results: PerToken<ClearingResult>,
    /// Orders that failed validation and never reached the book.
    pub invalid: Vec<RejectedOrder>,
    /// Raw meter reading per student.
    pub usage_kwh: BTreeMap<AccountId, f64>,
    /// Whole tokens consumed per student.
    pub consumed: BTreeMap<AccountId, PerToken<u64>>,
    /// Ledger sequence number after the day closed.
    pub last_seq: u64,
}

impl DayRecord {
    pub fn traded(&self) -> bool {
        TokenKind::ALL.iter().any(|t| self.results.get(*t).volume > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    /// Content hash of the run; ties analysis outputs to their record.
    pub run_id: String,
    pub config: MonthConfig,
    pub students: Vec<AccountId>,
    pub issuance: IssuanceReport,
    pub days: Vec<DayRecord>,
    pub settlement: PerToken<TokenSettlement>,
    /// Ledger sequence number right after issuance.
    pub issuance_seq: u64,
    #[serde(skip)]
    pub ledger: Ledger,
}

impl MonthRecord {
    pub fn day(&self, day: u32) -> Option<&DayRecord> {
        day.checked_sub(1)
            .and_then(|i| self.days.get(i as usize))
            .filter(|d| d.day == day)
    }

    /// Results for one token in day order.
    pub fn results(&self, token: TokenKind) -> Vec<ClearingResult> {
        self.days.iter().map(|d| d.results.get(token).clone()).collect()
    }
}

fn whole_tokens(kwh: f64) -> u64 {
    if kwh.is_finite() && kwh > 0.0 {
        // tolerate float noise in readings that are integral in intent
        (kwh - 1e-9).ceil() as u64
    } else {
        0
    }
}

/// Runs one month end to end.
pub fn run_month(config: &MonthConfig, source: &mut dyn OrderSource) -> Result<MonthRecord, LifecycleError> {
    config.validate()?;
    let students = source.students();
    let mut ledger = Ledger::with_students(students.iter().cloned()).map_err(AtDay(0).ledger())?;
    fund_students(config, &mut ledger).map_err(AtDay(0).ledger())?;
    let issuance = issue_monthly(config, &mut ledger).map_err(AtDay(1).ledger())?;
    let issuance_seq = ledger.last_seq();

    let mut last_price = config.base_price;
    let mut next_id: OrderId = 1;
    let mut consumed_to_date: BTreeMap<AccountId, PerToken<u64>> =
        students.iter().map(|s| (s.clone(), PerToken::default())).collect();
    let mut total_to_date: BTreeMap<AccountId, u64> =
        students.iter().map(|s| (s.clone(), 0)).collect();
    let mut uncovered: BTreeMap<AccountId, PerToken<u64>> = BTreeMap::new();
    let mut days = Vec::with_capacity(config.days_in_month as usize);
    let n = config.days_in_month;
    let system = AccountId::system();

    for day in 1..=n {
        let ctx = AtDay(day);
        let remaining_days = (n + 1 - day) as u64;
        let forecast = if day == 1 {
            let mean = prev_year_daily_mean(config);
            mean.map(|_, m| (m * students.len() as f64 * remaining_days as f64 - 1e-9).ceil().max(0.0) as u64)
        } else {
            let mut sum = PerToken::<u64>::default();
            for c in consumed_to_date.values() {
                sum.upx += c.upx;
                sum.spx += c.spx;
            }
            sum.map(|_, v| (*v * remaining_days).div_ceil((day - 1) as u64))
        };
        let aggregate_remaining =
            PerToken::new(ledger.aggregate_remaining(TokenKind::Upx), ledger.aggregate_remaining(TokenKind::Spx));

        let mut orders = shortage_issue(config, &ledger, &forecast, day);
        for o in &orders {
            let held = ledger.balance_of(&system, o.token).map_err(ctx.ledger())?;
            if held < o.qty {
                ledger
                    .mint(o.token.into(), &system, o.qty - held, day, "shortage_issue")
                    .map_err(ctx.ledger())?;
            }
        }
        let view = DayView {
            day,
            config,
            ledger: &ledger,
            last_price,
            consumed_to_date: &consumed_to_date,
        };
        let requests = source
            .orders(&view)
            .map_err(|message| LifecycleError::Source { day, message })?;
        orders.extend(requests.into_iter().map(|r| Order {
            order_id: 0,
            account: r.account,
            token: r.token,
            side: r.side,
            price: r.price,
            qty: r.qty,
            day,
            arrival: 0,
        }));
        for (arrival, o) in orders.iter_mut().enumerate() {
            o.order_id = next_id;
            o.arrival = arrival as u32;
            next_id += 1;
        }

        let mut escrow = Escrow::new();
        let mut books = PerToken::new(OrderBook::new(day, TokenKind::Upx), OrderBook::new(day, TokenKind::Spx));
        let mut invalid = Vec::new();
        for o in orders {
            match escrow.validate_order(&ledger, &o) {
                Ok(()) => books.get_mut(o.token).push(o).map_err(ctx.auction())?,
                Err(e) => invalid.push(RejectedOrder {
                    reason: e.to_string(),
                    order: o,
                }),
            }
        }
        let mut results = PerToken::new(
            auction::clear(&books.upx).map_err(ctx.auction())?,
            auction::clear(&books.spx).map_err(ctx.auction())?,
        );
        for token in TokenKind::ALL {
            let r = results.get_mut(token);
            auction::settle(&mut ledger, r).map_err(ctx.auction())?;
            if let Some(p) = r.price {
                *last_price.get_mut(token) = p;
            }
        }

        let usage_kwh = source
            .usage(day)
            .map_err(|message| LifecycleError::Source { day, message })?;
        let mut consumed = BTreeMap::new();
        for s in &students {
            let kwh = usage_kwh.get(s).copied().unwrap_or(0.0);
            let before = config.split_consumption(total_to_date[s]);
            let total = total_to_date[s] + whole_tokens(kwh);
            total_to_date.insert(s.clone(), total);
            let after = config.split_consumption(total);
            let today = PerToken::new(after.upx - before.upx, after.spx - before.spx);
            for token in TokenKind::ALL {
                let need = *today.get(token);
                let have = ledger.balance_of(s, token).map_err(ctx.ledger())?;
                let burn = need.min(have);
                if burn > 0 {
                    ledger.burn(token.into(), s, burn, day, "consume").map_err(ctx.ledger())?;
                }
                if need > burn {
                    *uncovered.entry(s.clone()).or_default().get_mut(token) += need - burn;
                }
                *consumed_to_date.get_mut(s).expect("roster").get_mut(token) += need;
            }
            consumed.insert(s.clone(), today);
        }

        days.push(DayRecord {
            day,
            forecast,
            aggregate_remaining,
            books,
            results,
            invalid,
            usage_kwh,
            consumed,
            last_seq: ledger.last_seq(),
        });
    }

    let settlement = settle_month(config, &mut ledger, &uncovered).map_err(AtDay(n).ledger())?;
    let mut record = MonthRecord {
        run_id: String::new(),
        config: config.clone(),
        students,
        issuance,
        days,
        settlement,
        issuance_seq,
        ledger,
    };
    record.run_id = export::content_hash(&record);
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn config() -> MonthConfig {
        MonthConfig {
            days_in_month: 3,
            num_students: 80,
            prev_year_usage_kwh: PerToken::new(8000, 800),
            base_price: PerToken::new(10, 15),
            shortage_premium_factor: 1.5,
            settlement_discount_factor: 0.8,
            settlement_anchor: None,
            initial_currency: 10_000,
            theta: 0.25,
        }
    }

    fn students(n: usize) -> Ledger {
        Ledger::with_students((0..n).map(|i| AccountId::new(format!("s{i:02}")))).unwrap()
    }

    #[test]
    fn issuance_floor_division() {
        let mut cfg = config();
        cfg.prev_year_usage_kwh = PerToken::new(8050, 0);
        let mut l = students(80);
        fund_students(&cfg, &mut l).unwrap();
        let rep = issue_monthly(&cfg, &mut l).unwrap();
        assert_eq!(rep.per_student.upx, 100);
        assert_eq!(rep.retained_by_system.upx, 50);
        assert_eq!(l.balance_of(&AccountId::system(), TokenKind::Upx).unwrap(), 50);
        assert!(l.students().all(|s| l.balance_of(s, TokenKind::Upx).unwrap() == 100));
        assert!(rep.reduced.is_empty());
        assert_eq!(l.currency_of(&"s00".into()).unwrap(), 10_000 - 1000);
    }

    #[test]
    fn zero_prev_year_usage_issues_nothing() {
        let mut cfg = config();
        cfg.prev_year_usage_kwh = PerToken::new(0, 0);
        let mut l = students(3);
        let before = l.log().len();
        issue_monthly(&cfg, &mut l).unwrap();
        assert_eq!(l.log().len(), before);
    }

    #[test]
    fn unaffordable_allocation_is_reduced() {
        let mut cfg = config();
        cfg.initial_currency = 305; // 30 UPX at 10, nothing left for SPX at 15
        let mut l = students(80);
        fund_students(&cfg, &mut l).unwrap();
        let rep = issue_monthly(&cfg, &mut l).unwrap();
        assert_eq!(l.balance_of(&"s00".into(), TokenKind::Upx).unwrap(), 30);
        assert_eq!(l.balance_of(&"s00".into(), TokenKind::Spx).unwrap(), 0);
        assert_eq!(rep.reduced.len(), 160);
        assert!(l.supply_identity_holds());
    }

    #[test]
    fn shortage_rules() {
        let cfg = config();
        let mut l = students(2);
        l.mint(Asset::Upx, &"s00".into(), 500, 1, "i").unwrap();
        assert!(shortage_issue(&cfg, &l, &PerToken::new(400, 0), 1).is_empty());

        let mut l = students(1);
        l.mint(Asset::Upx, &"s00".into(), 100, 1, "i").unwrap();
        let asks = shortage_issue(&cfg, &l, &PerToken::new(400, 0), 1);
        assert_eq!(asks.len(), 1);
        assert_eq!((asks[0].price, asks[0].qty, asks[0].side), (15, 300, Side::Sell));
        assert!(asks[0].account.is_system());

        // SPX short, UPX in surplus
        let asks = shortage_issue(&cfg, &l, &PerToken::new(50, 10), 1);
        assert_eq!(asks.len(), 1);
        assert_eq!(asks[0].token, TokenKind::Spx);
        assert!(asks[0].price > cfg.base_price.spx);
    }

    #[test]
    fn shortage_price_strictly_above_base() {
        let mut cfg = config();
        cfg.shortage_premium_factor = 1.01;
        assert_eq!(cfg.shortage_price(TokenKind::Upx), 11);
    }

    fn settlement_ledger(surplus: &[u64]) -> Ledger {
        let mut l = students(surplus.len().max(2));
        for (i, q) in surplus.iter().enumerate() {
            let id = AccountId::new(format!("s{i:02}"));
            l.mint(Asset::Currency, &id, 10_000, 0, "deposit").unwrap();
            if *q > 0 {
                l.mint(Asset::Upx, &id, *q, 1, "issue").unwrap();
            }
        }
        l
    }

    #[test]
    fn settlement_zero_net_solution() {
        let mut cfg = config();
        cfg.settlement_anchor = Some(PerToken::new(8, 12));
        let mut l = settlement_ledger(&[100, 0]);
        let uncovered = BTreeMap::from([(AccountId::new("s01"), PerToken::new(50, 0))]);
        let out = settle_month(&cfg, &mut l, &uncovered).unwrap();
        let leg = &out.upx;
        assert_eq!((leg.surplus, leg.deficit), (100, 50));
        assert_eq!(leg.sell_price, 16);
        assert_eq!(leg.residue, 0);
        assert_eq!(leg.reserve_delta, 0);
        assert!(l.students().all(|s| l.balance_of(s, TokenKind::Upx).unwrap() == 0));
        assert!(l.supply_identity_holds());
    }

    #[test]
    fn settlement_nothing_to_do() {
        let cfg = config();
        let mut l = settlement_ledger(&[0, 0]);
        let before = l.log().len();
        let out = settle_month(&cfg, &mut l, &BTreeMap::new()).unwrap();
        assert_eq!(l.log().len(), before);
        assert_eq!(out.upx.residue, 0);
    }

    #[test]
    fn one_sided_settlement_books_residue() {
        let cfg = config();
        let mut l = settlement_ledger(&[100, 0]);
        let out = settle_month(&cfg, &mut l, &BTreeMap::new()).unwrap();
        let b = cfg.buyback_price(TokenKind::Upx);
        assert_eq!(b, 8);
        assert!(!out.upx.zero_net_feasible);
        assert_eq!(out.upx.cost, 100 * b);
        assert_eq!(out.upx.residue, -(100 * b as i64));
        assert_eq!(out.upx.reserve_delta, out.upx.residue);
    }

    #[test]
    fn unpaid_deficit_becomes_debt() {
        let cfg = config();
        let mut l = students(2);
        l.mint(Asset::Upx, &"s00".into(), 10, 1, "i").unwrap();
        let uncovered = BTreeMap::from([(AccountId::new("s01"), PerToken::new(10, 0))]);
        let out = settle_month(&cfg, &mut l, &uncovered).unwrap();
        assert_eq!(out.upx.debts, vec![(AccountId::new("s01"), 80)]);
        assert_eq!(out.upx.reserve_delta, out.upx.residue - 80);
    }

    #[test]
    fn consumption_split_tracks_shares() {
        let cfg = config(); // 8000 : 800
        let s = cfg.split_consumption(22);
        assert_eq!((s.upx, s.spx), (20, 2));
        assert_eq!(whole_tokens(7.2), 8);
        assert_eq!(whole_tokens(7.0), 7);
        assert_eq!(whole_tokens(0.0), 0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config();
        cfg.base_price = PerToken::new(10, 10);
        assert!(cfg.validate().is_err());
        let mut cfg = config();
        cfg.num_students = 0;
        assert!(cfg.validate().is_err());
        assert!(config().validate().is_ok());
    }
}

//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use edisonx::auction::{self, ClearingResult, Order, OrderBook, Side};
use edisonx::ledger::{AccountId, PerToken, TokenKind};
use edisonx::lifecycle::{self, DayView, MonthConfig, MonthRecord, OrderRequest, OrderSource};
use edisonx::tda::PersistencePair;
use rand::Rng;

// ---------------------------------------------------------------- auction

pub fn order(id: u64, side: Side, price: u64, qty: u64) -> Order {
    Order {
        order_id: id,
        account: AccountId::new(format!("u{id}")),
        token: TokenKind::Upx,
        side,
        price,
        qty,
        day: 1,
        arrival: id as u32,
    }
}

pub fn random_book<R: Rng>(rng: &mut R, max_orders: usize, max_price: u64, max_qty: u64) -> OrderBook {
    let n = rng.random_range(0..=max_orders);
    let orders = (0..n).map(|i| {
        let side = if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
        order(i as u64 + 1, side, rng.random_range(1..=max_price), rng.random_range(1..=max_qty))
    });
    OrderBook::from_orders(1, TokenKind::Upx, orders.collect::<Vec<_>>()).unwrap()
}

/// Largest tradable quantity over every integer price, by direct summation.
pub fn brute_force_volume(book: &OrderBook) -> u64 {
    let top = book.bids.iter().chain(&book.asks).map(|o| o.price).max().unwrap_or(0);
    (0..=top + 1)
        .map(|p| {
            let d: u64 = book.bids.iter().filter(|o| o.price >= p).map(|o| o.qty).sum();
            let s: u64 = book.asks.iter().filter(|o| o.price <= p).map(|o| o.qty).sum();
            d.min(s)
        })
        .max()
        .unwrap_or(0)
}

/// Acceptance rules of a cleared book: only bids at or above and asks at or
/// below the price trade, strictly better orders fill in full, both sides
/// fill the volume, at-price rationing follows arrival.
pub fn check_clearing_rules(book: &OrderBook, r: &ClearingResult) -> Result<(), String> {
    let filled: BTreeMap<u64, u64> = r.fills.iter().map(|f| (f.order_id, f.filled_qty)).collect();
    if r.filled_qty(Side::Buy) != r.volume || r.filled_qty(Side::Sell) != r.volume {
        return Err(format!("sides do not both fill the volume {}", r.volume));
    }
    let Some(p) = r.price else {
        return if r.volume == 0 && r.fills.is_empty() {
            Ok(())
        } else {
            Err("fills without a price".into())
        };
    };
    if r.volume == 0 {
        return Err("price without volume".into());
    }
    let d: u64 = book.bids.iter().filter(|o| o.price >= p).map(|o| o.qty).sum();
    let s: u64 = book.asks.iter().filter(|o| o.price <= p).map(|o| o.qty).sum();
    if d.min(s) != r.volume {
        return Err(format!("volume {} is not tradable at price {p}", r.volume));
    }
    for (orders, side) in [(&book.bids, Side::Buy), (&book.asks, Side::Sell)] {
        let mut at_price: Vec<&Order> = Vec::new();
        for o in orders.iter() {
            let q = filled.get(&o.order_id).copied().unwrap_or(0);
            if q > o.qty {
                return Err(format!("order {} overfilled", o.order_id));
            }
            let (eligible, strict) = match side {
                Side::Buy => (o.price >= p, o.price > p),
                Side::Sell => (o.price <= p, o.price < p),
            };
            if !eligible && q > 0 {
                return Err(format!("order {} trades on the wrong side of {p}", o.order_id));
            }
            if strict && q != o.qty {
                return Err(format!("strictly better order {} not filled in full", o.order_id));
            }
            if eligible && !strict {
                at_price.push(o);
            }
        }
        at_price.sort_by_key(|o| (o.arrival, o.order_id));
        // once an at-price order is short, every later one gets nothing
        let mut short = false;
        for o in at_price {
            let q = filled.get(&o.order_id).copied().unwrap_or(0);
            if short && q > 0 {
                return Err(format!("order {} filled ahead of an earlier arrival", o.order_id));
            }
            if q < o.qty {
                short = true;
            }
        }
    }
    Ok(())
}

// -------------------------------------------------------------------- tda

pub type Pt = (f64, f64);

fn dist(a: Pt, b: Pt) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Smallest enclosing circle radius by trying every candidate circle: the
/// three diametral circles and the circumcircle.
pub fn oracle_radius3(a: Pt, b: Pt, c: Pt) -> f64 {
    let pts = [a, b, c];
    let mut best = f64::INFINITY;
    for (i, j, k) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)] {
        let centre = ((pts[i].0 + pts[j].0) / 2.0, (pts[i].1 + pts[j].1) / 2.0);
        let r = dist(pts[i], pts[j]) / 2.0;
        if dist(centre, pts[k]) <= r * (1.0 + 1e-12) + 1e-15 {
            best = best.min(r);
        }
    }
    let d = 2.0 * (a.0 * (b.1 - c.1) + b.0 * (c.1 - a.1) + c.0 * (a.1 - b.1));
    if d.abs() > 1e-14 {
        let sa = a.0 * a.0 + a.1 * a.1;
        let sb = b.0 * b.0 + b.1 * b.1;
        let sc = c.0 * c.0 + c.1 * c.1;
        let ux = (sa * (b.1 - c.1) + sb * (c.1 - a.1) + sc * (a.1 - b.1)) / d;
        let uy = (sa * (c.0 - b.0) + sb * (a.0 - c.0) + sc * (b.0 - a.0)) / d;
        best = best.min(dist((ux, uy), a));
    }
    best
}

/// The complex with values computed independently of the library.
pub struct OracleComplex {
    pub n: usize,
    pub edges: Vec<((usize, usize), f64)>,
    pub triangles: Vec<((usize, usize, usize), f64)>,
}

impl OracleComplex {
    pub fn new(points: &[Pt]) -> Self {
        let n = points.len();
        let mut edges = Vec::new();
        let mut ev = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = dist(points[i], points[j]) / 2.0;
                ev[i][j] = v;
                edges.push(((i, j), v));
            }
        }
        let mut triangles = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let v = oracle_radius3(points[i], points[j], points[k]).max(ev[i][j]).max(ev[i][k]).max(ev[j][k]);
                    triangles.push(((i, j, k), v));
                }
            }
        }
        Self { n, edges, triangles }
    }

    pub fn critical_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = std::iter::once(0.0)
            .chain(self.edges.iter().map(|e| e.1))
            .chain(self.triangles.iter().map(|t| t.1))
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= TOL);
        v
    }

    fn edge_index(&self) -> BTreeMap<(usize, usize), usize> {
        self.edges.iter().enumerate().map(|(i, e)| (e.0, i)).collect()
    }

    /// Rank of ∂1 over edges alive at `r`.
    fn rank_d1(&self, r: f64) -> usize {
        let cols: Vec<u128> = self
            .edges
            .iter()
            .filter(|e| e.1 <= r + TOL)
            .map(|((i, j), _)| (1u128 << i) | (1u128 << j))
            .collect();
        gf2_rank(cols)
    }

    /// Rank of ∂2 over triangles alive at `b`, after deleting the rows of
    /// edges alive at `a` when `mask_a` is given.
    fn rank_d2(&self, b: f64, mask_a: Option<f64>) -> usize {
        let idx = self.edge_index();
        let keep = |e: usize| match mask_a {
            Some(a) => self.edges[e].1 > a + TOL,
            None => true,
        };
        let cols: Vec<u128> = self
            .triangles
            .iter()
            .filter(|t| t.1 <= b + TOL)
            .map(|((i, j, k), _)| {
                [idx[&(*i, *j)], idx[&(*i, *k)], idx[&(*j, *k)]]
                    .into_iter()
                    .filter(|e| keep(*e))
                    .fold(0u128, |acc, e| acc | (1u128 << e))
            })
            .collect();
        gf2_rank(cols)
    }

    fn count_alive<T>(items: &[(T, f64)], r: f64) -> usize {
        items.iter().filter(|x| x.1 <= r + TOL).count()
    }

    /// β_p^{a,b}: classes born by `a` still alive at `b` (a ≤ b).
    pub fn persistent_betti(&self, p: u8, a: f64, b: f64) -> usize {
        match p {
            0 => {
                // Z0(K_a) = all vertices; B0(K_b) ∩ C0(K_a) = B0(K_b)
                self.n - self.rank_d1(b)
            }
            1 => {
                let z = Self::count_alive(&self.edges, a) - self.rank_d1(a);
                let boundary_in_a = self.rank_d2(b, None) - self.rank_d2(b, Some(a));
                z - boundary_in_a
            }
            _ => unreachable!(),
        }
    }

    /// Betti numbers (β0, β1, β2) of the complex at `r`.
    pub fn betti(&self, r: f64) -> (usize, usize, usize) {
        let e = Self::count_alive(&self.edges, r);
        let t = Self::count_alive(&self.triangles, r);
        let r1 = self.rank_d1(r);
        let r2 = self.rank_d2(r, None);
        (self.n - r1, e - r1 - r2, t - r2)
    }

    pub fn euler(&self, r: f64) -> i64 {
        self.n as i64 - Self::count_alive(&self.edges, r) as i64 + Self::count_alive(&self.triangles, r) as i64
    }
}

pub const TOL: f64 = 1e-9;

/// Rank over GF(2) of columns stored as bitsets.
pub fn gf2_rank(mut cols: Vec<u128>) -> usize {
    let mut rank = 0;
    for bit in 0..128 {
        let mask = 1u128 << bit;
        let Some(pos) = cols.iter().position(|c| c & mask != 0) else {
            continue;
        };
        let pivot = cols.swap_remove(pos);
        for c in cols.iter_mut() {
            if *c & mask != 0 {
                *c ^= pivot;
            }
        }
        rank += 1;
    }
    rank
}

fn pairs_alive(pairs: &[PersistencePair], dim: u8, a: f64, b: f64) -> usize {
    pairs
        .iter()
        .filter(|p| p.dim == dim && p.birth <= a + TOL && p.death > b + TOL)
        .count()
}

/// Compares a library diagram with the rank oracle at every pair of
/// critical values a ≤ b, and checks the vertex count of H0.
pub fn check_against_rank_oracle(points: &[Pt], pairs: &[PersistencePair]) -> Result<(), String> {
    let cx = OracleComplex::new(points);
    let h0 = pairs.iter().filter(|p| p.dim == 0).count();
    if h0 != points.len() {
        return Err(format!("{h0} H0 pairs for {} points", points.len()));
    }
    if pairs.iter().any(|p| p.dim > 1 || !(p.birth <= p.death)) {
        return Err("malformed pair".into());
    }
    let crit = cx.critical_values();
    for (ia, &a) in crit.iter().enumerate() {
        for &b in &crit[ia..] {
            for dim in [0u8, 1] {
                let want = cx.persistent_betti(dim, a, b);
                let got = pairs_alive(pairs, dim, a, b);
                if want != got {
                    return Err(format!("beta_{dim}^({a},{b}): oracle {want}, diagram {got}"));
                }
            }
        }
    }
    // nothing is born or dies away from a critical value
    for p in pairs {
        let on = |v: f64| v.is_infinite() || crit.iter().any(|c| (c - v).abs() <= TOL);
        if !on(p.birth) || !on(p.death) {
            return Err(format!("pair {p:?} off the critical values"));
        }
    }
    Ok(())
}

/// V − E + T = β0 − β1 + β2 at every critical radius, with β0 and β1 read
/// off the diagram and β2 from the rank oracle.
pub fn check_euler(points: &[Pt], pairs: &[PersistencePair]) -> Result<(), String> {
    let cx = OracleComplex::new(points);
    for r in cx.critical_values() {
        let b0 = pairs_alive(pairs, 0, r, r) as i64;
        let b1 = pairs_alive(pairs, 1, r, r) as i64;
        let (_, _, b2) = cx.betti(r);
        let chi = cx.euler(r);
        if chi != b0 - b1 + b2 as i64 {
            return Err(format!("r={r}: chi {chi} != {b0} - {b1} + {b2}"));
        }
    }
    Ok(())
}

/// Multiset equality of pairs up to `tol` on birth and death.
pub fn same_pairs(a: &[PersistencePair], b: &[PersistencePair], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let close = |x: f64, y: f64| (x.is_infinite() && y.is_infinite() && x == y) || (x - y).abs() <= tol;
    let mut used = vec![false; b.len()];
    a.iter().all(|p| {
        let hit = b
            .iter()
            .enumerate()
            .position(|(i, q)| !used[i] && q.dim == p.dim && close(p.birth, q.birth) && close(p.death, q.death));
        match hit {
            Some(i) => {
                used[i] = true;
                true
            }
            None => false,
        }
    })
}

pub fn random_cloud<R: Rng>(rng: &mut R, max_points: usize) -> Vec<Pt> {
    let n = rng.random_range(0..=max_points);
    if rng.random_bool(0.3) {
        // coarse grid: coincident points, equal distances, right angles
        (0..n)
            .map(|_| (rng.random_range(0..4) as f64, rng.random_range(0..4) as f64))
            .collect()
    } else {
        (0..n)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }
}

// ------------------------------------------------------------- lifecycle

/// Order flow and meter readings fixed in advance, per day.
pub struct Scripted {
    pub students: Vec<AccountId>,
    pub usage: BTreeMap<u32, BTreeMap<AccountId, f64>>,
    pub orders: BTreeMap<u32, Vec<OrderRequest>>,
}

impl OrderSource for Scripted {
    fn students(&self) -> Vec<AccountId> {
        self.students.clone()
    }

    fn usage(&mut self, day: u32) -> Result<BTreeMap<AccountId, f64>, String> {
        Ok(self.usage.get(&day).cloned().unwrap_or_default())
    }

    fn orders(&mut self, view: &DayView<'_>) -> Result<Vec<OrderRequest>, String> {
        Ok(self.orders.get(&view.day).cloned().unwrap_or_default())
    }
}

pub fn req(account: &str, token: TokenKind, side: Side, price: u64, qty: u64) -> OrderRequest {
    OrderRequest {
        account: AccountId::new(account),
        token,
        side,
        price,
        qty,
    }
}

pub fn small_config(days: u32) -> MonthConfig {
    MonthConfig {
        days_in_month: days,
        num_students: 4,
        prev_year_usage_kwh: PerToken::new(20 * days as u64, 4 * days as u64),
        base_price: PerToken::new(10, 20),
        shortage_premium_factor: 1.5,
        settlement_discount_factor: 0.8,
        settlement_anchor: None,
        initial_currency: 10_000,
        theta: 0.25,
    }
}

/// (transactions, robust cavity) for days 2..=20 of a labelled month:
/// 4 traded days without a cavity, 2 quiet days without, 8 traded days
/// with a cavity and 5 quiet days with one. Synthetic; only the cell
/// counts matter.
pub const LABELLED_DAYS: [(bool, bool); 19] = [
    (true, true),
    (false, true),
    (true, false),
    (true, true),
    (true, true),
    (false, false),
    (true, true),
    (false, true),
    (true, false),
    (true, true),
    (false, true),
    (true, true),
    (true, false),
    (false, false),
    (true, true),
    (false, true),
    (true, false),
    (true, true),
    (false, true),
];

/// A 20-day month with one 1-token UPX trade on every traded day of
/// [`LABELLED_DAYS`] and none otherwise.
pub fn labelled_month() -> MonthRecord {
    let students: Vec<AccountId> = ["s1", "s2", "s3", "s4"].into_iter().map(AccountId::new).collect();
    let mut orders = BTreeMap::new();
    for (i, (tx, _)) in LABELLED_DAYS.iter().enumerate() {
        let day = i as u32 + 2;
        if *tx {
            let (seller, buyer) = if day.is_multiple_of(2) { ("s1", "s2") } else { ("s3", "s4") };
            orders.insert(
                day,
                vec![
                    req(seller, TokenKind::Upx, Side::Sell, 10, 1),
                    req(buyer, TokenKind::Upx, Side::Buy, 10, 1),
                ],
            );
        }
    }
    let usage = (1..=20)
        .map(|d| (d, students.iter().map(|s| (s.clone(), 1.0)).collect()))
        .collect();
    let mut src = Scripted {
        students,
        usage,
        orders,
    };
    lifecycle::run_month(&small_config(20), &mut src).unwrap()
}

/// Synthetic diagrams matching [`LABELLED_DAYS`]: a cavity of robustness
/// 0.7 on cavity days, a 0.1 one otherwise.
pub fn labelled_diagrams() -> BTreeMap<u32, Vec<PersistencePair>> {
    LABELLED_DAYS
        .iter()
        .enumerate()
        .map(|(i, (_, cav))| {
            let h1 = if *cav {
                PersistencePair { dim: 1, birth: 0.2, death: 0.9 }
            } else {
                PersistencePair { dim: 1, birth: 0.3, death: 0.4 }
            };
            let pairs = vec![PersistencePair { dim: 0, birth: 0.0, death: f64::INFINITY }, h1];
            (i as u32 + 2, pairs)
        })
        .collect()
}

// ------------------------------------------------------------ hypergraph

fn acct(token: TokenKind, name: &str, side: Side, price: u64, qty: u64, id: u64, day: u32) -> Order {
    Order {
        order_id: id,
        account: AccountId::new(name),
        token,
        side,
        price,
        qty,
        day,
        arrival: id as u32,
    }
}

/// One day's orders as (account, side, price, qty).
pub type DayOrders<'a> = (u32, Vec<(&'a str, Side, u64, u64)>);

/// Clears each day's orders in its own book.
pub fn clear_days(token: TokenKind, days: &[DayOrders<'_>]) -> Vec<ClearingResult> {
    let mut id = 0;
    days.iter()
        .map(|(day, orders)| {
            let orders: Vec<Order> = orders
                .iter()
                .map(|(a, s, p, q)| {
                    id += 1;
                    acct(token, a, *s, *p, *q, id, *day)
                })
                .collect();
            auction::clear(&OrderBook::from_orders(*day, token, orders).unwrap()).unwrap()
        })
        .collect()
}

/// UPX month: four two-user days, one three-user day, one six-user day,
/// and quiet days in between.
pub fn upx_fixture_month() -> Vec<ClearingResult> {
    use Side::*;
    clear_days(
        TokenKind::Upx,
        &[
            (2, vec![("s01", Sell, 28, 3), ("s02", Buy, 30, 3)]),
            (3, vec![("s03", Buy, 20, 1)]),
            (5, vec![("s04", Sell, 27, 2), ("s01", Buy, 29, 2)]),
            (8, vec![("s05", Sell, 25, 4), ("s06", Buy, 26, 2), ("s02", Buy, 26, 2)]),
            (11, vec![("s03", Sell, 24, 5), ("s07", Buy, 25, 1), ("s08", Buy, 25, 1), ("s09", Buy, 26, 1), ("s10", Buy, 25, 1), ("s11", Buy, 27, 1)]),
            (15, vec![("s06", Sell, 22, 1), ("s09", Buy, 23, 1)]),
            (19, vec![("s12", Sell, 21, 2), ("s04", Buy, 21, 2), ("s13", Sell, 30, 1)]),
            (24, vec![("s14", Buy, 10, 1), ("s15", Sell, 40, 1)]),
        ],
    )
}

/// SPX month where the system's shortage ask fills on six days: three with
/// two student buyers, three with one.
pub fn spx_fixture_month() -> Vec<ClearingResult> {
    use Side::*;
    clear_days(
        TokenKind::Spx,
        &[
            (3, vec![("admin", Sell, 60, 10), ("s01", Buy, 60, 2), ("s02", Buy, 61, 1)]),
            (6, vec![("admin", Sell, 60, 10), ("s03", Buy, 62, 1)]),
            (9, vec![("admin", Sell, 60, 10), ("s01", Buy, 60, 1), ("s04", Buy, 60, 3)]),
            (12, vec![("admin", Sell, 60, 10), ("s05", Buy, 65, 2)]),
            (16, vec![("admin", Sell, 60, 4), ("s02", Buy, 60, 1), ("s03", Buy, 63, 1)]),
            (20, vec![("admin", Sell, 60, 4), ("s04", Buy, 60, 1), ("s06", Sell, 70, 1)]),
            (25, vec![("s06", Sell, 70, 1), ("s01", Buy, 50, 1)]),
        ],
    )
}

/// Random daily results built by clearing random books among `accounts`.
pub fn random_month<R: Rng>(rng: &mut R, token: TokenKind, days: u32, accounts: usize) -> Vec<ClearingResult> {
    let mut id = 0;
    (1..=days)
        .map(|day| {
            let n = rng.random_range(0..8);
            let orders: Vec<Order> = (0..n)
                .map(|_| {
                    id += 1;
                    let side = if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
                    let who = format!("a{}", rng.random_range(0..accounts));
                    acct(token, &who, side, rng.random_range(1..=20), rng.random_range(1..=5), id, day)
                })
                .collect();
            auction::clear(&OrderBook::from_orders(day, token, orders).unwrap()).unwrap()
        })
        .collect()
}

pub fn union_of_members(results: &[ClearingResult]) -> BTreeSet<AccountId> {
    results
        .iter()
        .filter(|r| r.volume > 0)
        .flat_map(|r| r.fills.iter().filter(|f| f.filled_qty > 0).map(|f| f.account.clone()))
        .collect()
}

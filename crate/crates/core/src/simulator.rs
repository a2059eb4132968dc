//! Synthetic months: per-student consumption and daily order flow.
//!
//! Every random draw comes from a ChaCha stream addressed by
//! `(seed, purpose, student index, day)`, so adding a student or asking for
//! days out of order never perturbs anyone else's draws.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{Escrow, Order, Side};
use crate::ledger::{AccountId, Ledger, PerToken, TokenKind};
use crate::lifecycle::{DayView, MonthConfig, OrderRequest, OrderSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("fixture is {rows}x{cols}, expected {students} students x {days} days")]
    FixtureShapeMismatch {
        rows: usize,
        cols: usize,
        students: usize,
        days: usize,
    },
    #[error("day {day} outside 1..={days}")]
    DayOutOfRange { day: u32, days: u32 },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("meter csv line {line}: {message}")]
    Schema { line: usize, message: String },
}

const STREAM_USAGE: u64 = 0x5553_4147;
const STREAM_MEANS: u64 = 0x4d45_414e;
const STREAM_ORDERS: u64 = 0x4f52_4452;
const STREAM_AGENTS: u64 = 0x4147_4e54;

/// Independent stream for one (purpose, student, day) triple.
pub fn substream(seed: u64, purpose: u64, student: usize, day: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(student as u64);
    rng.set_word_pos((day as u128) << 16);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticUsage {
    /// Mean daily kWh per student.
    pub means: Vec<f64>,
    /// Log-scale spread of the daily multiplicative noise.
    pub dispersion: f64,
    pub weekday_factor: f64,
    pub weekend_factor: f64,
    /// Weekday of day 1, Monday = 0.
    pub first_weekday: u32,
    pub days: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConsumptionModel {
    /// `table[student][day - 1]` in kWh.
    Fixture { table: Vec<Vec<f64>> },
    Stochastic(StochasticUsage),
}

impl ConsumptionModel {
    pub fn num_students(&self) -> usize {
        match self {
            ConsumptionModel::Fixture { table } => table.len(),
            ConsumptionModel::Stochastic(s) => s.means.len(),
        }
    }

    pub fn check(&self, students: usize, days: u32) -> Result<(), SimError> {
        match self {
            ConsumptionModel::Fixture { table } => {
                let cols = table.first().map_or(0, Vec::len);
                if table.len() != students || table.iter().any(|r| r.len() != days as usize) {
                    return Err(SimError::FixtureShapeMismatch {
                        rows: table.len(),
                        cols,
                        students,
                        days: days as usize,
                    });
                }
                if table.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(SimError::Invalid("fixture kWh must be finite and >= 0".into()));
                }
            }
            ConsumptionModel::Stochastic(s) => {
                if s.means.len() != students || s.days != days {
                    return Err(SimError::FixtureShapeMismatch {
                        rows: s.means.len(),
                        cols: s.days as usize,
                        students,
                        days: days as usize,
                    });
                }
                let ok = |v: f64| v.is_finite() && v >= 0.0;
                if !(s.means.iter().all(|m| ok(*m))
                    && ok(s.dispersion)
                    && ok(s.weekday_factor)
                    && ok(s.weekend_factor))
                {
                    return Err(SimError::Invalid("stochastic parameters must be finite and >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// kWh used by each student on `day` (1-based), in student order.
    pub fn gen_usage(&self, day: u32) -> Result<Vec<f64>, SimError> {
        match self {
            ConsumptionModel::Fixture { table } => table
                .iter()
                .map(|row| {
                    row.get(day.wrapping_sub(1) as usize).copied().ok_or(SimError::DayOutOfRange {
                        day,
                        days: row.len() as u32,
                    })
                })
                .collect(),
            ConsumptionModel::Stochastic(s) => {
                if day == 0 || day > s.days {
                    return Err(SimError::DayOutOfRange { day, days: s.days });
                }
                let weekend = (s.first_weekday + day - 1) % 7 >= 5;
                let factor = if weekend { s.weekend_factor } else { s.weekday_factor };
                let sigma = s.dispersion;
                Ok(s
                    .means
                    .iter()
                    .enumerate()
                    .map(|(i, mean)| {
                        if sigma == 0.0 {
                            return mean * factor;
                        }
                        let z: f64 = substream(s.seed, STREAM_USAGE, i, day).sample(StandardNormal);
                        // mean-preserving lognormal multiplier
                        mean * factor * (sigma * z - 0.5 * sigma * sigma).exp()
                    })
                    .collect())
            }
        }
    }
}

/// Draws per-student mean usage around `mean_kwh`.
pub fn student_means(mean_kwh: f64, spread: f64, students: usize, seed: u64) -> Vec<f64> {
    (0..students)
        .map(|i| {
            let z: f64 = substream(seed, STREAM_MEANS, i, 0).sample(StandardNormal);
            mean_kwh * (spread * z - 0.5 * spread * spread).exp()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Days of projected usage a student wants to hold beyond the month's need.
    pub target_buffer_days: f64,
    /// Maximum relative deviation of a quote from the last traded price.
    pub aggressiveness: f64,
    /// Probability of trading on a given day.
    pub participation: f64,
}

impl AgentParams {
    fn valid(&self) -> bool {
        self.target_buffer_days >= 0.0
            && self.target_buffer_days.is_finite()
            && (0.0..=1.0).contains(&self.aggressiveness)
            && (0.0..=1.0).contains(&self.participation)
    }
}

/// Price range a quote is clamped into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceBand {
    pub floor: u64,
    pub cap: u64,
}

impl PriceBand {
    pub const OPEN: PriceBand = PriceBand { floor: 1, cap: u64::MAX };

    /// Nobody sells below the guaranteed month-end buyback price or pays
    /// more than the system charges for a shortage.
    pub fn for_config(config: &MonthConfig) -> PerToken<PriceBand> {
        let band = |t| {
            let cap = config.shortage_price(t);
            PriceBand {
                floor: config.buyback_price(t).clamp(1, cap),
                cap,
            }
        };
        PerToken::new(band(TokenKind::Upx), band(TokenKind::Spx))
    }

    fn clamp(&self, price: f64) -> u64 {
        (price.max(1.0) as u64).clamp(self.floor, self.cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy {
    /// Per-student parameters, aligned with the student roster.
    pub params: Vec<AgentParams>,
    pub seed: u64,
}

impl AgentPolicy {
    /// Uniform base parameters with the buffer jittered per student by up to
    /// `buffer_spread` days either way.
    pub fn varied(base: AgentParams, buffer_spread: f64, students: usize, seed: u64) -> Self {
        let params = (0..students)
            .map(|i| {
                let u: f64 = substream(seed, STREAM_AGENTS, i, 0).random_range(-1.0..=1.0);
                AgentParams {
                    target_buffer_days: (base.target_buffer_days + u * buffer_spread).max(0.0),
                    ..base
                }
            })
            .collect();
        Self { params, seed }
    }

    pub fn check(&self, students: usize) -> Result<(), SimError> {
        if self.params.len() != students {
            return Err(SimError::Invalid(format!(
                "{} agent parameter sets for {students} students",
                self.params.len()
            )));
        }
        if !self.params.iter().all(AgentParams::valid) {
            return Err(SimError::Invalid("agent probabilities must lie in [0,1] and buffers be >= 0".into()));
        }
        Ok(())
    }

    /// Orders for one day. Students below their token target bid for the
    /// gap, students above it offer the excess. Every order fits the
    /// student's free balance, so it passes validation against `ledger`.
    #[allow(clippy::too_many_arguments)]
    pub fn gen_orders(
        &self,
        students: &[AccountId],
        ledger: &Ledger,
        last_price: &PerToken<u64>,
        band: &PerToken<PriceBand>,
        projected_daily: &[PerToken<f64>],
        remaining_days: u32,
        day: u32,
    ) -> Vec<OrderRequest> {
        let mut escrow = Escrow::new();
        let mut out = Vec::new();
        for (i, student) in students.iter().enumerate() {
            let params = &self.params[i];
            let mut rng = substream(self.seed, STREAM_ORDERS, i, day);
            if rng.random::<f64>() >= params.participation {
                continue;
            }
            for token in TokenKind::ALL {
                let noise: f64 = rng.random();
                let daily = projected_daily[i].get(token).max(0.0);
                let target = (daily * (remaining_days as f64 + params.target_buffer_days) - 1e-9)
                    .ceil()
                    .max(0.0) as u64;
                let held = escrow.free_tokens(ledger, student, token);
                let last = *last_price.get(token) as f64;
                let (side, price, mut qty) = if held < target {
                    let p = (last * (1.0 + params.aggressiveness * noise)).round();
                    (Side::Buy, p, target - held)
                } else if held > target {
                    let p = (last * (1.0 - params.aggressiveness * noise)).round();
                    (Side::Sell, p, held - target)
                } else {
                    continue;
                };
                let price = band.get(token).clamp(price);
                if side == Side::Buy {
                    qty = qty.min(escrow.free_currency(ledger, student) / price);
                }
                if qty == 0 {
                    continue;
                }
                let req = OrderRequest {
                    account: student.clone(),
                    token,
                    side,
                    price,
                    qty,
                };
                let probe = Order {
                    order_id: 0,
                    account: req.account.clone(),
                    token,
                    side,
                    price,
                    qty,
                    day,
                    arrival: 0,
                };
                if escrow.validate_order(ledger, &probe).is_ok() {
                    out.push(req);
                }
            }
        }
        out
    }
}

/// A month's students driven by a consumption model and an agent policy.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub students: Vec<AccountId>,
    pub consumption: ConsumptionModel,
    pub policy: AgentPolicy,
}

impl Simulation {
    pub fn new(
        students: Vec<AccountId>,
        consumption: ConsumptionModel,
        policy: AgentPolicy,
        days: u32,
    ) -> Result<Self, SimError> {
        let unique: BTreeSet<&AccountId> = students.iter().collect();
        if unique.len() != students.len() || students.iter().any(AccountId::is_system) {
            return Err(SimError::Invalid("student ids must be unique and not the system id".into()));
        }
        consumption.check(students.len(), days)?;
        policy.check(students.len())?;
        Ok(Self {
            students,
            consumption,
            policy,
        })
    }
}

pub fn student_ids(n: usize) -> Vec<AccountId> {
    (1..=n).map(|i| AccountId::new(format!("s{i:02}"))).collect()
}

impl OrderSource for Simulation {
    fn students(&self) -> Vec<AccountId> {
        self.students.clone()
    }

    fn usage(&mut self, day: u32) -> Result<BTreeMap<AccountId, f64>, String> {
        let kwh = self.consumption.gen_usage(day).map_err(|e| e.to_string())?;
        Ok(self.students.iter().cloned().zip(kwh).collect())
    }

    fn orders(&mut self, view: &DayView<'_>) -> Result<Vec<OrderRequest>, String> {
        let projected: Vec<PerToken<f64>> =
            self.students.iter().map(|s| view.projected_daily(s)).collect();
        Ok(self.policy.gen_orders(
            &self.students,
            view.ledger,
            &view.last_price,
            &PriceBand::for_config(view.config),
            &projected,
            view.remaining_days(),
            view.day,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterRow {
    pub date: NaiveDate,
    pub user_id: String,
    pub kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeterIngest {
    pub accepted: Vec<MeterRow>,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Deserialize)]
struct RawMeterRow {
    date: String,
    user_id: String,
    kwh: String,
}

/// Reads `date,user_id,kwh` meter data. Structural problems (header,
/// field count, unparseable values) abort with the line number; negative
/// or duplicate readings are rejected row by row.
pub fn read_meter_csv<R: Read>(input: R) -> Result<MeterIngest, SimError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| SimError::Schema { line: 1, message: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "user_id", "kwh"] {
        return Err(SimError::Schema {
            line: 1,
            message: "header must be date,user_id,kwh".into(),
        });
    }
    let mut out = MeterIngest::default();
    let mut seen = BTreeSet::new();
    for (i, rec) in reader.deserialize::<RawMeterRow>().enumerate() {
        let line = i + 2;
        let raw = rec.map_err(|e| SimError::Schema { line, message: e.to_string() })?;
        let date = NaiveDate::parse_from_str(&raw.date, "%Y-%m-%d").map_err(|e| SimError::Schema {
            line,
            message: format!("date {:?}: {e}", raw.date),
        })?;
        let kwh: f64 = raw.kwh.parse().map_err(|_| SimError::Schema {
            line,
            message: format!("kwh {:?} is not a number", raw.kwh),
        })?;
        if raw.user_id.is_empty() {
            return Err(SimError::Schema { line, message: "empty user_id".into() });
        }
        let reject = |reason: String| RejectedRow { line, reason };
        if !kwh.is_finite() || kwh < 0.0 {
            out.rejected.push(reject(format!("kwh {kwh} is negative or not finite")));
            continue;
        }
        if !seen.insert((date, raw.user_id.clone())) {
            out.rejected.push(reject(format!("duplicate reading for {} on {date}", raw.user_id)));
            continue;
        }
        out.accepted.push(MeterRow {
            date,
            user_id: raw.user_id,
            kwh,
        });
    }
    Ok(out)
}

/// Turns accepted meter rows into a fixture for the month starting at
/// `start`. Students are sorted by id; missing readings count as 0 kWh and
/// rows outside the month are ignored.
pub fn fixture_from_meter(rows: &[MeterRow], start: NaiveDate, days: u32) -> (Vec<AccountId>, ConsumptionModel) {
    let ids: BTreeSet<&str> = rows.iter().map(|r| r.user_id.as_str()).collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut table = vec![vec![0.0; days as usize]; ids.len()];
    for r in rows {
        let offset = (r.date - start).num_days();
        if (0..days as i64).contains(&offset) {
            table[index[r.user_id.as_str()]][offset as usize] = r.kwh;
        }
    }
    let students = ids.into_iter().map(AccountId::new).collect();
    (students, ConsumptionModel::Fixture { table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::Asset;

    const OPEN: PerToken<PriceBand> = PerToken { upx: PriceBand::OPEN, spx: PriceBand::OPEN };

    fn stochastic(dispersion: f64, seed: u64) -> ConsumptionModel {
        ConsumptionModel::Stochastic(StochasticUsage {
            means: vec![5.0, 8.0, 2.5],
            dispersion,
            weekday_factor: 1.0,
            weekend_factor: 1.0,
            first_weekday: 0,
            days: 31,
            seed,
        })
    }

    #[test]
    fn fixture_passthrough() {
        let m = ConsumptionModel::Fixture {
            table: vec![vec![1.0, 2.0], vec![3.5, 0.0]],
        };
        assert_eq!(m.gen_usage(2).unwrap(), vec![2.0, 0.0]);
        assert_eq!(m.gen_usage(1).unwrap(), vec![1.0, 3.5]);
        assert!(m.check(2, 2).is_ok());
        assert!(matches!(m.check(2, 3), Err(SimError::FixtureShapeMismatch { .. })));
        assert!(matches!(m.check(3, 2), Err(SimError::FixtureShapeMismatch { .. })));
    }

    #[test]
    fn zero_dispersion_returns_mean() {
        let m = stochastic(0.0, 9);
        for day in 1..=31 {
            assert_eq!(m.gen_usage(day).unwrap(), vec![5.0, 8.0, 2.5]);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let a = stochastic(0.4, 77);
        let b = stochastic(0.4, 77);
        let c = stochastic(0.4, 78);
        let traj = |m: &ConsumptionModel| (1..=31).map(|d| m.gen_usage(d).unwrap()).collect::<Vec<_>>();
        assert_eq!(traj(&a), traj(&b));
        assert_ne!(traj(&a), traj(&c));
        assert!(traj(&a).iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn adding_a_student_keeps_others_draws() {
        let base = stochastic(0.4, 5);
        let ConsumptionModel::Stochastic(mut more) = base.clone() else { unreachable!() };
        more.means.push(4.0);
        let more = ConsumptionModel::Stochastic(more);
        for d in 1..=31 {
            assert_eq!(base.gen_usage(d).unwrap()[..], more.gen_usage(d).unwrap()[..3]);
        }
    }

    fn one_agent(participation: f64) -> AgentPolicy {
        AgentPolicy {
            params: vec![AgentParams {
                target_buffer_days: 2.0,
                aggressiveness: 0.1,
                participation,
            }],
            seed: 3,
        }
    }

    #[test]
    fn holding_exactly_target_means_no_order() {
        let students = vec![AccountId::new("a")];
        let mut ledger = Ledger::with_students(students.clone()).unwrap();
        // target = ceil(2 tokens/day * (3 + 2) days) = 10
        ledger.mint(Asset::Upx, &"a".into(), 10, 1, "issue").unwrap();
        ledger.mint(Asset::Currency, &"a".into(), 1000, 0, "deposit").unwrap();
        let projected = vec![PerToken::new(2.0, 0.0)];
        let orders = one_agent(1.0).gen_orders(&students, &ledger, &PerToken::new(10, 20), &OPEN, &projected, 3, 5);
        assert!(orders.is_empty(), "{orders:?}");
    }

    #[test]
    fn empty_wallet_bids() {
        let students = vec![AccountId::new("a")];
        let mut ledger = Ledger::with_students(students.clone()).unwrap();
        ledger.mint(Asset::Currency, &"a".into(), 1000, 0, "deposit").unwrap();
        let projected = vec![PerToken::new(1.0, 0.0)];
        let orders = one_agent(1.0).gen_orders(&students, &ledger, &PerToken::new(10, 20), &OPEN, &projected, 3, 5);
        assert_eq!(orders.len(), 1);
        assert_eq!((orders[0].side, orders[0].token), (Side::Buy, TokenKind::Upx));
        assert_eq!(orders[0].qty, 5);
        assert!(orders[0].price >= 10);
    }

    #[test]
    fn bids_fit_the_wallet() {
        let students = vec![AccountId::new("a")];
        let mut ledger = Ledger::with_students(students.clone()).unwrap();
        ledger.mint(Asset::Currency, &"a".into(), 35, 0, "deposit").unwrap();
        let projected = vec![PerToken::new(4.0, 4.0)];
        let orders = one_agent(1.0).gen_orders(&students, &ledger, &PerToken::new(10, 20), &OPEN, &projected, 10, 2);
        let spent: u64 = orders.iter().map(|o| o.price * o.qty).sum();
        assert!(spent <= 35);
    }

    #[test]
    fn meter_csv_rules() {
        let csv = "date,user_id,kwh\n2022-07-01,a,3.5\n2022-07-01,b,1\n2022-07-02,a,2\n";
        let ing = read_meter_csv(csv.as_bytes()).unwrap();
        assert_eq!((ing.accepted.len(), ing.rejected.len()), (3, 0));

        let csv = "date,user_id,kwh\n2022-07-01,a,3.5\n2022-07-01,a,1\n2022-07-02,b,-2\n";
        let ing = read_meter_csv(csv.as_bytes()).unwrap();
        assert_eq!(ing.accepted.len(), 1);
        assert_eq!(ing.rejected[0].line, 3);
        assert!(ing.rejected[0].reason.contains("duplicate"));
        assert_eq!(ing.rejected[1].line, 4);
        assert!(ing.rejected[1].reason.contains("negative"));

        let err = read_meter_csv("date,user_id,kwh\n2022-07-01,a,x\n".as_bytes()).unwrap_err();
        assert_eq!(err, SimError::Schema { line: 2, message: "kwh \"x\" is not a number".into() });
        assert!(matches!(read_meter_csv("day,user,kwh\n".as_bytes()), Err(SimError::Schema { line: 1, .. })));
    }

    #[test]
    fn meter_rows_to_fixture() {
        let csv = "date,user_id,kwh\n2022-07-02,b,4\n2022-07-01,a,3\n2022-08-01,a,9\n";
        let ing = read_meter_csv(csv.as_bytes()).unwrap();
        let start = NaiveDate::from_ymd_opt(2022, 7, 1).unwrap();
        let (ids, model) = fixture_from_meter(&ing.accepted, start, 2);
        assert_eq!(ids, vec![AccountId::new("a"), AccountId::new("b")]);
        assert_eq!(model, ConsumptionModel::Fixture { table: vec![vec![3.0, 0.0], vec![0.0, 4.0]] });
    }
}

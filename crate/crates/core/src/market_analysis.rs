//! Cavity-versus-activity analysis and the run report.
//!
//! Every analysable day (2..=end) is labelled by whether the market traded
//! and whether its point cloud held a robust cavity; the labels fill a 2×2
//! contingency table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, Hypergeometric};
use thiserror::Error;

use crate::auction::Side;
use crate::hypergraph::Hypergraph;
use crate::ledger::{AccountId, PerToken, TokenKind};
use crate::lifecycle::{MonthRecord, TokenSettlement};
use crate::tda::{robust_cavities, DiagramSet, PersistencePair, Scaling};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no diagram for day {0}")]
    MissingDiagram(u32),
    #[error("inputs come from different runs: {0}")]
    InputMismatch(String),
}

/// Which clearing volumes count as "the market traded".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransactionScope {
    #[default]
    AnyToken,
    Upx,
    Spx,
}

impl TransactionScope {
    fn tokens(self) -> &'static [TokenKind] {
        match self {
            TransactionScope::AnyToken => &TokenKind::ALL,
            TransactionScope::Upx => &[TokenKind::Upx],
            TransactionScope::Spx => &[TokenKind::Spx],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayLabel {
    pub day: u32,
    pub has_transactions: bool,
    pub has_robust_cavity: bool,
}

pub fn label_days(
    record: &MonthRecord,
    diagrams: &BTreeMap<u32, Vec<PersistencePair>>,
    theta: f64,
    scope: TransactionScope,
) -> Result<Vec<DayLabel>, AnalysisError> {
    record
        .days
        .iter()
        .filter(|d| d.day >= 2)
        .map(|d| {
            let pairs = diagrams.get(&d.day).ok_or(AnalysisError::MissingDiagram(d.day))?;
            Ok(DayLabel {
                day: d.day,
                has_transactions: scope.tokens().iter().any(|t| d.results.get(*t).volume > 0),
                has_robust_cavity: !robust_cavities(pairs, theta).is_empty(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub n_tx_nocav: u32,
    pub n_notx_nocav: u32,
    pub n_tx_cav: u32,
    pub n_notx_cav: u32,
}

impl ContingencyTable {
    pub fn total(&self) -> u32 {
        self.n_tx_nocav + self.n_notx_nocav + self.n_tx_cav + self.n_notx_cav
    }

    pub fn cavity_days(&self) -> u32 {
        self.n_tx_cav + self.n_notx_cav
    }
}

pub fn contingency(labels: &[DayLabel]) -> ContingencyTable {
    let mut t = ContingencyTable::default();
    for l in labels {
        let cell = match (l.has_transactions, l.has_robust_cavity) {
            (true, false) => &mut t.n_tx_nocav,
            (false, false) => &mut t.n_notx_nocav,
            (true, true) => &mut t.n_tx_cav,
            (false, true) => &mut t.n_notx_cav,
        };
        *cell += 1;
    }
    t
}

/// Cavity-to-no-cavity day ratios; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityRatios {
    pub ratio_with_tx: Option<f64>,
    pub ratio_without_tx: Option<f64>,
}

fn ratio(num: u32, den: u32) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn activity_ratios(t: &ContingencyTable) -> ActivityRatios {
    ActivityRatios {
        ratio_with_tx: ratio(t.n_tx_cav, t.n_tx_nocav),
        ratio_without_tx: ratio(t.n_notx_cav, t.n_notx_nocav),
    }
}

/// Descriptive association between trading and cavities. No significance
/// decision is made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Association {
    /// (tx,cav)·(notx,nocav) / ((tx,nocav)·(notx,cav)).
    pub odds_ratio: Option<f64>,
    /// Two-sided Fisher exact test.
    pub fisher_p: f64,
}

pub fn association(t: &ContingencyTable) -> Association {
    let num = t.n_tx_cav as u64 * t.n_notx_nocav as u64;
    let den = t.n_tx_nocav as u64 * t.n_notx_cav as u64;
    Association {
        odds_ratio: (den > 0).then(|| num as f64 / den as f64),
        fisher_p: fisher_two_sided(t),
    }
}

fn fisher_two_sided(t: &ContingencyTable) -> f64 {
    let n = t.total() as u64;
    let cav = t.cavity_days() as u64;
    let tx = (t.n_tx_cav + t.n_tx_nocav) as u64;
    let Ok(dist) = Hypergeometric::new(n, cav, tx) else {
        return 1.0;
    };
    let observed = dist.pmf(t.n_tx_cav as u64);
    let lo = (cav + tx).saturating_sub(n);
    let hi = cav.min(tx);
    let p: f64 = (lo..=hi)
        .map(|k| dist.pmf(k))
        .filter(|pk| *pk <= observed * (1.0 + 1e-7))
        .sum();
    p.min(1.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayCounts {
    pub day: u32,
    pub token: TokenKind,
    pub bids: usize,
    pub asks: usize,
    pub system_asks: usize,
    pub contracted_buys: usize,
    pub contracted_sells: usize,
    pub price: Option<u64>,
    pub volume: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergraphSummary {
    pub token: TokenKind,
    pub nodes: usize,
    pub edges: usize,
    /// (edge size, number of edges)
    pub cardinality_histogram: Vec<(usize, usize)>,
    /// Most central first.
    pub degrees: Vec<(AccountId, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPersistence {
    pub day: u32,
    pub points: usize,
    pub h1_pairs: usize,
    pub robust_cavities: usize,
    pub max_robustness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub theta: f64,
    pub table: ContingencyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountLine {
    pub account: AccountId,
    pub upx: u64,
    pub spx: u64,
    pub currency: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub run_id: String,
    pub theta: f64,
    pub scaling: Scaling,
    pub days_in_month: u32,
    pub students: usize,
    pub last_traded_price: PerToken<Option<u64>>,
    pub daily_counts: Vec<DayCounts>,
    pub balances: Vec<AccountLine>,
    /// Month's kWh per student, highest first.
    pub usage_ranking: Vec<(AccountId, f64)>,
    pub hypergraphs: Vec<HypergraphSummary>,
    pub persistence: Vec<DayPersistence>,
    pub labels: Vec<DayLabel>,
    pub table: ContingencyTable,
    pub ratios: ActivityRatios,
    pub association: Association,
    pub sensitivity: Vec<SensitivityRow>,
    pub settlement: PerToken<TokenSettlement>,
}

pub fn daily_counts(record: &MonthRecord) -> Vec<DayCounts> {
    let mut out = Vec::new();
    for d in &record.days {
        for token in TokenKind::ALL {
            let book = d.books.get(token);
            let r = d.results.get(token);
            out.push(DayCounts {
                day: d.day,
                token,
                bids: book.bids.len(),
                asks: book.asks.len(),
                system_asks: book.asks.iter().filter(|o| o.account.is_system()).count(),
                contracted_buys: r.contracted(Side::Buy),
                contracted_sells: r.contracted(Side::Sell),
                price: r.price,
                volume: r.volume,
            });
        }
    }
    out
}

/// Demand and supply step curves of every day as CSV
/// `day,token,side,price,cumulative_qty`.
pub fn curve_dump(record: &MonthRecord) -> String {
    let mut out = String::from("day,token,side,price,cumulative_qty\n");
    for d in &record.days {
        for token in TokenKind::ALL {
            let book = d.books.get(token);
            for p in book.demand_curve() {
                let _ = writeln!(out, "{},{},buy,{},{}", d.day, token, p.price, p.cumulative_qty);
            }
            for p in book.supply_curve() {
                let _ = writeln!(out, "{},{},sell,{},{}", d.day, token, p.price, p.cumulative_qty);
            }
        }
    }
    out
}

fn check_inputs(record: &MonthRecord, hypergraphs: &[Hypergraph], diagrams: &DiagramSet) -> Result<(), AnalysisError> {
    if diagrams.run_id != record.run_id {
        return Err(AnalysisError::InputMismatch(format!(
            "diagrams belong to run {}, record is {}",
            diagrams.run_id, record.run_id
        )));
    }
    for h in hypergraphs {
        let expected = Hypergraph::build(&record.results(h.token), h.token)
            .map_err(|e| AnalysisError::InputMismatch(e.to_string()))?;
        if expected.edges != h.edges {
            return Err(AnalysisError::InputMismatch(format!(
                "{} hypergraph does not match the record's clearing results",
                h.token
            )));
        }
    }
    Ok(())
}

/// Assembles the report. `table` must be the contingency table of these
/// inputs at `theta`; anything else is an input mismatch.
pub fn report(
    record: &MonthRecord,
    hypergraphs: &[Hypergraph],
    diagrams: &DiagramSet,
    table: &ContingencyTable,
    theta: f64,
    theta_sweep: &[f64],
) -> Result<Report, AnalysisError> {
    check_inputs(record, hypergraphs, diagrams)?;
    let labels = label_days(record, &diagrams.days, theta, TransactionScope::AnyToken)?;
    if contingency(&labels) != *table {
        return Err(AnalysisError::InputMismatch(
            "contingency table does not match the labelled days".into(),
        ));
    }

    let mut last_traded_price = PerToken::<Option<u64>>::default();
    for d in &record.days {
        for token in TokenKind::ALL {
            if let Some(p) = d.results.get(token).price {
                *last_traded_price.get_mut(token) = Some(p);
            }
        }
    }
    let balances = record
        .ledger
        .accounts()
        .iter()
        .map(|(id, a)| AccountLine {
            account: id.clone(),
            upx: a.balances.upx,
            spx: a.balances.spx,
            currency: a.balances.currency,
        })
        .collect();
    let mut usage: BTreeMap<&AccountId, f64> = BTreeMap::new();
    for d in &record.days {
        for (s, kwh) in &d.usage_kwh {
            *usage.entry(s).or_default() += kwh;
        }
    }
    let mut usage_ranking: Vec<(AccountId, f64)> = usage.into_iter().map(|(s, k)| (s.clone(), k)).collect();
    usage_ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let hypergraphs = hypergraphs
        .iter()
        .map(|h| {
            let mut degrees: Vec<(AccountId, usize)> = h.degrees().into_iter().collect();
            degrees.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            HypergraphSummary {
                token: h.token,
                nodes: h.nodes.len(),
                edges: h.edges.len(),
                cardinality_histogram: h.cardinality_histogram().into_iter().collect(),
                degrees,
            }
        })
        .collect();

    let persistence = diagrams
        .days
        .iter()
        .map(|(day, pairs)| {
            let robust = robust_cavities(pairs, theta);
            DayPersistence {
                day: *day,
                points: diagrams.clouds.get(day).map_or(0, |c| c.points.len()),
                h1_pairs: pairs.iter().filter(|p| p.dim == 1 && !p.is_zero_persistence()).count(),
                robust_cavities: robust.len(),
                max_robustness: robust.first().map(PersistencePair::robustness).filter(|r| r.is_finite()),
            }
        })
        .collect();

    let mut sweep: Vec<f64> = theta_sweep.to_vec();
    if !sweep.contains(&theta) {
        sweep.push(theta);
    }
    sweep.sort_by(f64::total_cmp);
    let sensitivity = sweep
        .into_iter()
        .map(|t| {
            let labels = label_days(record, &diagrams.days, t, TransactionScope::AnyToken)?;
            Ok(SensitivityRow {
                theta: t,
                table: contingency(&labels),
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        run_id: record.run_id.clone(),
        theta,
        scaling: diagrams.scaling,
        days_in_month: record.config.days_in_month,
        students: record.students.len(),
        last_traded_price,
        daily_counts: daily_counts(record),
        balances,
        usage_ranking,
        hypergraphs,
        persistence,
        labels,
        table: *table,
        ratios: activity_ratios(table),
        association: association(table),
        sensitivity,
        settlement: record.settlement.clone(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |x| format!("{x:.3}"))
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run {}", self.run_id);
        let _ = writeln!(
            s,
            "{} days, {} students, theta = {}, scaling = {:?}",
            self.days_in_month, self.students, self.theta, self.scaling
        );
        let _ = writeln!(
            s,
            "last traded price: UPX {} / SPX {}",
            self.last_traded_price.upx.map_or("-".into(), |p| p.to_string()),
            self.last_traded_price.spx.map_or("-".into(), |p| p.to_string())
        );
        let _ = writeln!(s, "\ndaily orders (bids/asks/contracted buys/contracted sells, price, volume)");
        for c in &self.daily_counts {
            let _ = writeln!(
                s,
                "  day {:>2} {}  {:>3} {:>3} {:>3} {:>3}  {:>5} {:>5}",
                c.day,
                c.token,
                c.bids,
                c.asks,
                c.contracted_buys,
                c.contracted_sells,
                c.price.map_or("-".into(), |p| p.to_string()),
                c.volume
            );
        }
        let _ = writeln!(s, "\nusage ranking (kWh)");
        for (i, (a, k)) in self.usage_ranking.iter().enumerate() {
            let _ = writeln!(s, "  {:>2}. {a} {k:.1}", i + 1);
        }
        for h in &self.hypergraphs {
            let _ = writeln!(s, "\n{} hypergraph: {} nodes, {} edges", h.token, h.nodes, h.edges);
            let sizes: Vec<String> = h.cardinality_histogram.iter().map(|(k, n)| format!("{k}:{n}")).collect();
            let _ = writeln!(s, "  edge sizes {}", sizes.join(" "));
            let top: Vec<String> = h.degrees.iter().take(5).map(|(a, d)| format!("{a}={d}")).collect();
            let _ = writeln!(s, "  top degrees {}", top.join(" "));
        }
        let _ = writeln!(s, "\ncavities per day");
        for p in &self.persistence {
            let _ = writeln!(
                s,
                "  day {:>2}: {:>2} points, {:>2} H1 pairs, {} robust, max {}",
                p.day,
                p.points,
                p.h1_pairs,
                p.robust_cavities,
                opt(p.max_robustness)
            );
        }
        let t = &self.table;
        let _ = writeln!(s, "\n                 with tx  no tx");
        let _ = writeln!(s, "  no cavity      {:>7} {:>6}", t.n_tx_nocav, t.n_notx_nocav);
        let _ = writeln!(s, "  with cavity    {:>7} {:>6}", t.n_tx_cav, t.n_notx_cav);
        let _ = writeln!(
            s,
            "  cavity/no-cavity ratio: with tx {}, without tx {}",
            opt(self.ratios.ratio_with_tx),
            opt(self.ratios.ratio_without_tx)
        );
        let _ = writeln!(
            s,
            "  odds ratio {}, Fisher exact p = {:.4} (descriptive only)",
            opt(self.association.odds_ratio),
            self.association.fisher_p
        );
        let _ = writeln!(s, "\ntheta sensitivity (tx&nocav notx&nocav tx&cav notx&cav)");
        for r in &self.sensitivity {
            let t = &r.table;
            let _ = writeln!(
                s,
                "  {:>5}: {} {} {} {}",
                r.theta, t.n_tx_nocav, t.n_notx_nocav, t.n_tx_cav, t.n_notx_cav
            );
        }
        let _ = writeln!(s, "\nmonth-end settlement");
        for token in TokenKind::ALL {
            let l = self.settlement.get(token);
            let _ = writeln!(
                s,
                "  {token}: surplus {} @ {}, deficit {} @ {}, residue {}, reserve delta {}, unpaid {}",
                l.surplus,
                l.buy_price,
                l.deficit,
                l.sell_price,
                l.residue,
                l.reserve_delta,
                l.debts.iter().map(|d| d.1).sum::<u64>()
            );
        }
        s
    }
}

//! Command-line front end.
//!
//! ```text
//! edisonx simulate --config demo.toml --seed 1 --out run/
//! edisonx clear    --orders day.jsonl [--ledger ledger.jsonl] [--day N] [--out result.json]
//! edisonx analyze  --record run/ [--theta 0.25] [--which all] [--jobs 4] [--out run/analysis]
//! edisonx ingest   --meter meter.csv [--orders orders.jsonl] --out clean/
//! edisonx report   --record run/ [--theta 0.25] [--jobs 4] [--out run/report]
//! ```
//!
//! Exit codes: 0 ok, 2 input error, 3 internal fault, 4 validation failure.

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::auction::{self, AuctionError, ClearingResult, Escrow, Order, OrderBook};
use crate::config::{ConfigError, ScenarioConfig};
use crate::hypergraph::Hypergraph;
use crate::ledger::{Ledger, TokenKind};
use crate::lifecycle::export::{read_record, write_record};
use crate::lifecycle::{self, LifecycleError, MonthRecord};
use crate::market_analysis::{self, TransactionScope};
use crate::simulator::{self, SimError};
use crate::tda::{self, DiagramSet, Scaling, TdaError};

pub const TOOL: &str = "edisonx";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal fault: {0}")]
    Internal(String),
    #[error("validation failed for order {order_id}: {message}")]
    Validation { order_id: u64, message: String },
    #[error("validation failed: {0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
            CliError::Validation { .. } | CliError::Domain(_) => 4,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

impl From<TdaError> for CliError {
    fn from(e: TdaError) -> Self {
        match e {
            TdaError::TooManyPoints(_) => CliError::Domain(e.to_string()),
            _ => internal(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = TOOL, version, about = "Dormitory energy-token market simulator and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Hypergraph,
    Tda,
    Table,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a seeded month and write the record.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clear one day's order book.
    Clear {
        #[arg(long)]
        orders: PathBuf,
        /// Ledger log to validate orders against.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long)]
        day: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hypergraph, persistence and contingency exports for a record.
    Analyze {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, value_enum, default_value = "all")]
        which: Which,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Defaults to <record>/analysis.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate and normalise meter data and order logs.
    Ingest {
        #[arg(long)]
        meter: PathBuf,
        #[arg(long)]
        orders: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// report.json, report.txt and curve dumps for a record.
    Report {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Defaults to <record>/report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub summary: String,
    pub ledger: String,
    pub days: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDefaults {
    pub scaling: Scaling,
    pub theta: f64,
    pub theta_sweep: Vec<f64>,
}

/// Written next to every record. Times are the simulated period, never the
/// wall clock, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ConfigRef,
    pub seed: u64,
    pub period: Period,
    pub run_id: String,
    pub layout: Layout,
    pub analysis: AnalysisDefaults,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| internal(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, bytes).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(internal)?;
    s.push('\n');
    Ok(s)
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

/// Simulates a month from a scenario file. Nothing is written unless the
/// whole run succeeds.
pub fn simulate(config_path: &Path, seed: u64, out: &Path) -> Result<RunManifest, CliError> {
    let text = read_input(config_path)?;
    let cfg = ScenarioConfig::from_toml(&text).map_err(|e| input(format!("{}: {e}", config_path.display())))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let mut sim = cfg.simulation(seed, base).map_err(|e| match e {
        ConfigError::Parse(_) | ConfigError::Invalid(_) | ConfigError::Io { .. } => input(e),
    })?;
    let record = lifecycle::run_month(&cfg.month, &mut sim).map_err(|e| match e {
        LifecycleError::Config(_) => input(e),
        _ => internal(e),
    })?;
    let manifest = RunManifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: ConfigRef {
            path: config_path.display().to_string(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        },
        seed,
        period: Period {
            start: cfg.scenario.start_date,
            end: cfg.end_date(),
        },
        run_id: record.run_id.clone(),
        layout: Layout {
            summary: "summary.json".into(),
            ledger: "ledger.jsonl".into(),
            days: "days/".into(),
        },
        analysis: AnalysisDefaults {
            scaling: cfg.analysis.scaling,
            theta: cfg.month.theta,
            theta_sweep: cfg.analysis.theta_sweep.clone(),
        },
    };
    write_record(&record, out).map_err(internal)?;
    write_file(&out.join(MANIFEST_FILE), to_json(&manifest)?)?;
    Ok(manifest)
}

/// Loads a record directory, checking the manifest against the record.
pub fn load_record(dir: &Path) -> Result<(RunManifest, MonthRecord), CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = read_input(&path)?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| input(format!("{}: corrupt manifest: {e}", path.display())))?;
    if manifest.tool != TOOL {
        return Err(input(format!("{}: written by {}, not {TOOL}", path.display(), manifest.tool)));
    }
    let record = read_record(dir).map_err(input)?;
    if record.run_id != manifest.run_id {
        return Err(input(format!(
            "{}: manifest names run {}, record is {}",
            path.display(),
            manifest.run_id,
            record.run_id
        )));
    }
    Ok((manifest, record))
}

fn check_theta(theta: f64) -> Result<f64, CliError> {
    if theta >= 0.0 && theta.is_finite() {
        Ok(theta)
    } else {
        Err(input(format!("theta must be finite and >= 0, got {theta}")))
    }
}

/// Clears the orders of one day, one book per token. With a ledger, every
/// order is first checked against free balances in arrival order.
pub fn clear_orders(orders: Vec<Order>, ledger: Option<&Ledger>, day: Option<u32>) -> Result<Vec<ClearingResult>, CliError> {
    let day = match day {
        Some(d) => d,
        None => {
            let mut days: Vec<u32> = orders.iter().map(|o| o.day).collect();
            days.sort_unstable();
            days.dedup();
            match days.as_slice() {
                [] => 1,
                [d] => *d,
                _ => return Err(input(format!("orders span days {days:?}; pick one with --day"))),
            }
        }
    };
    let mut todays: Vec<Order> = orders.into_iter().filter(|o| o.day == day).collect();
    todays.sort_by_key(|o| (o.arrival, o.order_id));
    if let Some(ledger) = ledger {
        let mut escrow = Escrow::new();
        for o in &todays {
            escrow.validate_order(ledger, o).map_err(validation)?;
        }
    }
    let mut out = Vec::new();
    for token in TokenKind::ALL {
        let book = OrderBook::from_orders(day, token, todays.iter().filter(|o| o.token == token).cloned())
            .map_err(validation)?;
        out.push(auction::clear(&book).map_err(internal)?);
    }
    Ok(out)
}

fn validation(e: AuctionError) -> CliError {
    match e.order_id() {
        Some(order_id) => CliError::Validation {
            order_id,
            message: e.to_string(),
        },
        None => input(e),
    }
}

fn cmd_clear(orders: &Path, ledger: Option<&Path>, day: Option<u32>, out: Option<&Path>) -> Result<(), CliError> {
    let file = fs::File::open(orders).map_err(|e| input(format!("{}: {e}", orders.display())))?;
    let parsed = auction::read_orders(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", orders.display())))?;
    let ledger = match ledger {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            Some(Ledger::import_jsonl(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let results = clear_orders(parsed, ledger.as_ref(), day)?;
    let json = to_json(&results)?;
    match out {
        Some(p) => write_file(p, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableExport {
    pub theta: f64,
    pub scope: TransactionScope,
    pub labels: Vec<market_analysis::DayLabel>,
    pub table: market_analysis::ContingencyTable,
    pub ratios: market_analysis::ActivityRatios,
    pub association: market_analysis::Association,
    pub sensitivity: Vec<market_analysis::SensitivityRow>,
}

/// Options shared by `analyze` and `report`.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub theta: Option<f64>,
    pub which: Which,
    pub jobs: usize,
}

/// Writes the requested analysis files into `out` and returns their names.
pub fn analyze(record_dir: &Path, out: &Path, opts: &AnalyzeOptions) -> Result<Vec<String>, CliError> {
    let (manifest, record) = load_record(record_dir)?;
    let theta = check_theta(opts.theta.unwrap_or(manifest.analysis.theta))?;
    let mut files: Vec<(String, String)> = Vec::new();
    let want = |w: Which| opts.which == w || opts.which == Which::All;

    if want(Which::Hypergraph) {
        for token in TokenKind::ALL {
            let h = Hypergraph::build(&record.results(token), token).map_err(internal)?;
            files.push((
                format!("hypergraph_{}.json", token.as_str().to_lowercase()),
                to_json(&h.export())?,
            ));
        }
    }
    let needs_diagrams = want(Which::Tda) || want(Which::Table);
    let diagrams = if needs_diagrams {
        Some(DiagramSet::compute(&record, manifest.analysis.scaling, opts.jobs.max(1))?)
    } else {
        None
    };
    if let (true, Some(d)) = (want(Which::Tda), &diagrams) {
        files.push(("persistence.csv".into(), tda::export::export_diagrams(&d.days)));
        files.push(("point_clouds.csv".into(), tda::export::export_clouds(d.clouds.values())));
    }
    if let (true, Some(d)) = (want(Which::Table), &diagrams) {
        let table = table_export(&record, d, theta, &manifest.analysis.theta_sweep)?;
        files.push(("contingency.json".into(), to_json(&table)?));
    }
    if opts.which == Which::All {
        if let Some(d) = &diagrams {
            files.extend(report_files(&record, d, theta, &manifest.analysis.theta_sweep)?);
        }
    }
    for (name, body) in &files {
        write_file(&out.join(name), body)?;
    }
    Ok(files.into_iter().map(|(n, _)| n).collect())
}

fn table_export(record: &MonthRecord, diagrams: &DiagramSet, theta: f64, sweep: &[f64]) -> Result<TableExport, CliError> {
    let scope = TransactionScope::AnyToken;
    let labels = market_analysis::label_days(record, &diagrams.days, theta, scope).map_err(internal)?;
    let table = market_analysis::contingency(&labels);
    let mut thetas = sweep.to_vec();
    if !thetas.contains(&theta) {
        thetas.push(theta);
    }
    thetas.sort_by(f64::total_cmp);
    let sensitivity = thetas
        .into_iter()
        .map(|t| {
            let l = market_analysis::label_days(record, &diagrams.days, t, scope).map_err(internal)?;
            Ok(market_analysis::SensitivityRow {
                theta: t,
                table: market_analysis::contingency(&l),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(TableExport {
        theta,
        scope,
        ratios: market_analysis::activity_ratios(&table),
        association: market_analysis::association(&table),
        labels,
        table,
        sensitivity,
    })
}

fn report_files(
    record: &MonthRecord,
    diagrams: &DiagramSet,
    theta: f64,
    sweep: &[f64],
) -> Result<Vec<(String, String)>, CliError> {
    let hypergraphs = TokenKind::ALL
        .iter()
        .map(|t| Hypergraph::build(&record.results(*t), *t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(internal)?;
    let labels = market_analysis::label_days(record, &diagrams.days, theta, TransactionScope::AnyToken)
        .map_err(internal)?;
    let table = market_analysis::contingency(&labels);
    let report =
        market_analysis::report(record, &hypergraphs, diagrams, &table, theta, sweep).map_err(internal)?;
    Ok(vec![
        ("report.json".into(), to_json(&report)?),
        ("report.txt".into(), report.to_text()),
        ("curves.csv".into(), market_analysis::curve_dump(record)),
    ])
}

pub fn report(record_dir: &Path, out: &Path, theta: Option<f64>, jobs: usize) -> Result<Vec<String>, CliError> {
    let (manifest, record) = load_record(record_dir)?;
    let theta = check_theta(theta.unwrap_or(manifest.analysis.theta))?;
    let diagrams = DiagramSet::compute(&record, manifest.analysis.scaling, jobs.max(1))?;
    let files = report_files(&record, &diagrams, theta, &manifest.analysis.theta_sweep)?;
    for (name, body) in &files {
        write_file(&out.join(name), body)?;
    }
    Ok(files.into_iter().map(|(n, _)| n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub meter_rows_accepted: usize,
    pub meter_rows_rejected: usize,
    pub rejected: Vec<simulator::RejectedRow>,
    pub students: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub orders_accepted: Option<usize>,
}

/// Validates a meter CSV (and optionally an order log) and writes
/// normalised copies plus `validation.json`.
pub fn ingest(meter: &Path, orders: Option<&Path>, out: &Path) -> Result<IngestSummary, CliError> {
    let file = fs::File::open(meter).map_err(|e| input(format!("{}: {e}", meter.display())))?;
    let ingested = simulator::read_meter_csv(file).map_err(|e| match e {
        SimError::Schema { .. } => input(format!("{}: {e}", meter.display())),
        _ => internal(e),
    })?;
    let parsed_orders = match orders {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            Some(auction::read_orders(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };

    let mut rows = ingested.accepted.clone();
    rows.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.user_id.cmp(&b.user_id)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "user_id", "kwh"]).map_err(internal)?;
    for r in &rows {
        w.write_record([r.date.to_string(), r.user_id.clone(), r.kwh.to_string()])
            .map_err(internal)?;
    }
    let csv_bytes = w.into_inner().map_err(internal)?;

    let mut users: Vec<&str> = rows.iter().map(|r| r.user_id.as_str()).collect();
    users.sort_unstable();
    users.dedup();
    let summary = IngestSummary {
        meter_rows_accepted: rows.len(),
        meter_rows_rejected: ingested.rejected.len(),
        rejected: ingested.rejected,
        students: users.len(),
        first_date: rows.first().map(|r| r.date),
        last_date: rows.last().map(|r| r.date),
        orders_accepted: parsed_orders.as_ref().map(Vec::len),
    };

    write_file(&out.join("meter.csv"), csv_bytes)?;
    if let Some(mut o) = parsed_orders {
        o.sort_by_key(|o| (o.day, o.arrival, o.order_id));
        let mut buf = Vec::new();
        auction::write_orders(&o, &mut buf).map_err(internal)?;
        write_file(&out.join("orders.jsonl"), buf)?;
    }
    write_file(&out.join("validation.json"), to_json(&summary)?)?;
    Ok(summary)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let m = simulate(&config, seed, &out)?;
            println!("run {} written to {}", m.run_id, out.display());
        }
        Command::Clear { orders, ledger, day, out } => {
            cmd_clear(&orders, ledger.as_deref(), day, out.as_deref())?;
        }
        Command::Analyze {
            record,
            theta,
            which,
            jobs,
            out,
        } => {
            let out = out.unwrap_or_else(|| record.join("analysis"));
            let files = analyze(&record, &out, &AnalyzeOptions { theta, which, jobs })?;
            println!("wrote {} to {}", files.join(", "), out.display());
        }
        Command::Ingest { meter, orders, out } => {
            let s = ingest(&meter, orders.as_deref(), &out)?;
            println!(
                "{} meter rows accepted, {} rejected",
                s.meter_rows_accepted, s.meter_rows_rejected
            );
            for r in &s.rejected {
                println!("  line {}: {}", r.line, r.reason);
            }
        }
        Command::Report { record, theta, jobs, out } => {
            let out = out.unwrap_or_else(|| record.join("report"));
            let files = report(&record, &out, theta, jobs)?;
            println!("wrote {} to {}", files.join(", "), out.display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{TOOL}: {e}");
            e.exit_code()
        }
    }
}

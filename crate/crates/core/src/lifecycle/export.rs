//! On-disk layout of a [`MonthRecord`]:
//!
//! ```text
//! <dir>/summary.json      config, roster, issuance, settlement, final balances
//! <dir>/ledger.jsonl      full transaction log
//! <dir>/days/day_NN.json  books, clearing results, usage for day NN
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{DayRecord, IssuanceReport, MonthConfig, MonthRecord, TokenSettlement};
use crate::ledger::{AccountId, Balances, Ledger, LedgerError, PerToken};

#[derive(Debug, Error)]
pub enum RecordIoError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("record is inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Serialize, Deserialize)]
struct Summary {
    run_id: String,
    config: MonthConfig,
    students: Vec<AccountId>,
    issuance: IssuanceReport,
    issuance_seq: u64,
    settlement: PerToken<TokenSettlement>,
    days: u32,
    final_balances: BTreeMap<AccountId, Balances>,
}

#[derive(Serialize)]
struct HashedContent<'a> {
    config: &'a MonthConfig,
    students: &'a [AccountId],
    issuance: &'a IssuanceReport,
    issuance_seq: u64,
    days: &'a [DayRecord],
    settlement: &'a PerToken<TokenSettlement>,
}

/// SHA-256 over everything the record holds except its own id.
pub fn content_hash(record: &MonthRecord) -> String {
    let content = HashedContent {
        config: &record.config,
        students: &record.students,
        issuance: &record.issuance,
        issuance_seq: record.issuance_seq,
        days: &record.days,
        settlement: &record.settlement,
    };
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&content).expect("record serializes"));
    let mut log = Vec::new();
    record.ledger.write_jsonl(&mut log).expect("in-memory write");
    h.update(&log);
    hex::encode(h.finalize())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RecordIoError + '_ {
    move |e| RecordIoError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RecordIoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| RecordIoError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RecordIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| RecordIoError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

pub fn day_file_name(day: u32) -> String {
    format!("day_{day:02}.json")
}

pub fn write_record(record: &MonthRecord, dir: &Path) -> Result<(), RecordIoError> {
    let days_dir = dir.join("days");
    fs::create_dir_all(&days_dir).map_err(io_err(&days_dir))?;
    let summary = Summary {
        run_id: record.run_id.clone(),
        config: record.config.clone(),
        students: record.students.clone(),
        issuance: record.issuance.clone(),
        issuance_seq: record.issuance_seq,
        settlement: record.settlement.clone(),
        days: record.days.len() as u32,
        final_balances: record
            .ledger
            .accounts()
            .iter()
            .map(|(id, a)| (id.clone(), a.balances))
            .collect(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let log_path = dir.join("ledger.jsonl");
    let mut log = Vec::new();
    record.ledger.write_jsonl(&mut log)?;
    fs::write(&log_path, log).map_err(io_err(&log_path))?;
    for d in &record.days {
        write_json(&days_dir.join(day_file_name(d.day)), d)?;
    }
    Ok(())
}

/// Loads a record and checks it against its own summary and content hash.
pub fn read_record(dir: &Path) -> Result<MonthRecord, RecordIoError> {
    let summary: Summary = read_json(&dir.join("summary.json"))?;
    let log_path = dir.join("ledger.jsonl");
    let file = fs::File::open(&log_path).map_err(io_err(&log_path))?;
    let log = Ledger::read_log(BufReader::new(file))?;
    let ledger = Ledger::replay(summary.students.iter().cloned(), &log)?;
    let balances: BTreeMap<AccountId, Balances> = ledger
        .accounts()
        .iter()
        .map(|(id, a)| (id.clone(), a.balances))
        .collect();
    if balances != summary.final_balances {
        return Err(RecordIoError::Corrupt(
            "ledger replay does not reproduce the summary balances".into(),
        ));
    }
    let mut days = Vec::with_capacity(summary.days as usize);
    for day in 1..=summary.days {
        let d: DayRecord = read_json(&dir.join("days").join(day_file_name(day)))?;
        if d.day != day {
            return Err(RecordIoError::Corrupt(format!("day file {day} holds day {}", d.day)));
        }
        days.push(d);
    }
    let record = MonthRecord {
        run_id: summary.run_id,
        config: summary.config,
        students: summary.students,
        issuance: summary.issuance,
        days,
        settlement: summary.settlement,
        issuance_seq: summary.issuance_seq,
        ledger,
    };
    if content_hash(&record) != record.run_id {
        return Err(RecordIoError::Corrupt("content hash does not match run id".into()));
    }
    Ok(record)
}

//! CSV forms of diagrams and point clouds.
//!
//! Persistence rows are `day,dim,birth,death,robustness` with six decimals;
//! essential classes print `inf` for death and robustness.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{PersistencePair, PointCloud, TdaError};

pub const PERSISTENCE_HEADER: &str = "day,dim,birth,death,robustness";
pub const CLOUD_HEADER: &str = "day,user,x_raw,y_raw,x_scaled,y_scaled";

fn fmt6(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_owned()
    } else {
        format!("{v:.6}")
    }
}

/// Rows for one day's pairs, without the header.
pub fn diagram_rows(pairs: &[PersistencePair], day: u32) -> String {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(
            out,
            "{day},{},{},{},{}",
            p.dim,
            fmt6(p.birth),
            fmt6(p.death),
            fmt6(p.robustness())
        );
    }
    out
}

/// One day's diagram as a complete CSV document.
pub fn export_diagram(pairs: &[PersistencePair], day: u32) -> String {
    format!("{PERSISTENCE_HEADER}\n{}", diagram_rows(pairs, day))
}

/// All days of a month, in day order.
pub fn export_diagrams(days: &BTreeMap<u32, Vec<PersistencePair>>) -> String {
    let mut out = format!("{PERSISTENCE_HEADER}\n");
    for (day, pairs) in days {
        out.push_str(&diagram_rows(pairs, *day));
    }
    out
}

/// Parses a persistence CSV back into per-day pairs.
pub fn parse_diagrams(text: &str) -> Result<BTreeMap<u32, Vec<PersistencePair>>, TdaError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PERSISTENCE_HEADER => {}
        _ => {
            return Err(TdaError::Parse {
                line: 1,
                message: format!("expected header {PERSISTENCE_HEADER}"),
            })
        }
    }
    let mut out: BTreeMap<u32, Vec<PersistencePair>> = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| TdaError::Parse {
            line: i + 1,
            message: m.to_owned(),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        let num = |s: &str| -> Result<f64, TdaError> {
            if s == "inf" {
                Ok(f64::INFINITY)
            } else {
                s.parse().map_err(|_| err("bad number"))
            }
        };
        let day: u32 = fields[0].parse().map_err(|_| err("bad day"))?;
        let dim: u8 = fields[1].parse().map_err(|_| err("bad dim"))?;
        let birth = num(fields[2])?;
        let death = num(fields[3])?;
        if !(birth <= death) {
            return Err(err("birth after death"));
        }
        out.entry(day).or_default().push(PersistencePair { dim, birth, death });
    }
    Ok(out)
}

pub fn export_cloud(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for p in &cloud.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            cloud.day,
            p.user,
            fmt6(p.x_raw),
            fmt6(p.y_raw),
            fmt6(p.x),
            fmt6(p.y)
        );
    }
    out
}

pub fn export_clouds<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> String {
    let mut out = format!("{CLOUD_HEADER}\n");
    for c in clouds {
        out.push_str(&export_cloud(c));
    }
    out
}

//! Persistent homology of a day's market point cloud.
//!
//! Each active student is a point (tokens traded that day, change in kWh
//! use from the previous day). Balls of radius `r` grow around the points;
//! a simplex enters the Čech filtration at the radius of its minimal
//! enclosing circle. One-dimensional classes of the resulting filtration
//! are the cavities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{AccountId, TokenKind};
use crate::lifecycle::MonthRecord;

pub mod export;
pub mod geometry;
pub mod persistence;

pub use persistence::{compute_persistence, robust_cavities, PersistencePair};

/// Largest cloud the filtration accepts.
pub const MAX_POINTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdaError {
    #[error("day {day} outside 2..={last}")]
    DayOutOfRange { day: u32, last: u32 },
    #[error("{0} points exceed the limit of {MAX_POINTS}")]
    TooManyPoints(usize),
    #[error("filtration entry {index}: {reason}")]
    NonMonotoneFiltration { index: usize, reason: String },
    #[error("persistence csv line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Raw units: tokens on x, kWh on y.
    Identity,
    /// Per-axis z-scores using the whole month's points.
    #[default]
    Standardize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub user: AccountId,
    pub x_raw: f64,
    pub y_raw: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub day: u32,
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    /// A cloud from bare scaled coordinates, with generated user ids.
    pub fn from_coords(day: u32, coords: &[(f64, f64)]) -> Self {
        Self {
            day,
            points: coords
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| CloudPoint {
                    user: AccountId::new(format!("p{i}")),
                    x_raw: x,
                    y_raw: y,
                    x,
                    y,
                })
                .collect(),
        }
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.y)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSimplex {
    /// Strictly increasing point indices; 1 to 3 of them.
    pub vertices: Vec<usize>,
    /// Filtration radius.
    pub value: f64,
}

impl FilteredSimplex {
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }
}

/// Unscaled (user, tokens traded, kWh change) for every student active on
/// `day`: anyone with a fill or a positive meter reading.
fn raw_points(record: &MonthRecord, day: u32) -> Result<Vec<(AccountId, f64, f64)>, TdaError> {
    let last = record.days.len() as u32;
    let (Some(today), Some(yesterday)) = (record.day(day), day.checked_sub(1).and_then(|d| record.day(d)))
    else {
        return Err(TdaError::DayOutOfRange { day, last });
    };
    let mut traded: BTreeMap<&AccountId, u64> = BTreeMap::new();
    for token in TokenKind::ALL {
        for f in &today.results.get(token).fills {
            *traded.entry(&f.account).or_default() += f.filled_qty;
        }
    }
    Ok(record
        .students
        .iter()
        .filter_map(|s| {
            let volume = traded.get(s).copied().unwrap_or(0);
            let now = today.usage_kwh.get(s).copied().unwrap_or(0.0);
            let before = yesterday.usage_kwh.get(s).copied().unwrap_or(0.0);
            (volume > 0 || now > 0.0).then(|| (s.clone(), volume as f64, now - before))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: (f64, f64),
    pub std: (f64, f64),
}

impl AxisStats {
    pub const IDENTITY: AxisStats = AxisStats {
        mean: (0.0, 0.0),
        std: (1.0, 1.0),
    };

    /// Population mean and standard deviation over every point of days
    /// 2..=end. A degenerate axis keeps unit spread.
    pub fn for_month(record: &MonthRecord) -> Self {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for day in 2..=record.days.len() as u32 {
            for (_, x, y) in raw_points(record, day).unwrap_or_default() {
                xs.push(x);
                ys.push(y);
            }
        }
        let stat = |v: &[f64]| {
            if v.is_empty() {
                return (0.0, 1.0);
            }
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 && sd.is_finite() { sd } else { 1.0 })
        };
        let (mx, sx) = stat(&xs);
        let (my, sy) = stat(&ys);
        Self {
            mean: (mx, my),
            std: (sx, sy),
        }
    }

    pub fn for_scaling(record: &MonthRecord, scaling: Scaling) -> Self {
        match scaling {
            Scaling::Identity => Self::IDENTITY,
            Scaling::Standardize => Self::for_month(record),
        }
    }
}

/// Point cloud for `day` (which must be at least 2) using precomputed axis
/// statistics.
pub fn point_cloud_with(record: &MonthRecord, day: u32, stats: &AxisStats) -> Result<PointCloud, TdaError> {
    let points = raw_points(record, day)?
        .into_iter()
        .map(|(user, x, y)| CloudPoint {
            user,
            x_raw: x,
            y_raw: y,
            x: (x - stats.mean.0) / stats.std.0,
            y: (y - stats.mean.1) / stats.std.1,
        })
        .collect();
    Ok(PointCloud { day, points })
}

pub fn build_point_cloud(record: &MonthRecord, day: u32, scaling: Scaling) -> Result<PointCloud, TdaError> {
    point_cloud_with(record, day, &AxisStats::for_scaling(record, scaling))
}

/// Čech filtration of the cloud up to triangles, sorted by value, then
/// dimension, then vertex tuple.
pub fn cech_filtration(cloud: &PointCloud) -> Result<Vec<FilteredSimplex>, TdaError> {
    cech_filtration_of(&cloud.coords())
}

pub fn cech_filtration_of(points: &[(f64, f64)]) -> Result<Vec<FilteredSimplex>, TdaError> {
    let n = points.len();
    if n > MAX_POINTS {
        return Err(TdaError::TooManyPoints(n));
    }
    let mut edge_value = vec![vec![0.0; n]; n];
    let mut out = Vec::with_capacity(n + n * n.saturating_sub(1) / 2 + n * n * n / 6);
    for i in 0..n {
        out.push(FilteredSimplex {
            vertices: vec![i],
            value: 0.0,
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            let v = geometry::enclosing_radius2(points[i], points[j]);
            edge_value[i][j] = v;
            out.push(FilteredSimplex {
                vertices: vec![i, j],
                value: v,
            });
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let faces = edge_value[i][j].max(edge_value[i][k]).max(edge_value[j][k]);
                let v = geometry::enclosing_radius3(points[i], points[j], points[k]).max(faces);
                out.push(FilteredSimplex {
                    vertices: vec![i, j, k],
                    value: v,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.vertices.len().cmp(&b.vertices.len()))
            .then_with(|| a.vertices.cmp(&b.vertices))
    });
    Ok(out)
}

/// Filtration plus reduction in one step.
pub fn diagram_of(points: &[(f64, f64)]) -> Result<Vec<PersistencePair>, TdaError> {
    compute_persistence(&cech_filtration_of(points)?)
}

/// Diagrams for every analysable day of a month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramSet {
    pub run_id: String,
    pub scaling: Scaling,
    pub stats: AxisStats,
    pub clouds: BTreeMap<u32, PointCloud>,
    pub days: BTreeMap<u32, Vec<PersistencePair>>,
}

impl DiagramSet {
    /// Computes days 2..=end. `jobs > 1` spreads days over a thread pool;
    /// the result is identical for any job count.
    pub fn compute(record: &MonthRecord, scaling: Scaling, jobs: usize) -> Result<Self, TdaError> {
        let stats = AxisStats::for_scaling(record, scaling);
        let days: Vec<u32> = (2..=record.days.len() as u32).collect();
        let one = |day: u32| -> Result<(u32, PointCloud, Vec<PersistencePair>), TdaError> {
            let cloud = point_cloud_with(record, day, &stats)?;
            let pairs = compute_persistence(&cech_filtration(&cloud)?)?;
            Ok((day, cloud, pairs))
        };
        let computed: Vec<_> = if jobs > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .expect("thread pool");
            pool.install(|| days.par_iter().map(|&d| one(d)).collect::<Result<Vec<_>, _>>())?
        } else {
            days.iter().map(|&d| one(d)).collect::<Result<Vec<_>, _>>()?
        };
        let mut clouds = BTreeMap::new();
        let mut diagrams = BTreeMap::new();
        for (day, cloud, pairs) in computed {
            clouds.insert(day, cloud);
            diagrams.insert(day, pairs);
        }
        Ok(Self {
            run_id: record.run_id.clone(),
            scaling,
            stats,
            clouds,
            days: diagrams,
        })
    }
}

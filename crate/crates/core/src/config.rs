//! Scenario files (TOML).
//!
//! ```toml
//! [month]
//! days_in_month = 31
//! num_students = 80                 # dormitory headcount
//! initial_currency = 20000          # deposited to every active student
//! shortage_premium_factor = 1.5     # > 1
//! settlement_discount_factor = 0.8  # buyback = base * factor
//! theta = 0.25                      # cavity robustness threshold
//! [month.prev_year_usage_kwh]
//! UPX = 19840
//! SPX = 1000
//! [month.base_price]
//! UPX = 30
//! SPX = 40
//! # [month.settlement_anchor]      # optional explicit buyback prices
//!
//! [scenario]
//! start_date = "2022-07-01"
//! active_students = 17
//!
//! [consumption]
//! mode = "stochastic"               # or "fixture" with meter_csv = "path"
//! mean_kwh = 7.6
//! mean_spread = 0.25
//! dispersion = 0.35
//! weekday_factor = 0.95
//! weekend_factor = 1.12
//!
//! [agents]
//! target_buffer_days = 1.0
//! buffer_spread = 1.0
//! aggressiveness = 0.15
//! participation = 0.35
//!
//! [analysis]
//! scaling = "standardize"           # or "identity"
//! theta_sweep = [0.1, 0.25, 0.5]
//! ```
//!
//! The seed is never part of the file; it is supplied per run.

use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lifecycle::MonthConfig;
use crate::simulator::{
    self, AgentParams, AgentPolicy, ConsumptionModel, SimError, Simulation, StochasticUsage,
};
use crate::tda::Scaling;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub start_date: NaiveDate,
    pub active_students: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "mode", rename_all = "snake_case")]
pub enum ConsumptionSection {
    Stochastic {
        mean_kwh: f64,
        #[serde(default)]
        mean_spread: f64,
        #[serde(default)]
        dispersion: f64,
        #[serde(default = "one")]
        weekday_factor: f64,
        #[serde(default = "one")]
        weekend_factor: f64,
    },
    /// Students and readings come from a meter CSV, resolved relative to
    /// the config file.
    Fixture { meter_csv: PathBuf },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub target_buffer_days: f64,
    #[serde(default)]
    pub buffer_spread: f64,
    pub aggressiveness: f64,
    pub participation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default = "default_sweep")]
    pub theta_sweep: Vec<f64>,
}

fn default_sweep() -> Vec<f64> {
    vec![0.1, 0.25, 0.5]
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            scaling: Scaling::default(),
            theta_sweep: default_sweep(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub month: MonthConfig,
    pub scenario: ScenarioSection,
    pub consumption: ConsumptionSection,
    pub agents: AgentSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

/// The bundled demo scenario: 17 active students of an 80-student
/// dormitory trading through a 31-day July.
pub const DEMO_CONFIG: &str = include_str!("../data/demo.toml");

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn demo() -> Self {
        Self::from_toml(DEMO_CONFIG).expect("bundled demo config is valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.month
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.scenario.active_students == 0 {
            return Err(ConfigError::Invalid("active_students must be positive".into()));
        }
        if self.analysis.theta_sweep.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(ConfigError::Invalid("theta_sweep values must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn end_date(&self) -> NaiveDate {
        self.scenario.start_date + chrono::Days::new(self.month.days_in_month as u64 - 1)
    }

    /// Builds the simulation for `seed`. Relative fixture paths resolve
    /// against `base_dir`.
    pub fn simulation(&self, seed: u64, base_dir: &Path) -> Result<Simulation, ConfigError> {
        let days = self.month.days_in_month;
        let sim_err = |e: SimError| ConfigError::Invalid(e.to_string());
        let (students, consumption) = match &self.consumption {
            ConsumptionSection::Stochastic {
                mean_kwh,
                mean_spread,
                dispersion,
                weekday_factor,
                weekend_factor,
            } => {
                let n = self.scenario.active_students as usize;
                let usage = StochasticUsage {
                    means: simulator::student_means(*mean_kwh, *mean_spread, n, seed),
                    dispersion: *dispersion,
                    weekday_factor: *weekday_factor,
                    weekend_factor: *weekend_factor,
                    first_weekday: self.scenario.start_date.weekday().num_days_from_monday(),
                    days,
                    seed,
                };
                (simulator::student_ids(n), ConsumptionModel::Stochastic(usage))
            }
            ConsumptionSection::Fixture { meter_csv } => {
                let path = base_dir.join(meter_csv);
                let file = std::fs::File::open(&path).map_err(|e| ConfigError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let ingest = simulator::read_meter_csv(file).map_err(sim_err)?;
                simulator::fixture_from_meter(&ingest.accepted, self.scenario.start_date, days)
            }
        };
        let base = AgentParams {
            target_buffer_days: self.agents.target_buffer_days,
            aggressiveness: self.agents.aggressiveness,
            participation: self.agents.participation,
        };
        let policy = AgentPolicy::varied(base, self.agents.buffer_spread, students.len(), seed);
        Simulation::new(students, consumption, policy, days).map_err(sim_err)
    }
}

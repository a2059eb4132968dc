//! Dormitory energy-token market: ledger, call auction, monthly token
//! lifecycle, seeded market simulation, and topological analysis of the
//! resulting trading days.

pub mod auction;
pub mod cli;
pub mod config;
pub mod hypergraph;
pub mod ledger;
pub mod lifecycle;
pub mod market_analysis;
pub mod simulator;
pub mod tda;

// Seeded simulation of the demo dormitory: 17 active students, 31 days.
//
// `cargo run --example synthetic_month -- [seed]`

use std::error::Error;
use std::path::Path;

use edisonx::config::ScenarioConfig;
use edisonx::ledger::TokenKind;
use edisonx::lifecycle::run_month;
use edisonx::market_analysis::daily_counts;

pub fn run_seed(seed: u64) -> Result<(), Box<dyn Error>> {
    let cfg = ScenarioConfig::demo();
    let mut sim = cfg.simulation(seed, Path::new("."))?;
    let record = run_month(&cfg.month, &mut sim)?;
    println!("run {} (seed {seed})", &record.run_id[..12]);
    println!("day  token  bids  asks  price  volume");
    for c in daily_counts(&record) {
        let price = c.price.map_or("-".into(), |p| p.to_string());
        println!("{:>3}  {:>5}  {:>4}  {:>4}  {price:>5}  {:>6}", c.day, c.token, c.bids, c.asks, c.volume);
    }
    for t in TokenKind::ALL {
        let traded = record.days.iter().filter(|d| d.results.get(t).volume > 0).count();
        println!("{t}: traded on {traded} of {} days", record.days.len());
    }
    Ok(())
}

pub fn run() -> Result<(), Box<dyn Error>> {
    run_seed(1)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    run_seed(seed)
}

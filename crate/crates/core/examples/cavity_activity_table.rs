// Do trading days coincide with cavities in the (tokens traded, change in
// use) plane? Labels every day of a simulated month and tabulates.
//
// `cargo run --example cavity_activity_table`

use std::error::Error;
use std::path::Path;

use edisonx::config::ScenarioConfig;
use edisonx::lifecycle::run_month;
use edisonx::market_analysis::{activity_ratios, association, contingency, label_days, TransactionScope};
use edisonx::tda::{DiagramSet, Scaling};

fn show(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |x| format!("{x:.2}"))
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let cfg = ScenarioConfig::demo();
    let mut sim = cfg.simulation(3, Path::new("."))?;
    let record = run_month(&cfg.month, &mut sim)?;
    let diagrams = DiagramSet::compute(&record, Scaling::Standardize, 2)?;

    let labels = label_days(&record, &diagrams.days, cfg.month.theta, TransactionScope::AnyToken)?;
    let table = contingency(&labels);
    println!("                 no cavity  cavity");
    println!("transactions     {:>9}  {:>6}", table.n_tx_nocav, table.n_tx_cav);
    println!("no transactions  {:>9}  {:>6}", table.n_notx_nocav, table.n_notx_cav);

    let ratios = activity_ratios(&table);
    let assoc = association(&table);
    println!(
        "cavity/no-cavity ratio: {} with trades, {} without",
        show(ratios.ratio_with_tx),
        show(ratios.ratio_without_tx)
    );
    println!("odds ratio {}, Fisher p = {:.3}", show(assoc.odds_ratio), assoc.fisher_p);

    println!("\ntheta  cavity days");
    for theta in [0.05, 0.1, 0.25, 0.5, 1.0] {
        let t = contingency(&label_days(&record, &diagrams.days, theta, TransactionScope::AnyToken)?);
        println!("{theta:>5}  {:>4}", t.cavity_days());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}

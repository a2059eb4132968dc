// Who trades with whom: one hyperedge per trading day, per token.
//
// `cargo run --example transaction_hypergraph`

use std::error::Error;
use std::path::Path;

use edisonx::config::ScenarioConfig;
use edisonx::hypergraph::Hypergraph;
use edisonx::ledger::TokenKind;
use edisonx::lifecycle::run_month;

pub fn run() -> Result<(), Box<dyn Error>> {
    let cfg = ScenarioConfig::demo();
    let mut sim = cfg.simulation(7, Path::new("."))?;
    let record = run_month(&cfg.month, &mut sim)?;

    for token in TokenKind::ALL {
        let h = Hypergraph::build(&record.results(token), token)?.with_isolated(record.students.iter().cloned());
        println!("{token}: {} nodes, {} hyperedges", h.nodes.len(), h.edges.len());
        for (size, n) in h.cardinality_histogram() {
            println!("  {n} edge(s) of {size} traders");
        }
        let mut degrees: Vec<_> = h.degrees().into_iter().collect();
        degrees.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let top: Vec<String> = degrees.iter().take(5).map(|(id, d)| format!("{id}={d}")).collect();
        println!("  most active: {}", top.join(" "));
        let handshake: usize = degrees.iter().map(|d| d.1).sum();
        assert_eq!(handshake, h.edges.iter().map(|e| e.cardinality()).sum::<usize>());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}

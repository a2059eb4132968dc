// The CLI pipeline from library code: simulate a record directory, analyse
// it and print the text report.
//
// `cargo run --example full_pipeline -- [out_dir]`

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};

use edisonx::cli::{self, AnalyzeOptions, Which};

pub fn run_in(out: &Path) -> Result<(), Box<dyn Error>> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo.toml");
    let manifest = cli::simulate(&config, 2022, out)?;
    println!("simulated run {} for {} to {}", manifest.run_id, manifest.period.start, manifest.period.end);

    let analysis = out.join("analysis");
    let files = cli::analyze(
        out,
        &analysis,
        &AnalyzeOptions {
            theta: None,
            which: Which::All,
            jobs: 4,
        },
    )?;
    println!("wrote {}\n", files.join(", "));
    print!("{}", fs::read_to_string(analysis.join("report.txt"))?);
    Ok(())
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    run_in(dir.path())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    match std::env::args().nth(1) {
        Some(out) => run_in(&PathBuf::from(out)),
        None => run(),
    }
}

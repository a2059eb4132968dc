// Persistence diagrams of small point clouds and which cavities count as
// robust.
//
// `cargo run --example cavity_detection`

use std::error::Error;
use std::f64::consts::TAU;

use edisonx::tda::{diagram_of, export, robust_cavities};

pub fn run() -> Result<(), Box<dyn Error>> {
    let ring: Vec<(f64, f64)> = (0..10)
        .map(|i| {
            let a = TAU * i as f64 / 10.0;
            (2.0 * a.cos(), 2.0 * a.sin())
        })
        .collect();
    let clouds = [
        ("triangle", vec![(0.0, 0.0), (1.0, 0.0), (0.5, 3f64.sqrt() / 2.0)]),
        ("square", vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]),
        ("ring", ring),
        ("line", (0..6).map(|i| (i as f64, 0.5 * i as f64)).collect()),
    ];
    let theta = 0.25;
    for (day, (name, pts)) in clouds.iter().enumerate() {
        let pairs = diagram_of(pts)?;
        let h1: Vec<_> = pairs.iter().filter(|p| p.dim == 1 && !p.is_zero_persistence()).copied().collect();
        let robust = robust_cavities(&pairs, theta);
        println!("{name}: {} points, {} cavities, {} robust at {theta}", pts.len(), h1.len(), robust.len());
        print!("{}", export::diagram_rows(&h1, day as u32 + 1));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}

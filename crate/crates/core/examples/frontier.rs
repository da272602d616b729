//! Trace the (q_cat, q_avg) frontier as the combined weight ν moves from 0 to 1.

use multiscm::diagnostics::{default_grid, frontier};
use multiscm::simlab::{generate, DgpConfig};
use multiscm::weights::FitOptions;

fn main() -> multiscm::Result<()> {
    let config = DgpConfig {
        rho: 0.5,
        seed: 8,
        ..DgpConfig::default()
    };
    let (panel, _) = generate(&config, 0)?;
    let points = frontier(&panel, &default_grid(), &FitOptions::default())?;
    println!("{:>5} {:>9} {:>9}", "nu", "q_avg", "q_cat");
    for p in &points {
        println!("{:>5.2} {:>9.5} {:>9.5}", p.nu, p.q_avg, p.q_cat);
    }
    Ok(())
}

//! Decay of the worst empirical calibration gap with the sample size.
//!
//! `cargo run --release --example uniform_convergence`

use decal::experiments::{uniform_convergence_experiment, UniformConfig};

fn main() -> decal::Result<()> {
    let result = uniform_convergence_experiment(&UniformConfig::default())?;
    for c in &result.cells {
        println!("{:<16} sup gap {:.5}", c.label, c.metric("sup_gap"));
    }
    for (k, v) in &result.fits {
        println!("{k:<24} {v:.4}");
    }
    for check in &result.checks {
        println!("{:<16} {} {}", check.name, if check.pass { "ok  " } else { "FAIL" }, check.detail);
    }
    Ok(())
}

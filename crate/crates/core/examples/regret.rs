//! Calibrate a planted-bias predictor against a registered loss set, then
//! measure how much any decision maker could gain by acting on another loss.
//!
//! `cargo run --release --example regret`

use decal::experiments::regret::regret_world_experiment;
use decal::experiments::RegretConfig;

fn main() -> decal::Result<()> {
    let (result, predictor, losses) = regret_world_experiment(&RegretConfig::default())?;
    println!("{} patches, {} losses", predictor.patches().len(), losses.len());
    for (k, v) in result.fits.iter().chain(&result.tolerances) {
        println!("{k:<24} {v:.5}");
    }
    for check in &result.checks {
        println!("{:<22} {} {}", check.name, if check.pass { "ok  " } else { "FAIL" }, check.detail);
    }
    Ok(())
}

//! Collision-detector experiment on the two lower-bound worlds.
//!
//! `cargo run --release --example lower_bound`

use decal::experiments::{distinguishing_experiment, exact_d1_acceptance, DistinguishingConfig};

fn main() -> decal::Result<()> {
    let config = DistinguishingConfig::default();
    let result = distinguishing_experiment(&config)?;
    println!("{:>6} {:>4} {:>9} {:>9} {:>9}", "d", "n", "gap", "exact", "n^2/d");
    for c in &result.cells {
        println!(
            "{:>6} {:>4} {:>9.4} {:>9.4} {:>9.3}",
            c.params["d"],
            c.params["n"],
            c.metric("gap"),
            c.metric("exact_gap"),
            c.metric("n2_over_d")
        );
    }
    println!("exact D1 acceptance at d=100, n=40: {:.4}", exact_d1_acceptance(100, 40));
    for check in &result.checks {
        println!("{:<28} {} {}", check.name, if check.pass { "ok  " } else { "FAIL" }, check.detail);
    }
    Ok(())
}

//! Calibration on planted-bias worlds across action counts and both
//! algorithms: iterations, held-out error and potential.
//!
//! `cargo run --release --example convergence`

use decal::experiments::{convergence_experiment, ConvergenceCell, ConvergenceConfig};
use decal::model::Algorithm;

fn main() -> decal::Result<()> {
    let mut cells = Vec::new();
    for algorithm in [Algorithm::Alg1, Algorithm::Alg2] {
        for num_actions in [1, 2, 4] {
            cells.push(ConvergenceCell { epsilon: 0.1, r1: 1.0, r2: 1.0, num_actions, algorithm });
        }
    }
    let config = ConvergenceConfig {
        cells,
        runs: 2,
        shift: 0.3,
        beta: 20.0,
        audit_batch_size: 500,
        heldout_size: 2000,
        pool_size: 32,
        seed: 7,
    };
    let result = convergence_experiment(&config)?;
    println!("{:<14} {:>4} {:>5} {:>6} {:>9} {:>9} {:>9} {:>9}", "cell", "alg", "|A|", "iters", "decce0", "decce", "pot0", "pot");
    for c in &result.cells {
        println!(
            "{:<14} {:>4} {:>5} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            c.label,
            c.params["algorithm"],
            c.params["num_actions"],
            c.metric("iterations"),
            c.metric("initial_decce"),
            c.metric("final_decce"),
            c.metric("initial_potential"),
            c.metric("final_potential"),
        );
    }
    for check in &result.checks {
        println!("{:<26} {} {}", check.name, if check.pass { "ok  " } else { "FAIL" }, check.detail);
    }
    Ok(())
}

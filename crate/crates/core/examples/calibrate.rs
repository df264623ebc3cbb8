//! Calibrate the planted-bias predictor with both patch rules and print the
//! per-iteration trace.
//!
//! `cargo run --release --example calibrate`

use decal::calibrate::{run_calibration, CalibConfig};
use decal::model::{Algorithm, Predictor};
use decal::synth::SynthSpec;

fn main() -> decal::Result<()> {
    for algorithm in [Algorithm::Alg1, Algorithm::Alg2] {
        let world = SynthSpec::planted_bias(0.3, 1, 0, 11);
        let mut source = world.source()?;
        let mut config = CalibConfig::new(0.1, 20.0, 1.0, 1.0);
        config.algorithm = algorithm;
        config.num_actions = 4;
        let (p, trace) = run_calibration(Predictor::new(world.planted_predictor()?), &mut source, &config)?;

        println!("{algorithm:?}: eta = {}, cap = {} iterations", trace.eta, trace.max_iters);
        println!("{:>4} {:>9} {:>10} {:>10}", "iter", "gap", "pot before", "pot after");
        for r in &trace.records {
            println!("{:>4} {:>9.4} {:>10.5} {:>10.5}", r.iter, r.gap, r.pot_before, r.pot_after);
        }
        if let Some(h) = &trace.heldout {
            println!(
                "{:?} after {} patches; held-out decce {:.4} -> {:.4}, potential {:.4} -> {:.4}\n",
                trace.status,
                p.patches().len(),
                h.initial_decce,
                h.final_decce,
                h.initial_potential,
                h.final_potential
            );
        }
    }
    Ok(())
}

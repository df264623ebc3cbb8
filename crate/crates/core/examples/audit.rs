//! Audit two predictors on the planted-bias world: the shifted one fails,
//! the true conditional mean passes.
//!
//! `cargo run --release --example audit`

use decal::audit::{audit, random_pool};
use decal::data::SampleSource;
use decal::model::Predictor;
use decal::synth::SynthSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> decal::Result<()> {
    let world = SynthSpec::planted_bias(0.3, 1, 0, 7);
    let batch = world.source()?.next_batch(4000)?.samples;
    let support: Vec<Vec<f64>> = (0..=10).map(|i| vec![i as f64 / 10.0]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pool = random_pool(world.kernel, &support, 2, 4, 1.0, 32, &mut rng)?;

    let (epsilon, beta) = (0.1, 20.0);
    for (name, base) in [("planted", world.planted_predictor()?), ("truth", world.truth_predictor()?)] {
        let p = Predictor::new(base);
        let report = audit(&p, &batch, epsilon, beta, &pool)?;
        println!(
            "{name:<8} found = {:<5} gap = {:.4} threshold = {:.4} worst decision loss = {}",
            report.found,
            report.empirical_gap,
            report.threshold,
            report.witness_lossprime.id()
        );
    }
    Ok(())
}

//! Generate the synthetic worlds and write one of them as CSV.
//!
//! `cargo run --example synth_data -- out.csv`

use decal::data::{read_csv, write_csv};
use decal::synth::{gen_dataset, LowRankParams, SynthSpec};

fn main() -> decal::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "planted.csv".into());

    let planted = SynthSpec::planted_bias(0.3, 2, 1000, 3);
    let data = gen_dataset(&planted)?;
    let mean = data.iter().map(|s| s.y[0]).sum::<f64>() / data.len() as f64;
    println!("planted bias: {} samples, mean outcome {mean:.4}", data.len());
    write_csv(std::fs::File::create(&path)?, &data)?;
    let back = read_csv(std::fs::File::open(&path)?)?;
    println!("wrote {path}; round trip exact: {}", back == data);

    let params = LowRankParams { dim: 20, rank: 3, context_dim: 3, noise: 0.3, r2: 1.0, latent_seed: 1, basis_seed: 2 };
    let low = SynthSpec::low_rank(&params, 500, 3)?;
    let data = gen_dataset(&low)?;
    let norm = data.iter().map(|s| s.y.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    println!("low rank: {} samples in dimension {}, largest outcome norm {norm:.4}", data.len(), data[0].y.len());
    Ok(())
}

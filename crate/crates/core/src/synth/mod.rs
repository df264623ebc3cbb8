//! Synthetic worlds, example loss families and the lower-bound construction.

pub mod losses;
pub mod lower_bound;

pub use losses::{cobb_douglas_value, make_cobb_douglas_loss, make_piecewise_linear_loss, piecewise_linear_value, Piece};
pub use lower_bound::{
    decce_linear_binary, default_r_grid, gen_lower_bound, gen_lower_bound_with_sigma, shattering_patterns, shatters,
    LowerBoundInstance, LowerBoundWorld, Observation,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Sample, SampleSource};
use crate::error::{invalid, Result};
use crate::kernel::{dot, KernelKind, KernelSpec};
use crate::model::BasePredictor;

/// Distribution of contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ContextDist {
    /// Uniform on `[0, 1]^dim`.
    UniformCube { dim: usize },
}

impl ContextDist {
    pub fn dim(&self) -> usize {
        match self {
            ContextDist::UniformCube { dim } => *dim,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ContextDist::UniformCube { dim } => (0..*dim).map(|_| rng.random::<f64>()).collect(),
        }
    }
}

/// How outcomes depend on contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum OutcomeModel {
    /// `y = offset + W·x`, clipped into the kernel domain.
    Deterministic { offset: Vec<f64>, weights: Vec<Vec<f64>> },
    /// `y = offset + W·x + u` with `u` uniform on `[−noise, noise]` per coordinate, clipped.
    Noisy { offset: Vec<f64>, weights: Vec<Vec<f64>>, noise: f64 },
    /// Min kernel, finitely supported outcomes. With `t = x₀`,
    /// `P(y = support[j] | x) = (1 − t)·low[j] + t·high[j]`, so `E[φ(y)|x]` is
    /// affine in `t`. The planted predictor is that mean minus `shift·φ(1)`.
    PlantedBias { support: Vec<f64>, low: Vec<f64>, high: Vec<f64>, shift: f64 },
    /// Linear kernel; outcomes in the row span of an orthonormal `basis` (rank × dim):
    /// `z = W·x + u`, `u` uniform on `[−noise, noise]^rank`, `y = basisᵀz`, clipped.
    LowRank { basis: Vec<Vec<f64>>, weights: Vec<Vec<f64>>, noise: f64 },
}

/// A seeded synthetic dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kernel: KernelSpec,
    pub contexts: ContextDist,
    pub outcome: OutcomeModel,
    pub n: usize,
    pub seed: u64,
}

fn check_matrix(w: &[Vec<f64>], rows: usize, cols: usize, what: &str) -> Result<()> {
    if w.len() != rows || w.iter().any(|r| r.len() != cols) {
        return Err(invalid(format!("{what} must be {rows} x {cols}")));
    }
    Ok(())
}

fn is_distribution(p: &[f64]) -> bool {
    p.iter().all(|v| *v >= 0.0 && v.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let p = self.contexts.dim();
        let d = self.kernel.outcome_dim();
        match &self.outcome {
            OutcomeModel::Deterministic { offset, weights } | OutcomeModel::Noisy { offset, weights, .. } => {
                if offset.len() != d {
                    return Err(invalid(format!("offset must have {d} coordinates")));
                }
                check_matrix(weights, d, p, "weights")?;
                if let OutcomeModel::Noisy { noise, .. } = &self.outcome {
                    if !(noise.is_finite() && *noise >= 0.0) {
                        return Err(invalid("noise must be finite and >= 0"));
                    }
                }
            }
            OutcomeModel::PlantedBias { support, low, high, shift } => {
                if self.kernel.kind != KernelKind::Min {
                    return Err(invalid("planted-bias worlds use the min kernel"));
                }
                if p == 0 {
                    return Err(invalid("planted-bias worlds need at least one context coordinate"));
                }
                if support.is_empty() || low.len() != support.len() || high.len() != support.len() {
                    return Err(invalid("support, low and high must have equal nonzero length"));
                }
                if support.iter().any(|y| !(0.0..=1.0).contains(y)) {
                    return Err(invalid("support must lie in [0, 1]"));
                }
                if !is_distribution(low) || !is_distribution(high) {
                    return Err(invalid("low and high must be probability vectors"));
                }
                if !shift.is_finite() {
                    return Err(invalid("shift must be finite"));
                }
            }
            OutcomeModel::LowRank { basis, weights, noise } => {
                if !matches!(self.kernel.kind, KernelKind::Linear { .. }) {
                    return Err(invalid("low-rank worlds use the linear kernel"));
                }
                let rank = basis.len();
                check_matrix(basis, rank, d, "basis")?;
                check_matrix(weights, rank, p, "weights")?;
                if !(noise.is_finite() && *noise >= 0.0) {
                    return Err(invalid("noise must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    fn clip(&self, mut y: Vec<f64>) -> Vec<f64> {
        match self.kernel.kind {
            KernelKind::Min => {
                y[0] = y[0].clamp(0.0, 1.0);
            }
            KernelKind::Linear { .. } | KernelKind::Exp { .. } => {
                let radius = match self.kernel.kind {
                    KernelKind::Exp { .. } => self.kernel.exp_radius(),
                    _ => self.kernel.r2,
                };
                let n = dot(&y, &y).sqrt();
                if n > radius {
                    // shrink a hair further so rounding cannot leave the domain
                    let s = radius / n * (1.0 - 1e-12);
                    y.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        y
    }

    /// Draws one sample. Assumes a validated spec.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let x = self.contexts.sample(rng);
        let y = match &self.outcome {
            OutcomeModel::Deterministic { offset, weights } => {
                let y = offset.iter().zip(weights).map(|(b, w)| b + dot(w, &x)).collect();
                self.clip(y)
            }
            OutcomeModel::Noisy { offset, weights, noise } => {
                let y = offset
                    .iter()
                    .zip(weights)
                    .map(|(b, w)| b + dot(w, &x) + noise * (2.0 * rng.random::<f64>() - 1.0))
                    .collect();
                self.clip(y)
            }
            OutcomeModel::PlantedBias { support, low, high, .. } => {
                let t = x[0].clamp(0.0, 1.0);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = support.len() - 1;
                for (j, (l, h)) in low.iter().zip(high).enumerate() {
                    acc += (1.0 - t) * l + t * h;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                vec![support[pick]]
            }
            OutcomeModel::LowRank { basis, weights, noise } => {
                let z: Vec<f64> = weights.iter().map(|w| dot(w, &x) + noise * (2.0 * rng.random::<f64>() - 1.0)).collect();
                let d = self.kernel.outcome_dim();
                let mut y = vec![0.0; d];
                for (zj, row) in z.iter().zip(basis) {
                    for (yi, b) in y.iter_mut().zip(row) {
                        *yi += zj * b;
                    }
                }
                self.clip(y)
            }
        };
        Sample { x, y }
    }

    /// A lazy, seeded source of fresh batches from this world.
    pub fn source(&self) -> Result<WorldSource> {
        self.validate()?;
        Ok(WorldSource { spec: self.clone(), rng: ChaCha8Rng::seed_from_u64(self.seed), next_id: 0 })
    }

    /// Planted-bias worlds only: `E[φ(y)|x] − shift·φ(1)` as an affine base predictor.
    pub fn planted_predictor(&self) -> Result<BasePredictor> {
        self.planted(true)
    }

    /// Planted-bias worlds only: the true conditional mean embedding `E[φ(y)|x]`.
    pub fn truth_predictor(&self) -> Result<BasePredictor> {
        self.planted(false)
    }

    fn planted(&self, with_shift: bool) -> Result<BasePredictor> {
        self.validate()?;
        let OutcomeModel::PlantedBias { support, low, high, shift } = &self.outcome else {
            return Err(invalid("not a planted-bias world"));
        };
        let p = self.contexts.dim();
        let mut anchors: Vec<Vec<f64>> = support.iter().map(|y| vec![*y]).collect();
        let mut intercept = low.clone();
        let mut slope: Vec<Vec<f64>> = low
            .iter()
            .zip(high)
            .map(|(l, h)| {
                let mut row = vec![0.0; p];
                row[0] = h - l;
                row
            })
            .collect();
        if with_shift {
            anchors.push(vec![1.0]);
            intercept.push(-shift);
            slope.push(vec![0.0; p]);
        }
        BasePredictor::affine(self.kernel, anchors, intercept, slope)
    }

    /// The standard planted-bias world: outcomes on `{0.1, 0.3, 0.5, 0.7, 0.9}`
    /// moving from low to high values as `x₀` grows, bias `shift·φ(1)`.
    pub fn planted_bias(shift: f64, context_dim: usize, n: usize, seed: u64) -> Self {
        SynthSpec {
            kernel: KernelSpec::min(),
            contexts: ContextDist::UniformCube { dim: context_dim.max(1) },
            outcome: OutcomeModel::PlantedBias {
                support: vec![0.1, 0.3, 0.5, 0.7, 0.9],
                low: vec![0.4, 0.3, 0.15, 0.1, 0.05],
                high: vec![0.05, 0.1, 0.15, 0.3, 0.4],
                shift,
            },
            n,
            seed,
        }
    }

    /// Linear-kernel world whose outcomes span a random `rank`-dimensional subspace of ℝᵈ.
    /// The latent map is drawn from `latent_seed` only, so worlds that differ
    /// only in `dim` are isometric.
    pub fn low_rank(params: &LowRankParams, n: usize, seed: u64) -> Result<Self> {
        let LowRankParams { dim, rank, context_dim, noise, r2, latent_seed, basis_seed } = *params;
        if rank == 0 || rank > dim {
            return Err(invalid("rank must be in 1..=dim"));
        }
        let mut latent_rng = ChaCha8Rng::seed_from_u64(latent_seed);
        let scale = 0.5 * r2 / (rank as f64 * context_dim.max(1) as f64).sqrt();
        let coef = Uniform::new(-scale, scale).map_err(|e| invalid(e.to_string()))?;
        let weights = (0..rank).map(|_| (0..context_dim).map(|_| coef.sample(&mut latent_rng)).collect()).collect();
        let mut basis_rng = ChaCha8Rng::seed_from_u64(basis_seed);
        let basis = random_orthonormal(rank, dim, &mut basis_rng);
        Ok(SynthSpec {
            kernel: KernelSpec::linear(dim, r2)?,
            contexts: ContextDist::UniformCube { dim: context_dim },
            outcome: OutcomeModel::LowRank { basis, weights, noise },
            n,
            seed,
        })
    }
}

/// Shape of a [`OutcomeModel::LowRank`] world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowRankParams {
    pub dim: usize,
    pub rank: usize,
    pub context_dim: usize,
    pub noise: f64,
    pub r2: f64,
    pub latent_seed: u64,
    pub basis_seed: u64,
}

/// `k` orthonormal rows in ℝᵈ by Gram–Schmidt on Gaussian vectors.
pub fn random_orthonormal<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    while rows.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for r in &rows {
            let c = dot(&v, r);
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= c * b);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|a| *a /= n);
            rows.push(v);
        }
    }
    rows
}

/// `spec.n` seeded i.i.d. samples.
pub fn gen_dataset(spec: &SynthSpec) -> Result<Vec<Sample>> {
    let mut src = spec.source()?;
    Ok(src.next_batch(spec.n)?.samples)
}

/// Endless seeded sample stream over a [`SynthSpec`].
#[derive(Debug, Clone)]
pub struct WorldSource {
    spec: SynthSpec,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl WorldSource {
    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }
}

impl SampleSource for WorldSource {
    fn next_batch(&mut self, n: usize) -> Result<Batch> {
        let samples = (0..n).map(|_| self.spec.sample(&mut self.rng)).collect();
        let id = self.next_id;
        self.next_id += 1;
        Ok(Batch::new(id, samples))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::decce_estimate;
    use crate::kernel::RkhsElement;
    use crate::model::{LossFunction, Predictor};

    #[test]
    fn deterministic_map() {
        let spec = SynthSpec {
            kernel: KernelSpec::min(),
            contexts: ContextDist::UniformCube { dim: 2 },
            outcome: OutcomeModel::Deterministic { offset: vec![0.1], weights: vec![vec![0.5, 0.25]] },
            n: 5,
            seed: 1,
        };
        let data = gen_dataset(&spec).unwrap();
        assert_eq!(data.len(), 5);
        for s in &data {
            assert_eq!(s.y[0], 0.1 + 0.5 * s.x[0] + 0.25 * s.x[1]);
        }
        assert_eq!(gen_dataset(&spec).unwrap(), data);
    }

    #[test]
    fn planted_predictor_is_exact_mean_minus_shift() {
        let spec = SynthSpec::planted_bias(0.2, 1, 0, 0);
        let truth = Predictor::new(spec.truth_predictor().unwrap());
        let planted = Predictor::new(spec.planted_predictor().unwrap());
        for x in [0.0, 0.3, 1.0] {
            let diff = RkhsElement::axpy(-1.0, &planted.evaluate(&[x]), &truth.evaluate(&[x])).unwrap();
            assert!((diff.norm() - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_single_action_gap_is_shift_norm() {
        let spec = SynthSpec::planted_bias(0.2, 1, 20000, 11);
        let data = gen_dataset(&spec).unwrap();
        let p = Predictor::new(spec.planted_predictor().unwrap());
        let lp = LossFunction::new("lp", vec![RkhsElement::feature(KernelSpec::min(), &[0.5]).unwrap()], 1.0).unwrap();
        let gap = decce_estimate(&p, &data, 1.0, &[lp]).unwrap();
        let slack = crate::experiments::stats::hoeffding_half_width(2.0, data.len(), 0.01);
        assert!((gap - 0.2).abs() < slack, "{gap}");
    }

    #[test]
    fn low_rank_outcomes_stay_in_subspace_and_ball() {
        let spec = SynthSpec::low_rank(&LowRankParams { dim: 6, rank: 2, context_dim: 3, noise: 0.3, r2: 1.0, latent_seed: 1, basis_seed: 2 }, 200, 3).unwrap();
        let OutcomeModel::LowRank { basis, .. } = &spec.outcome else { unreachable!() };
        for s in gen_dataset(&spec).unwrap() {
            assert!(dot(&s.y, &s.y) <= 1.0);
            let proj: f64 = basis.iter().map(|b| dot(b, &s.y).powi(2)).sum();
            assert!((proj - dot(&s.y, &s.y)).abs() < 1e-12);
        }
    }
}

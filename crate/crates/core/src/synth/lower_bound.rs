//! The two-world construction behind the `Ω(√d)` auditing lower bound.
//!
//! Predictions are uniform on `V = {eᵢ/2}` and contexts are the predictions.
//! In `D1` the outcome is `p ± ε·e₁` with a fresh fair sign per sample. In
//! `D2` a hidden `σ ∈ {±1/√d}ᵈ` fixes the sign per prediction value:
//! `y = p + ε·sign(σᵢ)·e₁`. Single samples look identical in both worlds; only
//! repeated prediction values carry signal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LowerBoundWorld {
    D1,
    D2,
}

/// One draw: prediction `e_index/2` and noise sign `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub index: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundInstance {
    pub d: usize,
    pub epsilon: f64,
    pub n: usize,
    world: LowerBoundWorld,
    sigma: Option<Vec<f64>>,
    observations: Vec<Observation>,
}

impl LowerBoundInstance {
    /// The draws, without the world label.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn world(&self) -> LowerBoundWorld {
        self.world
    }

    /// The planted direction (`D2` only).
    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }

    /// Explicit `(p(x), y)` pairs in ℝᵈ.
    pub fn samples(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.observations
            .iter()
            .map(|o| {
                let mut p = vec![0.0; self.d];
                p[o.index] = 0.5;
                let mut y = p.clone();
                y[0] += self.epsilon * o.sign as f64;
                (p, y)
            })
            .collect()
    }
}

fn check_params(d: usize, epsilon: f64, n: usize) -> Result<()> {
    if d < 2 {
        return Err(invalid("lower-bound instances need d >= 2"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0 / 3.0) {
        return Err(invalid("epsilon must lie in (0, 1/3)"));
    }
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    Ok(())
}

pub fn gen_lower_bound<R: Rng + ?Sized>(d: usize, epsilon: f64, n: usize, world: LowerBoundWorld, rng: &mut R) -> Result<LowerBoundInstance> {
    check_params(d, epsilon, n)?;
    match world {
        LowerBoundWorld::D1 => {
            let observations = (0..n)
                .map(|_| Observation { index: rng.random_range(0..d), sign: if rng.random::<bool>() { 1 } else { -1 } })
                .collect();
            Ok(LowerBoundInstance { d, epsilon, n, world, sigma: None, observations })
        }
        LowerBoundWorld::D2 => {
            let s = 1.0 / (d as f64).sqrt();
            let sigma: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { s } else { -s }).collect();
            gen_lower_bound_with_sigma(d, epsilon, n, sigma, rng)
        }
    }
}

/// A `D2` instance with a given `σ`.
pub fn gen_lower_bound_with_sigma<R: Rng + ?Sized>(d: usize, epsilon: f64, n: usize, sigma: Vec<f64>, rng: &mut R) -> Result<LowerBoundInstance> {
    check_params(d, epsilon, n)?;
    if sigma.len() != d || sigma.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return Err(invalid("sigma must have d nonzero entries"));
    }
    let observations = (0..n)
        .map(|_| {
            let index = rng.random_range(0..d);
            Observation { index, sign: if sigma[index] > 0.0 { 1 } else { -1 } }
        })
        .collect();
    Ok(LowerBoundInstance { d, epsilon, n, world: LowerBoundWorld::D2, sigma: Some(sigma), observations })
}

/// `max_r ‖Ê[(y − p)·1(⟨r,p⟩ > 0)]‖ + ‖Ê[(y − p)·1(⟨r,p⟩ ≤ 0)]‖` over the grid.
pub fn decce_linear_binary(samples: &[(Vec<f64>, Vec<f64>)], grid: &[Vec<f64>]) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("direction grid is empty"));
    }
    if samples.is_empty() {
        return Err(invalid("no samples"));
    }
    let d = samples[0].0.len();
    let n = samples.len() as f64;
    let resid: Vec<Vec<f64>> = samples.iter().map(|(p, y)| y.iter().zip(p).map(|(a, b)| a - b).collect()).collect();
    let mut best: f64 = 0.0;
    let mut pos = vec![0.0; d];
    let mut neg = vec![0.0; d];
    for r in grid {
        pos.iter_mut().for_each(|v| *v = 0.0);
        neg.iter_mut().for_each(|v| *v = 0.0);
        for ((p, _), res) in samples.iter().zip(&resid) {
            let target = if dot(r, p) > 0.0 { &mut pos } else { &mut neg };
            target.iter_mut().zip(res).for_each(|(t, v)| *t += v / n);
        }
        best = best.max(dot(&pos, &pos).sqrt() + dot(&neg, &neg).sqrt());
    }
    Ok(best)
}

/// All `2ᵈ` vectors in `{±1/√d}ᵈ` for `d ≤ 12`, otherwise 4096 random unit vectors.
pub fn default_r_grid<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    if d <= 12 {
        sign_vectors(d)
    } else {
        (0..4096)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = dot(&v, &v).sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect()
    }
}

fn sign_vectors(d: usize) -> Vec<Vec<f64>> {
    let s = 1.0 / (d as f64).sqrt();
    (0u64..1 << d)
        .map(|mask| (0..d).map(|i| if mask >> i & 1 == 1 { s } else { -s }).collect())
        .collect()
}

/// Number of distinct labelings `i ↦ 1(⟨r, eᵢ/2⟩ > 0)` of `V` realized over `{±1/√d}ᵈ`.
pub fn shattering_patterns(d: usize) -> usize {
    let mut seen = vec![false; 1 << d];
    for r in sign_vectors(d) {
        let mut mask = 0usize;
        for i in 0..d {
            let mut v = vec![0.0; d];
            v[i] = 0.5;
            if dot(&r, &v) > 0.0 {
                mask |= 1 << i;
            }
        }
        seen[mask] = true;
    }
    seen.iter().filter(|s| **s).count()
}

/// Whether every labeling of `V` is realized (exhaustive; `d ≤ 20`).
pub fn shatters(d: usize) -> bool {
    d <= 20 && shattering_patterns(d) == 1 << d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn d2_all_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sigma = vec![1.0 / 2.0; 4];
        let inst = gen_lower_bound_with_sigma(4, 0.1, 50, sigma, &mut rng).unwrap();
        for (p, y) in inst.samples() {
            assert!((y[0] - p[0] - 0.1).abs() < 1e-15);
            assert!(y[1..].iter().zip(&p[1..]).all(|(a, b)| a == b));
        }
    }

    #[test]
    fn d2_at_sigma_reaches_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = gen_lower_bound(8, 0.2, 30, LowerBoundWorld::D2, &mut rng).unwrap();
        let sigma = inst.sigma().unwrap().to_vec();
        let v = decce_linear_binary(&inst.samples(), &[sigma]).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_sample_gives_residual_norm() {
        let samples = vec![(vec![0.5, 0.0], vec![0.3, 0.4])];
        let v = decce_linear_binary(&samples, &[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert!((v - (0.04f64 + 0.16).sqrt()).abs() < 1e-12);
        assert!(decce_linear_binary(&samples, &[]).is_err());
    }

    #[test]
    fn shattering_small() {
        for d in 2..=8 {
            assert!(shatters(d));
        }
    }

    #[test]
    fn parameter_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_lower_bound(1, 0.1, 5, LowerBoundWorld::D1, &mut rng).is_err());
        assert!(gen_lower_bound(5, 0.4, 5, LowerBoundWorld::D1, &mut rng).is_err());
        assert!(gen_lower_bound(5, 0.1, 0, LowerBoundWorld::D1, &mut rng).is_err());
    }
}

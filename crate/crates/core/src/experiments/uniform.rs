//! Uniform convergence of empirical calibration gaps.
//!
//! A predictor and a pool of loss pairs `(ℓ, ℓ′)` are fixed. For each sample
//! size `n` the harness measures `max_pairs |gap_n − gap_ref|`, averages it
//! over resamples and fits `ln(sup gap) = a + b·ln n`. The decay should be
//! close to `n^{−1/2}`. The same protocol on two linear-kernel worlds of
//! different ambient dimension (same intrinsic rank) checks that the fitted
//! level does not depend on the dimension.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{random_loss, signed_gap_view};
use crate::data::SampleSource;
use crate::error::{invalid, Result};
use crate::experiments::stats::{linear_fit, LinearFit};
use crate::experiments::{derive_seed, Cell, ExperimentResult};
use crate::kernel::KernelSpec;
use crate::model::{BasePredictor, BatchView, LossFunction, Predictor};
use crate::synth::{ContextDist, LowRankParams, OutcomeModel, SynthSpec};

const REFERENCE_CHUNK: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniformConfig {
    pub n_grid: Vec<usize>,
    pub reference_n: usize,
    pub resamples: usize,
    /// Number of `(ℓ, ℓ′)` pairs.
    pub pool_size: usize,
    pub num_actions: usize,
    pub beta: f64,
    /// Ambient dimensions of the two linear-kernel worlds.
    pub dims: [usize; 2],
    /// Intrinsic rank shared by the linear-kernel worlds.
    pub rank: usize,
    /// Training samples behind the fixed predictor and the loss anchors.
    pub train_size: usize,
    pub slope_band: [f64; 2],
    pub level: f64,
    pub seed: u64,
}

impl Default for UniformConfig {
    fn default() -> Self {
        UniformConfig {
            n_grid: vec![100, 200, 400, 800, 1600, 3200],
            reference_n: 1_000_000,
            resamples: 20,
            pool_size: 16,
            num_actions: 2,
            beta: 5.0,
            dims: [5, 50],
            rank: 3,
            train_size: 40,
            slope_band: [-0.65, -0.35],
            level: 0.99,
            seed: 0,
        }
    }
}

impl UniformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 3 {
            return Err(invalid("n_grid needs at least 3 sample sizes for a slope fit"));
        }
        if self.n_grid.contains(&0) {
            return Err(invalid("n_grid entries must be >= 1"));
        }
        let max_n = *self.n_grid.iter().max().unwrap();
        if self.reference_n < 10 * max_n {
            return Err(invalid("reference_n must be at least 10x the largest grid size"));
        }
        if self.resamples == 0 || self.pool_size == 0 || self.num_actions == 0 || self.train_size == 0 {
            return Err(invalid("resamples, pool_size, num_actions and train_size must be >= 1"));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(invalid("beta must be > 0"));
        }
        if !(self.level > 0.0 && self.level < 1.0) || self.slope_band[0] >= self.slope_band[1] {
            return Err(invalid("level must be in (0,1) and slope_band increasing"));
        }
        Ok(())
    }
}

/// One world plus the fixed predictor and pairs evaluated on it.
pub struct GapProtocol {
    pub world: SynthSpec,
    pub predictor: Predictor,
    pub pairs: Vec<(LossFunction, LossFunction)>,
    pub beta: f64,
}

impl GapProtocol {
    /// Fixed Nadaraya–Watson predictor and random pairs built from a training draw.
    pub fn build(world: SynthSpec, train_size: usize, pool_size: usize, num_actions: usize, beta: f64, seed: u64) -> Result<Self> {
        let mut train_world = world.clone();
        train_world.seed = seed;
        let train = train_world.source()?.next_batch(train_size)?.samples;
        let contexts: Vec<Vec<f64>> = train.iter().map(|s| s.x.clone()).collect();
        let outcomes: Vec<Vec<f64>> = train.iter().map(|s| s.y.clone()).collect();
        let base = BasePredictor::nadaraya_watson(world.kernel, contexts, outcomes.clone(), 0.3)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let mut pairs = Vec::with_capacity(pool_size);
        for i in 0..pool_size {
            let l = random_loss(format!("l{i}"), world.kernel, &outcomes, num_actions, 4, 1.0, &mut rng)?;
            let lp = random_loss(format!("lp{i}"), world.kernel, &outcomes, num_actions, 4, 1.0, &mut rng)?;
            pairs.push((l, lp));
        }
        Ok(GapProtocol { world, predictor: Predictor::new(base), pairs, beta })
    }

    /// Signed gaps of every pair on `n` fresh samples drawn with `seed`.
    pub fn signed_gaps(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut w = self.world.clone();
        w.seed = seed;
        let batch = w.source()?.next_batch(n)?;
        let view = BatchView::new(&self.predictor, &batch.samples)?;
        self.pairs.iter().map(|(l, lp)| signed_gap_view(&view, l, lp, self.beta)).collect()
    }

    /// Signed gaps on a large reference draw, accumulated in chunks.
    pub fn reference_gaps(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut w = self.world.clone();
        w.seed = seed;
        let mut src = w.source()?;
        let mut sums = vec![0.0; self.pairs.len()];
        let mut done = 0;
        while done < n {
            let m = REFERENCE_CHUNK.min(n - done);
            let batch = src.next_batch(m)?;
            let view = BatchView::new(&self.predictor, &batch.samples)?;
            let chunk: Vec<f64> = self
                .pairs
                .par_iter()
                .map(|(l, lp)| signed_gap_view(&view, l, lp, self.beta))
                .collect::<Result<_>>()?;
            for (s, g) in sums.iter_mut().zip(chunk) {
                *s += g * m as f64;
            }
            done += m;
        }
        Ok(sums.into_iter().map(|s| s / n as f64).collect())
    }

    /// Mean over resamples of `max_pairs ||gap_n| − |gap_ref||` for every grid size.
    pub fn sup_gap_curve(&self, n_grid: &[usize], reference_n: usize, resamples: usize, seed: u64) -> Result<Vec<f64>> {
        let reference = self.reference_gaps(reference_n, derive_seed(seed, u64::MAX))?;
        let jobs: Vec<(usize, usize)> = (0..n_grid.len()).flat_map(|i| (0..resamples).map(move |r| (i, r))).collect();
        let sups: Vec<f64> = jobs
            .par_iter()
            .map(|&(i, r)| {
                let gaps = self.signed_gaps(n_grid[i], derive_seed(seed, (i * resamples + r) as u64))?;
                Ok(gaps.iter().zip(&reference).map(|(g, h)| (g.abs() - h.abs()).abs()).fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?;
        Ok((0..n_grid.len()).map(|i| sups[i * resamples..(i + 1) * resamples].iter().sum::<f64>() / resamples as f64).collect())
    }
}

/// Log-log fit of a decay curve. Fails on non-positive values.
pub fn fit_decay(n_grid: &[usize], values: &[f64]) -> Result<LinearFit> {
    if values.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(invalid("decay curve has non-positive values"));
    }
    let xs: Vec<f64> = n_grid.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    linear_fit(&xs, &ys)
}

/// Fit on `c/√n` with ±1% multiplicative jitter; the slope must be `−0.5 ± 0.02`.
pub fn decay_self_test(n_grid: &[usize], seed: u64) -> Result<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = n_grid.iter().map(|n| 0.7 / (*n as f64).sqrt() * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0))).collect();
    Ok(fit_decay(n_grid, &values)?.slope)
}

fn min_world(seed: u64) -> SynthSpec {
    SynthSpec {
        kernel: KernelSpec::min(),
        contexts: ContextDist::UniformCube { dim: 2 },
        outcome: OutcomeModel::Noisy { offset: vec![0.2], weights: vec![vec![0.5, 0.1]], noise: 0.2 },
        n: 0,
        seed,
    }
}

/// Level of the fitted line at the mean of `ln n`, and its standard error.
fn centered_level(fit: &LinearFit, n_grid: &[usize]) -> (f64, f64) {
    let mx = n_grid.iter().map(|n| (*n as f64).ln()).sum::<f64>() / n_grid.len() as f64;
    let k = fit.n as f64;
    let sxx = n_grid.iter().map(|n| ((*n as f64).ln() - mx).powi(2)).sum::<f64>();
    let s = fit.slope_se * sxx.sqrt();
    (fit.intercept + fit.slope * mx, s / k.sqrt())
}

pub fn uniform_convergence_experiment(config: &UniformConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut result = ExperimentResult::new("uniform_convergence", config.seed);
    result.tolerances.insert("slope_low".into(), config.slope_band[0]);
    result.tolerances.insert("slope_high".into(), config.slope_band[1]);
    result.tolerances.insert("level".into(), config.level);

    let self_slope = decay_self_test(&config.n_grid, derive_seed(config.seed, 7))?;
    result.fits.insert("self_test_slope".into(), self_slope);
    result.check("self_test", (self_slope + 0.5).abs() <= 0.02, format!("synthetic c/sqrt(n) slope = {self_slope:.4}"));

    let mut curves = Vec::new();
    let mut worlds: Vec<(String, SynthSpec)> = vec![("min".into(), min_world(0))];
    for d in config.dims {
        let params = LowRankParams {
            dim: d,
            rank: config.rank.min(d),
            context_dim: 3,
            noise: 0.3,
            r2: 1.0,
            latent_seed: derive_seed(config.seed, 11),
            basis_seed: derive_seed(config.seed, 1000 + d as u64),
        };
        worlds.push((format!("linear{d}"), SynthSpec::low_rank(&params, 0, 0)?));
    }
    for (wi, (name, world)) in worlds.into_iter().enumerate() {
        let proto = GapProtocol::build(world, config.train_size, config.pool_size, config.num_actions, config.beta, derive_seed(config.seed, 20))?;
        let curve = proto.sup_gap_curve(&config.n_grid, config.reference_n, config.resamples, derive_seed(config.seed, 100 + wi as u64 + 1000 * name.len() as u64))?;
        for (n, v) in config.n_grid.iter().zip(&curve) {
            let mut cell = Cell::new(format!("{name}-n{n}"), config.seed).param("n", *n as f64).param("world", wi as f64);
            cell.set("sup_gap", *v);
            result.cells.push(cell);
        }
        curves.push((name, curve));
    }

    if curves.iter().any(|(_, c)| c.iter().all(|v| *v == 0.0)) {
        result.check("non_degenerate", false, "a sup-gap curve is identically zero");
        return Ok(result);
    }
    let mut fits = Vec::new();
    for (name, curve) in &curves {
        let fit = fit_decay(&config.n_grid, curve)?;
        result.fits.insert(format!("{name}_slope"), fit.slope);
        result.fits.insert(format!("{name}_intercept"), fit.intercept);
        result.fits.insert(format!("{name}_intercept_se"), fit.intercept_se);
        fits.push(fit);
    }
    let slope = fits[0].slope;
    result.check(
        "slope_in_band",
        slope >= config.slope_band[0] && slope <= config.slope_band[1],
        format!("min-kernel slope = {slope:.4}, band [{}, {}]", config.slope_band[0], config.slope_band[1]),
    );
    let (l1, s1) = centered_level(&fits[1], &config.n_grid);
    let (l2, s2) = centered_level(&fits[2], &config.n_grid);
    let t = fits[1].t_quantile(config.level).max(fits[2].t_quantile(config.level));
    let band = t * (s1 * s1 + s2 * s2).sqrt();
    result.fits.insert("dim_level_diff".into(), l1 - l2);
    result.fits.insert("dim_level_band".into(), band);
    result.check(
        "dimension_free",
        (l1 - l2).abs() <= band,
        format!("fitted levels differ by {:.4}, {}% band {:.4}", (l1 - l2).abs(), config.level * 100.0, band),
    );
    Ok(result)
}

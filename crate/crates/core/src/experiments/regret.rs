//! Regret of truthful reporting under the smooth best response.
//!
//! For a calibrated predictor and a loss set, a decision maker with loss `ℓ`
//! who acts on `ℓ′` instead should gain at most `2ε + (ln|A|+1)/β` plus
//! sampling slack. The per-sample smoothing inequality
//! `E_{k̃_ℓ}[ℓ̂] ≤ min_a ℓ̂(a) + (ln|A|+1)/β` is checked exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::random_pool;
use crate::calibrate::{run_calibration_with_pool, CalibConfig};
use crate::data::{Sample, SampleSource};
use crate::error::{invalid, Result};
use crate::experiments::stats::hoeffding_half_width;
use crate::experiments::{derive_seed, Cell, ExperimentResult};
use crate::model::{Algorithm, BatchView, LossFunction, Predictor};
use crate::synth::SynthSpec;

/// Rounding allowance for checks that hold exactly in real arithmetic.
const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretConfig {
    /// Calibration tolerance the predictor was brought to.
    pub epsilon: f64,
    pub beta: f64,
    /// Failure probability shared (Bonferroni) across all ordered pairs.
    pub delta: f64,
    pub pool_size: usize,
    pub num_actions: usize,
    /// Planted bias of the world used by [`regret_world_experiment`].
    pub shift: f64,
    pub test_size: usize,
    pub audit_batch_size: usize,
    pub heldout_size: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
}

impl Default for RegretConfig {
    fn default() -> Self {
        RegretConfig {
            epsilon: 0.1,
            beta: 20.0,
            delta: 0.01,
            pool_size: 16,
            num_actions: 2,
            shift: 0.3,
            test_size: 4000,
            audit_batch_size: 500,
            heldout_size: 2000,
            algorithm: Algorithm::Alg1,
            seed: 0,
        }
    }
}

impl RegretConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.beta > 0.0) {
            return Err(invalid("epsilon and beta must be > 0"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta must be in (0, 1)"));
        }
        if self.pool_size == 0 || self.num_actions == 0 || self.test_size == 0 {
            return Err(invalid("pool_size, num_actions and test_size must be >= 1"));
        }
        Ok(())
    }
}

/// Realized and estimated mean loss under the decisions of one rule.
struct RuleOutcome {
    /// `Ê[E_{k̃_{ℓ′}} ℓ(a, y)]` for every `ℓ` (indexed by loss).
    realized: Vec<f64>,
    /// `Ê[E_{k̃_{ℓ′}} ℓ̂(a, x)]` for every `ℓ`.
    estimated: Vec<f64>,
    /// Worst per-sample slack of the smoothing inequality for `ℓ′` itself.
    smoothing_margin: f64,
    /// Same, against the tighter `ln|A|/β`.
    entropy_margin: f64,
}

fn rule_outcome(
    view: &BatchView<'_>,
    losses: &[LossFunction],
    values: &[Vec<Vec<f64>>],
    estimates: &[Vec<Vec<f64>>],
    j: usize,
    beta: f64,
) -> Result<RuleOutcome> {
    let proj = view.project(&losses[j])?;
    let probs = view.decisions(&proj, beta);
    let est = &estimates[j];
    let n = view.len() as f64;
    let realized = values
        .iter()
        .map(|vals| {
            (0..view.len())
                .map(|i| probs[i].iter().zip(&vals[view.outcome_index(i)]).map(|(k, l)| k * l).sum::<f64>())
                .sum::<f64>()
                / n
        })
        .collect();
    let estimated = estimates
        .iter()
        .map(|e| (0..view.len()).map(|i| probs[i].iter().zip(&e[i]).map(|(k, f)| k * f).sum::<f64>()).sum::<f64>() / n)
        .collect();
    let log_a = (losses[j].num_actions() as f64).ln();
    let mut smoothing_margin = f64::INFINITY;
    let mut entropy_margin = f64::INFINITY;
    for i in 0..view.len() {
        let smooth: f64 = probs[i].iter().zip(&est[i]).map(|(k, f)| k * f).sum();
        let best = est[i].iter().copied().fold(f64::INFINITY, f64::min);
        smoothing_margin = smoothing_margin.min(best + (log_a + 1.0) / beta - smooth);
        entropy_margin = entropy_margin.min(best + log_a / beta - smooth);
    }
    Ok(RuleOutcome { realized, estimated, smoothing_margin, entropy_margin })
}

/// Regret of every ordered pair on `batch` for a predictor calibrated to `config.epsilon`.
///
/// Besides the statistical bound, two checks are exact on the batch: the
/// smoothing inequality per sample, and
/// `regret ≤ |gap(ℓ, ℓ)| + |gap(ℓ, ℓ′)| + (ln|A|+1)/β` with empirical gaps.
pub fn regret_experiment(p: &Predictor, losses: &[LossFunction], batch: &[Sample], config: &RegretConfig) -> Result<ExperimentResult> {
    config.validate()?;
    if losses.is_empty() {
        return Err(invalid("regret experiment needs a non-empty loss set"));
    }
    let m = losses[0].num_actions();
    for l in losses {
        p.kernel().ensure_same(l.kernel())?;
        if l.num_actions() != m {
            return Err(invalid("all losses must share the action count"));
        }
    }
    let view = BatchView::new(p, batch)?;
    let values: Vec<Vec<Vec<f64>>> = losses.iter().map(|l| view.loss_values(l)).collect();
    let estimated: Vec<Vec<Vec<f64>>> = losses.iter().map(|l| Ok(view.estimates(&view.project(l)?))).collect::<Result<_>>()?;
    let outcomes: Vec<RuleOutcome> = (0..losses.len())
        .into_par_iter()
        .map(|j| rule_outcome(&view, losses, &values, &estimated, j, config.beta))
        .collect::<Result<_>>()?;

    // Signed empirical gap of (ℓ_i, ℓ′_j): realized minus estimated loss of ℓ_i under k̃_{ℓ_j}.
    let gap = |i: usize, j: usize| outcomes[j].realized[i] - outcomes[j].estimated[i];
    let diag: Vec<f64> = (0..losses.len()).map(|i| gap(i, i)).collect();

    let r1 = losses.iter().map(|l| l.r1()).fold(0.0, f64::max);
    let pairs = losses.len() * losses.len();
    let slack = hoeffding_half_width(2.0 * r1 * p.r2(), view.len(), config.delta / pairs as f64);
    let smooth_term = ((m as f64).ln() + 1.0) / config.beta;
    let bound = 2.0 * config.epsilon + smooth_term + slack;

    let mut result = ExperimentResult::new("regret", config.seed);
    result.tolerances.insert("epsilon".into(), config.epsilon);
    result.tolerances.insert("delta".into(), config.delta);
    result.tolerances.insert("slack".into(), slack);
    result.tolerances.insert("bound".into(), bound);

    let mut max_regret = f64::NEG_INFINITY;
    let mut bound_ok = true;
    let mut exact_ok = true;
    let mut max_gap = 0.0f64;
    for i in 0..losses.len() {
        for j in 0..losses.len() {
            let regret = outcomes[i].realized[i] - outcomes[j].realized[i];
            let g = gap(i, j);
            max_gap = max_gap.max(g.abs());
            let exact_bound = diag[i].abs() + g.abs() + smooth_term;
            max_regret = max_regret.max(regret);
            bound_ok &= regret <= bound;
            exact_ok &= regret <= exact_bound + EXACT_TOL;
            let mut cell = Cell::new(format!("{}|{}", losses[i].id(), losses[j].id()), config.seed).param("loss", i as f64).param("reported", j as f64);
            cell.set("regret", regret);
            cell.set("gap_true", diag[i]);
            cell.set("gap_reported", g);
            cell.set("exact_bound", exact_bound);
            cell.set("bound", bound);
            result.cells.push(cell);
        }
    }
    let smoothing = outcomes.iter().map(|o| o.smoothing_margin).fold(f64::INFINITY, f64::min);
    let entropy = outcomes.iter().map(|o| o.entropy_margin).fold(f64::INFINITY, f64::min);
    result.fits.insert("max_regret".into(), max_regret);
    result.fits.insert("max_empirical_gap".into(), max_gap);
    result.fits.insert("min_smoothing_margin".into(), smoothing);
    result.fits.insert("min_entropy_margin".into(), entropy);
    result.check("regret_bound", bound_ok, format!("max regret {max_regret:.4} vs bound {bound:.4}"));
    result.check("regret_exact", exact_ok, format!("empirical gaps up to {max_gap:.4}"));
    result.check("smoothing_per_sample", smoothing >= -EXACT_TOL, format!("worst per-sample margin {smoothing:.3e}"));
    Ok(result)
}

/// Calibrates the planted-bias predictor with the loss set registered, then
/// measures regret on a fresh test batch.
pub fn regret_world_experiment(config: &RegretConfig) -> Result<(ExperimentResult, Predictor, Vec<LossFunction>)> {
    config.validate()?;
    let world = SynthSpec::planted_bias(config.shift, 1, 0, config.seed);
    let support: Vec<Vec<f64>> = [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|v| vec![*v]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let losses: Vec<LossFunction> = random_pool(world.kernel, &support, config.num_actions, 4, 1.0, config.pool_size, &mut rng)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.with_id(format!("set-{i}")))
        .collect();
    let mut cfg = CalibConfig::new(config.epsilon, config.beta, 1.0, 1.0);
    cfg.audit_batch_size = config.audit_batch_size;
    cfg.heldout_size = config.heldout_size;
    cfg.num_actions = config.num_actions;
    cfg.algorithm = config.algorithm;
    cfg.seed = derive_seed(config.seed, 2);
    let mut source = world.source()?;
    let (p, trace) = run_calibration_with_pool(Predictor::new(world.planted_predictor()?), &mut source, &cfg, &losses)?;
    let test = source.next_batch(config.test_size)?;
    let mut result = regret_experiment(&p, &losses, &test.samples, config)?;
    result.fits.insert("calibration_iterations".into(), trace.iterations() as f64);
    Ok((result, p, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::model::BasePredictor;

    fn world_batch(n: usize) -> (Predictor, Vec<Sample>) {
        let world = SynthSpec::planted_bias(0.3, 1, 0, 4);
        let batch = world.source().unwrap().next_batch(n).unwrap().samples;
        (Predictor::new(world.planted_predictor().unwrap()), batch)
    }

    #[test]
    fn single_action_has_zero_regret() {
        let (p, batch) = world_batch(200);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let losses = random_pool(KernelSpec::min(), &[vec![0.2], vec![0.8]], 1, 2, 1.0, 4, &mut rng).unwrap();
        let r = regret_experiment(&p, &losses, &batch, &RegretConfig::default()).unwrap();
        assert!(r.cells.iter().all(|c| c.metric("regret") == 0.0));
    }

    #[test]
    fn self_report_has_zero_regret() {
        let (p, batch) = world_batch(200);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let losses = random_pool(KernelSpec::min(), &[vec![0.2], vec![0.8]], 2, 2, 1.0, 3, &mut rng).unwrap();
        let r = regret_experiment(&p, &losses, &batch, &RegretConfig::default()).unwrap();
        for c in r.cells.iter().filter(|c| c.params["loss"] == c.params["reported"]) {
            assert_eq!(c.metric("regret"), 0.0);
        }
        assert!(r.check_named("regret_exact").unwrap().pass);
        assert!(r.check_named("smoothing_per_sample").unwrap().pass);
    }

    #[test]
    fn empty_set_rejected() {
        let p = Predictor::new(BasePredictor::constant_mean(KernelSpec::min(), &[[0.5]]).unwrap());
        let batch = vec![Sample::new(vec![0.0], vec![0.5])];
        assert!(regret_experiment(&p, &[], &batch, &RegretConfig::default()).is_err());
    }
}

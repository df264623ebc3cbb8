//! Auditing: empirical decision-calibration gaps and witnessing loss pairs.
//!
//! For a fixed decision loss `ℓ′`, the loss `ℓ` that maximizes the gap is
//! available in closed form: `r*(a) = R1·Ĝₐ/‖Ĝₐ‖` with
//! `Ĝₐ = Ê[(φ(y) − p(x))·k̃_{ℓ′}(x, a)]`, and its gap is `R1·Σₐ‖Ĝₐ‖`. The
//! search over `ℓ′` runs over a finite candidate pool.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{invalid, Result};
use crate::kernel::{KernelSpec, RkhsElement};
use crate::model::{BatchView, LossFunction, Predictor, Residual};

/// Per-action residual means with norm at or below this are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub found: bool,
    pub witness_loss: LossFunction,
    pub witness_lossprime: LossFunction,
    pub empirical_gap: f64,
    pub threshold: f64,
    pub n_used: usize,
    pub candidate_pool_size: usize,
}

/// Gap of the best `ℓ` against one `ℓ′`, kept in residual form.
pub struct WitnessCandidate {
    pub residuals: Vec<Residual>,
    pub norms: Vec<f64>,
    pub gap: f64,
}

/// `|Ê[Σₐ ⟨r_ℓ(a), φ(y) − p(x)⟩·k̃_{ℓ′}(x, a)]|` on a view.
pub fn empirical_gap_view(view: &BatchView<'_>, loss: &LossFunction, lossprime: &LossFunction, beta: f64) -> Result<f64> {
    Ok(signed_gap_view(view, loss, lossprime, beta)?.abs())
}

/// The batch mean inside [`empirical_gap_view`], before the absolute value.
pub fn signed_gap_view(view: &BatchView<'_>, loss: &LossFunction, lossprime: &LossFunction, beta: f64) -> Result<f64> {
    loss.kernel().ensure_same(lossprime.kernel())?;
    if loss.num_actions() != lossprime.num_actions() {
        return Err(invalid("loss and decision loss have different action counts"));
    }
    let proj_prime = view.project(lossprime)?;
    let proj = view.project(loss)?;
    let probs = view.decisions(&proj_prime, beta);
    let est = view.estimates(&proj);
    let vals = view.loss_values(loss);
    let total: f64 = (0..view.len())
        .map(|i| {
            let y = &vals[view.outcome_index(i)];
            probs[i].iter().zip(y).zip(&est[i]).map(|((k, l), f)| k * (l - f)).sum::<f64>()
        })
        .sum();
    Ok(total / view.len() as f64)
}

pub fn empirical_gap(p: &Predictor, loss: &LossFunction, lossprime: &LossFunction, batch: &[Sample], beta: f64) -> Result<f64> {
    empirical_gap_view(&BatchView::new(p, batch)?, loss, lossprime, beta)
}

/// Residual means `Ĝₐ` under `ℓ′` and the closed-form gap at bound `r1`.
pub fn witness_candidate(view: &BatchView<'_>, lossprime: &LossFunction, beta: f64, r1: f64) -> Result<WitnessCandidate> {
    let proj = view.project(lossprime)?;
    let probs = view.decisions(&proj, beta);
    let residuals = view.action_residuals(&probs);
    let norms: Vec<f64> = residuals.iter().map(|r| view.norm_sq(r).max(0.0).sqrt()).collect();
    let gap = r1 * norms.iter().filter(|n| **n > DEGENERATE_NORM).fold(0.0, |a, b| a + b);
    Ok(WitnessCandidate { residuals, norms, gap })
}

fn witness_from_candidate(view: &BatchView<'_>, cand: &WitnessCandidate, r1: f64, id: &str) -> Result<LossFunction> {
    let kernel = *view.predictor().kernel();
    let actions = cand
        .residuals
        .iter()
        .zip(&cand.norms)
        .map(|(r, &n)| {
            if n <= DEGENERATE_NORM {
                RkhsElement::zero(kernel)
            } else {
                view.flatten(r).scaled(r1 / n)
            }
        })
        .collect();
    // the scaled residuals have norm r1 up to rounding; allow for it in the bound
    LossFunction::new(id, actions, r1 * (1.0 + 1e-9)).map(|l| l.with_r1(r1))
}

pub fn closed_form_witness_view(view: &BatchView<'_>, lossprime: &LossFunction, beta: f64, r1: f64) -> Result<LossFunction> {
    if !(r1.is_finite() && r1 > 0.0) {
        return Err(invalid("r1 must be finite and > 0"));
    }
    let cand = witness_candidate(view, lossprime, beta, r1)?;
    witness_from_candidate(view, &cand, r1, &format!("witness-for-{}", lossprime.id()))
}

pub fn closed_form_witness(p: &Predictor, lossprime: &LossFunction, batch: &[Sample], beta: f64, r1: f64) -> Result<LossFunction> {
    closed_form_witness_view(&BatchView::new(p, batch)?, lossprime, beta, r1)
}

/// Closed-form gaps for every pool member, in pool order. `ℓ*` uses each candidate's own `r1`.
pub fn pool_gaps(view: &BatchView<'_>, pool: &[LossFunction], beta: f64) -> Result<Vec<WitnessCandidate>> {
    pool.par_iter().map(|lp| witness_candidate(view, lp, beta, lp.r1())).collect()
}

/// Searches the pool for the pair with the largest gap; `found` when it exceeds `3ε/4`.
pub fn audit_view(view: &BatchView<'_>, epsilon: f64, beta: f64, pool: &[LossFunction], witness_id: &str) -> Result<AuditReport> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid("epsilon must be finite and > 0"));
    }
    if pool.is_empty() {
        return Err(invalid("audit pool is empty"));
    }
    let cands = pool_gaps(view, pool, beta)?;
    let mut best = 0;
    for (i, c) in cands.iter().enumerate() {
        if c.gap > cands[best].gap {
            best = i;
        }
    }
    let r1 = pool[best].r1();
    let witness = witness_from_candidate(view, &cands[best], r1, witness_id)?;
    let threshold = 0.75 * epsilon;
    Ok(AuditReport {
        found: cands[best].gap > threshold,
        witness_loss: witness,
        witness_lossprime: pool[best].clone(),
        empirical_gap: cands[best].gap,
        threshold,
        n_used: view.len(),
        candidate_pool_size: pool.len(),
    })
}

pub fn audit(p: &Predictor, batch: &[Sample], epsilon: f64, beta: f64, pool: &[LossFunction]) -> Result<AuditReport> {
    audit_view(&BatchView::new(p, batch)?, epsilon, beta, pool, "witness")
}

/// Largest closed-form gap over the pool: a lower bound on the decision calibration error.
pub fn decce_estimate_view(view: &BatchView<'_>, beta: f64, pool: &[LossFunction]) -> Result<f64> {
    if pool.is_empty() {
        return Err(invalid("audit pool is empty"));
    }
    Ok(pool_gaps(view, pool, beta)?.iter().map(|c| c.gap).fold(0.0, f64::max))
}

pub fn decce_estimate(p: &Predictor, batch: &[Sample], beta: f64, pool: &[LossFunction]) -> Result<f64> {
    decce_estimate_view(&BatchView::new(p, batch)?, beta, pool)
}

/// A random loss: each action is a Gaussian combination of `span` anchors
/// drawn from `anchors`, scaled to norm exactly `r1` (zero if degenerate).
pub fn random_loss<R: Rng + ?Sized>(
    id: impl Into<String>,
    kernel: KernelSpec,
    anchors: &[Vec<f64>],
    num_actions: usize,
    span: usize,
    r1: f64,
    rng: &mut R,
) -> Result<LossFunction> {
    if anchors.is_empty() {
        return Err(invalid("random losses need at least one anchor"));
    }
    if num_actions == 0 || span == 0 {
        return Err(invalid("random losses need at least one action and one anchor per action"));
    }
    let mut actions = Vec::with_capacity(num_actions);
    for _ in 0..num_actions {
        let mut e = RkhsElement::zero(kernel);
        for _ in 0..span {
            let z = &anchors[rng.random_range(0..anchors.len())];
            let c: f64 = rng.sample(StandardNormal);
            e.push_unchecked(z, c);
        }
        let e = e.compress(0.0);
        let n = e.norm();
        actions.push(if n > DEGENERATE_NORM { e.scaled(r1 / n) } else { RkhsElement::zero(kernel) });
    }
    LossFunction::new(id, actions, r1 * (1.0 + 1e-9)).map(|l| l.with_r1(r1))
}

/// `size` seeded random losses named `rand-0`, `rand-1`, ….
pub fn random_pool<R: Rng + ?Sized>(
    kernel: KernelSpec,
    anchors: &[Vec<f64>],
    num_actions: usize,
    span: usize,
    r1: f64,
    size: usize,
    rng: &mut R,
) -> Result<Vec<LossFunction>> {
    (0..size)
        .map(|i| random_loss(format!("rand-{i}"), kernel, anchors, num_actions, span, r1, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BasePredictor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn min_feature(y: f64) -> RkhsElement {
        RkhsElement::feature(KernelSpec::min(), &[y]).unwrap()
    }

    fn samples(ys: &[f64]) -> Vec<Sample> {
        ys.iter().map(|y| Sample::new(vec![], vec![*y])).collect()
    }

    #[test]
    fn zero_residual_gives_zero_gap() {
        let p = Predictor::new(BasePredictor::constant(&min_feature(0.4)));
        let batch = samples(&[0.4, 0.4]);
        let lp = LossFunction::new("lp", vec![min_feature(0.3), min_feature(0.9)], 1.0).unwrap();
        let report = audit(&p, &batch, 0.1, 5.0, std::slice::from_ref(&lp)).unwrap();
        assert!(!report.found);
        assert!(report.empirical_gap.abs() < 1e-12);
        assert!(report.witness_loss.actions().iter().all(|r| r.norm() == 0.0));
    }

    #[test]
    fn zero_loss_gives_zero_gap() {
        let p = Predictor::new(BasePredictor::constant(&min_feature(0.4)));
        let batch = samples(&[0.1, 0.7]);
        let zero = LossFunction::zero("z", KernelSpec::min(), 2, 1.0).unwrap();
        let lp = LossFunction::new("lp", vec![min_feature(0.3), min_feature(0.9)], 1.0).unwrap();
        assert_eq!(empirical_gap(&p, &zero, &lp, &batch, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn single_sample_single_action() {
        let p = Predictor::new(BasePredictor::constant(&min_feature(0.2)));
        let batch = samples(&[0.7]);
        let lp = LossFunction::new("lp", vec![min_feature(0.5)], 1.0).unwrap();
        let w = closed_form_witness(&p, &lp, &batch, 1.0, 2.0).unwrap();
        let resid = RkhsElement::axpy(-1.0, &min_feature(0.2), &min_feature(0.7)).unwrap();
        let expected = resid.scaled(2.0 / resid.norm());
        let diff = RkhsElement::axpy(-1.0, w.action(0), &expected).unwrap();
        assert!(diff.norm() < 1e-12);
        let gap = empirical_gap(&p, &w, &lp, &batch, 1.0).unwrap();
        assert!((gap - 2.0 * resid.norm()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_gap_matches_direct_gap_and_dominates() {
        let k = KernelSpec::min();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = BasePredictor::affine(k, vec![vec![0.3], vec![0.8]], vec![0.4, 0.2], vec![vec![0.2], vec![-0.1]]).unwrap();
        let p = Predictor::new(base);
        let batch: Vec<Sample> = (0..40)
            .map(|_| Sample::new(vec![rng.random::<f64>()], vec![(rng.random::<f64>() * 10.0).floor() / 10.0]))
            .collect();
        let anchors: Vec<Vec<f64>> = batch.iter().map(|s| s.y.clone()).collect();
        let lp = random_loss("lp", k, &anchors, 3, 4, 1.0, &mut rng).unwrap();
        let view = BatchView::new(&p, &batch).unwrap();
        let cand = witness_candidate(&view, &lp, 4.0, 1.0).unwrap();
        let w = closed_form_witness_view(&view, &lp, 4.0, 1.0).unwrap();
        let direct = empirical_gap_view(&view, &w, &lp, 4.0).unwrap();
        assert!((direct - cand.gap).abs() < 1e-10, "{direct} vs {}", cand.gap);
        for i in 0..50 {
            let l = random_loss(format!("r{i}"), k, &anchors, 3, 3, 1.0, &mut rng).unwrap();
            assert!(empirical_gap_view(&view, &l, &lp, 4.0).unwrap() <= direct + 1e-9);
        }
    }

    #[test]
    fn audit_rejects_bad_input() {
        let p = Predictor::new(BasePredictor::constant(&min_feature(0.2)));
        let batch = samples(&[0.7]);
        assert!(audit(&p, &batch, 0.1, 1.0, &[]).is_err());
        assert!(audit(&p, &[], 0.1, 1.0, &[LossFunction::zero("z", KernelSpec::min(), 1, 1.0).unwrap()]).is_err());
    }
}

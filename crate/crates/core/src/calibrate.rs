//! Post-processing calibration by iterative patching.
//!
//! Each iteration draws a fresh audit batch, searches the pool for a witness
//! pair, and if the gap exceeds `3ε/4` appends a patch to the predictor:
//!
//! - `Alg1`: `p(x) + Σₐ dₐ·k̃(x, a)` with `dₐ = ηR1·Ĝₐ/‖Ĝₐ‖`.
//! - `Alg2`: `p(x) + Ĝᵀ(D̂ + I)⁻¹k̃(x)` with `D̂ = Ê[k̃k̃ᵀ]`.
//!
//! Both are followed by projection onto the radius-`R2` ball.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::{audit_view, decce_estimate_view, random_pool, witness_candidate, AuditReport, DEGENERATE_NORM};
use crate::data::{Batch, SampleSource};
use crate::error::{invalid, mismatch, Error, Result};
use crate::experiments::stats::hoeffding_half_width;
use crate::kernel::{anchor_key, RkhsElement};
use crate::model::{Adjustment, Algorithm, BatchView, LossFunction, PatchRecord, Predictor, StepRule};

/// Confidence level used for the held-out potential slack.
pub const HELDOUT_DELTA: f64 = 0.01;

fn default_audit_batch() -> usize {
    500
}
fn default_heldout() -> usize {
    2000
}
fn default_pool() -> usize {
    32
}
fn default_span() -> usize {
    4
}
fn default_actions() -> usize {
    2
}
fn default_algorithm() -> Algorithm {
    Algorithm::Alg1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub r1: f64,
    pub r2: f64,
    /// Step size; `ε/(2R1²)` when absent.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Iteration cap; `⌈16R1²R2²/ε²⌉` when absent.
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default = "default_audit_batch")]
    pub audit_batch_size: usize,
    #[serde(default = "default_heldout")]
    pub heldout_size: usize,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    /// Anchors per action in random pool losses.
    #[serde(default = "default_span")]
    pub loss_span: usize,
    #[serde(default = "default_actions")]
    pub num_actions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
}

impl CalibConfig {
    pub fn new(epsilon: f64, beta: f64, r1: f64, r2: f64) -> Self {
        CalibConfig {
            epsilon,
            beta,
            r1,
            r2,
            eta: None,
            max_iters: None,
            audit_batch_size: default_audit_batch(),
            heldout_size: default_heldout(),
            pool_size: default_pool(),
            loss_span: default_span(),
            num_actions: default_actions(),
            seed: 0,
            algorithm: default_algorithm(),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(self.epsilon / (2.0 * self.r1 * self.r1))
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters.unwrap_or_else(|| default_max_iters(self.epsilon, self.r1, self.r2))
    }

    /// Checks ranges; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("beta", self.beta)?;
        positive("r1", self.r1)?;
        positive("r2", self.r2)?;
        if let Some(eta) = self.eta {
            positive("eta", eta)?;
        }
        if self.max_iters == Some(0) {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        for (name, v) in [
            ("audit_batch_size", self.audit_batch_size),
            ("heldout_size", self.heldout_size),
            ("pool_size", self.pool_size),
            ("loss_span", self.loss_span),
            ("num_actions", self.num_actions),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// `⌈16·R1²·R2²/ε²⌉`.
pub fn default_max_iters(epsilon: f64, r1: f64, r2: f64) -> usize {
    let v = 16.0 * r1 * r1 * r2 * r2 / (epsilon * epsilon);
    // guard against 64.00000000000001 style rounding before the ceiling
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
    .max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Calibrated,
    IterationCap,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub batch_id: u64,
    pub gap: f64,
    pub pot_before: f64,
    pub pot_after: f64,
    pub witness_id: String,
    pub lossprime_id: String,
    /// Wall time; kept out of serialized traces so they stay reproducible.
    #[serde(skip)]
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutSummary {
    pub n: usize,
    pub initial_potential: f64,
    pub final_potential: f64,
    pub initial_decce: f64,
    pub final_decce: f64,
    /// Hoeffding half-width for a mean of values in `[0, 4R2²]` at `HELDOUT_DELTA`.
    pub potential_slack: f64,
    pub eval_pool_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTrace {
    pub records: Vec<IterationRecord>,
    pub status: TerminalStatus,
    pub error: Option<String>,
    /// Gap of the audit that stopped the run, if one did.
    pub final_audit_gap: Option<f64>,
    pub heldout: Option<HeldoutSummary>,
    pub samples_used: usize,
    pub eta: f64,
    pub max_iters: usize,
}

impl CalibrationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Writes `iter,batch_id,gap,pot_before,pot_after,witness_id,lossprime_id`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iter", "batch_id", "gap", "pot_before", "pot_after", "witness_id", "lossprime_id"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.batch_id.to_string(),
                r.gap.to_string(),
                r.pot_before.to_string(),
                r.pot_after.to_string(),
                r.witness_id.clone(),
                r.lossprime_id.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `v` scaled by `min(1, r2/‖v‖)`.
pub fn project(v: &RkhsElement, r2: f64) -> RkhsElement {
    let n = v.norm();
    if n > r2 {
        v.scaled(r2 / n)
    } else {
        v.clone()
    }
}

/// `Ê‖p(x) − φ(y)‖²`.
pub fn potential(p: &Predictor, batch: &[crate::data::Sample]) -> Result<f64> {
    Ok(BatchView::new(p, batch)?.potential())
}

fn fresh_anchors(view: &BatchView<'_>) -> Vec<Vec<f64>> {
    view.unique_outcomes().to_vec()
}

/// Alg. 1 patch for decision loss `lossprime` on a view.
pub fn alg1_patch(view: &BatchView<'_>, lossprime: &LossFunction, beta: f64, eta: f64, r1: f64, batch_id: u64) -> Result<PatchRecord> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(invalid("eta must be finite and > 0"));
    }
    let cand = witness_candidate(view, lossprime, beta, r1)?;
    let adjustments = cand
        .residuals
        .iter()
        .zip(&cand.norms)
        .map(|(r, &n)| {
            let s = if n > DEGENERATE_NORM { eta * r1 / n } else { 0.0 };
            Adjustment {
                fresh: r.fresh.iter().map(|c| c * s).collect(),
                basis: r.basis.iter().map(|c| c * s).collect(),
            }
        })
        .collect();
    Ok(PatchRecord {
        step: StepRule::Alg1 { eta, r1 },
        beta,
        witness_lossprime: lossprime.clone(),
        fresh_anchors: fresh_anchors(view),
        adjustments,
        basis_len: view.predictor().basis_len(),
        batch_id,
    })
}

/// `(D + I)⁻¹`, symmetrized.
pub fn regularized_inverse(d: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = d.len();
    if d.iter().any(|r| r.len() != n) {
        return Err(mismatch("matrix must be square"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| d[i][j] + if i == j { 1.0 } else { 0.0 });
    let inv = m.try_inverse().ok_or_else(|| Error::Numerical("D + I is singular".into()))?;
    Ok((0..n).map(|i| (0..n).map(|j| 0.5 * (inv[(i, j)] + inv[(j, i)])).collect()).collect())
}

/// Alg. 2 patch for decision loss `lossprime` on a view.
pub fn alg2_patch(view: &BatchView<'_>, lossprime: &LossFunction, beta: f64, batch_id: u64) -> Result<PatchRecord> {
    let proj = view.project(lossprime)?;
    let probs = view.decisions(&proj, beta);
    let na = lossprime.num_actions();
    let n = view.len() as f64;
    let mut d = vec![vec![0.0; na]; na];
    for row in &probs {
        for a in 0..na {
            for c in 0..na {
                d[a][c] += row[a] * row[c] / n;
            }
        }
    }
    let inverse = regularized_inverse(&d)?;
    let adjustments = view
        .action_residuals(&probs)
        .into_iter()
        .map(|r| Adjustment { fresh: r.fresh, basis: r.basis })
        .collect();
    Ok(PatchRecord {
        step: StepRule::Alg2 { inverse },
        beta,
        witness_lossprime: lossprime.clone(),
        fresh_anchors: fresh_anchors(view),
        adjustments,
        basis_len: view.predictor().basis_len(),
        batch_id,
    })
}

pub fn alg1_step(p: &Predictor, report: &AuditReport, batch: &Batch, config: &CalibConfig) -> Result<PatchRecord> {
    if !report.found {
        return Err(invalid("alg1 step needs an audit report with a witness"));
    }
    let view = BatchView::new(p, &batch.samples)?;
    alg1_patch(&view, &report.witness_lossprime, config.beta, config.eta(), config.r1, batch.id)
}

pub fn alg2_step(p: &Predictor, lossprime: &LossFunction, batch: &Batch, config: &CalibConfig) -> Result<PatchRecord> {
    let view = BatchView::new(p, &batch.samples)?;
    alg2_patch(&view, lossprime, config.beta, batch.id)
}

fn distinct_outcomes(batch: &Batch) -> Vec<Vec<f64>> {
    let mut seen = std::collections::HashSet::new();
    batch
        .samples
        .iter()
        .filter(|s| seen.insert(anchor_key(&s.y)))
        .map(|s| s.y.clone())
        .collect()
}

/// Runs audit → patch until the audit finds nothing or the iteration cap is hit.
///
/// A held-out batch is drawn first; it seeds the random part of the audit pool
/// and measures potential and decision calibration error before and after.
/// Running out of data ends the run with [`TerminalStatus::Error`] and the
/// partial trace.
pub fn run_calibration<S: SampleSource + ?Sized>(p0: Predictor, source: &mut S, config: &CalibConfig) -> Result<(Predictor, CalibrationTrace)> {
    run_calibration_with_pool(p0, source, config, &[])
}

/// [`run_calibration`] with extra user-registered decision losses in the audit
/// and evaluation pools.
pub fn run_calibration_with_pool<S: SampleSource + ?Sized>(
    p0: Predictor,
    source: &mut S,
    config: &CalibConfig,
    registered: &[LossFunction],
) -> Result<(Predictor, CalibrationTrace)> {
    config.validate()?;
    for l in registered {
        p0.kernel().ensure_same(l.kernel())?;
    }
    if (p0.r2() - config.r2).abs() > 1e-12 {
        return Err(mismatch(format!("config r2 = {} but the predictor kernel has r2 = {}", config.r2, p0.r2())));
    }
    let kernel = *p0.kernel();
    let eta = config.eta();
    let max_iters = config.max_iters();
    let mut trace = CalibrationTrace {
        records: Vec::new(),
        status: TerminalStatus::Error,
        error: None,
        final_audit_gap: None,
        heldout: None,
        samples_used: 0,
        eta,
        max_iters,
    };
    let heldout = match source.next_batch(config.heldout_size) {
        Ok(b) => b,
        Err(e @ Error::DataExhausted { .. }) => {
            trace.error = Some(e.to_string());
            return Ok((p0, trace));
        }
        Err(e) => return Err(e),
    };
    trace.samples_used += heldout.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut random = random_pool(kernel, &distinct_outcomes(&heldout), config.num_actions, config.loss_span, config.r1, config.pool_size, &mut rng)?;
    random.extend_from_slice(registered);
    let mut pool = random.clone();

    let (initial_potential, initial_decce) = {
        let view = BatchView::new(&p0, &heldout.samples)?;
        (view.potential(), decce_estimate_view(&view, config.beta, &random)?)
    };

    let mut p = p0;
    let mut witnesses = Vec::new();
    let mut status = TerminalStatus::IterationCap;
    for iter in 0..max_iters {
        let batch = match source.next_batch(config.audit_batch_size) {
            Ok(b) => b,
            Err(e @ Error::DataExhausted { .. }) => {
                trace.error = Some(e.to_string());
                status = TerminalStatus::Error;
                break;
            }
            Err(e) => return Err(e),
        };
        trace.samples_used += batch.len();
        let start = Instant::now();
        let view = BatchView::new(&p, &batch.samples)?;
        let report = audit_view(&view, config.epsilon, config.beta, &pool, &format!("witness-{iter}"))?;
        if !report.found {
            trace.final_audit_gap = Some(report.empirical_gap);
            status = TerminalStatus::Calibrated;
            break;
        }
        let pot_before = view.potential();
        let patch = match config.algorithm {
            Algorithm::Alg1 => alg1_patch(&view, &report.witness_lossprime, config.beta, eta, config.r1, batch.id)?,
            Algorithm::Alg2 => alg2_patch(&view, &report.witness_lossprime, config.beta, batch.id)?,
        };
        drop(view);
        p.push_patch(patch)?;
        let pot_after = potential(&p, &batch.samples)?;
        trace.records.push(IterationRecord {
            iter,
            batch_id: batch.id,
            gap: report.empirical_gap,
            pot_before,
            pot_after,
            witness_id: report.witness_loss.id().to_string(),
            lossprime_id: report.witness_lossprime.id().to_string(),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        witnesses.push(report.witness_loss.clone());
        pool.push(report.witness_loss);
    }
    trace.status = status;

    let mut eval_pool = random;
    eval_pool.extend(witnesses);
    let view = BatchView::new(&p, &heldout.samples)?;
    trace.heldout = Some(HeldoutSummary {
        n: heldout.len(),
        initial_potential,
        final_potential: view.potential(),
        initial_decce,
        final_decce: decce_estimate_view(&view, config.beta, &eval_pool)?,
        potential_slack: hoeffding_half_width(4.0 * config.r2 * config.r2, heldout.len(), HELDOUT_DELTA),
        eval_pool_size: eval_pool.len(),
    });
    drop(view);
    Ok((p, trace))
}

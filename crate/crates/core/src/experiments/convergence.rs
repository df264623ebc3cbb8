//! Iteration counts and potential decrease of the calibration loop on
//! planted-bias worlds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{run_calibration, CalibConfig, TerminalStatus};
use crate::error::{invalid, Result};
use crate::experiments::stats::linear_fit;
use crate::experiments::{derive_seed, Cell, ExperimentResult};
use crate::kernel::KernelSpec;
use crate::model::{Algorithm, Predictor};
use crate::synth::SynthSpec;

/// Slack allowed in the per-iteration decrease inequality.
pub const DECREASE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCell {
    pub epsilon: f64,
    pub r1: f64,
    pub r2: f64,
    pub num_actions: usize,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub cells: Vec<ConvergenceCell>,
    /// Seeded runs per cell.
    pub runs: usize,
    /// Planted bias `shift·φ(1)`.
    pub shift: f64,
    pub beta: f64,
    pub audit_batch_size: usize,
    pub heldout_size: usize,
    pub pool_size: usize,
    pub seed: u64,
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.runs == 0 {
            return Err(invalid("convergence experiment needs at least one cell and one run"));
        }
        for c in &self.cells {
            if c.r2 < 1.0 {
                return Err(invalid("r2 must be >= 1 for the min-kernel planted world"));
            }
        }
        Ok(())
    }
}

/// Runs calibration on every (cell, run) and checks the iteration cap, the
/// per-iteration decrease `pot_t − pot_{t+1} ≥ 2η·gap − η²R1²` (alg1), the
/// final held-out decision calibration error and the held-out potential.
pub fn convergence_experiment(config: &ConvergenceConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut result = ExperimentResult::new("convergence", config.seed);
    result.tolerances.insert("decrease_tol".into(), DECREASE_TOL);
    let jobs: Vec<(usize, usize)> = (0..config.cells.len()).flat_map(|c| (0..config.runs).map(move |r| (c, r))).collect();
    let cells: Vec<Result<Cell>> = jobs
        .par_iter()
        .map(|&(ci, run)| {
            let spec = config.cells[ci];
            let seed = derive_seed(config.seed, (ci * config.runs + run) as u64);
            run_cell(config, &spec, seed, ci, run)
        })
        .collect();
    for c in cells {
        result.cells.push(c?);
    }

    let mut cap_ok = true;
    let mut dec_ok = true;
    let mut eff_ok = true;
    let mut pot_ok = true;
    let mut worst_margin = f64::INFINITY;
    for c in &result.cells {
        cap_ok &= c.metric("iterations") <= c.metric("max_iters") && c.metric("status") != 2.0;
        if c.params["algorithm"] == 1.0 {
            let m = c.metric("min_decrease_margin");
            worst_margin = worst_margin.min(m);
            dec_ok &= m >= -DECREASE_TOL;
        }
        eff_ok &= c.metric("final_decce") < c.params["epsilon"];
        pot_ok &= c.metric("final_potential") <= c.metric("initial_potential") + c.metric("potential_slack");
    }
    let max_ratio = result.cells.iter().map(|c| c.metric("iterations") / c.metric("max_iters")).fold(0.0, f64::max);
    result.check("iteration_cap", cap_ok, format!("max iterations/cap = {max_ratio:.4}"));
    result.check("potential_decrease", dec_ok, format!("worst alg1 margin = {worst_margin:.3e}"));
    result.check("final_decce_below_epsilon", eff_ok, "held-out decce < epsilon in every run");
    result.check("heldout_potential", pot_ok, "final <= initial + Hoeffding half-width in every run");

    for (alg, name) in [(1.0, "alg1"), (2.0, "alg2")] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = result
            .cells
            .iter()
            .filter(|c| c.params["algorithm"] == alg && c.metric("samples_used") > 0.0)
            .map(|c| ((1.0 / c.params["epsilon"]).ln(), c.metric("samples_used").ln()))
            .unzip();
        if let Ok(fit) = linear_fit(&xs, &ys) {
            result.fits.insert(format!("{name}_samples_exponent"), fit.slope);
        }
    }
    Ok(result)
}

fn run_cell(config: &ConvergenceConfig, spec: &ConvergenceCell, seed: u64, ci: usize, run: usize) -> Result<Cell> {
    let mut world = SynthSpec::planted_bias(config.shift, 1, 0, seed);
    world.kernel = if spec.r2 == 1.0 { KernelSpec::min() } else { KernelSpec::min_with_bound(spec.r2)? };
    let p0 = Predictor::new(world.planted_predictor()?);
    let mut source = world.source()?;
    let mut cfg = CalibConfig::new(spec.epsilon, config.beta, spec.r1, spec.r2);
    cfg.audit_batch_size = config.audit_batch_size;
    cfg.heldout_size = config.heldout_size;
    cfg.pool_size = config.pool_size;
    cfg.num_actions = spec.num_actions;
    cfg.algorithm = spec.algorithm;
    cfg.seed = seed;
    let (_, trace) = run_calibration(p0, &mut source, &cfg)?;

    let alg = match spec.algorithm {
        Algorithm::Alg1 => 1.0,
        Algorithm::Alg2 => 2.0,
    };
    let mut cell = Cell::new(format!("cell{ci}-run{run}"), seed)
        .param("epsilon", spec.epsilon)
        .param("r1", spec.r1)
        .param("r2", spec.r2)
        .param("num_actions", spec.num_actions as f64)
        .param("algorithm", alg);
    let eta = trace.eta;
    let margin = trace
        .records
        .iter()
        .map(|r| (r.pot_before - r.pot_after) - (2.0 * eta * r.gap - eta * eta * spec.r1 * spec.r1))
        .fold(f64::INFINITY, f64::min);
    cell.set("iterations", trace.iterations() as f64);
    cell.set("max_iters", trace.max_iters as f64);
    cell.set("eta", eta);
    cell.set("min_decrease_margin", if margin.is_finite() { margin } else { 0.0 });
    cell.set(
        "status",
        match trace.status {
            TerminalStatus::Calibrated => 0.0,
            TerminalStatus::IterationCap => 1.0,
            TerminalStatus::Error => 2.0,
        },
    );
    cell.set("samples_used", trace.samples_used as f64);
    if let Some(h) = &trace.heldout {
        cell.set("initial_potential", h.initial_potential);
        cell.set("final_potential", h.final_potential);
        cell.set("initial_decce", h.initial_decce);
        cell.set("final_decce", h.final_decce);
        cell.set("potential_slack", h.potential_slack);
    }
    Ok(cell)
}

//! Flat, strict run configurations. Unknown keys are errors and every error
//! names the offending key.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibrate::CalibConfig;
use crate::error::{Error, Result};
use crate::experiments::{ConvergenceCell, ConvergenceConfig};
use crate::kernel::KernelSpec;
use crate::model::Algorithm;

/// Parses a JSON document, reporting the path of the first bad key.
pub fn parse_strict<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("key `{path}`: {inner}"))
        }
    })
}

fn range(key: &str, ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("key `{key}`: {msg}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Linear,
    Min,
    Exp,
}

/// Builds the kernel from the flat `kernel`, `dim` and `r2` keys.
pub fn kernel_from(name: KernelName, dim: Option<usize>, r2: f64) -> Result<KernelSpec> {
    range("r2", r2.is_finite() && r2 > 0.0, "must be finite and > 0")?;
    let need_dim = || dim.filter(|d| *d > 0).ok_or_else(|| Error::Config("key `dim`: required (>= 1) for this kernel".into()));
    let k = match name {
        KernelName::Linear => KernelSpec::linear(need_dim()?, r2),
        KernelName::Exp => KernelSpec::exp(need_dim()?, r2),
        KernelName::Min => KernelSpec::min_with_bound(r2),
    };
    k.map_err(|e| Error::Config(format!("key `kernel`: {e}")))
}

fn one() -> f64 {
    1.0
}
fn default_shift() -> f64 {
    0.3
}
fn default_context_dim() -> usize {
    1
}
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

/// `calibrate`: either a dataset (`data`, optional `predictor`) or the
/// planted-bias world (`shift`, `context_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateFile {
    pub kernel: KernelName,
    #[serde(default)]
    pub dim: Option<usize>,
    pub epsilon: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub r1: f64,
    #[serde(default = "one")]
    pub r2: f64,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default = "default_audit_batch")]
    pub audit_batch_size: usize,
    #[serde(default = "default_heldout")]
    pub heldout_size: usize,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(default = "default_span")]
    pub loss_span: usize,
    #[serde(default = "default_actions")]
    pub num_actions: usize,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub predictor: Option<String>,
    #[serde(default)]
    pub losses: Option<String>,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_context_dim")]
    pub context_dim: usize,
}

impl CalibrateFile {
    /// Fills `eta`, `max_iters` and `algorithm` with their defaults.
    pub fn resolve(mut self) -> Result<Self> {
        let cfg = self.calib_config();
        cfg.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("key `{}", m.replacen(' ', "`: ", 1))),
            other => other,
        })?;
        self.eta = Some(cfg.eta());
        self.max_iters = Some(cfg.max_iters());
        self.algorithm = Some(cfg.algorithm);
        if self.data.is_none() && self.kernel != KernelName::Min {
            return Err(Error::Config("key `kernel`: the planted-bias world (no `data`) needs the min kernel".into()));
        }
        if self.predictor.is_some() && self.data.is_none() {
            return Err(Error::Config("key `predictor`: only valid together with `data`".into()));
        }
        range("shift", self.shift.is_finite() && self.shift >= 0.0, "must be finite and >= 0")?;
        range("context_dim", self.context_dim >= 1, "must be >= 1")?;
        self.kernel()?;
        Ok(self)
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        kernel_from(self.kernel, self.dim, self.r2)
    }

    pub fn calib_config(&self) -> CalibConfig {
        CalibConfig {
            epsilon: self.epsilon,
            beta: self.beta,
            r1: self.r1,
            r2: self.r2,
            eta: self.eta,
            max_iters: self.max_iters,
            audit_batch_size: self.audit_batch_size,
            heldout_size: self.heldout_size,
            pool_size: self.pool_size,
            loss_span: self.loss_span,
            num_actions: self.num_actions,
            seed: self.seed,
            algorithm: self.algorithm.unwrap_or(Algorithm::Alg1),
        }
    }
}

/// `audit`: a dataset and a predictor (constant mean of the data when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditFile {
    pub kernel: KernelName,
    #[serde(default)]
    pub dim: Option<usize>,
    pub epsilon: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub r1: f64,
    #[serde(default = "one")]
    pub r2: f64,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(default = "default_span")]
    pub loss_span: usize,
    #[serde(default = "default_actions")]
    pub num_actions: usize,
    #[serde(default)]
    pub seed: u64,
    pub data: String,
    #[serde(default)]
    pub predictor: Option<String>,
    #[serde(default)]
    pub losses: Option<String>,
}

impl AuditFile {
    pub fn resolve(self) -> Result<Self> {
        for (k, v) in [("epsilon", self.epsilon), ("beta", self.beta), ("r1", self.r1)] {
            range(k, v.is_finite() && v > 0.0, "must be finite and > 0")?;
        }
        range("pool_size", self.pool_size >= 1 || self.losses.is_some(), "must be >= 1 without `losses`")?;
        range("loss_span", self.loss_span >= 1, "must be >= 1")?;
        range("num_actions", self.num_actions >= 1, "must be >= 1")?;
        self.kernel()?;
        Ok(self)
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        kernel_from(self.kernel, self.dim, self.r2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldName {
    PlantedBias,
    LowRank,
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerWorldName {
    D1,
    D2,
}

fn default_world_dim() -> usize {
    5
}
fn default_rank() -> usize {
    3
}
fn default_noise() -> f64 {
    0.3
}
fn default_lb_eps() -> f64 {
    0.1
}
fn default_lower_world() -> LowerWorldName {
    LowerWorldName::D1
}

/// `synth`: one dataset from a named world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub world: WorldName,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_context_dim")]
    pub context_dim: usize,
    #[serde(default = "default_world_dim")]
    pub dim: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "one")]
    pub r2: f64,
    #[serde(default)]
    pub latent_seed: u64,
    #[serde(default = "default_lb_eps")]
    pub epsilon: f64,
    #[serde(default = "default_lower_world")]
    pub lower_world: LowerWorldName,
}

impl SynthFile {
    pub fn resolve(self) -> Result<Self> {
        range("n", self.n >= 1, "must be >= 1")?;
        range("shift", self.shift.is_finite() && self.shift >= 0.0, "must be finite and >= 0")?;
        range("context_dim", self.context_dim >= 1, "must be >= 1")?;
        range("dim", self.dim >= 1, "must be >= 1")?;
        range("rank", self.rank >= 1 && self.rank <= self.dim, "must be in 1..=dim")?;
        range("noise", self.noise.is_finite() && self.noise >= 0.0, "must be finite and >= 0")?;
        range("r2", self.r2.is_finite() && self.r2 > 0.0, "must be finite and > 0")?;
        if self.world == WorldName::LowerBound {
            range("epsilon", self.epsilon > 0.0 && self.epsilon < 1.0 / 3.0, "must lie in (0, 1/3)")?;
            range("dim", self.dim >= 2, "must be >= 2 for lower-bound worlds")?;
        }
        Ok(self)
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![0.5, 0.25]
}
fn default_ones() -> Vec<f64> {
    vec![1.0]
}
fn default_action_grid() -> Vec<usize> {
    vec![2]
}
fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Alg1, Algorithm::Alg2]
}
fn default_runs() -> usize {
    3
}
fn default_beta() -> f64 {
    20.0
}

/// `experiment convergence`: the grid is the product of the listed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceFile {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_ones")]
    pub r1s: Vec<f64>,
    #[serde(default = "default_ones")]
    pub r2s: Vec<f64>,
    #[serde(default = "default_action_grid")]
    pub num_actions: Vec<usize>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_audit_batch")]
    pub audit_batch_size: usize,
    #[serde(default = "default_heldout")]
    pub heldout_size: usize,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ConvergenceFile {
    pub fn to_config(&self) -> Result<ConvergenceConfig> {
        for (k, vs) in [("epsilons", &self.epsilons), ("r1s", &self.r1s), ("r2s", &self.r2s)] {
            range(k, !vs.is_empty() && vs.iter().all(|v| v.is_finite() && *v > 0.0), "must be a non-empty list of values > 0")?;
        }
        range("r2s", self.r2s.iter().all(|v| *v >= 1.0), "entries must be >= 1")?;
        range("num_actions", !self.num_actions.is_empty() && self.num_actions.iter().all(|m| *m >= 1), "must be a non-empty list of values >= 1")?;
        range("algorithms", !self.algorithms.is_empty(), "must be non-empty")?;
        range("runs", self.runs >= 1, "must be >= 1")?;
        range("beta", self.beta.is_finite() && self.beta > 0.0, "must be finite and > 0")?;
        let mut cells = Vec::new();
        for &algorithm in &self.algorithms {
            for &epsilon in &self.epsilons {
                for &r1 in &self.r1s {
                    for &r2 in &self.r2s {
                        for &num_actions in &self.num_actions {
                            cells.push(ConvergenceCell { epsilon, r1, r2, num_actions, algorithm });
                        }
                    }
                }
            }
        }
        let cfg = ConvergenceConfig {
            cells,
            runs: self.runs,
            shift: self.shift,
            beta: self.beta,
            audit_batch_size: self.audit_batch_size,
            heldout_size: self.heldout_size,
            pool_size: self.pool_size,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = parse_strict::<CalibrateFile>(r#"{"kernel":"min","epsilon":0.1,"beta":5,"bogus":1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn type_mismatch_is_named() {
        let err = parse_strict::<CalibrateFile>(r#"{"kernel":"min","epsilon":"x","beta":5}"#).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
    }

    #[test]
    fn defaults_resolve() {
        let f: CalibrateFile = parse_strict(r#"{"kernel":"min","epsilon":0.5,"beta":5}"#).unwrap();
        let f = f.resolve().unwrap();
        assert_eq!(f.eta, Some(0.25));
        assert_eq!(f.max_iters, Some(64));
        assert_eq!(f.pool_size, 32);
    }

    #[test]
    fn zero_epsilon_names_key() {
        let f: CalibrateFile = parse_strict(r#"{"kernel":"min","epsilon":0,"beta":5}"#).unwrap();
        let err = f.resolve().unwrap_err();
        assert!(err.to_string().contains("`epsilon`"), "{err}");
    }
}

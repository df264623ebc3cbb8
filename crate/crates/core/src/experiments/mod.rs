//! Experiment harnesses and their common result type.
//!
//! Every harness returns an [`ExperimentResult`]: per-cell parameters and
//! metrics, fitted quantities, and named checks. `pass` is the conjunction of
//! the checks, which are computed only from recorded metrics and tolerances.

pub mod convergence;
pub mod distinguishing;
pub mod regret;
pub mod stats;
pub mod uniform;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use convergence::{convergence_experiment, ConvergenceCell, ConvergenceConfig};
pub use distinguishing::{distinguishing_experiment, exact_d1_acceptance, DistinguishingConfig};
pub use regret::{regret_experiment, RegretConfig};
pub use stats::{hoeffding_half_width, hoeffding_sample_size};
pub use uniform::{uniform_convergence_experiment, UniformConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, f64>,
}

impl Cell {
    pub fn new(label: impl Into<String>, seed: u64) -> Self {
        Cell { label: label.into(), seed, params: BTreeMap::new(), metrics: BTreeMap::new() }
    }

    pub fn param(mut self, k: &str, v: f64) -> Self {
        self.params.insert(k.to_string(), v);
        self
    }

    pub fn set(&mut self, k: &str, v: f64) {
        self.metrics.insert(k.to_string(), v);
    }

    pub fn metric(&self, k: &str) -> f64 {
        self.metrics.get(k).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    pub cells: Vec<Cell>,
    pub fits: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl ExperimentResult {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        ExperimentResult {
            experiment: experiment.into(),
            seed,
            tolerances: BTreeMap::new(),
            cells: Vec::new(),
            fits: BTreeMap::new(),
            checks: Vec::new(),
            pass: true,
        }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
        self.pass = self.checks.iter().all(|c| c.pass);
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Long format: `experiment,cell,params,metric,value`, cells in order, metrics sorted.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["experiment", "cell", "params", "metric", "value"])?;
        for cell in &self.cells {
            let params: Vec<String> = cell.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let params = params.join(";");
            for (k, v) in &cell.metrics {
                w.write_record([self.experiment.as_str(), cell.label.as_str(), params.as_str(), k.as_str(), &v.to_string()])?;
            }
        }
        for (k, v) in &self.fits {
            w.write_record([self.experiment.as_str(), "fit", "", k.as_str(), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Independent per-cell seed from a base seed and a cell index (SplitMix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_conjunction_of_checks() {
        let mut r = ExperimentResult::new("t", 0);
        assert!(r.pass);
        r.check("a", true, "");
        assert!(r.pass);
        r.check("b", false, "");
        assert!(!r.pass);
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}

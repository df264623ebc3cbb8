//! Decision calibration for loss functions that live in a reproducing kernel
//! Hilbert space.
//!
//! Predictors output elements of a feature space `H`; a loss `ℓ(a, y)` is the
//! inner product `⟨r(a), φ(y)⟩`. A predictor is decision calibrated when the
//! losses it predicts for smooth best responses match the realized losses. The
//! crate audits that property, repairs it by iterative patching, and ships the
//! synthetic worlds and experiment harnesses used to study it.
//!
//! Module map:
//!
//! - [`kernel`]: kernels and exact arithmetic on finite spans.
//! - [`model`]: losses, decision rules, predictors and batch views.
//! - [`audit`]: empirical calibration gaps and closed-form witnesses.
//! - [`calibrate`]: the two patching algorithms and the calibration loop.
//! - [`synth`]: synthetic worlds, loss families and lower-bound instances.
//! - [`experiments`]: statistics helpers and experiment harnesses.
//! - [`cli`]: configuration, dispatch and report files for the `decal` binary.

pub mod audit;
pub mod calibrate;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
pub use kernel::{eval_kernel, KernelKind, KernelSpec, RkhsElement};
pub use model::{
    BasePredictor, DecisionMode, DecisionRuleConfig, LossFunction, PatchRecord, Predictor,
};

//! The objects decision calibration is defined over.

pub mod decision;
pub mod loss;
pub mod predictor;
pub mod view;

pub use decision::{deterministic_best_response, smooth_best_response, DecisionMode, DecisionRuleConfig};
pub use loss::LossFunction;
pub use predictor::{
    Adjustment, Algorithm, BasePredictor, CoefficientRule, Coords, LossProjection, PatchRecord, Predictor, StepRule,
};
pub use view::{BatchView, Residual};

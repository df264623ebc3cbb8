//! Decision rules: the best response and its quantal (softmax) smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    Smooth,
    Deterministic,
}

/// How a downstream decision maker turns estimated losses into actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRuleConfig {
    pub beta: f64,
    pub mode: DecisionMode,
}

impl DecisionRuleConfig {
    pub fn smooth(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid(format!("beta must be finite and > 0, got {beta}")));
        }
        Ok(DecisionRuleConfig { beta, mode: DecisionMode::Smooth })
    }

    pub fn deterministic() -> Self {
        DecisionRuleConfig { beta: 1.0, mode: DecisionMode::Deterministic }
    }

    /// Action distribution for the given per-action loss estimates.
    pub fn probabilities(&self, fvals: &[f64]) -> Vec<f64> {
        match self.mode {
            DecisionMode::Smooth => smooth_best_response(fvals, self.beta),
            DecisionMode::Deterministic => {
                let mut p = vec![0.0; fvals.len()];
                if !fvals.is_empty() {
                    p[deterministic_best_response(fvals)] = 1.0;
                }
                p
            }
        }
    }
}

/// `k̃(a) = exp(−β f(a)) / Σ exp(−β f(a′))`, computed after subtracting the
/// minimum loss so the largest exponent is zero.
///
/// Entries may underflow to zero when `β·(f(a) − min f)` exceeds ~745.
pub fn smooth_best_response(fvals: &[f64], beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; fvals.len()];
    smooth_best_response_into(fvals, beta, &mut out);
    out
}

pub fn smooth_best_response_into(fvals: &[f64], beta: f64, out: &mut [f64]) {
    debug_assert_eq!(fvals.len(), out.len());
    if fvals.is_empty() {
        return;
    }
    let fmin = fvals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (o, &f) in out.iter_mut().zip(fvals) {
        *o = (-beta * (f - fmin)).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Index of the smallest estimate; ties go to the lowest index.
pub fn deterministic_best_response(fvals: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in fvals.iter().enumerate().skip(1) {
        if f < fvals[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let p = smooth_best_response(&[0.4, 0.4, 0.4], 3.7);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = smooth_best_response(&[0.1, 5.0, -2.0, 9.0], 0.0);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let p = smooth_best_response(&[0.0, 2f64.ln()], 1.0);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_large_exponents() {
        let p = smooth_best_response(&[1000.0, 1000.5], 50.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1]);
        let p = smooth_best_response(&[-1e6, -1e6], 1e3);
        assert!((p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn argmin_and_ties() {
        assert_eq!(deterministic_best_response(&[0.2, 0.1, 0.3]), 1);
        assert_eq!(deterministic_best_response(&[0.5, 0.5]), 0);
        let shifted: Vec<f64> = [0.2, 0.1, 0.3].iter().map(|v| v + 17.0).collect();
        assert_eq!(deterministic_best_response(&shifted), 1);
    }

    #[test]
    fn deterministic_rule_is_one_hot() {
        let rule = DecisionRuleConfig::deterministic();
        assert_eq!(rule.probabilities(&[0.3, -1.0, 2.0]), vec![0.0, 1.0, 0.0]);
        assert!(DecisionRuleConfig::smooth(0.0).is_err());
        assert!(DecisionRuleConfig::smooth(f64::NAN).is_err());
    }
}

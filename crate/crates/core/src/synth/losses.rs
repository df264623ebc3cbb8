//! Two loss families whose kernel expansions are exact.
//!
//! Piecewise-linear with a turning point `c` (min kernel):
//! `k₁y` for `y < c` and `k₂y + (k₁ − k₂)c` otherwise, which equals
//! `⟨k₂φ(1) + (k₁ − k₂)φ(c), φ(y)⟩`.
//!
//! Cobb–Douglas in exponential form (exp kernel): `exp⟨α, y⟩ = ⟨φ(α), φ(y)⟩`.
//! The utilities are turned into losses through a sign.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{dot, KernelKind, KernelSpec, RkhsElement};
use crate::model::LossFunction;

/// One action's piecewise-linear loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub k1: f64,
    pub k2: f64,
    pub c: f64,
}

pub fn piecewise_linear_value(piece: Piece, y: f64) -> f64 {
    if y < piece.c {
        piece.k1 * y
    } else {
        piece.k2 * y + (piece.k1 - piece.k2) * piece.c
    }
}

/// One action per piece. The declared bound is the largest action norm, so no
/// action is rescaled and evaluations reproduce the closed form.
pub fn make_piecewise_linear_loss(id: impl Into<String>, pieces: &[Piece]) -> Result<LossFunction> {
    let k = KernelSpec::min();
    let mut actions = Vec::with_capacity(pieces.len());
    for p in pieces {
        if !(0.0..=1.0).contains(&p.c) {
            return Err(invalid(format!("turning point {} outside [0, 1]", p.c)));
        }
        if !(p.k1.is_finite() && p.k2.is_finite()) {
            return Err(invalid("slopes must be finite"));
        }
        actions.push(RkhsElement::from_terms(k, &[[1.0], [p.c]], &[p.k2, p.k1 - p.k2])?);
    }
    let r1 = actions.iter().map(|a| a.norm()).fold(0.0, f64::max);
    LossFunction::new(id, actions, if r1 > 0.0 { r1 * (1.0 + 1e-12) } else { 1.0 })
}

pub fn cobb_douglas_value(alpha: &[f64], sign: f64, y: &[f64]) -> f64 {
    sign * dot(alpha, y).exp()
}

/// `r(a) = sign·φ(α(a))` for simplex weights `α(a)`, declared with `R1 = √e`.
pub fn make_cobb_douglas_loss(id: impl Into<String>, kernel: KernelSpec, alphas: &[Vec<f64>], sign: f64) -> Result<LossFunction> {
    let KernelKind::Exp { dim } = kernel.kind else {
        return Err(invalid("Cobb-Douglas losses use the exp kernel"));
    };
    if sign != 1.0 && sign != -1.0 {
        return Err(invalid("sign must be +1 or -1"));
    }
    let mut actions = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        if alpha.len() != dim {
            return Err(invalid(format!("alpha must have {dim} coordinates")));
        }
        if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) || (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid("alpha must lie on the probability simplex"));
        }
        kernel.check_outcome(alpha)?;
        actions.push(RkhsElement::from_terms(kernel, &[alpha], &[sign])?);
    }
    LossFunction::new(id, actions, std::f64::consts::E.sqrt())
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::kernel::{KernelSpec, RkhsElement};

/// A loss `ℓ(a, y) = ⟨r(a), φ(y)⟩` with one coefficient element per action.
///
/// Every `r(a)` has norm at most `r1`. Constructors rescale an over-bound
/// action onto the sphere of radius `r1` and set [`LossFunction::was_rescaled`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossDoc", into = "LossDoc")]
pub struct LossFunction {
    id: String,
    actions: Vec<RkhsElement>,
    r1: f64,
    rescaled: bool,
}

impl LossFunction {
    pub fn new(id: impl Into<String>, actions: Vec<RkhsElement>, r1: f64) -> Result<Self> {
        if actions.is_empty() {
            return Err(invalid("a loss function needs at least one action"));
        }
        if !(r1.is_finite() && r1 > 0.0) {
            return Err(invalid(format!("r1 must be finite and > 0, got {r1}")));
        }
        let kernel = *actions[0].kernel();
        let mut rescaled = false;
        let mut checked = Vec::with_capacity(actions.len());
        for r in actions {
            if *r.kernel() != kernel {
                return Err(mismatch("loss actions use different kernels"));
            }
            let norm = r.norm();
            if norm > r1 * (1.0 + 1e-12) {
                rescaled = true;
                checked.push(r.scaled(r1 / norm));
            } else {
                checked.push(r);
            }
        }
        Ok(LossFunction { id: id.into(), actions: checked, r1, rescaled })
    }

    /// The all-zero loss over `num_actions` actions.
    pub fn zero(id: impl Into<String>, kernel: KernelSpec, num_actions: usize, r1: f64) -> Result<Self> {
        Self::new(id, vec![RkhsElement::zero(kernel); num_actions.max(1)], r1)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Overrides the declared bound without touching the actions.
    pub(crate) fn with_r1(mut self, r1: f64) -> Self {
        self.r1 = r1;
        self
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, a: usize) -> &RkhsElement {
        &self.actions[a]
    }

    pub fn actions(&self) -> &[RkhsElement] {
        &self.actions
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn was_rescaled(&self) -> bool {
        self.rescaled
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.actions[0].kernel()
    }

    /// `ℓ(a, y)` with a domain check on `y`.
    pub fn eval(&self, a: usize, y: &[f64]) -> Result<f64> {
        self.actions[a].eval(y)
    }

    pub(crate) fn eval_unchecked(&self, a: usize, y: &[f64]) -> f64 {
        self.actions[a].eval_unchecked(y)
    }

    /// `c₁ℓ₁ + c₂ℓ₂` action by action, declared with bound `r1`.
    pub fn combine(id: impl Into<String>, c1: f64, l1: &LossFunction, c2: f64, l2: &LossFunction, r1: f64) -> Result<Self> {
        if l1.num_actions() != l2.num_actions() {
            return Err(mismatch("losses have different action counts"));
        }
        let actions = l1
            .actions
            .iter()
            .zip(&l2.actions)
            .map(|(u, v)| RkhsElement::axpy(c1, u, &v.scaled(c2)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(id, actions, r1)
    }

    /// Merges duplicate anchors in each action (exact).
    pub fn compressed(&self) -> Self {
        LossFunction {
            id: self.id.clone(),
            actions: self.actions.iter().map(|r| r.compress(0.0)).collect(),
            r1: self.r1,
            rescaled: self.rescaled,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LossDoc {
    id: String,
    r1: f64,
    #[serde(default)]
    rescaled: bool,
    actions: Vec<RkhsElement>,
}

impl From<LossFunction> for LossDoc {
    fn from(l: LossFunction) -> Self {
        LossDoc { id: l.id, r1: l.r1, rescaled: l.rescaled, actions: l.actions }
    }
}

impl TryFrom<LossDoc> for LossFunction {
    type Error = crate::error::Error;

    fn try_from(doc: LossDoc) -> Result<Self> {
        let mut loss = LossFunction::new(doc.id, doc.actions, doc.r1)?;
        loss.rescaled |= doc.rescaled;
        Ok(loss)
    }
}

//! Kernels and exact arithmetic on finite spans of feature maps.
//!
//! An [`RkhsElement`] is a finite sum `Σ cᵢ φ(yᵢ)`. Every operation on it
//! reduces to kernel evaluations `K(yᵢ, yⱼ) = ⟨φ(yᵢ), φ(yⱼ)⟩`, so elements of an
//! infinite-dimensional feature space are handled exactly.
//!
//! Three kernels are provided:
//!
//! | kind | domain | `K(y, y′)` |
//! |------|--------|------------|
//! | `linear(d)` | `‖y‖₂ ≤ R2` in ℝᵈ | `⟨y, y′⟩` |
//! | `min` | `[0, 1]` | `min(y, y′)` |
//! | `exp(d)` | `‖y‖₂ ≤ √(2 ln R2)` in ℝᵈ | `exp⟨y, y′⟩` |
//!
//! The domains are chosen so that `‖φ(y)‖ ≤ R2` holds for every valid outcome.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};

const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Linear { dim: usize },
    Min,
    Exp { dim: usize },
}

/// A kernel together with its feature-norm bound `R2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    pub r2: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, r2: f64) -> Result<Self> {
        let spec = KernelSpec { kind, r2 };
        spec.validate()?;
        Ok(spec)
    }

    /// Linear kernel on the radius-`r2` ball of ℝᵈ.
    pub fn linear(dim: usize, r2: f64) -> Result<Self> {
        Self::new(KernelKind::Linear { dim }, r2)
    }

    /// Min kernel on `[0, 1]` with `R2 = 1`.
    pub fn min() -> Self {
        KernelSpec { kind: KernelKind::Min, r2: 1.0 }
    }

    /// Min kernel with a looser declared bound `r2 ≥ 1`.
    pub fn min_with_bound(r2: f64) -> Result<Self> {
        Self::new(KernelKind::Min, r2)
    }

    /// Exponential kernel on the ball of radius `√(2 ln r2)`; requires `r2 > 1`.
    pub fn exp(dim: usize, r2: f64) -> Result<Self> {
        Self::new(KernelKind::Exp { dim }, r2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r2.is_finite() && self.r2 > 0.0) {
            return Err(invalid(format!("kernel bound r2 must be finite and > 0, got {}", self.r2)));
        }
        match self.kind {
            KernelKind::Linear { dim } | KernelKind::Exp { dim } if dim == 0 => {
                Err(invalid("kernel dimension must be at least 1"))
            }
            KernelKind::Min if self.r2 < 1.0 => {
                Err(invalid(format!("min kernel needs r2 >= 1 (K(1,1) = 1), got {}", self.r2)))
            }
            KernelKind::Exp { .. } if self.r2 <= 1.0 => {
                Err(invalid(format!("exp kernel needs r2 > 1, got {}", self.r2)))
            }
            _ => Ok(()),
        }
    }

    /// Number of coordinates in an outcome.
    pub fn outcome_dim(&self) -> usize {
        match self.kind {
            KernelKind::Linear { dim } | KernelKind::Exp { dim } => dim,
            KernelKind::Min => 1,
        }
    }

    /// Radius of the outcome ball for the exponential kernel.
    pub fn exp_radius(&self) -> f64 {
        (2.0 * self.r2.ln()).sqrt()
    }

    /// Checks that `y` lies in the kernel's declared domain.
    pub fn check_outcome(&self, y: &[f64]) -> Result<()> {
        let dim = self.outcome_dim();
        if y.len() != dim {
            return Err(invalid(format!("outcome has {} coordinates, kernel expects {}", y.len(), dim)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("outcome has non-finite coordinates"));
        }
        match self.kind {
            KernelKind::Min => {
                if !(0.0..=1.0).contains(&y[0]) {
                    return Err(invalid(format!("min kernel outcome {} outside [0, 1]", y[0])));
                }
            }
            KernelKind::Linear { .. } => {
                let norm = dot(y, y).sqrt();
                if norm > self.r2 * (1.0 + DOMAIN_TOL) + DOMAIN_TOL {
                    return Err(invalid(format!("linear kernel outcome norm {} exceeds r2 = {}", norm, self.r2)));
                }
            }
            KernelKind::Exp { .. } => {
                let sq = dot(y, y);
                if sq > 2.0 * self.r2.ln() + DOMAIN_TOL {
                    return Err(invalid(format!(
                        "exp kernel outcome norm {} exceeds radius {}",
                        sq.sqrt(),
                        self.exp_radius()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Kernel value without domain checks. Callers must have validated both points.
    #[inline]
    pub fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear { .. } => dot(a, b),
            KernelKind::Min => a[0].min(b[0]),
            KernelKind::Exp { .. } => dot(a, b).exp(),
        }
    }

    pub(crate) fn ensure_same(&self, other: &KernelSpec) -> Result<()> {
        if self != other {
            return Err(mismatch(format!("kernel {:?} does not match {:?}", self, other)));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Evaluates `K(y1, y2)` after checking both points against the kernel's domain.
pub fn eval_kernel(spec: &KernelSpec, y1: &[f64], y2: &[f64]) -> Result<f64> {
    spec.check_outcome(y1)?;
    spec.check_outcome(y2)?;
    Ok(spec.k(y1, y2))
}

/// Gram matrix `G[i][j] = K(pᵢ, pⱼ)` of already-validated points.
pub fn gram_matrix<'a, I>(spec: &KernelSpec, points: I) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let pts: Vec<&[f64]> = points.into_iter().collect();
    let n = pts.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.k(pts[i], pts[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// A finite span `Σ cᵢ φ(yᵢ)` of feature maps.
///
/// Elements are immutable values; arithmetic returns new elements. Anchors are
/// stored contiguously, `outcome_dim` coordinates per anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ElementDoc", try_from = "ElementDoc")]
pub struct RkhsElement {
    kernel: KernelSpec,
    points: Vec<f64>,
    coeffs: Vec<f64>,
}

impl RkhsElement {
    /// The zero element (empty span).
    pub fn zero(kernel: KernelSpec) -> Self {
        RkhsElement { kernel, points: Vec::new(), coeffs: Vec::new() }
    }

    /// The feature map `φ(y)`.
    pub fn feature(kernel: KernelSpec, y: &[f64]) -> Result<Self> {
        kernel.check_outcome(y)?;
        Ok(RkhsElement { kernel, points: y.to_vec(), coeffs: vec![1.0] })
    }

    /// Builds `Σ cᵢ φ(yᵢ)` from explicit anchors and coefficients.
    pub fn from_terms<A: AsRef<[f64]>>(kernel: KernelSpec, anchors: &[A], coeffs: &[f64]) -> Result<Self> {
        if anchors.len() != coeffs.len() {
            return Err(invalid(format!(
                "{} anchors but {} coefficients",
                anchors.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite coefficient"));
        }
        let mut out = RkhsElement::zero(kernel);
        out.points.reserve(anchors.len() * kernel.outcome_dim());
        for (a, &c) in anchors.iter().zip(coeffs) {
            kernel.check_outcome(a.as_ref())?;
            out.points.extend_from_slice(a.as_ref());
            out.coeffs.push(c);
        }
        Ok(out)
    }

    /// Appends a term whose anchor has already been validated against this kernel.
    pub(crate) fn push_unchecked(&mut self, anchor: &[f64], coeff: f64) {
        debug_assert_eq!(anchor.len(), self.kernel.outcome_dim());
        self.points.extend_from_slice(anchor);
        self.coeffs.push(coeff);
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn anchor(&self, i: usize) -> &[f64] {
        let d = self.kernel.outcome_dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn anchors(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.kernel.outcome_dim())
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.anchors().zip(self.coeffs.iter().copied())
    }

    /// `⟨self, φ(y)⟩`, i.e. the represented function evaluated at `y`. No domain check.
    #[inline]
    pub fn eval_unchecked(&self, y: &[f64]) -> f64 {
        self.terms().map(|(a, c)| c * self.kernel.k(a, y)).sum()
    }

    /// `⟨self, φ(y)⟩` with a domain check on `y`.
    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        self.kernel.check_outcome(y)?;
        Ok(self.eval_unchecked(y))
    }

    /// `Σᵢⱼ cᵢ dⱼ K(yᵢ, y′ⱼ)`.
    pub fn inner(&self, other: &RkhsElement) -> Result<f64> {
        self.kernel.ensure_same(&other.kernel)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &RkhsElement) -> f64 {
        self.terms().map(|(a, c)| c * other.eval_unchecked(a)).sum()
    }

    /// `‖v‖² = cᵀ G c`, clamped at zero against rounding.
    pub fn norm_sq(&self) -> f64 {
        self.inner_unchecked(self).max(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, a: f64) -> RkhsElement {
        RkhsElement {
            kernel: self.kernel,
            points: self.points.clone(),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    /// `a·u + v` by concatenating anchor lists.
    pub fn axpy(a: f64, u: &RkhsElement, v: &RkhsElement) -> Result<RkhsElement> {
        u.kernel.ensure_same(&v.kernel)?;
        let mut out = v.clone();
        out.points.extend_from_slice(&u.points);
        out.coeffs.extend(u.coeffs.iter().map(|c| a * c));
        Ok(out)
    }

    /// Merges bitwise-identical anchors, then drops terms with `|cᵢ|·√K(yᵢ,yᵢ) ≤ tol`.
    pub fn compress(&self, tol: f64) -> RkhsElement {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(self.len());
        let mut merged = RkhsElement::zero(self.kernel);
        for (a, c) in self.terms() {
            match index.get(&anchor_key(a)) {
                Some(&j) => merged.coeffs[j] += c,
                None => {
                    index.insert(anchor_key(a), merged.len());
                    merged.push_unchecked(a, c);
                }
            }
        }
        let mut out = RkhsElement::zero(self.kernel);
        for (a, c) in merged.terms() {
            let weight = c.abs() * self.kernel.k(a, a).max(0.0).sqrt();
            if weight > tol {
                out.push_unchecked(a, c);
            }
        }
        out
    }

    /// Gram matrix of this element's anchors.
    pub fn gram(&self) -> DMatrix<f64> {
        gram_matrix(&self.kernel, self.anchors())
    }
}

/// Hashable identity of an anchor; `-0.0` and `0.0` collapse to one key.
pub(crate) fn anchor_key(a: &[f64]) -> Vec<u64> {
    a.iter().map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() }).collect()
}

#[derive(Serialize, Deserialize)]
struct ElementDoc {
    kernel: KernelSpec,
    anchors: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
}

impl From<RkhsElement> for ElementDoc {
    fn from(e: RkhsElement) -> Self {
        ElementDoc {
            kernel: e.kernel,
            anchors: e.anchors().map(|a| a.to_vec()).collect(),
            coefficients: e.coeffs,
        }
    }
}

impl TryFrom<ElementDoc> for RkhsElement {
    type Error = Error;

    fn try_from(doc: ElementDoc) -> Result<Self> {
        doc.kernel.validate()?;
        RkhsElement::from_terms(doc.kernel, &doc.anchors, &doc.coefficients)
    }
}

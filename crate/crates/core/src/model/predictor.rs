//! Predictors `p: X → H` kept in finite-span form under repeated patching.
//!
//! A predictor is a base span plus an ordered chain of [`PatchRecord`]s. Each
//! patch adds one direction per action. Evaluation never materializes `p(x)`
//! as a function: it tracks coordinates of `p(x)` over the *basis*, which is
//! the list of base anchors followed by every patch direction, together with
//! the basis Gram matrix. A direction is stored as a span over the outcomes of
//! the batch that produced it plus coefficients on the basis elements that
//! existed before it, so all quantities reduce to kernel evaluations.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::kernel::{dot, KernelSpec, RkhsElement};
use crate::model::decision::smooth_best_response_into;
use crate::model::loss::LossFunction;

/// How the base coefficients `αᵢ(x)` depend on the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CoefficientRule {
    /// `αᵢ(x) = cᵢ`.
    Constant { coefficients: Vec<f64> },
    /// `αᵢ(x) = bᵢ + ⟨wᵢ, x⟩`.
    Affine { intercept: Vec<f64>, slope: Vec<Vec<f64>> },
    /// `αᵢ(x) ∝ exp(−‖x − xᵢ‖² / 2h²)`, normalized over the anchors.
    NadarayaWatson { contexts: Vec<Vec<f64>>, bandwidth: f64 },
}

/// The starting predictor `p₀(x) = Σᵢ αᵢ(x) φ(yᵢ)` over a fixed anchor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaseDoc", into = "BaseDoc")]
pub struct BasePredictor {
    kernel: KernelSpec,
    anchors: Vec<Vec<f64>>,
    rule: CoefficientRule,
}

#[derive(Serialize, Deserialize)]
struct BaseDoc {
    kernel: KernelSpec,
    anchors: Vec<Vec<f64>>,
    #[serde(flatten)]
    rule: CoefficientRule,
}

impl From<BasePredictor> for BaseDoc {
    fn from(b: BasePredictor) -> Self {
        BaseDoc { kernel: b.kernel, anchors: b.anchors, rule: b.rule }
    }
}

impl TryFrom<BaseDoc> for BasePredictor {
    type Error = Error;

    fn try_from(doc: BaseDoc) -> Result<Self> {
        BasePredictor::new(doc.kernel, doc.anchors, doc.rule)
    }
}

impl BasePredictor {
    pub fn new(kernel: KernelSpec, anchors: Vec<Vec<f64>>, rule: CoefficientRule) -> Result<Self> {
        kernel.validate()?;
        for a in &anchors {
            kernel.check_outcome(a)?;
        }
        let n = anchors.len();
        match &rule {
            CoefficientRule::Constant { coefficients } => {
                if coefficients.len() != n {
                    return Err(invalid("constant rule needs one coefficient per anchor"));
                }
            }
            CoefficientRule::Affine { intercept, slope } => {
                if intercept.len() != n || slope.len() != n {
                    return Err(invalid("affine rule needs one intercept and one slope row per anchor"));
                }
                if let Some(first) = slope.first() {
                    if slope.iter().any(|row| row.len() != first.len()) {
                        return Err(invalid("affine slope rows have different lengths"));
                    }
                }
            }
            CoefficientRule::NadarayaWatson { contexts, bandwidth } => {
                if contexts.len() != n || n == 0 {
                    return Err(invalid("Nadaraya-Watson rule needs one context per anchor"));
                }
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return Err(invalid("Nadaraya-Watson bandwidth must be > 0"));
                }
                if contexts.iter().any(|c| c.len() != contexts[0].len()) {
                    return Err(invalid("Nadaraya-Watson contexts have different lengths"));
                }
            }
        }
        Ok(BasePredictor { kernel, anchors, rule })
    }

    /// Wraps a fixed element: `p₀(x) = v` for every context.
    pub fn constant(element: &RkhsElement) -> Self {
        BasePredictor {
            kernel: *element.kernel(),
            anchors: element.anchors().map(|a| a.to_vec()).collect(),
            rule: CoefficientRule::Constant { coefficients: element.coefficients().to_vec() },
        }
    }

    /// `p₀(x) = (1/N) Σ φ(yᵢ)` over a training batch, duplicates merged.
    pub fn constant_mean<A: AsRef<[f64]>>(kernel: KernelSpec, outcomes: &[A]) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(invalid("constant-mean predictor needs at least one outcome"));
        }
        let w = 1.0 / outcomes.len() as f64;
        let element = RkhsElement::from_terms(kernel, outcomes, &vec![w; outcomes.len()])?.compress(0.0);
        Ok(Self::constant(&element))
    }

    pub fn affine(kernel: KernelSpec, anchors: Vec<Vec<f64>>, intercept: Vec<f64>, slope: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(kernel, anchors, CoefficientRule::Affine { intercept, slope })
    }

    /// Similarity-weighted average of training outcomes.
    pub fn nadaraya_watson(kernel: KernelSpec, contexts: Vec<Vec<f64>>, outcomes: Vec<Vec<f64>>, bandwidth: f64) -> Result<Self> {
        Self::new(kernel, outcomes, CoefficientRule::NadarayaWatson { contexts, bandwidth })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    pub fn rule(&self) -> &CoefficientRule {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Context dimension the rule expects, if it reads the context at all.
    pub fn context_dim(&self) -> Option<usize> {
        match &self.rule {
            CoefficientRule::Constant { .. } => None,
            CoefficientRule::Affine { slope, .. } => slope.first().map(|r| r.len()),
            CoefficientRule::NadarayaWatson { contexts, .. } => Some(contexts[0].len()),
        }
    }

    pub fn coefficients_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.rule {
            CoefficientRule::Constant { coefficients } => out.copy_from_slice(coefficients),
            CoefficientRule::Affine { intercept, slope } => {
                for ((o, b), w) in out.iter_mut().zip(intercept).zip(slope) {
                    *o = b + dot(w, x);
                }
            }
            CoefficientRule::NadarayaWatson { contexts, bandwidth } => {
                let scale = 1.0 / (2.0 * bandwidth * bandwidth);
                let mut top = f64::NEG_INFINITY;
                for (o, c) in out.iter_mut().zip(contexts) {
                    let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    *o = -d2 * scale;
                    top = top.max(*o);
                }
                let mut total = 0.0;
                for o in out.iter_mut() {
                    *o = (*o - top).exp();
                    total += *o;
                }
                for o in out.iter_mut() {
                    *o /= total;
                }
            }
        }
    }

    pub fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.coefficients_into(x, &mut out);
        out
    }

    /// `p₀(x)` before projection.
    pub fn evaluate(&self, x: &[f64]) -> RkhsElement {
        let mut e = RkhsElement::zero(self.kernel);
        for (a, c) in self.anchors.iter().zip(self.coefficients(x)) {
            e.push_unchecked(a, c);
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Alg1,
    Alg2,
}

/// Per-patch rule turning the decision distribution `k̃(x)` into direction weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum StepRule {
    /// Weights are `k̃(x)`; each direction has norm `eta·r1` (or is zero).
    Alg1 { eta: f64, r1: f64 },
    /// Weights are `M k̃(x)` with `M = (D̂ + I)⁻¹`.
    Alg2 { inverse: Vec<Vec<f64>> },
}

/// One patch direction: `Σⱼ fresh[j]·φ(zⱼ) + Σₖ basis[k]·Eₖ`, where `zⱼ` are the
/// patch's fresh anchors and `Eₖ` the basis elements preceding the patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub fresh: Vec<f64>,
    pub basis: Vec<f64>,
}

/// One calibration iteration's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub step: StepRule,
    pub beta: f64,
    pub witness_lossprime: LossFunction,
    pub fresh_anchors: Vec<Vec<f64>>,
    pub adjustments: Vec<Adjustment>,
    pub basis_len: usize,
    pub batch_id: u64,
}

impl PatchRecord {
    pub fn algorithm(&self) -> Algorithm {
        match self.step {
            StepRule::Alg1 { .. } => Algorithm::Alg1,
            StepRule::Alg2 { .. } => Algorithm::Alg2,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.adjustments.len()
    }

    fn weights_into(&self, probs: &[f64], out: &mut [f64]) {
        match &self.step {
            StepRule::Alg1 { .. } => out.copy_from_slice(probs),
            StepRule::Alg2 { inverse } => {
                for (o, row) in out.iter_mut().zip(inverse) {
                    *o = dot(row, probs);
                }
            }
        }
    }
}

/// Coordinates of `p(x)` over the predictor basis, with the squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Coords {
    pub coef: Vec<f64>,
    pub norm_sq: f64,
}

/// `⟨r(a), Eₖ⟩` for every action of a loss and every basis element.
#[derive(Debug, Clone, PartialEq)]
pub struct LossProjection {
    rows: Vec<Vec<f64>>,
}

impl LossProjection {
    pub fn num_actions(&self) -> usize {
        self.rows.len()
    }

    /// `f(x, a, ℓ) = ⟨r(a), p(x)⟩` from the coordinates of `p(x)`.
    #[inline]
    pub fn estimate(&self, coef: &[f64], a: usize) -> f64 {
        let row = &self.rows[a];
        dot(row, &coef[..row.len()])
    }

    pub fn estimates_into(&self, coef: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.estimate(coef, a);
        }
    }
}

#[derive(Debug, Clone, Default)]
struct BasisCache {
    /// Full symmetric Gram matrix of the basis.
    gram: Vec<Vec<f64>>,
    /// Per patch: projection of its `ℓ′` onto the basis preceding it.
    lossprime: Vec<LossProjection>,
    flat: OnceLock<Vec<RkhsElement>>,
}

/// A base predictor plus its patch chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PredictorDoc", into = "PredictorDoc")]
pub struct Predictor {
    base: BasePredictor,
    patches: Vec<PatchRecord>,
    cache: BasisCache,
}

#[derive(Serialize, Deserialize)]
struct PredictorDoc {
    base: BasePredictor,
    patches: Vec<PatchRecord>,
}

impl From<Predictor> for PredictorDoc {
    fn from(p: Predictor) -> Self {
        PredictorDoc { base: p.base, patches: p.patches }
    }
}

impl TryFrom<PredictorDoc> for Predictor {
    type Error = Error;

    fn try_from(doc: PredictorDoc) -> Result<Self> {
        let mut p = Predictor::new(doc.base);
        for patch in doc.patches {
            p.push_patch(patch)?;
        }
        Ok(p)
    }
}

impl PartialEq for Predictor {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.patches == other.patches
    }
}

impl Predictor {
    pub fn new(base: BasePredictor) -> Self {
        let k = *base.kernel();
        let gram = base
            .anchors
            .iter()
            .map(|a| base.anchors.iter().map(|b| k.k(a, b)).collect())
            .collect();
        Predictor {
            base,
            patches: Vec::new(),
            cache: BasisCache { gram, ..Default::default() },
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.base.kernel()
    }

    pub fn r2(&self) -> f64 {
        self.kernel().r2
    }

    pub fn base(&self) -> &BasePredictor {
        &self.base
    }

    pub fn patches(&self) -> &[PatchRecord] {
        &self.patches
    }

    /// Number of basis elements: base anchors plus all patch directions.
    pub fn basis_len(&self) -> usize {
        self.cache.gram.len()
    }

    pub fn gram(&self, i: usize, j: usize) -> f64 {
        self.cache.gram[i][j]
    }

    /// The predictor without its last `n` patches' successors: keeps the first `n` patches.
    pub fn truncated(&self, n: usize) -> Result<Predictor> {
        let mut p = Predictor::new(self.base.clone());
        for patch in self.patches.iter().take(n) {
            p.push_patch(patch.clone())?;
        }
        Ok(p)
    }

    /// `Eₖ(y) = ⟨Eₖ, φ(y)⟩` for every basis element. `y` must be in the kernel domain.
    pub fn basis_values(&self, y: &[f64]) -> Vec<f64> {
        let k = self.kernel();
        let mut v = Vec::with_capacity(self.basis_len());
        v.extend(self.base.anchors.iter().map(|b| k.k(b, y)));
        let mut kf = Vec::new();
        for patch in &self.patches {
            kf.clear();
            kf.extend(patch.fresh_anchors.iter().map(|z| k.k(z, y)));
            for adj in &patch.adjustments {
                let val = dot(&adj.fresh, &kf) + dot(&adj.basis, &v[..patch.basis_len]);
                v.push(val);
            }
        }
        v
    }

    /// Projects a loss onto the current basis: rows `[a][k] = ⟨r(a), Eₖ⟩`.
    pub fn project_loss(&self, loss: &LossFunction) -> Result<LossProjection> {
        self.kernel().ensure_same(loss.kernel())?;
        let anchors: Vec<(usize, &[f64], f64)> = loss
            .actions()
            .iter()
            .enumerate()
            .flat_map(|(a, r)| r.terms().map(move |(z, c)| (a, z, c)))
            .collect();
        let values: Vec<Vec<f64>> = if anchors.len() > 64 {
            anchors.par_iter().map(|(_, z, _)| self.basis_values(z)).collect()
        } else {
            anchors.iter().map(|(_, z, _)| self.basis_values(z)).collect()
        };
        let mut rows = vec![vec![0.0; self.basis_len()]; loss.num_actions()];
        for ((a, _, c), vals) in anchors.iter().zip(&values) {
            for (r, v) in rows[*a].iter_mut().zip(vals) {
                *r += c * v;
            }
        }
        Ok(LossProjection { rows })
    }

    /// Appends a patch, extending the basis Gram matrix.
    pub fn push_patch(&mut self, patch: PatchRecord) -> Result<()> {
        let b = self.basis_len();
        let k = *self.kernel();
        if patch.basis_len != b {
            return Err(mismatch(format!(
                "patch was built against a basis of {} elements, predictor has {}",
                patch.basis_len, b
            )));
        }
        let num_actions = patch.witness_lossprime.num_actions();
        if patch.adjustments.len() != num_actions {
            return Err(mismatch("patch needs one adjustment per action of its loss"));
        }
        if !(patch.beta.is_finite() && patch.beta > 0.0) {
            return Err(invalid("patch beta must be finite and > 0"));
        }
        for z in &patch.fresh_anchors {
            k.check_outcome(z)?;
        }
        let nf = patch.fresh_anchors.len();
        for adj in &patch.adjustments {
            if adj.fresh.len() != nf || adj.basis.len() != b {
                return Err(mismatch("adjustment coefficient lengths do not match the patch"));
            }
        }
        if let StepRule::Alg2 { inverse } = &patch.step {
            if inverse.len() != num_actions || inverse.iter().any(|r| r.len() != num_actions) {
                return Err(mismatch("alg2 matrix must be square in the number of actions"));
            }
        }
        let lossprime = self.project_loss(&patch.witness_lossprime)?;

        let vf: Vec<Vec<f64>> = if nf > 32 {
            patch.fresh_anchors.par_iter().map(|z| self.basis_values(z)).collect()
        } else {
            patch.fresh_anchors.iter().map(|z| self.basis_values(z)).collect()
        };
        let gram = &self.cache.gram;
        // G·basis_a
        let gb: Vec<Vec<f64>> = patch
            .adjustments
            .iter()
            .map(|adj| gram.iter().map(|row| dot(row, &adj.basis)).collect())
            .collect();
        // Vf·basis_a, indexed by fresh anchor
        let vb: Vec<Vec<f64>> = patch
            .adjustments
            .iter()
            .map(|adj| vf.iter().map(|row| dot(row, &adj.basis)).collect())
            .collect();
        // Kf·fresh_a
        let kff: Vec<Vec<f64>> = patch
            .adjustments
            .iter()
            .map(|adj| {
                patch
                    .fresh_anchors
                    .iter()
                    .map(|zi| {
                        patch
                            .fresh_anchors
                            .iter()
                            .zip(&adj.fresh)
                            .map(|(zj, c)| c * k.k(zi, zj))
                            .sum()
                    })
                    .collect()
            })
            .collect();

        let cross: Vec<Vec<f64>> = patch
            .adjustments
            .iter()
            .zip(&gb)
            .map(|(adj, gba)| {
                (0..b)
                    .map(|kk| {
                        let fresh_part: f64 = adj.fresh.iter().zip(&vf).map(|(c, row)| c * row[kk]).sum();
                        fresh_part + gba[kk]
                    })
                    .collect()
            })
            .collect();
        let mut block = vec![vec![0.0; num_actions]; num_actions];
        for a in 0..num_actions {
            for c in a..num_actions {
                let fa = &patch.adjustments[a];
                let fc = &patch.adjustments[c];
                let v = dot(&fa.fresh, &kff[c]) + dot(&fa.fresh, &vb[c]) + dot(&fc.fresh, &vb[a]) + dot(&fa.basis, &gb[c]);
                block[a][c] = v;
                block[c][a] = v;
            }
        }

        for (kk, row) in self.cache.gram.iter_mut().enumerate() {
            row.extend(cross.iter().map(|c| c[kk]));
        }
        for a in 0..num_actions {
            let mut row = cross[a].clone();
            row.extend_from_slice(&block[a]);
            self.cache.gram.push(row);
        }
        self.cache.lossprime.push(lossprime);
        self.cache.flat = OnceLock::new();
        self.patches.push(patch);
        Ok(())
    }

    /// Coordinates of `p(x)` after replaying the patch chain, projections included.
    pub fn coords(&self, x: &[f64]) -> Coords {
        let nb = self.base.len();
        let mut coef = vec![0.0; self.basis_len()];
        self.base.coefficients_into(x, &mut coef[..nb]);
        let gram = &self.cache.gram;
        let mut norm_sq = 0.0;
        for i in 0..nb {
            norm_sq += coef[i] * dot(&gram[i][..nb], &coef[..nb]);
        }
        let r2 = self.r2();
        project_coords(&mut coef[..nb], &mut norm_sq, r2);

        let mut fvals = Vec::new();
        let mut probs = Vec::new();
        let mut w = Vec::new();
        for (patch, proj) in self.patches.iter().zip(&self.cache.lossprime) {
            let bl = patch.basis_len;
            let na = patch.num_actions();
            fvals.resize(na, 0.0);
            probs.resize(na, 0.0);
            w.resize(na, 0.0);
            proj.estimates_into(&coef, &mut fvals);
            smooth_best_response_into(&fvals, patch.beta, &mut probs);
            patch.weights_into(&probs, &mut w);
            let mut delta = 0.0;
            for a in 0..na {
                let col = bl + a;
                let ip: f64 = (0..bl).map(|kk| coef[kk] * gram[kk][col]).sum();
                delta += 2.0 * w[a] * ip;
                for c in 0..na {
                    delta += w[a] * w[c] * gram[col][bl + c];
                }
            }
            norm_sq = (norm_sq + delta).max(0.0);
            coef[bl..bl + na].copy_from_slice(&w);
            project_coords(&mut coef[..bl + na], &mut norm_sq, r2);
        }
        Coords { coef, norm_sq }
    }

    /// `f_p(x, a, ℓ) = ⟨r_ℓ(a), p(x)⟩`.
    pub fn loss_estimate(&self, x: &[f64], a: usize, loss: &LossFunction) -> Result<f64> {
        if a >= loss.num_actions() {
            return Err(invalid(format!("action {a} out of range")));
        }
        let proj = self.project_loss(loss)?;
        Ok(proj.estimate(&self.coords(x).coef, a))
    }

    /// Every basis element as an explicit span (duplicates merged).
    pub fn basis_elements(&self) -> &[RkhsElement] {
        self.cache.flat.get_or_init(|| {
            let k = *self.kernel();
            let mut flat: Vec<RkhsElement> = self
                .base
                .anchors
                .iter()
                .map(|a| {
                    let mut e = RkhsElement::zero(k);
                    e.push_unchecked(a, 1.0);
                    e
                })
                .collect();
            for patch in &self.patches {
                for adj in &patch.adjustments {
                    let mut e = RkhsElement::zero(k);
                    for (z, c) in patch.fresh_anchors.iter().zip(&adj.fresh) {
                        e.push_unchecked(z, *c);
                    }
                    for (kk, c) in adj.basis.iter().enumerate() {
                        if *c != 0.0 {
                            for (z, d) in flat[kk].terms() {
                                e.push_unchecked(z, c * d);
                            }
                        }
                    }
                    flat.push(e.compress(0.0));
                }
            }
            flat
        })
    }

    /// Explicit span `Σₖ coef[k]·Eₖ`.
    pub fn element_from_coords(&self, coef: &[f64]) -> RkhsElement {
        let mut e = RkhsElement::zero(*self.kernel());
        for (basis, c) in self.basis_elements().iter().zip(coef) {
            if *c != 0.0 {
                for (z, d) in basis.terms() {
                    e.push_unchecked(z, c * d);
                }
            }
        }
        e.compress(0.0)
    }

    /// `p(x)` as an explicit span.
    pub fn evaluate(&self, x: &[f64]) -> RkhsElement {
        self.element_from_coords(&self.coords(x).coef)
    }
}

/// Scales coordinates onto the radius-`r2` ball when the norm exceeds `r2`.
pub(crate) fn project_coords(coef: &mut [f64], norm_sq: &mut f64, r2: f64) {
    if *norm_sq > r2 * r2 {
        let s = r2 / norm_sq.sqrt();
        for c in coef.iter_mut() {
            *c *= s;
        }
        *norm_sq = r2 * r2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_feature(y: f64) -> RkhsElement {
        RkhsElement::feature(KernelSpec::min(), &[y]).unwrap()
    }

    #[test]
    fn empty_chain_returns_base() {
        let base = BasePredictor::constant_mean(KernelSpec::min(), &[[0.2], [0.6], [0.6]]).unwrap();
        let p = Predictor::new(base);
        let v = p.evaluate(&[0.3]);
        let expected = RkhsElement::from_terms(KernelSpec::min(), &[[0.2], [0.6]], &[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let diff = RkhsElement::axpy(-1.0, &v, &expected).unwrap();
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn base_is_projected_onto_ball() {
        let big = RkhsElement::from_terms(KernelSpec::min(), &[[1.0]], &[3.0]).unwrap();
        let p = Predictor::new(BasePredictor::constant(&big));
        let c = p.coords(&[]);
        assert!((c.norm_sq - 1.0).abs() < 1e-12);
        assert!((p.evaluate(&[]).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_patch_leaves_predictor_unchanged() {
        let k = KernelSpec::min();
        let base = BasePredictor::constant(&min_feature(0.4));
        let mut p = Predictor::new(base);
        let lossprime = LossFunction::new("lp", vec![min_feature(0.3), min_feature(0.8)], 1.0).unwrap();
        let patch = PatchRecord {
            step: StepRule::Alg1 { eta: 0.1, r1: 1.0 },
            beta: 2.0,
            witness_lossprime: lossprime,
            fresh_anchors: vec![vec![0.5]],
            adjustments: vec![Adjustment { fresh: vec![0.0], basis: vec![0.0] }; 2],
            basis_len: 1,
            batch_id: 0,
        };
        p.push_patch(patch).unwrap();
        let v = p.evaluate(&[0.1]);
        let diff = RkhsElement::axpy(-1.0, &v, &min_feature(0.4)).unwrap();
        assert!(diff.norm() < 1e-12);
        assert_eq!(v.kernel(), &k);
    }

    #[test]
    fn gram_matches_flattened_basis() {
        let k = KernelSpec::min();
        let base = BasePredictor::affine(k, vec![vec![0.2], vec![0.9]], vec![0.3, 0.2], vec![vec![0.1], vec![-0.1]]).unwrap();
        let mut p = Predictor::new(base);
        let lossprime = LossFunction::new("lp", vec![min_feature(0.3), min_feature(0.8).scaled(-0.5)], 1.0).unwrap();
        p.push_patch(PatchRecord {
            step: StepRule::Alg1 { eta: 0.1, r1: 1.0 },
            beta: 3.0,
            witness_lossprime: lossprime.clone(),
            fresh_anchors: vec![vec![0.5], vec![0.7]],
            adjustments: vec![
                Adjustment { fresh: vec![0.2, -0.1], basis: vec![0.05, 0.0] },
                Adjustment { fresh: vec![0.0, 0.3], basis: vec![-0.1, 0.2] },
            ],
            basis_len: 2,
            batch_id: 1,
        })
        .unwrap();
        p.push_patch(PatchRecord {
            step: StepRule::Alg2 { inverse: vec![vec![0.8, -0.1], vec![-0.1, 0.7]] },
            beta: 1.5,
            witness_lossprime: lossprime,
            fresh_anchors: vec![vec![0.1]],
            adjustments: vec![
                Adjustment { fresh: vec![0.4], basis: vec![0.1, 0.0, 0.5, -0.2] },
                Adjustment { fresh: vec![-0.2], basis: vec![0.0, 0.3, 0.0, 0.1] },
            ],
            basis_len: 4,
            batch_id: 2,
        })
        .unwrap();
        let flat = p.basis_elements().to_vec();
        assert_eq!(flat.len(), 6);
        for i in 0..6 {
            for j in 0..6 {
                let direct = flat[i].inner(&flat[j]).unwrap();
                assert!((direct - p.gram(i, j)).abs() < 1e-12, "({i},{j})");
            }
        }
        for y in [0.0, 0.15, 0.5, 1.0] {
            let vals = p.basis_values(&[y]);
            for (f, v) in flat.iter().zip(&vals) {
                assert!((f.eval_unchecked(&[y]) - v).abs() < 1e-12);
            }
        }
        // coordinate norm agrees with the explicit element
        for x in [0.0, 0.5, 1.0] {
            let c = p.coords(&[x]);
            let e = p.element_from_coords(&c.coef);
            assert!((e.norm_sq() - c.norm_sq).abs() < 1e-12);
        }
        let text = serde_json::to_string(&p).unwrap();
        let back: Predictor = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(back.gram(i, j), p.gram(i, j));
            }
        }
    }

    #[test]
    fn push_patch_validates_shapes() {
        let base = BasePredictor::constant(&min_feature(0.4));
        let mut p = Predictor::new(base);
        let lossprime = LossFunction::new("lp", vec![min_feature(0.3)], 1.0).unwrap();
        let patch = PatchRecord {
            step: StepRule::Alg1 { eta: 0.1, r1: 1.0 },
            beta: 2.0,
            witness_lossprime: lossprime,
            fresh_anchors: vec![vec![0.5]],
            adjustments: vec![Adjustment { fresh: vec![0.0], basis: vec![0.0] }],
            basis_len: 3,
            batch_id: 0,
        };
        assert!(p.push_patch(patch.clone()).is_err());
        let mut bad = patch.clone();
        bad.basis_len = 1;
        bad.adjustments[0].fresh = vec![];
        assert!(p.push_patch(bad).is_err());
        let mut ok = patch;
        ok.basis_len = 1;
        assert!(p.push_patch(ok).is_ok());
    }

    #[test]
    fn nadaraya_watson_weights_normalize() {
        let base = BasePredictor::nadaraya_watson(
            KernelSpec::min(),
            vec![vec![0.0], vec![1.0]],
            vec![vec![0.2], vec![0.8]],
            0.5,
        )
        .unwrap();
        let w = base.coefficients(&[0.5]);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
        let w = base.coefficients(&[0.0]);
        assert!(w[0] > w[1]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}

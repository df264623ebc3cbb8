//! A predictor evaluated on one batch.
//!
//! Batch expectations such as `Ê[(φ(y) − p(x))·w(x)]` are elements of the
//! span of the batch outcomes plus the predictor basis. [`Residual`] keeps them
//! in that mixed form so norms and inner products stay exact without flattening.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::data::{validate_samples, Sample};
use crate::error::{invalid, Result};
use crate::kernel::{anchor_key, dot, RkhsElement};
use crate::model::decision::smooth_best_response_into;
use crate::model::loss::LossFunction;
use crate::model::predictor::{Coords, LossProjection, Predictor};

/// Above this many distinct outcomes the outcome Gram matrix is not cached.
const KUU_CACHE_LIMIT: usize = 4096;

/// `Σᵤ fresh[u]·φ(yᵤ) + Σₖ basis[k]·Eₖ` over a view's distinct outcomes and predictor basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub fresh: Vec<f64>,
    pub basis: Vec<f64>,
}

pub struct BatchView<'p> {
    predictor: &'p Predictor,
    coords: Vec<Coords>,
    unique: Vec<Vec<f64>>,
    sample_unique: Vec<usize>,
    basis_at: Vec<Vec<f64>>,
    self_k: Vec<f64>,
    kuu: OnceLock<Vec<Vec<f64>>>,
}

impl<'p> BatchView<'p> {
    pub fn new(predictor: &'p Predictor, samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("batch is empty"));
        }
        let kernel = predictor.kernel();
        validate_samples(kernel, samples)?;
        if let Some(p) = predictor.base().context_dim() {
            if let Some(bad) = samples.iter().position(|s| s.x.len() != p) {
                return Err(invalid(format!("sample {bad}: context has {} coordinates, predictor expects {p}", samples[bad].x.len())));
            }
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut unique: Vec<Vec<f64>> = Vec::new();
        let sample_unique = samples
            .iter()
            .map(|s| {
                *index.entry(anchor_key(&s.y)).or_insert_with(|| {
                    unique.push(s.y.clone());
                    unique.len() - 1
                })
            })
            .collect();
        let coords = samples.par_iter().map(|s| predictor.coords(&s.x)).collect();
        let basis_at = unique.par_iter().map(|y| predictor.basis_values(y)).collect();
        let self_k = unique.iter().map(|y| kernel.k(y, y)).collect();
        Ok(BatchView { predictor, coords, unique, sample_unique, basis_at, self_k, kuu: OnceLock::new() })
    }

    pub fn predictor(&self) -> &'p Predictor {
        self.predictor
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self, i: usize) -> &Coords {
        &self.coords[i]
    }

    pub fn unique_outcomes(&self) -> &[Vec<f64>] {
        &self.unique
    }

    /// Index into [`BatchView::unique_outcomes`] of sample `i`'s outcome.
    pub fn outcome_index(&self, i: usize) -> usize {
        self.sample_unique[i]
    }

    /// `⟨p(xᵢ), φ(yᵢ)⟩`.
    pub fn prediction_at_outcome(&self, i: usize) -> f64 {
        dot(&self.coords[i].coef, &self.basis_at[self.sample_unique[i]])
    }

    /// `Ê‖p(x) − φ(y)‖²`.
    pub fn potential(&self) -> f64 {
        let total: f64 = (0..self.len())
            .map(|i| {
                let u = self.sample_unique[i];
                (self.self_k[u] - 2.0 * self.prediction_at_outcome(i) + self.coords[i].norm_sq).max(0.0)
            })
            .sum();
        total / self.len() as f64
    }

    pub fn project(&self, loss: &LossFunction) -> Result<LossProjection> {
        self.predictor.project_loss(loss)
    }

    /// Smooth best response `k̃(xᵢ, ·)` for every sample, rows per sample.
    pub fn decisions(&self, proj: &LossProjection, beta: f64) -> Vec<Vec<f64>> {
        let na = proj.num_actions();
        self.coords
            .par_iter()
            .map(|c| {
                let mut f = vec![0.0; na];
                proj.estimates_into(&c.coef, &mut f);
                let mut out = vec![0.0; na];
                smooth_best_response_into(&f, beta, &mut out);
                out
            })
            .collect()
    }

    /// Loss estimates `f_p(xᵢ, a, ℓ)`, rows per sample.
    pub fn estimates(&self, proj: &LossProjection) -> Vec<Vec<f64>> {
        let na = proj.num_actions();
        self.coords
            .iter()
            .map(|c| {
                let mut f = vec![0.0; na];
                proj.estimates_into(&c.coef, &mut f);
                f
            })
            .collect()
    }

    /// `ℓ(a, y)` at every distinct outcome, rows per outcome.
    pub fn loss_values(&self, loss: &LossFunction) -> Vec<Vec<f64>> {
        self.unique
            .iter()
            .map(|y| (0..loss.num_actions()).map(|a| loss.eval_unchecked(a, y)).collect())
            .collect()
    }

    /// `Ê[(φ(y) − p(x))·w(x, y)]` for per-sample weights `w`.
    pub fn residual(&self, weights: &[f64]) -> Residual {
        let n = self.len() as f64;
        let mut fresh = vec![0.0; self.unique.len()];
        let mut basis = vec![0.0; self.predictor.basis_len()];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            fresh[self.sample_unique[i]] += w / n;
            for (b, c) in basis.iter_mut().zip(&self.coords[i].coef) {
                *b -= w * c / n;
            }
        }
        Residual { fresh, basis }
    }

    /// One residual per action, weighted by the action's decision probability.
    pub fn action_residuals(&self, probs: &[Vec<f64>]) -> Vec<Residual> {
        let na = probs.first().map_or(0, |r| r.len());
        (0..na)
            .into_par_iter()
            .map(|a| {
                let w: Vec<f64> = probs.iter().map(|row| row[a]).collect();
                self.residual(&w)
            })
            .collect()
    }

    fn kuu(&self) -> Option<&Vec<Vec<f64>>> {
        if self.unique.len() > KUU_CACHE_LIMIT {
            return None;
        }
        Some(self.kuu.get_or_init(|| {
            let k = self.predictor.kernel();
            self.unique
                .par_iter()
                .map(|a| self.unique.iter().map(|b| k.k(a, b)).collect())
                .collect()
        }))
    }

    fn fresh_quad(&self, f: &[f64], h: &[f64]) -> f64 {
        match self.kuu() {
            Some(kuu) => kuu.iter().zip(f).filter(|(_, c)| **c != 0.0).map(|(row, c)| c * dot(row, h)).sum(),
            None => {
                let k = self.predictor.kernel();
                self.unique
                    .par_iter()
                    .zip(f)
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(a, c)| c * self.unique.iter().zip(h).map(|(b, d)| d * k.k(a, b)).sum::<f64>())
                    .collect::<Vec<f64>>()
                    .iter()
                    .sum()
            }
        }
    }

    /// `⟨u, v⟩` for two residuals of this view.
    pub fn inner(&self, u: &Residual, v: &Residual) -> f64 {
        let ff = self.fresh_quad(&u.fresh, &v.fresh);
        let mut fg = 0.0;
        for (uidx, vals) in self.basis_at.iter().enumerate() {
            let (fu, fv) = (u.fresh[uidx], v.fresh[uidx]);
            if fu != 0.0 {
                fg += fu * dot(vals, &v.basis);
            }
            if fv != 0.0 {
                fg += fv * dot(vals, &u.basis);
            }
        }
        let b = u.basis.len();
        let mut gg = 0.0;
        for i in 0..b {
            if u.basis[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..b {
                row += self.predictor.gram(i, j) * v.basis[j];
            }
            gg += u.basis[i] * row;
        }
        ff + fg + gg
    }

    pub fn norm_sq(&self, r: &Residual) -> f64 {
        self.inner(r, r).max(0.0)
    }

    /// `⟨r(a), v⟩` for one loss action, with `proj` the loss's projection on the basis.
    pub fn inner_with_action(&self, r: &Residual, loss: &LossFunction, proj: &LossProjection, a: usize) -> f64 {
        let fresh: f64 = self
            .unique
            .iter()
            .zip(&r.fresh)
            .filter(|(_, c)| **c != 0.0)
            .map(|(y, c)| c * loss.eval_unchecked(a, y))
            .sum();
        fresh + proj.estimate(&r.basis, a)
    }

    /// The residual as an explicit span.
    pub fn flatten(&self, r: &Residual) -> RkhsElement {
        let mut e = self.predictor.element_from_coords(&r.basis);
        for (y, c) in self.unique.iter().zip(&r.fresh) {
            if *c != 0.0 {
                e.push_unchecked(y, *c);
            }
        }
        e.compress(0.0)
    }
}

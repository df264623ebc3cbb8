//! Explicit Euclidean reimplementation for linear kernels, used as an oracle
//! for the implicit kernel pipeline. Nothing here calls into the library's
//! numerical code: predictions are plain vectors in ℝᵈ.

#![allow(dead_code)]

use decal::data::Sample;
use decal::kernel::{KernelSpec, RkhsElement};
use decal::model::{BasePredictor, LossFunction};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(u, v)| *u += a * v);
}

/// Written independently of the library: max-shifted softmax of `−β·f`.
pub fn softmax_neg(f: &[f64], beta: f64) -> Vec<f64> {
    let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = f.iter().map(|v| (-beta * (v - lo)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Explicit vector of a linear-kernel element.
pub fn explicit(e: &RkhsElement, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    for (z, c) in e.anchors().zip(e.coefficients()) {
        axpy(&mut v, *c, z);
    }
    v
}

fn project(v: &mut [f64], r2: f64) {
    let n = norm(v);
    if n > r2 {
        v.iter_mut().for_each(|x| *x *= r2 / n);
    }
}

/// One recorded update `p ← Π(p + Σₐ wₐ(x)·uₐ)`.
pub struct OracleStep {
    /// Explicit decision loss vectors `r′(a)`.
    pub lossprime: Vec<Vec<f64>>,
    pub beta: f64,
    pub directions: Vec<Vec<f64>>,
    /// `None` for alg1 (weights are the decision probabilities), `Some(M)` for alg2.
    pub inverse: Option<Vec<Vec<f64>>>,
}

pub struct OraclePredictor {
    pub d: usize,
    pub r2: f64,
    pub anchors: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
    pub slope: Vec<Vec<f64>>,
    pub steps: Vec<OracleStep>,
}

impl OraclePredictor {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.d];
        for ((z, b), w) in self.anchors.iter().zip(&self.intercept).zip(&self.slope) {
            axpy(&mut p, b + dot(w, x), z);
        }
        project(&mut p, self.r2);
        for s in &self.steps {
            let f: Vec<f64> = s.lossprime.iter().map(|r| dot(r, &p)).collect();
            let k = softmax_neg(&f, s.beta);
            let w: Vec<f64> = match &s.inverse {
                None => k,
                Some(m) => m.iter().map(|row| dot(row, &k)).collect(),
            };
            for (wa, u) in w.iter().zip(&s.directions) {
                axpy(&mut p, *wa, u);
            }
            project(&mut p, self.r2);
        }
        p
    }

    pub fn decisions(&self, x: &[f64], lossprime: &[Vec<f64>], beta: f64) -> Vec<f64> {
        let p = self.predict(x);
        let f: Vec<f64> = lossprime.iter().map(|r| dot(r, &p)).collect();
        softmax_neg(&f, beta)
    }

    /// `Ĝₐ = Ê[k̃(x,a)(y − p(x))]`.
    pub fn residual_means(&self, batch: &[Sample], lossprime: &[Vec<f64>], beta: f64) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.d]; lossprime.len()];
        let n = batch.len() as f64;
        for s in batch {
            let p = self.predict(&s.x);
            let k = {
                let f: Vec<f64> = lossprime.iter().map(|r| dot(r, &p)).collect();
                softmax_neg(&f, beta)
            };
            let res: Vec<f64> = s.y.iter().zip(&p).map(|(a, b)| a - b).collect();
            for (ga, ka) in g.iter_mut().zip(&k) {
                axpy(ga, ka / n, &res);
            }
        }
        g
    }

    pub fn push_alg1(&mut self, batch: &[Sample], lossprime: &[Vec<f64>], beta: f64, eta: f64, r1: f64) {
        let g = self.residual_means(batch, lossprime, beta);
        let directions = g
            .into_iter()
            .map(|ga| {
                let n = norm(&ga);
                if n > 1e-12 {
                    ga.iter().map(|v| v * eta * r1 / n).collect()
                } else {
                    vec![0.0; self.d]
                }
            })
            .collect();
        self.steps.push(OracleStep { lossprime: lossprime.to_vec(), beta, directions, inverse: None });
    }

    pub fn push_alg2(&mut self, batch: &[Sample], lossprime: &[Vec<f64>], beta: f64) {
        let m = lossprime.len();
        let n = batch.len() as f64;
        let mut dmat = vec![vec![0.0; m]; m];
        for s in batch {
            let k = self.decisions(&s.x, lossprime, beta);
            for a in 0..m {
                for c in 0..m {
                    dmat[a][c] += k[a] * k[c] / n;
                }
            }
        }
        for (a, row) in dmat.iter_mut().enumerate() {
            row[a] += 1.0;
        }
        let inverse = gauss_jordan_inverse(&dmat);
        let directions = self.residual_means(batch, lossprime, beta);
        self.steps.push(OracleStep { lossprime: lossprime.to_vec(), beta, directions, inverse: Some(inverse) });
    }

    pub fn potential(&self, batch: &[Sample]) -> f64 {
        batch
            .iter()
            .map(|s| {
                let p = self.predict(&s.x);
                s.y.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum::<f64>()
            / batch.len() as f64
    }

    /// `|Ê[Σₐ k̃_{ℓ′}(x,a)·⟨r(a), y − p(x)⟩]|`.
    pub fn gap(&self, batch: &[Sample], loss: &[Vec<f64>], lossprime: &[Vec<f64>], beta: f64) -> f64 {
        let g = self.residual_means(batch, lossprime, beta);
        loss.iter().zip(&g).map(|(r, ga)| dot(r, ga)).sum::<f64>().abs()
    }

    /// Closed-form best gap against `ℓ′`: `R1·Σₐ‖Ĝₐ‖`.
    pub fn best_gap(&self, batch: &[Sample], lossprime: &[Vec<f64>], beta: f64, r1: f64) -> f64 {
        r1 * self.residual_means(batch, lossprime, beta).iter().map(|g| norm(g)).sum::<f64>()
    }
}

/// Plain Gauss–Jordan with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, q)| *v -= f * q);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// A random point of the radius-`r` ball in ℝᵈ.
pub fn ball_point(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&v);
    let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
    v.into_iter().map(|x| x * radius / n).collect()
}

/// Random linear-kernel loss with `span` anchors per action and norm at most `r1`.
pub fn random_linear_loss(rng: &mut ChaCha8Rng, id: &str, kernel: KernelSpec, d: usize, actions: usize, span: usize, r1: f64) -> (LossFunction, Vec<Vec<f64>>) {
    let mut elems = Vec::new();
    let mut vecs = Vec::new();
    for _ in 0..actions {
        let anchors: Vec<Vec<f64>> = (0..span).map(|_| ball_point(rng, d, 1.0)).collect();
        let coeffs: Vec<f64> = (0..span).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e = RkhsElement::from_terms(kernel, &anchors, &coeffs).unwrap();
        let n = e.norm();
        let target = r1 * rng.random_range(0.3..1.0);
        let e = if n > 0.0 { e.scaled(target / n) } else { e };
        vecs.push(explicit(&e, d));
        elems.push(e);
    }
    (LossFunction::new(id, elems, r1).unwrap(), vecs)
}

pub struct Instance {
    pub d: usize,
    pub kernel: KernelSpec,
    pub base: BasePredictor,
    pub oracle: OraclePredictor,
    pub batches: Vec<Vec<Sample>>,
    pub test_x: Vec<Vec<f64>>,
    pub actions: usize,
}

/// Affine base predictor over random anchors, outcomes in the unit ball.
pub fn random_instance(rng: &mut ChaCha8Rng, d: usize, actions: usize, n: usize, batches: usize) -> Instance {
    let kernel = KernelSpec::linear(d, 1.0).unwrap();
    let ctx = 2;
    let anchors: Vec<Vec<f64>> = (0..3).map(|_| ball_point(rng, d, 1.0)).collect();
    let intercept: Vec<f64> = (0..3).map(|_| rng.random_range(-0.8..0.8)).collect();
    let slope: Vec<Vec<f64>> = (0..3).map(|_| (0..ctx).map(|_| rng.random_range(-0.8..0.8)).collect()).collect();
    let base = BasePredictor::affine(kernel, anchors.clone(), intercept.clone(), slope.clone()).unwrap();
    // Outcomes correlate with the context so residuals are not pure noise.
    let dir = ball_point(rng, d, 0.6);
    let make = |rng: &mut ChaCha8Rng| -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..ctx).map(|_| rng.random::<f64>()).collect();
                let mut y = ball_point(rng, d, 0.4);
                axpy(&mut y, x[0], &dir);
                Sample::new(x, y)
            })
            .collect()
    };
    let batches = (0..batches).map(|_| make(rng)).collect();
    let test_x = (0..5).map(|_| (0..ctx).map(|_| rng.random::<f64>()).collect()).collect();
    Instance {
        d,
        kernel,
        base,
        oracle: OraclePredictor { d, r2: 1.0, anchors, intercept, slope, steps: Vec::new() },
        batches,
        test_x,
        actions,
    }
}

/// Runs the implicit pipeline and the oracle side by side on an instance,
/// alternating alg1 and alg2 steps. Returns the largest absolute difference.
pub fn pipeline_discrepancy(inst: Instance, rng: &mut ChaCha8Rng) -> f64 {
    use decal::audit::{audit, empirical_gap};
    use decal::calibrate::{alg1_step, alg2_step, potential, CalibConfig};
    use decal::data::Batch;
    use decal::model::Predictor;

    let Instance { d, kernel, base, mut oracle, batches, test_x, actions } = inst;
    let mut p = Predictor::new(base);
    let beta = rng.random_range(0.5..10.0);
    let r1 = 1.0;
    let mut cfg = CalibConfig::new(0.2, beta, r1, 1.0);
    cfg.eta = Some(rng.random_range(0.05..0.5));
    let mut worst: f64 = 0.0;
    let mut track = |a: f64, b: f64| worst = worst.max((a - b).abs());
    let compare_points = |p: &Predictor, oracle: &OraclePredictor, track: &mut dyn FnMut(f64, f64), l: &LossFunction, lv: &[Vec<f64>]| {
        for x in &test_x {
            let want = oracle.predict(x);
            let got = explicit(&p.evaluate(x), d);
            for (g, w) in got.iter().zip(&want) {
                track(*g, *w);
            }
            for (a, r) in lv.iter().enumerate() {
                track(p.loss_estimate(x, a, l).unwrap(), dot(r, &want));
            }
        }
    };
    for (t, batch) in batches.iter().enumerate() {
        let (lp, lpv) = random_linear_loss(rng, "lp", kernel, d, actions, 2, r1);
        let (l, lv) = random_linear_loss(rng, "l", kernel, d, actions, 3, r1);
        compare_points(&p, &oracle, &mut track, &l, &lv);
        track(empirical_gap(&p, &l, &lp, batch, beta).unwrap(), oracle.gap(batch, &lv, &lpv, beta));
        track(potential(&p, batch).unwrap(), oracle.potential(batch));
        let b = Batch::new(t as u64, batch.clone());
        let report = audit(&p, batch, 1e-9, beta, std::slice::from_ref(&lp)).unwrap();
        track(report.empirical_gap, oracle.best_gap(batch, &lpv, beta, r1));
        let patch = if t % 2 == 0 && report.found {
            oracle.push_alg1(batch, &lpv, beta, cfg.eta(), r1);
            alg1_step(&p, &report, &b, &cfg).unwrap()
        } else {
            oracle.push_alg2(batch, &lpv, beta);
            alg2_step(&p, &lp, &b, &cfg).unwrap()
        };
        p.push_patch(patch).unwrap();
        track(potential(&p, batch).unwrap(), oracle.potential(batch));
    }
    let (l, lv) = random_linear_loss(rng, "l", kernel, d, actions, 3, r1);
    compare_points(&p, &oracle, &mut track, &l, &lv);
    worst
}

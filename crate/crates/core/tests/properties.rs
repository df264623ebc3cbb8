//! Property tests for the kernel, decision, audit and calibration invariants.

use decal::audit::{closed_form_witness, decce_estimate, empirical_gap, random_loss, random_pool};
use decal::calibrate::{alg1_patch, potential, project};
use decal::experiments::stats::chi_squared_two_sample;
use decal::kernel::{gram_matrix, KernelSpec, RkhsElement};
use decal::model::decision::smooth_best_response;
use decal::model::{BatchView, Predictor};
use decal::synth::{gen_lower_bound, LowerBoundWorld, SynthSpec};
use decal::data::SampleSource;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kernels() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(KernelSpec::min()),
        (1usize..4).prop_map(|d| KernelSpec::linear(d, 1.0).unwrap()),
        (1usize..4).prop_map(|d| KernelSpec::exp(d, 2.0).unwrap()),
    ]
}

/// Points inside the kernel's outcome domain.
fn points(k: KernelSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = k.outcome_dim();
    let radius = match k.kind {
        decal::KernelKind::Min => 1.0,
        decal::KernelKind::Linear { .. } => k.r2,
        decal::KernelKind::Exp { .. } => k.exp_radius(),
    };
    (0..n)
        .map(|_| {
            if d == 1 && matches!(k.kind, decal::KernelKind::Min) {
                vec![rng.random::<f64>()]
            } else {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
                let s = radius * 0.99 * rng.random::<f64>() / n;
                v.into_iter().map(|x| x * s).collect()
            }
        })
        .collect()
}

fn element(k: KernelSpec, seed: u64, n: usize) -> RkhsElement {
    use rand::Rng;
    let pts = points(k, n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    RkhsElement::from_terms(k, &pts, &c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_is_lipschitz(
        z in prop::collection::vec(-5.0f64..5.0, 1..8),
        dz in prop::collection::vec(-1.0f64..1.0, 8),
        beta in 0.01f64..50.0,
    ) {
        let z2: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + b).collect();
        let p = smooth_best_response(&z, beta);
        let q = smooth_best_response(&z2, beta);
        let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        let l2 = z.iter().zip(&z2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(l1 <= 2f64.sqrt() * beta * l2 + 1e-9);
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-1e3f64..1e3, 1..10), beta in 0.0f64..1e3) {
        let p = smooth_best_response(&z, beta);
        prop_assert!(p.iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cauchy_schwarz(k in kernels(), s1 in any::<u64>(), s2 in any::<u64>(), n in 1usize..6) {
        let u = element(k, s1, n);
        let v = element(k, s2, n);
        let ip = u.inner(&v).unwrap();
        prop_assert!(ip.abs() <= u.norm() * v.norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn gram_is_psd(k in kernels(), seed in any::<u64>(), n in 1usize..10, w in prop::collection::vec(-1.0f64..1.0, 10)) {
        let pts = points(k, n, seed);
        let g = gram_matrix(&k, pts.iter().map(|p| p.as_slice()));
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += w[i] * g[(i, j)] * w[j];
            }
        }
        prop_assert!(q >= -1e-10 * (1.0 + g.iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn evaluation_is_linear(k in kernels(), s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0) {
        let u = element(k, s1, 3);
        let v = element(k, s2, 4);
        let w = RkhsElement::axpy(a, &u, &v).unwrap();
        for y in points(k, 5, s1 ^ s2) {
            let lhs = w.eval(&y).unwrap();
            let rhs = a * u.eval(&y).unwrap() + v.eval(&y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn projection_lands_in_ball(k in kernels(), seed in any::<u64>(), r2 in 0.1f64..3.0) {
        let v = element(k, seed, 4);
        let p = project(&v, r2);
        prop_assert!(p.norm() <= r2 * (1.0 + 1e-12));
        if v.norm() <= r2 {
            prop_assert_eq!(p, v);
        }
    }
}

fn planted(seed: u64, n: usize) -> (Predictor, Vec<decal::data::Sample>) {
    let world = SynthSpec::planted_bias(0.3, 1, 0, seed);
    let batch = world.source().unwrap().next_batch(n).unwrap().samples;
    (Predictor::new(world.planted_predictor().unwrap()), batch)
}

fn support() -> Vec<Vec<f64>> {
    [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|v| vec![*v]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_witness_dominates(seed in any::<u64>(), actions in 1usize..4, beta in 0.5f64..30.0) {
        let (p, batch) = planted(seed, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_loss("lp", KernelSpec::min(), &support(), actions, 3, 1.0, &mut rng).unwrap();
        let w = closed_form_witness(&p, &lp, &batch, beta, 1.0).unwrap();
        let best = empirical_gap(&p, &w, &lp, &batch, beta).unwrap();
        for i in 0..10 {
            let l = random_loss(format!("l{i}"), KernelSpec::min(), &support(), actions, 3, 1.0, &mut rng).unwrap();
            prop_assert!(empirical_gap(&p, &l, &lp, &batch, beta).unwrap() <= best + 1e-9);
        }
    }

    #[test]
    fn gap_is_bounded(seed in any::<u64>(), actions in 1usize..4, beta in 0.5f64..30.0) {
        let (p, batch) = planted(seed, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_loss("lp", KernelSpec::min(), &support(), actions, 3, 1.0, &mut rng).unwrap();
        let l = random_loss("l", KernelSpec::min(), &support(), actions, 3, 1.0, &mut rng).unwrap();
        // |⟨r, y − p⟩| ≤ R1·‖y − p‖ ≤ 2·R1·R2 pointwise, and the action weights sum to one.
        prop_assert!(empirical_gap(&p, &l, &lp, &batch, beta).unwrap() <= 2.0 + 1e-12);
    }

    #[test]
    fn larger_pools_never_lower_the_estimate(seed in any::<u64>(), extra in 1usize..6) {
        let (p, batch) = planted(seed, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(KernelSpec::min(), &support(), 2, 3, 1.0, 4, &mut rng).unwrap();
        let mut bigger = pool.clone();
        bigger.extend(random_pool(KernelSpec::min(), &support(), 2, 3, 1.0, extra, &mut rng).unwrap());
        let a = decce_estimate(&p, &batch, 5.0, &pool).unwrap();
        let b = decce_estimate(&p, &batch, 5.0, &bigger).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn alg1_step_decreases_potential(seed in any::<u64>(), eta in 0.01f64..0.5, beta in 0.5f64..30.0) {
        let (p, batch) = planted(seed, 80);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_loss("lp", KernelSpec::min(), &support(), 2, 3, 1.0, &mut rng).unwrap();
        let view = BatchView::new(&p, &batch).unwrap();
        let before = view.potential();
        let cand = decal::audit::witness_candidate(&view, &lp, beta, 1.0).unwrap();
        let patch = alg1_patch(&view, &lp, beta, eta, 1.0, 0).unwrap();
        drop(view);
        let mut q = p.clone();
        q.push_patch(patch).unwrap();
        let after = potential(&q, &batch).unwrap();
        prop_assert!(before - after >= 2.0 * eta * cand.gap - eta * eta - 1e-9);
    }

    #[test]
    fn predictor_survives_serialization(seed in any::<u64>()) {
        let (p, batch) = planted(seed, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_loss("lp", KernelSpec::min(), &support(), 2, 3, 1.0, &mut rng).unwrap();
        let view = BatchView::new(&p, &batch).unwrap();
        let patch = alg1_patch(&view, &lp, 4.0, 0.2, 1.0, 0).unwrap();
        drop(view);
        let mut q = p.clone();
        q.push_patch(patch).unwrap();
        let back: Predictor = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        for s in &batch {
            prop_assert_eq!(q.coords(&s.x), back.coords(&s.x));
        }
    }
}

/// Single draws of the two lower-bound worlds have the same law over (index, sign).
#[test]
fn lower_bound_marginals_match() {
    let d = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut c1 = vec![0u64; 2 * d];
    let mut c2 = vec![0u64; 2 * d];
    for _ in 0..6000 {
        for (world, counts) in [(LowerBoundWorld::D1, &mut c1), (LowerBoundWorld::D2, &mut c2)] {
            let inst = gen_lower_bound(d, 0.1, 1, world, &mut rng).unwrap();
            let o = inst.observations()[0];
            counts[2 * o.index + (o.sign > 0) as usize] += 1;
        }
    }
    let (_, p) = chi_squared_two_sample(&c1, &c2).unwrap();
    assert!(p > 1e-3, "marginals differ: p = {p}");
}

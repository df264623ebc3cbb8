//! The implicit kernel pipeline against an explicit vector reimplementation.

mod common;

use common::{pipeline_discrepancy, random_instance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn implicit_matches_explicit_on_linear_kernels() {
    for (i, d) in [2usize, 5, 10].into_iter().enumerate() {
        for actions in 1..=3 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + 10 * i as u64 + actions as u64);
            let inst = random_instance(&mut rng, d, actions, 25, 4);
            let diff = pipeline_discrepancy(inst, &mut rng);
            assert!(diff < 1e-9, "d = {d}, actions = {actions}: discrepancy {diff:e}");
        }
    }
}

#[test]
fn oracle_inverse_is_inverse() {
    let a = vec![vec![2.0, 0.5], vec![0.5, 1.5]];
    let inv = common::gauss_jordan_inverse(&a);
    for i in 0..2 {
        for j in 0..2 {
            let v: f64 = (0..2).map(|k| a[i][k] * inv[k][j]).sum();
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
    }
}

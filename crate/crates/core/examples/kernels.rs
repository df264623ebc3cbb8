//! RKHS elements as finite spans of feature maps, and the two loss families
//! whose kernel expansions are exact.
//!
//! `cargo run --example kernels`

use decal::kernel::{gram_matrix, KernelSpec, RkhsElement};
use decal::synth::{cobb_douglas_value, make_cobb_douglas_loss, make_piecewise_linear_loss, piecewise_linear_value, Piece};

fn main() -> decal::Result<()> {
    // On [0, 1] the min kernel's feature maps are ramps: φ(c)(y) = min(c, y).
    let min = KernelSpec::min();
    let u = RkhsElement::from_terms(min, &[[0.2], [0.7]], &[1.0, -0.5])?;
    let v = RkhsElement::feature(min, &[0.5])?;
    println!("min kernel: |u| = {:.4}, <u, phi(0.5)> = {:.4}, u(0.5) = {:.4}", u.norm(), u.inner(&v)?, u.eval(&[0.5])?);

    // Shared anchors are merged on compression.
    let w = RkhsElement::axpy(2.0, &u, &u)?;
    println!("3u has {} terms before and {} after compression", w.len(), w.compress(0.0).len());

    let exp = KernelSpec::exp(2, 3.0)?;
    let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![0.5, -0.2], vec![-0.3, 0.9]];
    let g = gram_matrix(&exp, pts.iter().map(|p| p.as_slice()));
    println!("exp kernel Gram matrix (domain radius {:.3}):{g:.4}", exp.exp_radius());

    let pieces = [Piece { k1: 1.0, k2: -0.5, c: 0.4 }, Piece { k1: -0.2, k2: 0.8, c: 0.7 }];
    let pl = make_piecewise_linear_loss("piecewise", &pieces)?;
    println!("{:>5} {:>10} {:>10} {:>10} {:>10}", "y", "a0", "closed", "a1", "closed");
    for y in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!(
            "{y:>5.2} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            pl.eval(0, &[y])?,
            piecewise_linear_value(pieces[0], y),
            pl.eval(1, &[y])?,
            piecewise_linear_value(pieces[1], y)
        );
    }

    let alphas = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
    let cd = make_cobb_douglas_loss("cobb-douglas", exp, &alphas, -1.0)?;
    let y = [0.4, 0.1];
    for (a, alpha) in alphas.iter().enumerate() {
        println!("Cobb-Douglas action {a}: kernel {:.6}, closed form {:.6}", cd.eval(a, &y)?, cobb_douglas_value(alpha, -1.0, &y));
    }
    Ok(())
}

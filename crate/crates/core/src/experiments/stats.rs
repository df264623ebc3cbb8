//! Sample-size calculators, confidence intervals and small regressions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

/// Half-width `2B·√(2 ln(2/δ)/N)` of the Hilbert-space Hoeffding bound for a
/// mean of `n` variables of norm at most `b`.
pub fn hoeffding_half_width(b: f64, n: usize, delta: f64) -> f64 {
    2.0 * b * (2.0 * (2.0 / delta).ln() / n as f64).sqrt()
}

/// Smallest `N` with `hoeffding_half_width(b, N, δ) ≤ t`: `⌈8B² ln(2/δ)/t²⌉`, at least 1.
pub fn hoeffding_sample_size(b: f64, t: f64, delta: f64) -> Result<usize> {
    if !(b > 0.0 && b.is_finite()) || t.is_nan() || t <= 0.0 || !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("hoeffding_sample_size needs B, t > 0 and delta in (0, 1)"));
    }
    let n = 8.0 * b * b * (2.0 / delta).ln() / (t * t);
    Ok(if n.is_finite() { (n.ceil() as usize).max(1) } else { usize::MAX })
}

/// Exact two-sided Clopper–Pearson interval for `k` successes in `n` trials at level `1 − alpha`.
pub fn clopper_pearson(k: usize, n: usize, alpha: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n || !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("clopper_pearson needs 0 <= k <= n, n >= 1 and alpha in (0, 1)"));
    }
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).map_err(|e| invalid(e.to_string()))?.inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).map_err(|e| invalid(e.to_string()))?.inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

/// Ordinary least squares `y = intercept + slope·x` with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub n: usize,
}

impl LinearFit {
    /// Two-sided `t` quantile for the fit's residual degrees of freedom.
    pub fn t_quantile(&self, level: f64) -> f64 {
        let dof = (self.n as f64 - 2.0).max(1.0);
        StudentsT::new(0.0, 1.0, dof).map(|t| t.inverse_cdf(0.5 + level / 2.0)).unwrap_or(f64::INFINITY)
    }

    pub fn intercept_band(&self, level: f64) -> f64 {
        self.t_quantile(level) * self.intercept_se
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(invalid("a linear fit needs at least 3 paired points"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return Err(invalid("a linear fit needs at least two distinct x values"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let s2 = rss / (nf - 2.0);
    Ok(LinearFit {
        slope,
        intercept,
        slope_se: (s2 / sxx).sqrt(),
        intercept_se: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        n,
    })
}

/// Least-squares slope of `y = c·x` through the origin.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> f64 {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx
}

/// Pearson chi-squared homogeneity test of two count vectors over the same
/// categories. Returns `(statistic, p_value)`; empty categories are skipped.
pub fn chi_squared_two_sample(a: &[u64], b: &[u64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(invalid("count vectors must have equal length"));
    }
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("count vectors must be nonempty"));
    }
    let total = na + nb;
    let mut stat = 0.0;
    let mut cats = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cats += 1;
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if cats < 2 {
        return Ok((0.0, 1.0));
    }
    let dist = ChiSquared::new((cats - 1) as f64).map_err(|e| invalid(e.to_string()))?;
    Ok((stat, 1.0 - dist.cdf(stat)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_sample_size(1.0, 0.1, 0.05).unwrap(), 2952);
        assert_eq!(hoeffding_sample_size(1.0, 1e9, 0.05).unwrap(), 1);
        let n1 = hoeffding_sample_size(1.0, 0.01, 0.05).unwrap();
        let n2 = hoeffding_sample_size(2.0, 0.01, 0.05).unwrap();
        assert!((n2 as f64 / n1 as f64 - 4.0).abs() < 1e-4);
        let n = hoeffding_sample_size(1.5, 0.07, 0.01).unwrap();
        assert!(hoeffding_half_width(1.5, n, 0.01) <= 0.07);
        assert!(hoeffding_half_width(1.5, n - 1, 0.01) > 0.07);
    }

    #[test]
    fn clopper_pearson_known_values() {
        let (lo, hi) = clopper_pearson(0, 10, 0.05).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(5, 10, 0.05).unwrap();
        assert!((lo - 0.187086).abs() < 1e-5 && (hi - 0.812914).abs() < 1e-5);
    }

    #[test]
    fn fits() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-12);
        assert!((fit_through_origin(&x, &[2.0, 4.0, 6.0, 8.0]) - 2.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn chi_squared_identical_counts() {
        let (s, p) = chi_squared_two_sample(&[10, 20, 30], &[10, 20, 30]).unwrap();
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }
}

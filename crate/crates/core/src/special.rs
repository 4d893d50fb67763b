//! Scalar Gaussian helpers shared by every module.

use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Standard normal density.
#[inline]
pub fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn big_phi(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// `ln(Σ exp(v))` over an iterator, stable for large magnitudes.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Logistic function `1 / (1 + exp(-z))` without overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Closed-form total variation between two univariate Gaussians.
pub fn gaussian_tv(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    // The sign of p1 - p2 is constant between crossing points, so TV is half
    // the summed absolute CDF gap increments over those pieces.
    let mut roots = gaussian_crossings(m1, v1, m2, v2);
    roots.sort_by(f64::total_cmp);
    let gap = |x: f64| big_phi((x - m1) / v1.sqrt()) - big_phi((x - m2) / v2.sqrt());
    let mut prev = 0.0;
    let mut total = 0.0;
    for r in roots {
        let g = gap(r);
        total += (g - prev).abs();
        prev = g;
    }
    total += prev.abs();
    (0.5 * total).min(1.0)
}

fn gaussian_crossings(m1: f64, v1: f64, m2: f64, v2: f64) -> Vec<f64> {
    // ln p1 - ln p2 = A x^2 + B x + C
    let a = 0.5 / v2 - 0.5 / v1;
    let b = m1 / v1 - m2 / v2;
    let c = 0.5 * m2 * m2 / v2 - 0.5 * m1 * m1 / v1 + 0.5 * (v2 / v1).ln();
    if a.abs() < 1e-300 {
        if b == 0.0 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r
}

use ambient_core::fields::*;
use ambient_core::schedule::NoiseSchedule;
use ambient_core::special::gaussian_tv;
use proptest::prelude::*;

/// Dense Gaussian elimination with partial pivoting, independent of the
/// library's Cholesky path.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let m = a[r][c] / a[c][c];
            let (top, bottom) = a.split_at_mut(r);
            for (x, y) in bottom[0][c..n].iter_mut().zip(&top[c][c..n]) {
                *x -= m * y;
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn residual_oracle(c: impl Fn(usize) -> f64, sigma: f64, k: usize) -> f64 {
    let m = k / 2;
    let a: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| c(i.abs_diff(j)) + if i == j { sigma * sigma } else { 0.0 }).collect()).collect();
    let rhs: Vec<f64> = (0..k).map(|i| c(i.abs_diff(m))).collect();
    let w = solve(a, rhs.clone());
    c(0) - rhs.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
}

/// Field with spectrum `spec` (symmetrised) via the inverse real DFT.
fn field_from_spectrum(half: &[f64]) -> GaussianField {
    let l = 2 * (half.len() - 1);
    let s: Vec<f64> = (0..l).map(|j| half[j.min(l - j)]).collect();
    let cov: Vec<f64> = (0..l)
        .map(|d| {
            s.iter()
                .enumerate()
                .map(|(j, v)| v * (2.0 * std::f64::consts::PI * (j * d) as f64 / l as f64).cos())
                .sum::<f64>()
                / l as f64
        })
        .collect();
    let sym: Vec<f64> = (0..l).map(|d| 0.5 * (cov[d] + cov[(l - d) % l])).collect();
    GaussianField::new(sym).unwrap()
}

#[test]
fn ar1_residuals_match_direct_solves() {
    let f = GaussianField::geometric(64, 0.9).unwrap();
    let r: Vec<f64> = [1, 3, 5].iter().map(|&k| optimal_window_denoiser(&f, 0.1, k).unwrap().residual_loss).collect();
    let o: Vec<f64> = [1, 3, 5].iter().map(|&k| residual_oracle(|d| 0.9f64.powi(d as i32), 0.1, k)).collect();
    for (a, b) in r.iter().zip(&o) {
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }
    assert!(r[0] > r[1] && r[1] > r[2]);
    assert!((r[0] - 0.01 / 1.01).abs() < 1e-15);
}

#[test]
fn full_window_matches_spectral_wiener_loss() {
    for (l, rho) in [(64, 0.9), (33, 0.7), (16, 0.3)] {
        let f = GaussianField::geometric(l, rho).unwrap();
        for s in [0.05, 0.5, 3.0] {
            let k = *window_grid(l).last().unwrap();
            let d = optimal_window_denoiser(&f, s, k).unwrap();
            assert!((d.residual_loss - f.full_context_loss(s).unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn plateau_grows_with_noise_on_ar1() {
    let f = GaussianField::geometric(64, 0.9).unwrap();
    let p: Vec<usize> = [0.05, 1.0, 5.0].iter().map(|&s| plateau_k(&f, s, 1e-3).unwrap()).collect();
    assert!(p[0] <= p[1] && p[1] <= p[2], "{p:?}");
    for s in [0.02, 0.3, 7.0, 80.0] {
        assert_eq!(plateau_k(&f, s, f.variance()).unwrap(), 1);
    }
}

#[test]
fn window_map_shrinks_with_looser_tolerance() {
    let f = GaussianField::geometric(64, 0.9).unwrap();
    let s = NoiseSchedule::log_spaced(0.05, 5.0, 8).unwrap();
    let tight = window_to_sigma_map(&f, &s, 1e-3).unwrap();
    let loose = window_to_sigma_map(&f, &s, 1e-2).unwrap();
    assert!(tight.monotone);
    assert_eq!(tight.raw, tight.k);
    for (a, b) in tight.raw.iter().zip(&loose.raw) {
        assert!(b <= a);
    }
    let white = window_to_sigma_map(&GaussianField::white(32, 1.0).unwrap(), &NoiseSchedule::default(), 1e-3).unwrap();
    assert!(white.k.iter().all(|&k| k == 1));
}

#[test]
fn lag_four_difference_is_invisible_to_small_windows() {
    let base = GaussianField::geometric(32, 0.6).unwrap();
    let mut cov = base.covariance().to_vec();
    cov[4] += 0.1;
    cov[28] += 0.1;
    let other = GaussianField::new(cov).unwrap();
    for k in 1..=8 {
        let d = crop_marginal_distance_with(&base, &other, k, 3, 2000).unwrap();
        if k <= 4 {
            assert!(d.bhattacharyya.abs() < 1e-12, "k={k}: {}", d.bhattacharyya);
            assert_eq!(d.tv_mc, 0.0);
        } else {
            assert!(d.bhattacharyya > 1e-6, "k={k}");
        }
    }
}

#[test]
fn variance_scaling_matches_one_dimensional_formula() {
    let f1 = GaussianField::geometric(16, 0.5).unwrap();
    let f2 = GaussianField::new(f1.covariance().iter().map(|c| 2.0 * c).collect()).unwrap();
    let d = crop_marginal_distance(&f1, &f2, 1, 11).unwrap();
    let want = 0.25 * (2.25f64 / 2.0).ln();
    assert!((d.bhattacharyya - want).abs() < 1e-14);
    let tv = gaussian_tv(0.0, 1.0, 0.0, 2.0);
    assert!((d.tv_mc - tv).abs() < 4.0 * d.tv_se, "{} ± {} vs {tv}", d.tv_mc, d.tv_se);
    // Bhattacharyya bounds: 1 − e^{-B} ≤ TV ≤ √(1 − e^{-2B}).
    assert!(1.0 - (-want).exp() <= tv && tv <= (1.0 - (-2.0 * want).exp()).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residual_is_nonincreasing_in_window(half in proptest::collection::vec(0.0f64..2.0, 5..17), sigma in 0.05f64..5.0) {
        let mut half = half;
        half[0] += 0.1;
        let f = field_from_spectrum(&half);
        let mut prev = f64::INFINITY;
        for k in window_grid(f.len()) {
            let r = optimal_window_denoiser(&f, sigma, k).unwrap().residual_loss;
            prop_assert!(r <= prev + 1e-10, "k={} r={} prev={}", k, r, prev);
            prev = r;
        }
        prop_assert!((prev - f.full_context_loss(sigma).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn crop_distance_grows_with_window(h1 in proptest::collection::vec(0.2f64..2.0, 6..10), h2 in proptest::collection::vec(0.2f64..2.0, 6..10)) {
        let n = h1.len().min(h2.len());
        let f1 = field_from_spectrum(&h1[..n]);
        let f2 = field_from_spectrum(&h2[..n]);
        let mut prev = 0.0;
        for k in 1..=f1.len() {
            let b = crop_marginal_distance_with(&f1, &f2, k, 0, 2).unwrap().bhattacharyya;
            prop_assert!(b >= prev - 1e-10);
            prev = b;
        }
    }
}

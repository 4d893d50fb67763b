use ambient_core::densities::Density1D;
use ambient_core::kde::{empirical_tv_error, KdeModel};
use ambient_core::quadrature::{integrate, QuadOptions};
use ambient_core::rng::{child_rng, streams};
use ambient_core::special::gaussian_tv;
use proptest::prelude::*;

fn log_density_slope(m: &KdeModel, x: f64, sigma: f64) -> f64 {
    let h = 1e-5;
    let up = m.density_at(x + h, sigma).unwrap().value.ln();
    let dn = m.density_at(x - h, sigma).unwrap().value.ln();
    (up - dn) / (2.0 * h)
}

proptest! {
    #[test]
    fn tweedie_holds_for_clean_and_uniform_noise(
        atoms in proptest::collection::vec(-3.0f64..3.0, 1..12),
        s in 0.0f64..0.5,
        extra in 0.3f64..2.0,
        x in -4.0f64..4.0,
    ) {
        let sigma = s + extra;
        let n = atoms.len();
        let m = KdeModel::new(atoms, vec![s; n]).unwrap();
        let eff = sigma * sigma - s * s;
        let tweedie = x + eff * log_density_slope(&m, x, sigma);
        let pm = m.posterior_mean(x, sigma).unwrap().value;
        prop_assert!((pm - tweedie).abs() < 1e-5, "pm {} tweedie {}", pm, tweedie);
    }

    #[test]
    fn kde_slope_is_bounded(
        atoms in proptest::collection::vec(-2.0f64..2.0, 1..20),
        sigma in 0.2f64..3.0,
    ) {
        let m = KdeModel::clean(atoms).unwrap();
        let bound = 1.0 / (sigma * sigma * (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt());
        let h = 1e-6;
        for i in 0..200 {
            let x = -3.0 - 3.0 * sigma + i as f64 * (6.0 + 6.0 * sigma) / 199.0;
            let d = (m.density_at(x + h, sigma).unwrap().value - m.density_at(x - h, sigma).unwrap().value) / (2.0 * h);
            prop_assert!(d.abs() <= bound + 1e-6);
        }
    }

    #[test]
    fn kde_integrates_to_one(
        atoms in proptest::collection::vec(-2.0f64..2.0, 1..10),
        sigma in 0.1f64..2.0,
    ) {
        let m = KdeModel::clean(atoms).unwrap();
        let lim = 2.0 + 12.0 * sigma;
        let breaks: Vec<f64> = (0..=40).map(|i| -lim + 2.0 * lim * i as f64 / 40.0).collect();
        let e = integrate(|x| m.density_at(x, sigma).unwrap().value, &breaks, QuadOptions::default()).unwrap();
        prop_assert!((e.value - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_atom_tv_matches_closed_form() {
    let d = Density1D::gaussian(0.0, 1.0).unwrap();
    let sigma = 0.7;
    let seed = 99;
    let stats = empirical_tv_error(&d, 1, sigma, 16, seed).unwrap();
    for (t, &got) in stats.trials.iter().enumerate() {
        let mut r = child_rng(seed, streams::TRIAL, t as u64);
        let x = d.sample(1, &mut r)[0];
        let want = gaussian_tv(x, sigma * sigma, 0.0, 1.0 + sigma * sigma);
        assert!((got - want).abs() < 1e-9, "trial {t}: {got} vs {want}");
    }
}

#[test]
fn more_atoms_shrink_error_and_runs_are_reproducible() {
    let d = Density1D::tent();
    let small = empirical_tv_error(&d, 64, 0.5, 40, 7).unwrap();
    let large = empirical_tv_error(&d, 4096, 0.5, 40, 7).unwrap();
    assert!(large.mean < small.mean);
    assert!(small.p95 >= small.mean * 0.5);
    let again = empirical_tv_error(&d, 64, 0.5, 40, 7).unwrap();
    assert_eq!(small, again);
}

#[test]
fn annotated_atoms_widen_by_residual_variance() {
    // An atom carrying σ_min² = 1 looks like N(w, σ² − 1) at level σ.
    let m = KdeModel::new(vec![0.3], vec![1.0]).unwrap();
    let (mix, excluded) = m.mixture(2.0).unwrap();
    assert_eq!(excluded, 0);
    let c = mix.components().unwrap();
    assert_eq!((c[0].mu, c[0].var), (0.3, 3.0));
}

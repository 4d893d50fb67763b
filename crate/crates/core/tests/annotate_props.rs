use ambient_core::annotate::*;
use ambient_core::densities::{tv_distance, Density1D};
use ambient_core::fields::{window_to_sigma_map, GaussianField};
use ambient_core::schedule::NoiseSchedule;
use ambient_core::stats;

fn g(mu: f64, var: f64) -> Density1D {
    Density1D::gaussian(mu, var).unwrap()
}

#[test]
fn bayes_gap_is_bounded_by_half_tv() {
    let s = NoiseSchedule::log_spaced(0.02, 80.0, 24).unwrap();
    let pairs = [
        (g(0.0, 1.0), g(0.0, 2.0)),
        (g(0.0, 1.0), g(3.0, 0.5)),
        (Density1D::tent(), Density1D::uniform(0.0, 1.0).unwrap()),
        (g(0.0, 1.0), g(10.0, 1e-4)),
    ];
    for (p, q) in &pairs {
        let c = NoiseClassifier::bayes_exact(p, q, &s).unwrap();
        for t in 0..s.len() {
            let e = expected_prob_on_bad(&c, BadData::Density(q), t, 0).unwrap().value;
            let (pt, qt) = c.level_densities(t).unwrap();
            let tv = tv_distance(pt, qt).unwrap();
            assert!(0.5 - e <= tv / 2.0 + 1e-6, "t={t}: gap {} tv/2 {}", 0.5 - e, tv / 2.0);
        }
    }
}

#[test]
fn expected_output_rises_toward_half() {
    let s = NoiseSchedule::log_spaced(0.02, 80.0, 32).unwrap();
    let (p, q) = (g(0.0, 1.0), g(0.0, 2.0));
    let c = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
    let exact: Vec<f64> =
        (0..s.len()).map(|t| expected_prob_on_bad(&c, BadData::Density(&q), t, 0).unwrap().value).collect();
    assert!(exact.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!((exact[s.top()] - 0.5).abs() < 1e-4);
    let xs = q.sample_seeded(2000, 3);
    let mut prev = 0.0;
    for t in (0..s.len()).step_by(4) {
        let mc = expected_prob_on_bad(&c, BadData::Samples(&xs), t, 4).unwrap();
        assert!(mc.se < 0.01);
        assert!(mc.value >= prev - 3.0 * mc.se);
        prev = mc.value;
    }
}

#[test]
fn dataset_index_matches_bisection_root() {
    let s = NoiseSchedule::default();
    let p = g(0.0, 1.0);
    for (var, tau) in [(1.5, 0.45), (1.5, 0.499), (2.0, 0.4995)] {
        let q = g(0.0, var);
        let c = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
        let a = annotate_dataset(&c, BadData::Density(&q), tau, 0).unwrap();
        let root = bayes_crossing(&p, &q, tau, &s).unwrap().unwrap();
        assert_eq!(Some(a.t_min_index), root.above, "var={var} tau={tau} root={root:?}");
        if let Some(b) = root.below {
            assert!(a.curve[b].prob < tau);
        }
        assert!(a.curve[a.t_min_index].prob >= tau);
    }
}

#[test]
fn stronger_inflation_never_lowers_dataset_index() {
    let s = NoiseSchedule::default();
    let p = g(0.0, 1.0);
    for tau in [0.45, 0.499, 0.4995] {
        let idx: Vec<usize> = [0.1, 0.5, 1.0, 3.0]
            .iter()
            .map(|c| {
                let q = g(0.0, 1.0 + c);
                let cl = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
                annotate_dataset(&cl, BadData::Density(&q), tau, 0).unwrap().t_min_index
            })
            .collect();
        assert!(idx.windows(2).all(|w| w[1] >= w[0]), "tau={tau}: {idx:?}");
    }
}

// The Bayes output is at most 1/2 + TV/2, so τ is reached no earlier than the
// level where exact TV falls to 2ε.
#[test]
fn distant_spike_is_merged_no_earlier_than_tv_allows() {
    let s = NoiseSchedule::default();
    let (p, q) = (g(0.0, 1.0), g(10.0, 1e-4));
    let tau = 0.45;
    let c = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
    let a = annotate_dataset(&c, BadData::Density(&q), tau, 0).unwrap();
    let tv_root = (0..s.len())
        .find(|&t| {
            let (pt, qt) = c.level_densities(t).unwrap();
            tv_distance(pt, qt).unwrap() <= 2.0 * (0.5 - tau)
        })
        .unwrap();
    assert!(a.crossed);
    assert!(a.t_min_index <= tv_root, "t_min {} tv root {tv_root}", a.t_min_index);
    assert!(a.sigma_min > 5.0);
}

#[test]
fn clean_half_of_mixed_data_gets_lower_levels() {
    let s = NoiseSchedule::default();
    let (p, q) = (g(0.0, 1.0), g(5.0, 1.0));
    let c = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
    let mut xs = p.sample_seeded(500, 1);
    xs.extend(q.sample_seeded(500, 2));
    let a = annotate_samples(&c, &xs, 0.45, 3).unwrap();
    let lvl = |r: std::ops::Range<usize>| a[r].iter().map(|x| x.t_min_index as f64).collect::<Vec<_>>();
    let (lp, lq) = (lvl(0..500), lvl(500..1000));
    let diff = stats::mean(&lq) - stats::mean(&lp);
    let se = (stats::variance(&lp) / 500.0 + stats::variance(&lq) / 500.0).sqrt();
    assert!(diff > 3.0 * se, "diff {diff} se {se}");
    for r in &a {
        assert!(r.prob_at_tmin >= 0.45 || !r.crossed);
        // Outputs lie in [0, 1], so 256 draws bound the standard error.
        assert!(r.se <= 0.5 * (256.0f64 / 255.0).sqrt() / 16.0);
    }
}

#[test]
fn annotation_is_reproducible_per_seed() {
    let s = NoiseSchedule::log_spaced(0.05, 20.0, 16).unwrap();
    let (p, q) = (g(0.0, 1.0), g(2.0, 1.0));
    let c = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
    let xs = q.sample_seeded(50, 1);
    assert_eq!(annotate_samples(&c, &xs, 0.45, 9).unwrap(), annotate_samples(&c, &xs, 0.45, 9).unwrap());
}

#[test]
fn identical_training_sets_give_uninformative_logistic() {
    let s = NoiseSchedule::log_spaced(0.02, 80.0, 16).unwrap();
    let xs = g(0.0, 1.0).sample_seeded(400, 5);
    let c = fit_classifier(&xs, &xs, &s, ClassifierKind::LearnedLogistic, 6).unwrap();
    for t in 0..s.len() {
        for x in [-2.0, -0.5, 0.0, 1.0, 2.5] {
            assert!((c.prob(x, t) - 0.5).abs() < 0.02, "t={t} x={x}: {}", c.prob(x, t));
        }
    }
}

#[test]
fn logistic_tracks_bayes_on_shifted_gaussians() {
    let s = NoiseSchedule::default();
    let (p, q) = (g(0.0, 1.0), g(3.0, 1.0));
    let good = p.sample_seeded(2000, 11);
    let bad = q.sample_seeded(2000, 12);
    let learned = fit_classifier(&good, &bad, &s, ClassifierKind::LearnedLogistic, 13).unwrap();
    let bayes = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
    let tl = annotate_dataset(&learned, BadData::Density(&q), 0.45, 0).unwrap().t_min_index;
    let tb = annotate_dataset(&bayes, BadData::Density(&q), 0.45, 0).unwrap().t_min_index;
    assert!(tl.abs_diff(tb) <= 1, "learned {tl} bayes {tb}");
}

#[test]
fn crop_cutoffs_follow_window_map() {
    let s = NoiseSchedule::default();
    let target = GaussianField::geometric(64, 0.9).unwrap();
    let map = window_to_sigma_map(&target, &s, 1e-3).unwrap();

    let same = CropClassifier::new(target.clone(), target.clone(), 1);
    assert_eq!(annotate_tmax(&same, &map, 0.45).unwrap().t_max_index, Some(s.top()));

    let white = GaussianField::white(64, 1.0).unwrap();
    let c = CropClassifier::new(target.clone(), white, 2);
    let a = annotate_tmax(&c, &map, 0.45).unwrap();
    let last_k1 = map.k.iter().rposition(|&k| k == 1);
    assert!(last_k1.is_some());
    assert_eq!(a.t_max_index, last_k1);

    // Same covariances up to lag 3: windows of 4 or fewer pixels agree.
    let mut cov = GaussianField::geometric(64, 0.6).unwrap().covariance().to_vec();
    let base = GaussianField::new(cov.clone()).unwrap();
    cov[4] += 0.12;
    cov[60] += 0.12;
    let lagged = GaussianField::new(cov).unwrap();
    let map = window_to_sigma_map(&base, &s, 1e-3).unwrap();
    let crop = CropClassifier::new(base, lagged, 3);
    let p3 = crop.expected_prob_on_ood(3).unwrap().value;
    let p5 = crop.expected_prob_on_ood(5).unwrap().value;
    assert_eq!(p3, 0.5);
    assert!(p5 < 0.5);
    let tau = 0.5 - 0.5 * (0.5 - p5);
    let a = annotate_tmax(&crop, &map, tau).unwrap();
    assert_eq!(a.t_max_index, map.k.iter().rposition(|&k| k <= 4));

    let none = CropClassifier::new(GaussianField::white(8, 1.0).unwrap(), GaussianField::white(8, 9.0).unwrap(), 4);
    let m = window_to_sigma_map(&GaussianField::white(8, 1.0).unwrap(), &s, 1e-3).unwrap();
    assert_eq!(annotate_tmax(&none, &m, 0.45).unwrap().t_max_index, None);
}

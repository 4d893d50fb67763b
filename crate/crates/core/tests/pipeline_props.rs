use ambient_core::annotate::ClassifierKind;
use ambient_core::densities::Density1D;
use ambient_core::pipeline::*;
use ambient_core::schedule::NoiseSchedule;

fn config(n_clean: usize, n_corrupt: usize) -> PipelineConfig {
    PipelineConfig {
        clean: Density1D::gaussian(0.0, 1.0).unwrap(),
        corruption: Corruption::VarianceInflation { variance: 0.5 },
        n_clean,
        n_corrupt,
        schedule: Some(NoiseSchedule::log_spaced(0.01, 40.0, 32).unwrap()),
        annotation: AnnotationConfig { tau: 0.499, ..Default::default() },
        train: Default::default(),
        n_generate: 2000,
        replicates: 2,
    }
}

#[test]
fn without_corrupted_data_the_three_runs_coincide() {
    let r = run_pipeline(&config(200, 0), 5).unwrap();
    for rep in 0..2 {
        let w = |m: Method| r.rows.iter().find(|x| x.replicate == rep && x.method == m).unwrap().wasserstein1;
        assert_eq!(w(Method::OnlyClean), w(Method::AmbientO));
        assert_eq!(w(Method::OnlyClean), w(Method::NaiveAllData));
        assert_eq!(w(Method::OnlyClean), w(Method::CleanReference));
    }
}

#[test]
fn reruns_are_identical_and_seeds_matter() {
    let cfg = config(40, 360);
    let a = run_pipeline(&cfg, 9).unwrap();
    let b = run_pipeline(&cfg, 9).unwrap();
    let c = run_pipeline(&cfg, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.rows, c.rows);
    assert_eq!(a.rows.len(), 8);
    assert!(a.mean_sigma_min > 0.0);
}

#[test]
fn per_sample_and_learned_annotation_run() {
    let mut cfg = config(200, 400);
    cfg.replicates = 1;
    cfg.annotation.mode = AnnotationMode::PerSample;
    let r = run_pipeline(&cfg, 1).unwrap();
    assert!(r.summary.iter().all(|s| s.w1_mean.is_finite()));
    cfg.annotation.mode = AnnotationMode::Dataset;
    cfg.annotation.classifier = ClassifierKind::LearnedLogistic;
    cfg.n_clean = 100;
    cfg.n_corrupt = 100;
    let r = run_pipeline(&cfg, 1).unwrap();
    assert!(r.crossed_fraction == 0.0 || r.crossed_fraction == 1.0);
}

#[test]
fn config_json_rejects_unknown_fields_and_bad_values() {
    let ok = r#"{"clean":{"kind":"gaussian-mixture","components":[{"w":1,"mu":0,"var":1}]},
        "corruption":{"kind":"variance-inflation","variance":0.5},"n_clean":10,"n_corrupt":90}"#;
    let cfg: PipelineConfig = serde_json::from_str(ok).unwrap();
    assert_eq!(cfg.replicates, 1);
    assert!(cfg.validate().is_ok());
    let extra = ok.replacen("\"n_clean\"", "\"bogus\":1,\"n_clean\"", 1);
    assert!(serde_json::from_str::<PipelineConfig>(&extra).is_err());
    let mut bad = cfg.clone();
    bad.annotation.tau = 0.5;
    assert!(bad.validate().is_err());
    bad = cfg;
    bad.n_generate = 10;
    assert!(run_pipeline(&bad, 0).is_err());
}

use crate::config::{AnnotateConfig, FieldsConfig, LocalityConfig, ScheduleConfig, VerifyConfig};
use crate::output::{num, opt, OutputDir};
use crate::svg::Plot;
use crate::{CliError, Which};
use ambient_core::annotate::{
    annotate_dataset, annotate_samples, annotate_tmax, bayes_crossing, fit_classifier, BadData, ClassifierKind,
    CropClassifier, Crossing, NoiseClassifier,
};
use ambient_core::fields::{
    context_curve, crop_marginal_distance, window_grid, window_to_sigma_map, ContextCurve, GaussianField, WindowMap,
};
use ambient_core::pipeline::{run_pipeline_with, PipelineConfig};
use ambient_core::rng::{child_rng, derive_seed, streams};
use ambient_core::schedule::{alpha, availability_curve, lambda_amb, MaskEntry, NoiseSchedule, Weight};
use ambient_core::verify::{
    check_contraction, check_kde_rate, compare_algorithms, hoeffding_oracle, random_mixture_pair, CheckRow, TheoremId,
    TheoremReport,
};
use serde::Serialize;
use std::collections::BTreeSet;

/// Loss increase tolerated between consecutive window sizes.
pub const LOSS_MONOTONE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct AnnotateSummary {
    pub classifier: &'static str,
    pub tau: f64,
    pub t_min_index: usize,
    pub sigma_min: f64,
    pub crossed: bool,
    pub bayes_crossing: Option<Crossing>,
    pub n_samples: usize,
    pub mean_sample_sigma_min: f64,
    pub crossed_samples: usize,
}

pub fn annotate(cfg: &AnnotateConfig, seed: u64, out: &mut OutputDir) -> Result<AnnotateSummary, CliError> {
    if cfg.n_samples == 0 {
        return Err(CliError::Config("annotate.n_samples: must be > 0".into()));
    }
    let schedule = cfg.schedule.clone().unwrap_or_default();
    let samples = cfg.corrupt.sample(cfg.n_samples, &mut child_rng(seed, streams::DATA_CORRUPT, 0));
    let classifier = match cfg.classifier {
        ClassifierKind::BayesExact => NoiseClassifier::bayes_exact(&cfg.clean, &cfg.corrupt, &schedule)?,
        ClassifierKind::LearnedLogistic => {
            if cfg.n_fit < 2 {
                return Err(CliError::Config("annotate.n_fit: must be >= 2".into()));
            }
            let good = cfg.clean.sample(cfg.n_fit, &mut child_rng(seed, streams::DATA_CLEAN, 1));
            let bad = cfg.corrupt.sample(cfg.n_fit, &mut child_rng(seed, streams::DATA_CORRUPT, 1));
            fit_classifier(&good, &bad, &schedule, cfg.classifier, derive_seed(seed, streams::CLASSIFIER_FIT, 0))?
        }
    };
    let bad = match cfg.classifier {
        ClassifierKind::BayesExact => BadData::Density(&cfg.corrupt),
        ClassifierKind::LearnedLogistic => BadData::Samples(&samples),
    };
    let dataset = annotate_dataset(&classifier, bad, cfg.tau, derive_seed(seed, streams::EXPECTATION, 0))?;
    let per = annotate_samples(&classifier, &samples, cfg.tau, derive_seed(seed, streams::EXPECTATION, 1))?;
    let bayes = match cfg.classifier {
        ClassifierKind::BayesExact => bayes_crossing(&cfg.clean, &cfg.corrupt, cfg.tau, &schedule)?,
        ClassifierKind::LearnedLogistic => None,
    };

    out.csv_rows(
        "annotations.csv",
        &["sample_id", "value", "t_min_index", "sigma_min", "prob_at_tmin", "se", "method", "crossed"],
        per.iter().map(|a| {
            vec![
                a.sample_id.to_string(),
                num(a.value),
                a.t_min_index.to_string(),
                num(a.sigma_min),
                num(a.prob_at_tmin),
                num(a.se),
                a.method.to_string(),
                a.crossed.to_string(),
            ]
        }),
    )?;
    out.csv_rows(
        "curve.csv",
        &["index", "sigma", "expected_prob", "se"],
        dataset.curve.iter().map(|p| vec![p.index.to_string(), num(p.sigma), num(p.prob), num(p.se)]),
    )?;
    let plot = Plot::new("Expected classifier output on corrupted data", "sigma", "E[c]")
        .log_x()
        .series(classifier.kind().as_str(), dataset.curve.iter().map(|p| (p.sigma, p.prob)).collect())
        .hline(cfg.tau, "tau")
        .hline(0.5, "0.5");
    out.svg("curve.svg", &plot.render())?;

    let summary = AnnotateSummary {
        classifier: classifier.kind().as_str(),
        tau: cfg.tau,
        t_min_index: dataset.t_min_index,
        sigma_min: dataset.sigma_min,
        crossed: dataset.crossed,
        bayes_crossing: bayes,
        n_samples: per.len(),
        mean_sample_sigma_min: per.iter().map(|a| a.sigma_min).sum::<f64>() / per.len() as f64,
        crossed_samples: per.iter().filter(|a| a.crossed).count(),
    };
    out.json("summary.json", &summary)?;
    Ok(summary)
}

pub fn pipeline(cfg: &PipelineConfig, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    cfg.validate()?;
    let mut runs = out.csv("runs.csv", &["replicate", "method", "wasserstein1", "tv", "mean", "var"])?;
    let mut sink_err = None;
    let result = run_pipeline_with(cfg, seed, |r| {
        let row = [
            r.replicate.to_string(),
            r.method.as_str().to_string(),
            num(r.wasserstein1),
            num(r.tv),
            num(r.mean),
            num(r.var),
        ];
        if let Err(e) = runs.row(&row) {
            sink_err = Some(e);
        }
        Ok(())
    });
    runs.finish()?;
    if let Some(e) = sink_err {
        return Err(e);
    }
    let report = result?;
    out.csv_rows(
        "summary.csv",
        &["method", "w1_mean", "w1_se", "tv_mean"],
        report
            .summary
            .iter()
            .map(|s| vec![s.method.as_str().to_string(), num(s.w1_mean), num(s.w1_se), num(s.tv_mean)]),
    )?;
    out.json("report.json", &report)?;
    Ok(())
}

fn write_report(out: &mut OutputDir, name: &str, report: &TheoremReport) -> Result<(), CliError> {
    let keys: BTreeSet<&str> = report.rows.iter().flat_map(|r| r.params.keys().map(String::as_str)).collect();
    let mut headers = vec!["check"];
    headers.extend(keys.iter().copied());
    headers.extend(["measured", "bound", "pass"]);
    out.csv_rows(
        &format!("{name}.csv"),
        &headers,
        report.rows.iter().map(|r| {
            let mut v = vec![r.check.clone()];
            v.extend(keys.iter().map(|k| r.params.get(*k).map(|x| num(*x)).unwrap_or_default()));
            v.extend([num(r.measured), num(r.bound), r.pass.to_string()]);
            v
        }),
    )?;
    out.json(&format!("{name}.json"), report)
}

/// Context curves at every schedule level and the window map, checked for
/// a nondecreasing map and nonincreasing loss in window size.
pub fn locality_report(cfg: &LocalityConfig) -> Result<(TheoremReport, Vec<ContextCurve>, WindowMap), CliError> {
    let ks = window_grid(cfg.field.len());
    let curves = cfg
        .schedule
        .sigmas()
        .iter()
        .map(|&s| context_curve(&cfg.field, s, &ks, cfg.eps))
        .collect::<Result<Vec<_>, _>>()?;
    let map = window_to_sigma_map(&cfg.field, &cfg.schedule, cfg.eps)?;
    let mut rows = Vec::new();
    for (i, w) in map.raw.windows(2).enumerate() {
        rows.push(CheckRow::new(
            "plateau-nondecreasing",
            &[("sigma", map.sigmas[i + 1]), ("previous_sigma", map.sigmas[i])],
            w[1] as f64,
            w[0] as f64,
            w[1] >= w[0],
        ));
    }
    for c in &curves {
        for p in c.points.windows(2) {
            rows.push(CheckRow::new(
                "loss-nonincreasing",
                &[("sigma", c.sigma), ("k", p[1].0 as f64), ("previous_k", p[0].0 as f64)],
                p[1].1,
                p[0].1 + LOSS_MONOTONE_TOL,
                p[1].1 <= p[0].1 + LOSS_MONOTONE_TOL,
            ));
        }
    }
    let notes = vec![format!("absolute plateau tolerance {}", cfg.eps)];
    Ok((TheoremReport::finish(TheoremId::Locality, rows, Vec::new(), Vec::new(), notes), curves, map))
}

fn context_plot(curves: &[ContextCurve]) -> String {
    curves
        .iter()
        .fold(Plot::new("Window denoiser loss vs context", "window size k", "residual loss").log_y(), |p, c| {
            p.series(&format!("sigma={:.3}", c.sigma), c.points.iter().map(|&(k, l)| (k as f64, l)).collect())
        })
        .render()
}

fn write_window_map(out: &mut OutputDir, map: &WindowMap) -> Result<(), CliError> {
    out.csv_rows(
        "window_map.csv",
        &["index", "sigma", "raw_k", "k"],
        (0..map.sigmas.len())
            .map(|i| vec![i.to_string(), num(map.sigmas[i]), map.raw[i].to_string(), map.k[i].to_string()]),
    )
}

fn write_context(out: &mut OutputDir, curves: &[ContextCurve]) -> Result<(), CliError> {
    out.csv_rows(
        "context.csv",
        &["sigma", "k", "loss", "full_context_loss", "plateau_k"],
        curves.iter().flat_map(|c| {
            c.points.iter().map(move |&(k, l)| {
                vec![num(c.sigma), k.to_string(), num(l), num(c.full_context_loss), c.plateau_k.to_string()]
            })
        }),
    )?;
    out.svg("context.svg", &context_plot(curves))
}

pub fn verify(which: Which, cfg: &VerifyConfig, seed: u64, out: &mut OutputDir) -> Result<bool, CliError> {
    let report = match which {
        Which::Theorem1 => {
            let c = &cfg.theorem1;
            let r = check_kde_rate(&c.density, &c.ns, &c.sigmas, c.trials, c.delta, seed)?;
            let plot = c.sigmas.iter().fold(
                Plot::new("KDE TV error vs sample size", "n", "mean TV error").log_x().log_y(),
                |p, &s| {
                    let pts = r
                        .rows
                        .iter()
                        .filter(|row| row.params["sigma"] == s)
                        .map(|row| (row.params["n"], row.params["mean_error"]))
                        .collect();
                    p.series(&format!("sigma={s}"), pts)
                },
            );
            out.svg("theorem1.svg", &plot.render())?;
            out.csv_rows(
                "theorem1_fits.csv",
                &["sigma", "fitted_c", "slope", "slope_se", "skipped", "pass"],
                r.fits.iter().map(|f| {
                    vec![
                        num(f.sigma),
                        num(f.fitted_c),
                        opt(f.slope),
                        opt(f.slope_se),
                        f.skipped.clone().unwrap_or_default(),
                        f.pass.to_string(),
                    ]
                }),
            )?;
            r
        }
        Which::Theorem2 => {
            let c = &cfg.theorem2;
            let mut pairs = Vec::with_capacity(c.random_pairs + c.pairs.len());
            for i in 0..c.random_pairs {
                pairs.push(random_mixture_pair(&mut child_rng(seed, streams::TRIAL, i as u64))?);
            }
            pairs.extend(c.pairs.iter().map(|[p, q]| (p.clone(), q.clone())));
            if pairs.is_empty() {
                return Err(CliError::Config("verify.theorem2: no pairs to check".into()));
            }
            let mut rows = Vec::new();
            let mut notes = Vec::new();
            for (i, (p, q)) in pairs.iter().enumerate() {
                let r = check_contraction(p, q, &c.sigmas)?;
                for mut row in r.rows {
                    row.params.insert("pair".into(), i as f64);
                    rows.push(row);
                }
                notes.extend(r.notes.into_iter().map(|n| format!("pair {i}: {n}")));
            }
            TheoremReport::finish(TheoremId::Contraction, rows, Vec::new(), vec![seed], notes)
        }
        Which::Compare => {
            let c = &cfg.compare;
            let r = compare_algorithms(&c.p0, &c.q0, c.n1, c.n2, &c.sigmas, c.trials, seed)?;
            out.csv_rows(
                "compare_curves.csv",
                &["sigma", "alg1_mean", "alg1_se", "alg2_mean", "alg2_se"],
                (0..r.sigmas.len()).map(|i| {
                    vec![
                        num(r.sigmas[i]),
                        num(r.alg1_mean[i]),
                        num(r.alg1_se[i]),
                        num(r.alg2_mean[i]),
                        num(r.alg2_se[i]),
                    ]
                }),
            )?;
            let pts = |m: &[f64]| r.sigmas.iter().copied().zip(m.iter().copied()).collect();
            let plot = Plot::new("Clean-only vs mixed KDE error", "sigma", "mean TV error")
                .log_x()
                .log_y()
                .series("clean only", pts(&r.alg1_mean))
                .series("clean + biased", pts(&r.alg2_mean));
            out.svg("compare.svg", &plot.render())?;
            out.json("compare_crossing.json", &r)?;
            r.to_theorem_report()
        }
        Which::Hoeffding => {
            let c = &cfg.hoeffding;
            hoeffding_oracle(c.source, c.n, &c.ts, c.trials, seed)?
        }
        Which::Locality => {
            let (r, curves, map) = locality_report(&cfg.locality)?;
            write_context(out, &curves)?;
            write_window_map(out, &map)?;
            r
        }
    };
    let name = match which {
        Which::Theorem1 => "theorem1",
        Which::Theorem2 => "theorem2",
        Which::Compare => "compare",
        Which::Hoeffding => "hoeffding",
        Which::Locality => "locality",
    };
    write_report(out, name, &report)?;
    Ok(report.pass)
}

pub fn schedule(cfg: &ScheduleConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let schedule = cfg.schedule.clone().unwrap_or_default();
    cfg.rule.validate()?;
    if !(cfg.sigma_min >= 0.0 && cfg.sigma_min.is_finite()) {
        return Err(CliError::Config("schedule.sigma_min: must be finite and >= 0".into()));
    }
    let mut rows = Vec::with_capacity(schedule.len());
    for (t, &s) in schedule.sigmas().iter().enumerate() {
        let (a, w, usable) = if s >= cfg.sigma_min {
            let a = alpha(s, cfg.sigma_min)?;
            match lambda_amb(s, cfg.sigma_min, cfg.rule)? {
                Weight::Value(v) => (num(a), num(v), true),
                Weight::Excluded => (num(a), String::new(), false),
            }
        } else {
            (String::new(), String::new(), false)
        };
        rows.push(vec![t.to_string(), num(s), a, w, usable.to_string()]);
    }
    out.csv_rows("levels.csv", &["index", "sigma", "alpha", "lambda", "usable"], rows)?;

    if let Some(av) = &cfg.availability {
        let mut entries = Vec::new();
        for g in &av.groups {
            entries.extend(std::iter::repeat_n(g.mask, g.count));
        }
        let in_distribution = entries
            .iter()
            .filter(|e| matches!(e, MaskEntry::Clean | MaskEntry::Annotated { t_min: Some(_), .. }))
            .count();
        let reference = av.reference_size.unwrap_or(in_distribution);
        let curve = availability_curve(&entries, &schedule, cfg.rule, reference)?;
        out.csv_rows(
            "availability.csv",
            &["index", "sigma", "count", "percent"],
            curve
                .iter()
                .enumerate()
                .map(|(t, r)| vec![t.to_string(), num(r.sigma), r.count.to_string(), num(r.percent)]),
        )?;
        let plot = Plot::new("Usable samples per noise level", "sigma", "% of reference")
            .log_x()
            .series("available", curve.iter().map(|r| (r.sigma, r.percent)).collect())
            .hline(100.0, "100%");
        out.svg("availability.svg", &plot.render())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct FieldsSummary<'a> {
    map: &'a WindowMap,
    plateau_k: Vec<(f64, usize)>,
    tmax: Option<ambient_core::annotate::TmaxAnnotation>,
}

pub fn fields(cfg: &FieldsConfig, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let schedule = match &cfg.schedule {
        Some(s) => s.clone(),
        None => NoiseSchedule::log_spaced(0.05, 5.0, 8)?,
    };
    let ks = cfg.ks.clone().unwrap_or_else(|| window_grid(cfg.field.len()));
    let curves =
        schedule.sigmas().iter().map(|&s| context_curve(&cfg.field, s, &ks, cfg.eps)).collect::<Result<Vec<_>, _>>()?;
    let map = window_to_sigma_map(&cfg.field, &schedule, cfg.eps)?;
    write_context(out, &curves)?;
    write_window_map(out, &map)?;
    let tmax = match &cfg.ood {
        Some(ood) => {
            check_same_len(&cfg.field, &ood.field)?;
            let crops = window_grid(cfg.field.len())
                .into_iter()
                .map(|k| {
                    crop_marginal_distance(&cfg.field, &ood.field, k, derive_seed(seed, streams::CROP_MC, k as u64))
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.csv_rows(
                "crops.csv",
                &["k", "bhattacharyya", "tv_mc", "tv_se"],
                crops.iter().map(|c| vec![c.k.to_string(), num(c.bhattacharyya), num(c.tv_mc), num(c.tv_se)]),
            )?;
            let crop = CropClassifier::new(
                cfg.field.clone(),
                ood.field.clone(),
                derive_seed(seed, streams::CLASSIFIER_FIT, 0),
            );
            Some(annotate_tmax(&crop, &map, ood.tau)?)
        }
        None => None,
    };
    let summary = FieldsSummary { map: &map, plateau_k: curves.iter().map(|c| (c.sigma, c.plateau_k)).collect(), tmax };
    out.json("fields.json", &summary)
}

fn check_same_len(a: &GaussianField, b: &GaussianField) -> Result<(), CliError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(CliError::Config(format!("fields.ood.field: length {} differs from field length {}", b.len(), a.len())))
    }
}

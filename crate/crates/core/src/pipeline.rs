//! End-to-end desk experiment: annotate corrupted data, train three
//! denoisers on shared draws (only clean data, all data treated as clean,
//! ambient-o on annotated data) plus a fully clean reference, generate, and
//! score each against the clean density.

use crate::annotate::{annotate_dataset, annotate_samples, fit_classifier, BadData, ClassifierKind, NoiseClassifier};
use crate::densities::Density1D;
use crate::error::{Error, Result};
use crate::rng::{child_rng, derive_seed, std_normals, streams};
use crate::schedule::{MaskEntry, NoiseSchedule};
use crate::stats;
use crate::train::{eval_generated, fit, generate, Objective, TrainConfig, TrainSample};
use serde::{Deserialize, Serialize};

/// How corrupted samples are produced from the clean density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Corruption {
    /// `q_0 = p_0 ⊛ N(0, variance)`; for `p_0 = N(0, 1)` this is `N(0, 1 + c)`.
    VarianceInflation { variance: f64 },
    /// An arbitrary corrupted density.
    Density { density: Density1D },
}

impl Corruption {
    pub fn density(&self, clean: &Density1D) -> Result<Density1D> {
        match self {
            Corruption::VarianceInflation { variance } => {
                if !(*variance > 0.0 && variance.is_finite()) {
                    return Err(Error::invalid("inflation variance must be > 0"));
                }
                clean.convolve(variance.sqrt())
            }
            Corruption::Density { density } => Ok(density.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationMode {
    /// One `t_min` for the whole corrupted set.
    #[default]
    Dataset,
    /// One `t_min` per corrupted sample.
    PerSample,
}

fn default_tau() -> f64 {
    crate::annotate::DEFAULT_TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationConfig {
    #[serde(default = "default_classifier")]
    pub classifier: ClassifierKind,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub mode: AnnotationMode,
}

fn default_classifier() -> ClassifierKind {
    ClassifierKind::BayesExact
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self { classifier: ClassifierKind::BayesExact, tau: default_tau(), mode: AnnotationMode::Dataset }
    }
}

fn default_generate() -> usize {
    10_000
}
fn default_replicates() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub clean: Density1D,
    pub corruption: Corruption,
    pub n_clean: usize,
    pub n_corrupt: usize,
    #[serde(default)]
    pub schedule: Option<NoiseSchedule>,
    #[serde(default)]
    pub annotation: AnnotationConfig,
    /// Shared training settings; the objective and `clean_only` flag are set
    /// per run.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_generate")]
    pub n_generate: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OnlyClean,
    NaiveAllData,
    AmbientO,
    /// Every sample clean; the ceiling the other runs are compared to.
    CleanReference,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::OnlyClean, Method::NaiveAllData, Method::AmbientO, Method::CleanReference];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::OnlyClean => "only-clean",
            Method::NaiveAllData => "naive-all-data",
            Method::AmbientO => "ambient-o",
            Method::CleanReference => "clean-reference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunRow {
    pub replicate: usize,
    pub method: Method,
    pub wasserstein1: f64,
    pub tv: f64,
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub w1_mean: f64,
    pub w1_se: f64,
    pub tv_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub rows: Vec<RunRow>,
    pub summary: Vec<MethodSummary>,
    /// Mean annotated `σ(t_min)` over corrupted samples and replicates.
    pub mean_sigma_min: f64,
    /// Fraction of corrupted samples whose expected output reached τ.
    pub crossed_fraction: f64,
    /// `W1(ambient) ≤ W1(naive)` and `W1(ambient) ≤ W1(only-clean)` on the
    /// replicate means.
    pub ambient_best: bool,
    /// `W1(ambient) ≤ 2·W1(reference)` on the replicate means.
    pub within_twice_reference: bool,
}

impl PipelineReport {
    pub fn summary_for(&self, m: Method) -> &MethodSummary {
        self.summary.iter().find(|s| s.method == m).expect("every method is summarised")
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clean == 0 {
            return Err(Error::invalid("n_clean must be > 0"));
        }
        if self.n_generate < 100 {
            return Err(Error::invalid("n_generate must be >= 100"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be > 0"));
        }
        if !(self.annotation.tau > 0.0 && self.annotation.tau < 0.5) {
            return Err(Error::invalid("annotation.tau must lie in (0, 0.5)"));
        }
        self.train.validate()
    }
}

struct Annotated {
    /// `(t_min index, crossed)` per corrupted sample.
    levels: Vec<(usize, bool)>,
}

fn annotate(
    cfg: &PipelineConfig,
    classifier: &NoiseClassifier,
    q0: &Density1D,
    corrupt: &[f64],
    seed: u64,
) -> Result<Annotated> {
    let tau = cfg.annotation.tau;
    let levels = match cfg.annotation.mode {
        AnnotationMode::Dataset => {
            let bad = match cfg.annotation.classifier {
                ClassifierKind::BayesExact => BadData::Density(q0),
                ClassifierKind::LearnedLogistic => BadData::Samples(corrupt),
            };
            let a = annotate_dataset(classifier, bad, tau, seed)?;
            vec![(a.t_min_index, a.crossed); corrupt.len()]
        }
        AnnotationMode::PerSample => {
            annotate_samples(classifier, corrupt, tau, seed)?.into_iter().map(|a| (a.t_min_index, a.crossed)).collect()
        }
    };
    Ok(Annotated { levels })
}

fn run_one(
    method: Method,
    data: &[TrainSample],
    schedule: &NoiseSchedule,
    cfg: &PipelineConfig,
    truth: &Density1D,
    seed: u64,
    replicate: usize,
) -> Result<RunRow> {
    let train = TrainConfig {
        objective: if method == Method::AmbientO { Objective::AmbientO } else { Objective::Clean },
        clean_only: method == Method::OnlyClean,
        seed: derive_seed(seed, streams::TRAIN, 0),
        ..cfg.train.clone()
    };
    let fitted = fit(data, schedule, &train)?;
    let xs = generate(&fitted.denoiser, schedule, cfg.n_generate, derive_seed(seed, streams::GENERATE, 0))?;
    let e = eval_generated(&xs, truth)?;
    Ok(RunRow { replicate, method, wasserstein1: e.wasserstein1, tv: e.tv_vs_truth, mean: e.mean, var: e.var })
}

/// Runs every replicate; replicate `r` uses base seed `derive_seed(seed, TRIAL, r)`
/// and all four methods share its data, training noise and generation noise.
pub fn run_pipeline(cfg: &PipelineConfig, seed: u64) -> Result<PipelineReport> {
    run_pipeline_with(cfg, seed, |_| Ok(()))
}

/// [`run_pipeline`] calling `on_row` as each run finishes.
pub fn run_pipeline_with<F>(cfg: &PipelineConfig, seed: u64, mut on_row: F) -> Result<PipelineReport>
where
    F: FnMut(&RunRow) -> Result<()>,
{
    cfg.validate()?;
    let schedule = cfg.schedule.clone().unwrap_or_default();
    let p0 = &cfg.clean;
    let q0 = cfg.corruption.density(p0)?;
    let bayes = match cfg.annotation.classifier {
        ClassifierKind::BayesExact => Some(NoiseClassifier::bayes_exact(p0, &q0, &schedule)?),
        ClassifierKind::LearnedLogistic => None,
    };

    let mut rows = Vec::new();
    let mut sigma_sum = 0.0;
    let mut crossed = 0usize;
    for rep in 0..cfg.replicates {
        let rs = derive_seed(seed, streams::TRIAL, rep as u64);
        let all_clean = p0.sample(cfg.n_clean + cfg.n_corrupt, &mut child_rng(rs, streams::DATA_CLEAN, 0));
        let clean = &all_clean[..cfg.n_clean];
        let corrupt = match &cfg.corruption {
            Corruption::VarianceInflation { variance } => {
                let base = p0.sample(cfg.n_corrupt, &mut child_rng(rs, streams::DATA_CORRUPT, 0));
                let z = std_normals(&mut child_rng(rs, streams::DATA_CORRUPT, 1), cfg.n_corrupt);
                base.iter().zip(z).map(|(x, e)| x + variance.sqrt() * e).collect::<Vec<_>>()
            }
            Corruption::Density { .. } => q0.sample(cfg.n_corrupt, &mut child_rng(rs, streams::DATA_CORRUPT, 0)),
        };

        let mut ambient: Vec<TrainSample> = clean.iter().map(|&v| TrainSample::clean(v)).collect();
        let mut naive = ambient.clone();
        if !corrupt.is_empty() {
            let learned;
            let classifier = match &bayes {
                Some(c) => c,
                None => {
                    learned = fit_classifier(
                        clean,
                        &corrupt,
                        &schedule,
                        ClassifierKind::LearnedLogistic,
                        derive_seed(rs, streams::CLASSIFIER_FIT, 0),
                    )?;
                    &learned
                }
            };
            let ann = annotate(cfg, classifier, &q0, &corrupt, derive_seed(rs, streams::EXPECTATION, 0))?;
            // Annotated samples are noised up to their t_min level.
            let z = std_normals(&mut child_rng(rs, streams::SAMPLE_NOISE, 0), corrupt.len());
            for ((&y, &(t, hit)), e) in corrupt.iter().zip(&ann.levels).zip(z) {
                let s = schedule.sigma(t);
                sigma_sum += s;
                crossed += hit as usize;
                ambient.push(TrainSample { value: y + s * e, mask: MaskEntry::t_min(t) });
                naive.push(TrainSample::clean(y));
            }
        }
        let reference: Vec<TrainSample> = all_clean.iter().map(|&v| TrainSample::clean(v)).collect();

        for m in Method::ALL {
            let data = match m {
                Method::OnlyClean | Method::AmbientO => &ambient,
                Method::NaiveAllData => &naive,
                Method::CleanReference => &reference,
            };
            let row = run_one(m, data, &schedule, cfg, p0, rs, rep)?;
            on_row(&row)?;
            rows.push(row);
        }
    }

    let summary: Vec<MethodSummary> = Method::ALL
        .iter()
        .map(|&m| {
            let w: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.wasserstein1).collect();
            let tv: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.tv).collect();
            MethodSummary {
                method: m,
                w1_mean: stats::mean(&w),
                w1_se: if w.len() > 1 { stats::std_error(&w) } else { 0.0 },
                tv_mean: stats::mean(&tv),
            }
        })
        .collect();
    let w = |m: Method| summary.iter().find(|s| s.method == m).expect("summarised").w1_mean;
    let n_bad = (cfg.n_corrupt * cfg.replicates).max(1) as f64;
    Ok(PipelineReport {
        ambient_best: w(Method::AmbientO) <= w(Method::NaiveAllData) && w(Method::AmbientO) <= w(Method::OnlyClean),
        within_twice_reference: w(Method::AmbientO) <= 2.0 * w(Method::CleanReference),
        rows,
        summary,
        mean_sigma_min: sigma_sum / n_bad,
        crossed_fraction: crossed as f64 / n_bad,
    })
}

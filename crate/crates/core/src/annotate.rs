//! Noise-level annotation of corrupted data.
//!
//! A time-conditional classifier separates noised clean data from noised
//! corrupted data. A corrupted sample may be merged with the clean set from the
//! lowest level at which the classifier's expected output on it reaches
//! `τ = 0.5 − ε`. Crop classifiers on Gaussian fields play the same role for
//! the high-noise cutoff `t_max`.

use crate::densities::Density1D;
use crate::error::{Error, Result};
use crate::fields::{GaussianField, GaussianPair, WindowMap};
use crate::quadrature::{integrate, QuadOptions};
use crate::rng::{child_rng, std_normal, std_normals, streams};
use crate::schedule::NoiseSchedule;
use crate::special::sigmoid;
use crate::stats;
use nalgebra::{DVector, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_TAU: f64 = 0.45;
/// Noise draws per sample when fitting the learned classifier.
pub const FIT_DRAWS: usize = 64;
/// Noise draws per sample inside annotation expectations.
pub const ANNOTATE_DRAWS: usize = 256;
const RIDGE: f64 = 1e-6;
const NEWTON_GRAD_TOL: f64 = 1e-8;
const NEWTON_MAX_ITERS: usize = 200;
const EXPECTATION_QUAD: QuadOptions = QuadOptions { abs_tol: 1e-11, max_panels: 100_000 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    BayesExact,
    LearnedLogistic,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::BayesExact => "bayes-exact",
            ClassifierKind::LearnedLogistic => "learned-logistic",
        }
    }
}

/// Where a Bayes classifier's class density comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassSource {
    /// The generating density; level densities are exact convolutions.
    Density(Density1D),
    /// Training samples; level densities are Gaussian KDEs at bandwidth σ.
    Samples(Vec<f64>),
}

impl ClassSource {
    fn at_level(&self, sigma: f64) -> Result<Density1D> {
        match self {
            ClassSource::Density(d) => d.convolve(sigma),
            ClassSource::Samples(xs) => Density1D::equal_mixture(xs, sigma * sigma),
        }
    }
}

/// One level of the logistic classifier: `sigmoid(b + w·z)` with standardized
/// features `z = ((x, x², |x|) − mean)/scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticLevel {
    pub intercept: f64,
    pub weights: [f64; 3],
    pub feature_mean: [f64; 3],
    pub feature_scale: [f64; 3],
}

impl LogisticLevel {
    fn features(&self, x: f64) -> Vector4<f64> {
        let raw = [x, x * x, x.abs()];
        Vector4::new(
            1.0,
            (raw[0] - self.feature_mean[0]) / self.feature_scale[0],
            (raw[1] - self.feature_mean[1]) / self.feature_scale[1],
            (raw[2] - self.feature_mean[2]) / self.feature_scale[2],
        )
    }

    fn params(&self) -> Vector4<f64> {
        Vector4::new(self.intercept, self.weights[0], self.weights[1], self.weights[2])
    }

    pub fn logit(&self, x: f64) -> f64 {
        self.params().dot(&self.features(x))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ClassifierSpec {
    BayesExact { schedule: NoiseSchedule, good: ClassSource, bad: ClassSource },
    LearnedLogistic { schedule: NoiseSchedule, levels: Vec<LogisticLevel> },
}

/// A fitted, immutable time-conditional classifier. Its output at level `t`
/// estimates the probability that `x` came from the clean class.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ClassifierSpec", into = "ClassifierSpec")]
pub struct NoiseClassifier {
    spec: ClassifierSpec,
    /// Bayes only: `(p_t, q_t)` per level.
    levels: Vec<(Density1D, Density1D)>,
}

impl TryFrom<ClassifierSpec> for NoiseClassifier {
    type Error = Error;
    fn try_from(spec: ClassifierSpec) -> Result<Self> {
        let levels = match &spec {
            ClassifierSpec::BayesExact { schedule, good, bad } => {
                check_source(good)?;
                check_source(bad)?;
                schedule
                    .sigmas()
                    .par_iter()
                    .map(|&s| Ok((good.at_level(s)?, bad.at_level(s)?)))
                    .collect::<Result<Vec<_>>>()?
            }
            ClassifierSpec::LearnedLogistic { schedule, levels } => {
                if levels.len() != schedule.len() {
                    return Err(Error::invalid(format!(
                        "{} logistic levels for a schedule of {}",
                        levels.len(),
                        schedule.len()
                    )));
                }
                for l in levels {
                    let finite = l.intercept.is_finite()
                        && l.weights.iter().chain(&l.feature_mean).all(|v| v.is_finite())
                        && l.feature_scale.iter().all(|v| v.is_finite() && *v > 0.0);
                    if !finite {
                        return Err(Error::invalid("logistic parameters must be finite with positive scales"));
                    }
                }
                Vec::new()
            }
        };
        Ok(NoiseClassifier { spec, levels })
    }
}

impl From<NoiseClassifier> for ClassifierSpec {
    fn from(c: NoiseClassifier) -> Self {
        c.spec
    }
}

fn check_source(s: &ClassSource) -> Result<()> {
    if let ClassSource::Samples(xs) = s {
        if xs.is_empty() {
            return Err(Error::invalid("classifier class has no samples"));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("classifier samples must be finite"));
        }
    }
    Ok(())
}

/// Keeps outputs strictly inside (0, 1).
fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `p(x)/(p(x)+q(x))` evaluated through the log ratio.
pub fn bayes_prob(p: &Density1D, q: &Density1D, x: f64) -> f64 {
    let (lp, lq) = (p.ln_pdf(x), q.ln_pdf(x));
    if lp == f64::NEG_INFINITY && lq == f64::NEG_INFINITY {
        return 0.5;
    }
    open_unit(sigmoid(lp - lq))
}

/// Bayes classifier output for analytic classes at an arbitrary level
/// `sigma ≥ 0` (σ = 0 means the un-noised densities).
pub fn bayes_prob_at_sigma(p0: &Density1D, q0: &Density1D, x: f64, sigma: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(bayes_prob(p0, q0, x));
    }
    Ok(bayes_prob(&p0.convolve(sigma)?, &q0.convolve(sigma)?, x))
}

impl NoiseClassifier {
    /// Likelihood-ratio classifier from the generating densities.
    pub fn bayes_exact(p0: &Density1D, q0: &Density1D, schedule: &NoiseSchedule) -> Result<Self> {
        ClassifierSpec::BayesExact {
            schedule: schedule.clone(),
            good: ClassSource::Density(p0.clone()),
            bad: ClassSource::Density(q0.clone()),
        }
        .try_into()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn kind(&self) -> ClassifierKind {
        match self.spec {
            ClassifierSpec::BayesExact { .. } => ClassifierKind::BayesExact,
            ClassifierSpec::LearnedLogistic { .. } => ClassifierKind::LearnedLogistic,
        }
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        match &self.spec {
            ClassifierSpec::BayesExact { schedule, .. } | ClassifierSpec::LearnedLogistic { schedule, .. } => schedule,
        }
    }

    pub fn logistic_levels(&self) -> Option<&[LogisticLevel]> {
        match &self.spec {
            ClassifierSpec::LearnedLogistic { levels, .. } => Some(levels),
            _ => None,
        }
    }

    /// Level densities `(p_t, q_t)` of a Bayes classifier.
    pub fn level_densities(&self, t: usize) -> Option<&(Density1D, Density1D)> {
        self.levels.get(t)
    }

    fn check_level(&self, t: usize) -> Result<()> {
        if t >= self.schedule().len() {
            return Err(Error::invalid(format!("level {t} outside schedule")));
        }
        Ok(())
    }

    /// Classifier output at schedule level `t`.
    pub fn prob(&self, x: f64, t: usize) -> f64 {
        match &self.spec {
            ClassifierSpec::BayesExact { .. } => {
                let (p, q) = &self.levels[t];
                bayes_prob(p, q, x)
            }
            ClassifierSpec::LearnedLogistic { levels, .. } => open_unit(sigmoid(levels[t].logit(x))),
        }
    }
}

/// Fit a classifier separating `good` (clean) from `bad` (corrupted) samples
/// at every schedule level.
pub fn fit_classifier(
    good: &[f64],
    bad: &[f64],
    schedule: &NoiseSchedule,
    kind: ClassifierKind,
    seed: u64,
) -> Result<NoiseClassifier> {
    if good.is_empty() || bad.is_empty() {
        return Err(Error::invalid("classifier needs samples from both classes"));
    }
    match kind {
        ClassifierKind::BayesExact => ClassifierSpec::BayesExact {
            schedule: schedule.clone(),
            good: ClassSource::Samples(good.to_vec()),
            bad: ClassSource::Samples(bad.to_vec()),
        }
        .try_into(),
        ClassifierKind::LearnedLogistic => {
            if good.iter().chain(bad).any(|x| !x.is_finite()) {
                return Err(Error::invalid("classifier samples must be finite"));
            }
            let levels = (0..schedule.len())
                .into_par_iter()
                .map(|t| {
                    fit_logistic_level(good, bad, schedule.sigma(t), child_rng(seed, streams::CLASSIFIER_FIT, t as u64))
                })
                .collect::<Result<Vec<_>>>()?;
            ClassifierSpec::LearnedLogistic { schedule: schedule.clone(), levels }.try_into()
        }
    }
}

/// Full-batch damped Newton on the ridge-regularised cross-entropy.
fn fit_logistic_level(good: &[f64], bad: &[f64], sigma: f64, mut r: crate::rng::LabRng) -> Result<LogisticLevel> {
    let mut xs = Vec::with_capacity((good.len() + bad.len()) * FIT_DRAWS);
    for &x in good.iter().chain(bad) {
        for _ in 0..FIT_DRAWS {
            xs.push(x + sigma * std_normal(&mut r));
        }
    }
    let n_good = good.len() * FIT_DRAWS;
    let n = xs.len() as f64;

    let mut mean = [0.0; 3];
    let mut sq = [0.0; 3];
    for &x in &xs {
        for (j, v) in [x, x * x, x.abs()].into_iter().enumerate() {
            mean[j] += v;
            sq[j] += v * v;
        }
    }
    let mut scale = [1.0; 3];
    for j in 0..3 {
        mean[j] /= n;
        let var = (sq[j] / n - mean[j] * mean[j]).max(0.0);
        if var.sqrt() > 1e-12 * (1.0 + mean[j].abs()) {
            scale[j] = var.sqrt();
        }
    }
    let mut level = LogisticLevel { intercept: 0.0, weights: [0.0; 3], feature_mean: mean, feature_scale: scale };
    let feats: Vec<Vector4<f64>> = xs.iter().map(|&x| level.features(x)).collect();
    drop(xs);

    // Objective, gradient and Hessian in one pass.
    let eval = |w: &Vector4<f64>| -> (f64, Vector4<f64>, Matrix4<f64>) {
        let (f, g, h) = feats
            .par_iter()
            .enumerate()
            .fold(
                || (0.0, Vector4::zeros(), Matrix4::zeros()),
                |(mut f, mut g, mut h): (f64, Vector4<f64>, Matrix4<f64>), (i, phi)| {
                    let z = w.dot(phi);
                    let y = if i < n_good { 1.0 } else { 0.0 };
                    // log(1 + e^z) − y z, stable for both signs.
                    f += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
                    let p = sigmoid(z);
                    g += phi * (p - y);
                    h.ger(p * (1.0 - p), phi, phi, 1.0);
                    (f, g, h)
                },
            )
            .reduce(|| (0.0, Vector4::zeros(), Matrix4::zeros()), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        (f / n + 0.5 * RIDGE * w.norm_squared(), g / n + w * RIDGE, h / n + Matrix4::identity() * RIDGE)
    };

    let mut w = Vector4::zeros();
    let (mut f, mut g, mut h) = eval(&w);
    for _ in 0..NEWTON_MAX_ITERS {
        if g.norm() < NEWTON_GRAD_TOL {
            level.intercept = w[0];
            level.weights = [w[1], w[2], w[3]];
            return Ok(level);
        }
        let step = h
            .cholesky()
            .ok_or_else(|| Error::numeric("logistic Hessian not positive definite", g.norm()))?
            .solve(&(-g));
        let slope = g.dot(&step);
        let mut eta = 1.0;
        loop {
            let cand = w + step * eta;
            let (fc, gc, hc) = eval(&cand);
            // Near the optimum the predicted decrease drops below the
            // resolution of f; the full Newton step is then taken as is.
            let flat = -slope < 1e-12 * (1.0 + f.abs());
            if fc <= f + 1e-4 * eta * slope || flat || eta < 1e-8 {
                w = cand;
                (f, g, h) = (fc, gc, hc);
                break;
            }
            eta *= 0.5;
        }
    }
    Err(Error::numeric("logistic Newton iterations did not reach gradient tolerance", g.norm()))
}

/// The corrupted data an expectation is taken over.
#[derive(Debug, Clone, Copy)]
pub enum BadData<'a> {
    /// Analytic `q_0`; the expectation is a quadrature against `q_t`.
    Density(&'a Density1D),
    /// Samples; the expectation is Monte Carlo with `ANNOTATE_DRAWS` noise
    /// draws per sample.
    Samples(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbEstimate {
    pub value: f64,
    /// Monte Carlo standard error; 0 for quadrature.
    pub se: f64,
}

/// `E_{y_t}[c(y_t, t)]` over noised corrupted data at level `t`.
pub fn expected_prob_on_bad(c: &NoiseClassifier, bad: BadData<'_>, t: usize, seed: u64) -> Result<ProbEstimate> {
    c.check_level(t)?;
    let sigma = c.schedule().sigma(t);
    match bad {
        BadData::Density(q0) => {
            let qt = q0.convolve(sigma)?;
            let mut breaks = qt.breakpoints();
            if let Some((p, _)) = c.level_densities(t) {
                breaks.extend(p.breakpoints());
            }
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let e = integrate(|x| c.prob(x, t) * qt.pdf(x), &breaks, EXPECTATION_QUAD)?;
            Ok(ProbEstimate { value: e.value.clamp(0.0, 1.0), se: 0.0 })
        }
        BadData::Samples(xs) => {
            if xs.is_empty() {
                return Err(Error::invalid("no corrupted samples"));
            }
            let per_sample: Vec<f64> = xs
                .par_iter()
                .enumerate()
                .map(|(i, &x)| {
                    let mut r = child_rng(seed, streams::EXPECTATION, i as u64);
                    let z = std_normals(&mut r, ANNOTATE_DRAWS);
                    z.iter().map(|e| c.prob(x + sigma * e, t)).sum::<f64>() / ANNOTATE_DRAWS as f64
                })
                .collect();
            Ok(ProbEstimate {
                value: stats::mean(&per_sample),
                se: if xs.len() > 1 { stats::std_error(&per_sample) } else { 0.0 },
            })
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau must lie in (0, 0.5), got {tau}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub index: usize,
    pub sigma: f64,
    pub prob: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetAnnotation {
    pub t_min_index: usize,
    pub sigma_min: f64,
    /// False when no level reached `tau`; `t_min_index` is then the top level.
    pub crossed: bool,
    pub tau: f64,
    pub curve: Vec<CurvePoint>,
}

/// Smallest level whose expected classifier output on the corrupted data is
/// at least `tau`. Exact ties go to the lower level.
pub fn annotate_dataset(c: &NoiseClassifier, bad: BadData<'_>, tau: f64, seed: u64) -> Result<DatasetAnnotation> {
    check_tau(tau)?;
    let s = c.schedule();
    let curve = (0..s.len())
        .into_par_iter()
        .map(|t| {
            expected_prob_on_bad(c, bad, t, seed).map(|e| CurvePoint {
                index: t,
                sigma: s.sigma(t),
                prob: e.value,
                se: e.se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hit = curve.iter().find(|p| p.prob >= tau).map(|p| p.index);
    if hit.is_none() {
        log::warn!("expected classifier output never reached tau={tau}; corrupted data limited to the top level");
    }
    let t = hit.unwrap_or(s.top());
    Ok(DatasetAnnotation { t_min_index: t, sigma_min: s.sigma(t), crossed: hit.is_some(), tau, curve })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    /// Continuous level where the expected Bayes output equals `tau`.
    pub sigma: f64,
    /// Schedule levels bracketing `sigma`: the last one below it (if any)
    /// and the first one at or above it (if any).
    pub below: Option<usize>,
    pub above: Option<usize>,
}

/// Expected Bayes output on `q_σ` for analytic classes at a continuous level.
pub fn bayes_expected_prob(p0: &Density1D, q0: &Density1D, sigma: f64) -> Result<f64> {
    let (p, q) = if sigma == 0.0 { (p0.clone(), q0.clone()) } else { (p0.convolve(sigma)?, q0.convolve(sigma)?) };
    let mut breaks = p.breakpoints();
    breaks.extend(q.breakpoints());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    Ok(integrate(|x| bayes_prob(&p, &q, x) * q.pdf(x), &breaks, EXPECTATION_QUAD)?.value.clamp(0.0, 1.0))
}

/// Bisection in σ on the exact expected-output curve over `[lo, hi]`.
/// Returns `None` when the curve stays below `tau` up to `hi`; returns `lo`
/// when it is already at or above `tau` there.
pub fn bayes_crossing(p0: &Density1D, q0: &Density1D, tau: f64, schedule: &NoiseSchedule) -> Result<Option<Crossing>> {
    check_tau(tau)?;
    let (mut lo, mut hi) = (schedule.sigma(0), schedule.sigma(schedule.top()));
    if bayes_expected_prob(p0, q0, hi)? < tau {
        return Ok(None);
    }
    let sigma = if bayes_expected_prob(p0, q0, lo)? >= tau {
        lo
    } else {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if bayes_expected_prob(p0, q0, mid)? >= tau {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        hi
    };
    let s = schedule.sigmas();
    let above = s.iter().position(|&v| v >= sigma);
    let below = s.iter().rposition(|&v| v < sigma);
    Ok(Some(Crossing { sigma, below, above }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Annotation {
    pub sample_id: usize,
    pub value: f64,
    pub t_min_index: usize,
    pub sigma_min: f64,
    pub prob_at_tmin: f64,
    pub se: f64,
    pub method: &'static str,
    pub crossed: bool,
}

/// Per-sample `t_min`: the smallest level where `E_{w_t | w}[c(w_t, t)] ≥ tau`.
/// Each sample uses one fixed set of `ANNOTATE_DRAWS` noise draws at every level.
pub fn annotate_samples(c: &NoiseClassifier, samples: &[f64], tau: f64, seed: u64) -> Result<Vec<Annotation>> {
    check_tau(tau)?;
    let s = c.schedule();
    let method = c.kind().as_str();
    Ok(samples
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut r = child_rng(seed, streams::EXPECTATION, i as u64);
            let z = std_normals(&mut r, ANNOTATE_DRAWS);
            let mut last = None;
            for t in 0..s.len() {
                let sigma = s.sigma(t);
                let vals: Vec<f64> = z.iter().map(|e| c.prob(x + sigma * e, t)).collect();
                let m = stats::mean(&vals);
                let se = stats::std_error(&vals);
                last = Some((t, m, se));
                if m >= tau {
                    return Annotation {
                        sample_id: i,
                        value: x,
                        t_min_index: t,
                        sigma_min: sigma,
                        prob_at_tmin: m,
                        se,
                        method,
                        crossed: true,
                    };
                }
            }
            let (t, m, se) = last.expect("schedule is nonempty");
            Annotation {
                sample_id: i,
                value: x,
                t_min_index: t,
                sigma_min: s.sigma(t),
                prob_at_tmin: m,
                se,
                method,
                crossed: false,
            }
        })
        .collect())
}

pub const CROP_DRAWS: usize = 20_000;

/// Bayes classifier between the `k`-pixel windows of a target field and an
/// out-of-distribution field.
#[derive(Debug, Clone)]
pub struct CropClassifier {
    pub target: GaussianField,
    pub ood: GaussianField,
    pub draws: usize,
    pub seed: u64,
}

impl CropClassifier {
    pub fn new(target: GaussianField, ood: GaussianField, seed: u64) -> Self {
        Self { target, ood, draws: CROP_DRAWS, seed }
    }

    /// Expected classifier output on OOD windows of size `k`.
    pub fn expected_prob_on_ood(&self, k: usize) -> Result<ProbEstimate> {
        if k == 0 || k > self.target.len().min(self.ood.len()) {
            return Err(Error::invalid(format!("crop size {k} exceeds field lengths")));
        }
        let pair = GaussianPair::new(&self.target, &self.ood, k)?;
        let vals: Vec<f64> = (0..self.draws)
            .into_par_iter()
            .map(|i| {
                let mut r = child_rng(self.seed, streams::CROP_MC, i as u64);
                let z = DVector::from_fn(k, |_, _| std_normal(&mut r));
                let y = pair.draw(false, &z);
                sigmoid(pair.log_ratio(&y))
            })
            .collect();
        Ok(ProbEstimate { value: stats::mean(&vals), se: stats::std_error(&vals) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TmaxAnnotation {
    /// Highest level whose crop size still fools the classifier; `None` when
    /// no level does.
    pub t_max_index: Option<usize>,
    pub tau: f64,
    /// Expected crop-classifier output per crop size consulted.
    pub prob_by_k: BTreeMap<usize, ProbEstimate>,
}

/// Largest level `t` whose crop size `k(σ_t)` keeps the expected crop
/// classifier output on OOD data above `tau`.
pub fn annotate_tmax(crop: &CropClassifier, map: &WindowMap, tau: f64) -> Result<TmaxAnnotation> {
    check_tau(tau)?;
    let mut prob_by_k = BTreeMap::new();
    for &k in &map.k {
        if let std::collections::btree_map::Entry::Vacant(e) = prob_by_k.entry(k) {
            e.insert(crop.expected_prob_on_ood(k)?);
        }
    }
    let t_max_index = (0..map.k.len()).rev().find(|&t| prob_by_k[&map.k[t]].value > tau);
    Ok(TmaxAnnotation { t_max_index, tau, prob_by_k })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::log_spaced(0.02, 80.0, 32).unwrap()
    }

    #[test]
    fn peak_ratio_at_zero_noise() {
        let p = Density1D::gaussian(0.0, 1.0).unwrap();
        let q = Density1D::gaussian(0.0, 2.0).unwrap();
        let v = bayes_prob_at_sigma(&p, &q, 0.0, 0.0).unwrap();
        let want = 2f64.sqrt() / (1.0 + 2f64.sqrt());
        assert!((v - want).abs() < 1e-15);
        let v = bayes_prob_at_sigma(&p, &q, 0.0, 10.0).unwrap();
        assert!((v - 0.5).abs() < 0.005);
    }

    #[test]
    fn identical_classes_are_merged_immediately() {
        let p = Density1D::gaussian(0.3, 1.2).unwrap();
        let c = NoiseClassifier::bayes_exact(&p, &p, &sched()).unwrap();
        let a = annotate_dataset(&c, BadData::Density(&p), 0.45, 0).unwrap();
        assert_eq!(a.t_min_index, 0);
        assert!(a.curve.iter().all(|pt| (pt.prob - 0.5).abs() < 1e-9));
        let per = annotate_samples(&c, &[0.0, 4.0], 0.45, 0).unwrap();
        assert!(per.iter().all(|a| a.t_min_index == 0 && a.prob_at_tmin == 0.5));
    }

    #[test]
    fn tau_and_class_validation() {
        let p = Density1D::gaussian(0.0, 1.0).unwrap();
        let c = NoiseClassifier::bayes_exact(&p, &p, &sched()).unwrap();
        assert!(annotate_dataset(&c, BadData::Density(&p), 0.5, 0).is_err());
        assert!(annotate_dataset(&c, BadData::Density(&p), 0.0, 0).is_err());
        assert!(fit_classifier(&[], &[1.0], &sched(), ClassifierKind::LearnedLogistic, 0).is_err());
        assert!(fit_classifier(&[1.0], &[], &sched(), ClassifierKind::BayesExact, 0).is_err());
        assert!(expected_prob_on_bad(&c, BadData::Density(&p), 99, 0).is_err());
    }

    #[test]
    fn never_crossing_returns_top_level() {
        let p = Density1D::gaussian(0.0, 1e-4).unwrap();
        let q = Density1D::gaussian(100.0, 1e-4).unwrap();
        let s = NoiseSchedule::log_spaced(0.01, 1.0, 8).unwrap();
        let c = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
        let a = annotate_dataset(&c, BadData::Density(&q), 0.45, 0).unwrap();
        assert!(!a.crossed);
        assert_eq!(a.t_min_index, 7);
    }

    #[test]
    fn classifier_json_round_trip() {
        let p = Density1D::gaussian(0.0, 1.0).unwrap();
        let q = Density1D::gaussian(0.0, 2.0).unwrap();
        let s = NoiseSchedule::log_spaced(0.1, 10.0, 4).unwrap();
        let c = NoiseClassifier::bayes_exact(&p, &q, &s).unwrap();
        let back = NoiseClassifier::from_json_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.prob(0.7, 2), c.prob(0.7, 2));
        let l = fit_classifier(&[0.0, 0.1, -0.2], &[1.5, -2.0, 3.0], &s, ClassifierKind::LearnedLogistic, 4).unwrap();
        let back = NoiseClassifier::from_json_str(&serde_json::to_string(&l).unwrap()).unwrap();
        assert_eq!(back.prob(0.7, 1), l.prob(0.7, 1));
        assert!(NoiseClassifier::from_json_str(r#"{"kind":"learned-logistic","schedule":[1,2],"levels":[]}"#).is_err());
    }
}

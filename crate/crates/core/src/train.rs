//! Denoiser training under the clean and ambient objectives, reverse-time
//! generation and sample evaluation.
//!
//! A sample annotated with `t_min` is treated as an observation of
//! `X_{t_min}`. At a level `t ≥ t_min` it is noised further to
//! `x_t = y + √(σ_t² − σ_min²)·ε`, and the denoiser is trained so that
//! `α·h(x_t) + (1−α)·x_t` regresses onto `y`, with `α = α(σ_t, σ_min)` and
//! weight `λ_amb`. The minimiser of that loss is the clean posterior mean.

use crate::densities::{Component, Density1D};
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::quadrature::gauss_legendre;
use crate::rng::{child_rng, std_normal, streams, LabRng};
use crate::schedule::{alpha, is_usable, lambda_amb, MaskEntry, NoiseSchedule, Weight, WeightRule};
use crate::stats;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Divergence threshold on the batch loss.
pub const DIVERGENCE_LOSS: f64 = 1e6;
pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_TOL: f64 = 1e-4;
/// Kernel bandwidth used when comparing generated samples to the truth.
pub const EVAL_BANDWIDTH: f64 = 0.05;
pub const MAX_MLP_WIDTH: usize = 256;

/// Anything that maps a noisy value at schedule level `t` (noise `sigma`) to
/// an estimate of the clean value.
pub trait Denoise: Sync {
    fn denoise(&self, x: f64, t: usize, sigma: f64) -> f64;
}

/// Exact posterior mean `E[X_0 | X_σ = x]` for a Gaussian-mixture prior.
#[derive(Debug, Clone)]
pub struct MixturePosterior {
    components: Vec<Component>,
}

impl MixturePosterior {
    pub fn new(prior: &Density1D) -> Result<Self> {
        let components = prior
            .components()
            .ok_or_else(|| Error::invalid("exact posterior needs a Gaussian-mixture prior"))?
            .to_vec();
        Ok(Self { components })
    }
}

impl Denoise for MixturePosterior {
    fn denoise(&self, x: f64, _t: usize, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        let logw: Vec<f64> =
            self.components.iter().map(|c| c.w.ln() + crate::special::normal_ln_pdf(x, c.mu, c.var + s2)).collect();
        let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (c, lw) in self.components.iter().zip(&logw) {
            let e = (lw - m).exp();
            num += e * (c.mu + c.var / (c.var + s2) * (x - c.mu));
            den += e;
        }
        num / den
    }
}

impl Denoise for KdeModel {
    fn denoise(&self, x: f64, _t: usize, sigma: f64) -> f64 {
        self.posterior_mean(x, sigma).map(|e| e.value).unwrap_or(f64::NAN)
    }
}

/// Predicts the same value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDenoiser(pub f64);

impl Denoise for ConstantDenoiser {
    fn denoise(&self, _x: f64, _t: usize, _sigma: f64) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum DenoiserRepr {
    AffinePerLevel {
        schedule: NoiseSchedule,
        a: Vec<f64>,
        b: Vec<f64>,
    },
    /// One hidden tanh layer on inputs `(c_in·x, σ/σ_T, ln σ)` with EDM-style
    /// skip/output scaling. `params` = `[w_in (width×3), b_in, w_out, b_out]`.
    Mlp {
        schedule: NoiseSchedule,
        width: usize,
        params: Vec<f64>,
    },
}

/// A trained per-level denoiser `h(x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenoiserRepr", into = "DenoiserRepr")]
pub struct Denoiser {
    repr: DenoiserRepr,
}

impl TryFrom<DenoiserRepr> for Denoiser {
    type Error = Error;
    fn try_from(repr: DenoiserRepr) -> Result<Self> {
        match &repr {
            DenoiserRepr::AffinePerLevel { schedule, a, b } => {
                if a.len() != schedule.len() || b.len() != schedule.len() {
                    return Err(Error::invalid("affine denoiser needs one (a, b) per level"));
                }
                if a.iter().chain(b).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("affine parameters must be finite"));
                }
            }
            DenoiserRepr::Mlp { width, params, .. } => {
                if *width == 0 || *width > MAX_MLP_WIDTH || params.len() != mlp_param_count(*width) {
                    return Err(Error::invalid(format!(
                        "mlp of width {width} needs {} parameters, got {}",
                        mlp_param_count(*width),
                        params.len()
                    )));
                }
                if params.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("mlp parameters must be finite"));
                }
            }
        }
        Ok(Denoiser { repr })
    }
}

impl From<Denoiser> for DenoiserRepr {
    fn from(d: Denoiser) -> Self {
        d.repr
    }
}

pub fn mlp_param_count(width: usize) -> usize {
    5 * width + 1
}

/// EDM preconditioning with unit data scale.
fn precond(sigma: f64) -> (f64, f64, f64) {
    let s2 = sigma * sigma;
    let c_skip = 1.0 / (s2 + 1.0);
    let c_out = sigma / (s2 + 1.0).sqrt();
    let c_in = 1.0 / (s2 + 1.0).sqrt();
    (c_skip, c_out, c_in)
}

fn mlp_inputs(x: f64, sigma: f64, sigma_top: f64) -> [f64; 3] {
    let (_, _, c_in) = precond(sigma);
    [c_in * x, sigma / sigma_top, sigma.ln()]
}

/// Output and, optionally, `∂D/∂θ` accumulated into `grad` with factor `scale`.
fn mlp_forward(
    params: &[f64],
    width: usize,
    x: f64,
    sigma: f64,
    sigma_top: f64,
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let (c_skip, c_out, _) = precond(sigma);
    let u = mlp_inputs(x, sigma, sigma_top);
    let (w_in, rest) = params.split_at(3 * width);
    let (b_in, rest) = rest.split_at(width);
    let (w_out, b_out) = rest.split_at(width);
    let mut f = b_out[0];
    let mut hidden = [0.0f64; MAX_MLP_WIDTH];
    let hs = &mut hidden[..width];
    for j in 0..width {
        let z = w_in[3 * j] * u[0] + w_in[3 * j + 1] * u[1] + w_in[3 * j + 2] * u[2] + b_in[j];
        hs[j] = z.tanh();
        f += w_out[j] * hs[j];
    }
    if let Some((g, scale)) = grad {
        let s = scale * c_out;
        let (gw_in, rest) = g.split_at_mut(3 * width);
        let (gb_in, rest) = rest.split_at_mut(width);
        let (gw_out, gb_out) = rest.split_at_mut(width);
        gb_out[0] += s;
        for j in 0..width {
            gw_out[j] += s * hs[j];
            let dz = s * w_out[j] * (1.0 - hs[j] * hs[j]);
            gb_in[j] += dz;
            gw_in[3 * j] += dz * u[0];
            gw_in[3 * j + 1] += dz * u[1];
            gw_in[3 * j + 2] += dz * u[2];
        }
    }
    c_skip * x + c_out * f
}

impl Denoiser {
    pub fn affine(schedule: NoiseSchedule, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        DenoiserRepr::AffinePerLevel { schedule, a, b }.try_into()
    }

    pub fn mlp(schedule: NoiseSchedule, width: usize, params: Vec<f64>) -> Result<Self> {
        DenoiserRepr::Mlp { schedule, width, params }.try_into()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        match &self.repr {
            DenoiserRepr::AffinePerLevel { schedule, .. } | DenoiserRepr::Mlp { schedule, .. } => schedule,
        }
    }

    /// `(a_t, b_t)` for the affine kind.
    pub fn affine_level(&self, t: usize) -> Option<(f64, f64)> {
        match &self.repr {
            DenoiserRepr::AffinePerLevel { a, b, .. } => Some((a[t], b[t])),
            DenoiserRepr::Mlp { .. } => None,
        }
    }

    pub fn predict(&self, x: f64, t: usize) -> f64 {
        match &self.repr {
            DenoiserRepr::AffinePerLevel { a, b, .. } => a[t] * x + b[t],
            DenoiserRepr::Mlp { schedule, width, params } => {
                mlp_forward(params, *width, x, schedule.sigma(t), schedule.sigma(schedule.top()), None)
            }
        }
    }
}

impl Denoise for Denoiser {
    fn denoise(&self, x: f64, t: usize, _sigma: f64) -> f64 {
        self.predict(x, t)
    }
}

/// One training observation: the value as observed (at noise `σ_min` for
/// annotated samples) and its usability mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSample {
    pub value: f64,
    pub mask: MaskEntry,
}

impl TrainSample {
    pub fn clean(value: f64) -> Self {
        Self { value, mask: MaskEntry::Clean }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Every value is treated as clean data.
    Clean,
    /// Annotations are honoured through α and λ_amb.
    #[default]
    AmbientO,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LevelSampling {
    /// Uniform over schedule indices.
    #[default]
    Uniform,
    /// `ln σ ~ N(p_mean, p_std²)`, snapped to the nearest level.
    LogNormal { p_mean: f64, p_std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelKind {
    #[default]
    AffinePerLevel,
    Mlp {
        width: usize,
    },
}

/// `buffer(4)`, the best-performing rule in the clip/buffer ablation.
fn default_rule() -> WeightRule {
    WeightRule::Buffer { max: 4.0 }
}
fn default_batch() -> usize {
    256
}
fn default_steps() -> usize {
    2000
}
fn default_lr() -> f64 {
    1e-2
}
fn default_draws() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub objective: Objective,
    #[serde(default = "default_rule")]
    pub rule: WeightRule,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Affine fits: noise draws per (sample, level) pair.
    #[serde(default = "default_draws")]
    pub draws_per_sample: usize,
    #[serde(default)]
    pub level_sampling: LevelSampling,
    /// Train on CLEAN samples only.
    #[serde(default)]
    pub clean_only: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::AmbientO,
            rule: default_rule(),
            model: ModelKind::AffinePerLevel,
            batch_size: default_batch(),
            steps: default_steps(),
            learning_rate: default_lr(),
            draws_per_sample: default_draws(),
            level_sampling: LevelSampling::Uniform,
            clean_only: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        if self.batch_size == 0 || self.steps == 0 || self.draws_per_sample == 0 {
            return Err(Error::invalid("batch_size, steps and draws_per_sample must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if let ModelKind::Mlp { width } = self.model {
            if width == 0 || width > MAX_MLP_WIDTH {
                return Err(Error::invalid(format!("mlp width must be in 1..={MAX_MLP_WIDTH}")));
            }
        }
        if let LevelSampling::LogNormal { p_std, .. } = self.level_sampling {
            if !(p_std > 0.0) {
                return Err(Error::invalid("log-normal level sampling needs p_std > 0"));
            }
        }
        Ok(())
    }
}

/// A single regression term: minimise `λ·(α·h(x_t) + (1−α)·x_t − y)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub x_t: f64,
    pub y: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl Pair {
    /// `y − (1−α)·x_t`, the part `α·h` must explain.
    fn residual_target(&self) -> f64 {
        self.y - (1.0 - self.alpha) * self.x_t
    }

    pub fn loss(&self, h: f64) -> f64 {
        if self.alpha == 0.0 {
            return 0.0;
        }
        let e = self.alpha * h + (1.0 - self.alpha) * self.x_t - self.y;
        self.lambda * e * e
    }
}

/// The noise level a sample is treated as carrying at level `t`: zero on the
/// crop branch (`t ≤ t_max`) and for clean data, `σ(t_min)` otherwise.
fn effective_sigma_min(mask: &MaskEntry, t: usize, schedule: &NoiseSchedule) -> f64 {
    match *mask {
        MaskEntry::Annotated { t_max: Some(tx), .. } if t <= tx => 0.0,
        _ => mask.sigma_min(schedule),
    }
}

/// Builds the regression term for `sample` at level `t` from a standard
/// normal draw `eps`.
pub fn make_pair(
    sample: &TrainSample,
    t: usize,
    eps: f64,
    schedule: &NoiseSchedule,
    rule: WeightRule,
    objective: Objective,
) -> Result<Pair> {
    let sigma = schedule.sigma(t);
    match objective {
        Objective::Clean => Ok(Pair { x_t: sample.value + sigma * eps, y: sample.value, alpha: 1.0, lambda: 1.0 }),
        Objective::AmbientO => {
            if !is_usable(&sample.mask, t, schedule, rule)? {
                return Err(Error::ContractViolation(format!("sample {:?} is not usable at level {t}", sample.mask)));
            }
            let smin = effective_sigma_min(&sample.mask, t, schedule);
            let a = alpha(sigma, smin)?;
            let extra = (sigma * sigma - smin * smin).max(0.0).sqrt();
            let lambda = if a == 0.0 {
                0.0
            } else {
                match lambda_amb(sigma, smin, rule)? {
                    Weight::Value(v) => v,
                    Weight::Excluded => {
                        return Err(Error::ContractViolation(format!("level {t} excluded by {rule:?}")));
                    }
                }
            };
            Ok(Pair { x_t: sample.value + extra * eps, y: sample.value, alpha: a, lambda })
        }
    }
}

/// Batch loss at level `t` with one given standard normal draw per sample.
pub fn loss_at(
    h: &dyn Denoise,
    batch: &[TrainSample],
    t: usize,
    noise: &[f64],
    schedule: &NoiseSchedule,
    rule: WeightRule,
    objective: Objective,
) -> Result<f64> {
    if batch.is_empty() || batch.len() != noise.len() {
        return Err(Error::invalid("loss_at needs a nonempty batch and one draw per sample"));
    }
    let sigma = schedule.sigma(t);
    let mut total = 0.0;
    for (s, &e) in batch.iter().zip(noise) {
        let p = make_pair(s, t, e, schedule, rule, objective)?;
        total += p.loss(h.denoise(p.x_t, t, sigma));
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    /// `None` for rows aggregated over levels.
    pub level: Option<usize>,
    pub loss: f64,
    pub lambda_weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub denoiser: Denoiser,
    pub trace: Vec<TraceRow>,
    /// Max relative error of the initial gradient check (MLP only).
    pub gradient_check: Option<f64>,
    /// Samples used for training after filtering.
    pub samples_used: usize,
    /// Levels no sample informs (affine only); they hold the identity map.
    pub untrained_levels: Vec<usize>,
}

fn usable_or_clean(s: &TrainSample, t: usize, schedule: &NoiseSchedule, config: &TrainConfig) -> Result<bool> {
    match config.objective {
        Objective::Clean => Ok(true),
        Objective::AmbientO => is_usable(&s.mask, t, schedule, config.rule),
    }
}

/// All regression terms at level `t`. Every sample consumes its draws whether
/// or not it is usable, so runs that differ only in masks share noise.
pub fn level_pairs(
    dataset: &[TrainSample],
    t: usize,
    schedule: &NoiseSchedule,
    config: &TrainConfig,
) -> Result<Vec<Pair>> {
    let mut r = child_rng(config.seed, streams::TRAIN, t as u64);
    let mut out = Vec::new();
    for s in dataset {
        let usable = usable_or_clean(s, t, schedule, config)?;
        for _ in 0..config.draws_per_sample {
            let e = std_normal(&mut r);
            if usable {
                out.push(make_pair(s, t, e, schedule, config.rule, config.objective)?);
            }
        }
    }
    Ok(out)
}

/// Exact weighted least squares for `h = a·x + b` over `pairs`; returns
/// `(a, b, mean loss)`.
pub fn fit_affine_level(pairs: &[Pair]) -> Result<(f64, f64, f64)> {
    let (mut sxx, mut sx, mut s1, mut sxr, mut sr, mut srr) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut n = 0usize;
    for p in pairs.iter().filter(|p| p.alpha > 0.0) {
        let w = p.lambda * p.alpha * p.alpha;
        let r = p.residual_target() / p.alpha;
        sxx += w * p.x_t * p.x_t;
        sx += w * p.x_t;
        s1 += w;
        sxr += w * p.x_t * r;
        sr += w * r;
        srr += w * r * r;
        n += 1;
    }
    if n == 0 || s1 <= 0.0 {
        return Err(Error::invalid("no usable samples at this level"));
    }
    let det = sxx * s1 - sx * sx;
    let (a, b) =
        if det > 1e-12 * sxx * s1 { ((sxr * s1 - sx * sr) / det, (sxx * sr - sx * sxr) / det) } else { (0.0, sr / s1) };
    let loss =
        (a * a * sxx + 2.0 * a * b * sx + b * b * s1 - 2.0 * (a * sxr + b * sr) + srr).max(0.0) / pairs.len() as f64;
    Ok((a, b, loss))
}

/// Full-batch gradient descent on the same quadratic, for cross-checking the
/// closed form. Stops when the gradient norm falls below `tol`.
pub fn fit_affine_level_gd(pairs: &[Pair], tol: f64, max_iters: usize) -> Result<(f64, f64)> {
    let (mut h11, mut h12, mut h22) = (0.0, 0.0, 0.0);
    for p in pairs {
        let w = p.lambda * p.alpha * p.alpha;
        h11 += w * p.x_t * p.x_t;
        h12 += w * p.x_t;
        h22 += w;
    }
    let n = pairs.len() as f64;
    let (h11, h12, h22) = (2.0 * h11 / n, 2.0 * h12 / n, 2.0 * h22 / n);
    let lmax = 0.5 * (h11 + h22) + (0.25 * (h11 - h22).powi(2) + h12 * h12).sqrt();
    let eta = 1.0 / lmax;
    let (mut a, mut b) = (0.0, 0.0);
    for _ in 0..max_iters {
        let (mut ga, mut gb) = (0.0, 0.0);
        for p in pairs {
            let e = p.alpha * (a * p.x_t + b) - p.residual_target();
            let g = 2.0 * p.lambda * p.alpha * e;
            ga += g * p.x_t;
            gb += g;
        }
        let (ga, gb) = (ga / n, gb / n);
        if (ga * ga + gb * gb).sqrt() < tol {
            return Ok((a, b));
        }
        a -= eta * ga;
        b -= eta * gb;
    }
    Err(Error::numeric("affine gradient descent did not converge", f64::NAN))
}

fn sample_level<R: Rng + ?Sized>(r: &mut R, schedule: &NoiseSchedule, how: LevelSampling) -> usize {
    match how {
        LevelSampling::Uniform => r.random_range(0..schedule.len()),
        LevelSampling::LogNormal { p_mean, p_std } => {
            let ls = p_mean + p_std * std_normal(r);
            let s = schedule.sigmas();
            (0..s.len())
                .min_by(|&i, &j| (s[i].ln() - ls).abs().total_cmp(&(s[j].ln() - ls).abs()))
                .expect("schedule is nonempty")
        }
    }
}

/// A minibatch of `(level, pair)` terms drawn with fresh noise.
fn draw_batch(
    dataset: &[TrainSample],
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    r: &mut LabRng,
) -> Result<Vec<(usize, Pair)>> {
    let mut out = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let s = &dataset[r.random_range(0..dataset.len())];
        // Rejection to the sample's usable levels; every kept sample has one.
        let mut t = sample_level(r, schedule, config.level_sampling);
        let mut tries = 0;
        while !usable_or_clean(s, t, schedule, config)? {
            tries += 1;
            if tries > 256 {
                let usable: Vec<usize> =
                    (0..schedule.len()).filter(|&u| usable_or_clean(s, u, schedule, config).unwrap_or(false)).collect();
                t = usable[r.random_range(0..usable.len())];
                break;
            }
            t = sample_level(r, schedule, config.level_sampling);
        }
        let e = std_normal(r);
        out.push((t, make_pair(s, t, e, schedule, config.rule, config.objective)?));
    }
    Ok(out)
}

fn mlp_batch_loss(
    params: &[f64],
    width: usize,
    schedule: &NoiseSchedule,
    batch: &[(usize, Pair)],
    grad: Option<&mut [f64]>,
) -> f64 {
    let top = schedule.sigma(schedule.top());
    let n = batch.len() as f64;
    match grad {
        None => {
            batch
                .iter()
                .map(|(t, p)| p.loss(mlp_forward(params, width, p.x_t, schedule.sigma(*t), top, None)))
                .sum::<f64>()
                / n
        }
        Some(g) => {
            let (loss, acc) = batch
                .par_iter()
                .fold(
                    || (0.0, vec![0.0; params.len()]),
                    |(mut l, mut acc), (t, p)| {
                        let sigma = schedule.sigma(*t);
                        let d = mlp_forward(params, width, p.x_t, sigma, top, None);
                        l += p.loss(d);
                        if p.alpha > 0.0 {
                            let e = p.alpha * d + (1.0 - p.alpha) * p.x_t - p.y;
                            let scale = 2.0 * p.lambda * p.alpha * e / n;
                            mlp_forward(params, width, p.x_t, sigma, top, Some((&mut acc, scale)));
                        }
                        (l, acc)
                    },
                )
                .reduce(
                    || (0.0, vec![0.0; params.len()]),
                    |(l1, mut a1), (l2, a2)| {
                        for (x, y) in a1.iter_mut().zip(a2) {
                            *x += y;
                        }
                        (l1 + l2, a1)
                    },
                );
            g.copy_from_slice(&acc);
            loss / n
        }
    }
}

/// Max relative error between the analytic gradient and central differences.
/// The denominator is floored at `1e-6·max(1, loss)`: central differences
/// carry rounding error of order `ε·loss/step` and cannot resolve smaller
/// components.
pub fn mlp_gradient_check(params: &[f64], width: usize, schedule: &NoiseSchedule, batch: &[(usize, Pair)]) -> f64 {
    let mut g = vec![0.0; params.len()];
    let loss = mlp_batch_loss(params, width, schedule, batch, Some(&mut g));
    let floor = 1e-6 * loss.abs().max(1.0);
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + GRAD_CHECK_STEP;
        let up = mlp_batch_loss(&p, width, schedule, batch, None);
        p[i] = orig - GRAD_CHECK_STEP;
        let dn = mlp_batch_loss(&p, width, schedule, batch, None);
        p[i] = orig;
        let fd = (up - dn) / (2.0 * GRAD_CHECK_STEP);
        let rel = (g[i] - fd).abs() / (g[i].abs() + fd.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// Train a denoiser on `dataset`.
pub fn fit(dataset: &[TrainSample], schedule: &NoiseSchedule, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    let data: Vec<TrainSample> =
        dataset.iter().filter(|s| !config.clean_only || s.mask == MaskEntry::Clean).copied().collect();
    if data.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    if data.iter().any(|s| !s.value.is_finite()) {
        return Err(Error::invalid("training values must be finite"));
    }
    match config.model {
        ModelKind::AffinePerLevel => fit_affine(&data, schedule, config),
        ModelKind::Mlp { width } => fit_mlp(&data, schedule, config, width),
    }
}

fn fit_affine(data: &[TrainSample], schedule: &NoiseSchedule, config: &TrainConfig) -> Result<FitResult> {
    let levels = (0..schedule.len())
        .into_par_iter()
        .map(|t| {
            let pairs = level_pairs(data, t, schedule, config)?;
            let lam = stats::mean(&pairs.iter().map(|p| p.lambda).collect::<Vec<_>>());
            if !pairs.iter().any(|p| p.alpha > 0.0) {
                return Ok(None);
            }
            let (a, b, loss) = fit_affine_level(&pairs)?;
            Ok(Some((a, b, TraceRow { step: 0, level: Some(t), loss, lambda_weight: lam })))
        })
        .collect::<Result<Vec<_>>>()?;
    let untrained: Vec<usize> = (0..levels.len()).filter(|&t| levels[t].is_none()).collect();
    if untrained.len() == levels.len() {
        return Err(Error::invalid("no level has a usable training sample"));
    }
    // Levels without information keep the identity map, which leaves the
    // sampler's state unchanged there.
    let a = levels.iter().map(|l| l.map_or(1.0, |l| l.0)).collect();
    let b = levels.iter().map(|l| l.map_or(0.0, |l| l.1)).collect();
    let trace = levels.iter().flatten().map(|l| l.2).collect();
    Ok(FitResult {
        denoiser: Denoiser::affine(schedule.clone(), a, b)?,
        trace,
        gradient_check: None,
        samples_used: data.len(),
        untrained_levels: untrained,
    })
}

fn fit_mlp(data: &[TrainSample], schedule: &NoiseSchedule, config: &TrainConfig, width: usize) -> Result<FitResult> {
    let mut init = child_rng(config.seed, streams::INIT, 0);
    let np = mlp_param_count(width);
    let mut params = vec![0.0; np];
    for j in 0..width {
        // Scaled so the σ/σ_T and ln σ inputs start in tanh's linear range.
        params[3 * j] = std_normal(&mut init);
        params[3 * j + 1] = std_normal(&mut init);
        params[3 * j + 2] = 0.3 * std_normal(&mut init);
        params[3 * width + j] = 0.1 * std_normal(&mut init);
        params[4 * width + j] = std_normal(&mut init) / (width as f64).sqrt();
    }

    let mut check_rng = child_rng(config.seed, streams::TRAIN, u64::MAX);
    let check_batch = draw_batch(data, schedule, config, &mut check_rng)?;
    let worst = mlp_gradient_check(&params, width, schedule, &check_batch);
    if !(worst < GRAD_CHECK_TOL) {
        return Err(Error::GradientCheck { max_rel_err: worst });
    }

    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut g = vec![0.0; np];
    let mut trace = Vec::with_capacity(config.steps);
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut r = child_rng(config.seed, streams::TRAIN, step as u64);
        let batch = draw_batch(data, schedule, config, &mut r)?;
        let loss = mlp_batch_loss(&params, width, schedule, &batch, Some(&mut g));
        losses.push(loss);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::TrainingDiverged { step, loss, trace: losses });
        }
        trace.push(TraceRow {
            step,
            level: None,
            loss,
            lambda_weight: batch.iter().map(|(_, p)| p.lambda).sum::<f64>() / batch.len() as f64,
        });
        let k = (step + 1) as i32;
        for i in 0..np {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(k));
            let vh = v[i] / (1.0 - b2.powi(k));
            params[i] -= config.learning_rate * mh / (vh.sqrt() + eps);
        }
    }
    Ok(FitResult {
        denoiser: Denoiser::mlp(schedule.clone(), width, params)?,
        trace,
        gradient_check: Some(worst),
        samples_used: data.len(),
        untrained_levels: Vec::new(),
    })
}

/// Deterministic first-order reverse sampler: start at `N(0, σ_T²)`, step
/// down the schedule, then take one posterior-mean step from `σ_0` to 0.
pub fn generate(h: &dyn Denoise, schedule: &NoiseSchedule, n: usize, seed: u64) -> Result<Vec<f64>> {
    let s = schedule.sigmas();
    let top = schedule.top();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = child_rng(seed, streams::GENERATE, i as u64);
            let mut x = s[top] * std_normal(&mut r);
            for t in (1..=top).rev() {
                let d = h.denoise(x, t, s[t]);
                x += (s[t - 1] - s[t]) * (x - d) / s[t];
                if !x.is_finite() {
                    return Err(Error::GenerationFailure { step: top - t });
                }
            }
            x = h.denoise(x, 0, s[0]);
            if !x.is_finite() {
                return Err(Error::GenerationFailure { step: top });
            }
            Ok(x)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub tv_vs_truth: f64,
    pub wasserstein1: f64,
    pub mean: f64,
    pub var: f64,
}

/// `∫|F_n − F|` over the sample's empirical CDF, exact per inter-sample gap.
pub fn wasserstein1(samples: &[f64], truth: &Density1D) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut w = truth.cdf_integral(xs[0]) + truth.sf_integral(xs[xs.len() - 1]);
    for i in 1..xs.len() {
        let (a, b) = (xs[i - 1], xs[i]);
        if b <= a {
            continue;
        }
        let c = i as f64 / n;
        let g = |x: f64| truth.cdf_integral(x);
        let (fa, fb) = (truth.cdf(a), truth.cdf(b));
        // ∫_a^b (c − F) where F ≤ c, ∫ (F − c) where F > c.
        w += if fb <= c {
            c * (b - a) - (g(b) - g(a))
        } else if fa >= c {
            (g(b) - g(a)) - c * (b - a)
        } else {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if truth.cdf(mid) < c {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1e-300) {
                    break;
                }
            }
            let q = 0.5 * (lo + hi);
            (c * (q - a) - (g(q) - g(a))) + ((g(b) - g(q)) - c * (b - q))
        };
    }
    w.max(0.0)
}

/// Kernel density of sorted `xs` at bandwidth `bw`, summing only atoms
/// within 9 bandwidths.
fn kde_pdf_sorted(xs: &[f64], bw: f64, x: f64) -> f64 {
    let lo = xs.partition_point(|&v| v < x - 9.0 * bw);
    let hi = xs.partition_point(|&v| v <= x + 9.0 * bw);
    let s: f64 = xs[lo..hi]
        .iter()
        .map(|&v| {
            let z = (x - v) / bw;
            (-0.5 * z * z).exp()
        })
        .sum();
    s / (xs.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt())
}

/// TV between the samples' KDE at `EVAL_BANDWIDTH` and `truth`, by composite
/// Gauss–Legendre over panels a quarter bandwidth wide.
pub fn kde_tv(samples: &[f64], truth: &Density1D) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let bw = EVAL_BANDWIDTH;
    let (tlo, thi) = truth.support_interval(1e-12);
    let lo = tlo.min(xs[0]) - 9.0 * bw;
    let hi = thi.max(xs[xs.len() - 1]) + 9.0 * bw;
    let panels = (((hi - lo) / (0.25 * bw)).ceil() as usize).max(1);
    let h = (hi - lo) / panels as f64;
    let (nodes, weights) = gauss_legendre(8);
    let inside: f64 = (0..panels)
        .into_par_iter()
        .map(|k| {
            let a = lo + k as f64 * h;
            nodes
                .iter()
                .zip(&weights)
                .map(|(u, w)| {
                    let x = a + 0.5 * h * (u + 1.0);
                    w * (kde_pdf_sorted(&xs, bw, x) - truth.pdf(x)).abs()
                })
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum();
    let outside = truth.cdf(lo) + truth.sf(hi);
    (0.5 * (inside + outside)).clamp(0.0, 1.0)
}

pub fn eval_generated(samples: &[f64], truth: &Density1D) -> Result<EvalReport> {
    if samples.len() < 100 {
        return Err(Error::invalid(format!("need at least 100 samples, got {}", samples.len())));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    Ok(EvalReport {
        n: samples.len(),
        tv_vs_truth: kde_tv(samples, truth),
        wasserstein1: wasserstein1(samples, truth),
        mean: stats::mean(samples),
        var: stats::variance(samples),
    })
}

//! Numerical checks of the KDE estimation bound, the smoothing contraction,
//! the clean-only vs mixed-data estimator comparison and Hoeffding's
//! inequality. Every check returns a report carrying its grid, measured
//! values, bounds and seeds.

use crate::annotate::{bayes_crossing, DEFAULT_TAU};
use crate::densities::{tv_distance, Component, Density1D};
use crate::error::{Error, Result};
use crate::kde::{empirical_tv_error, KdeModel};
use crate::rng::{child_rng, streams};
use crate::schedule::NoiseSchedule;
use crate::stats;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Relative and absolute slack on the contraction inequality.
pub const CONTRACTION_REL_TOL: f64 = 1e-6;
pub const CONTRACTION_ABS_TOL: f64 = 1e-9;
/// Accepted log-log slope window for the estimation rate.
pub const RATE_SLOPE_RANGE: (f64, f64) = (-0.6, -0.4);
/// Mean errors below this at every `n` make the rate fit meaningless.
pub const DEGENERATE_ERROR: f64 = 1e-5;
/// Hoeffding slack, in binomial standard errors of the exceedance rate.
pub const HOEFFDING_SLACK_SE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremId {
    KdeRate,
    Contraction,
    AlgorithmComparison,
    Hoeffding,
    Locality,
}

/// One inequality instance at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub params: BTreeMap<String, f64>,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(check: &str, params: &[(&str, f64)], measured: f64, bound: f64, pass: bool) -> Self {
        Self {
            check: check.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            measured,
            bound,
            pass,
        }
    }
}

/// Per-σ summary of the estimation-rate check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub sigma: f64,
    /// Smallest `C` with `quantile ≤ C·bound` at every `n`.
    pub fitted_c: f64,
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub skipped: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub theorem: TheoremId,
    pub rows: Vec<CheckRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<RateFit>,
    pub pass: bool,
    pub seeds: Vec<u64>,
    pub notes: Vec<String>,
}

impl TheoremReport {
    /// Assembles a report whose pass flag is the conjunction of every row and fit.
    pub fn finish(
        theorem: TheoremId,
        rows: Vec<CheckRow>,
        fits: Vec<RateFit>,
        seeds: Vec<u64>,
        notes: Vec<String>,
    ) -> Self {
        let pass = rows.iter().all(|r| r.pass) && fits.iter().all(|f| f.pass);
        Self { theorem, rows, fits, pass, seeds, notes }
    }
}

/// Diameter of the smallest interval holding both truncated supports.
pub fn joint_diameter(p: &Density1D, q: &Density1D) -> f64 {
    let tail = crate::densities::DIAMETER_TAIL_MASS;
    let (a, b) = p.support_interval(tail);
    let (c, d) = q.support_interval(tail);
    b.max(d) - a.min(c)
}

/// `d_TV(P⊛N_σ, Q⊛N_σ) ≤ d_TV(P, Q)·D/(2σ)` and `≤ d_TV(P, Q)` at every σ.
pub fn check_contraction(p: &Density1D, q: &Density1D, sigmas: &[f64]) -> Result<TheoremReport> {
    if sigmas.is_empty() {
        return Err(Error::invalid("sigma grid is empty"));
    }
    let base = tv_distance(p, q)?;
    let diameter = joint_diameter(p, q);
    let mut rows = Vec::with_capacity(2 * sigmas.len());
    for &s in sigmas {
        let lhs = tv_distance(&p.convolve(s)?, &q.convolve(s)?)?;
        let rhs = base * diameter / (2.0 * s);
        let params = [("sigma", s), ("base_tv", base), ("diameter", diameter)];
        rows.push(CheckRow::new(
            "contraction",
            &params,
            lhs,
            rhs,
            lhs <= rhs * (1.0 + CONTRACTION_REL_TOL) + CONTRACTION_ABS_TOL,
        ));
        rows.push(CheckRow::new(
            "smoothing",
            &params,
            lhs,
            base,
            lhs <= base * (1.0 + CONTRACTION_REL_TOL) + CONTRACTION_ABS_TOL,
        ));
    }
    let note = format!(
        "diameter {diameter} from the support holding all but {:e} of each density's mass",
        crate::densities::DIAMETER_TAIL_MASS
    );
    log::info!("{note}");
    Ok(TheoremReport::finish(TheoremId::Contraction, rows, Vec::new(), Vec::new(), vec![note]))
}

/// Random Gaussian-mixture pair with 1–3 components per side, means in
/// `[-1, 1]` and standard deviations in `[0.02, 0.1]`, so the joint diameter
/// stays below 4.
pub fn random_mixture_pair<R: Rng + ?Sized>(r: &mut R) -> Result<(Density1D, Density1D)> {
    let one = |r: &mut R| {
        let k = r.random_range(1..=3);
        let mut comps: Vec<Component> = (0..k)
            .map(|_| {
                let sd = r.random_range(0.02..0.1);
                Component { w: r.random_range(0.1..1.0), mu: r.random_range(-1.0..1.0), var: sd * sd }
            })
            .collect();
        let total: f64 = comps.iter().map(|c| c.w).sum();
        for c in &mut comps {
            c.w /= total;
        }
        Density1D::mixture(comps)
    };
    let p = one(r)?;
    let q = one(r)?;
    Ok((p, q))
}

/// Right-hand side of the high-probability KDE bound with unit constant:
/// `1/n + 1/(σ²n) + √((ln n + ln(1∨λ) + ln(2/δ))/(σ²n))`.
pub fn kde_bound(n: usize, sigma: f64, lipschitz: f64, delta: f64) -> f64 {
    let n = n as f64;
    let s2n = sigma * sigma * n;
    1.0 / n + 1.0 / s2n + ((n.ln() + lipschitz.max(1.0).ln() + (2.0 / delta).ln()) / s2n).sqrt()
}

/// Mean and `(1-δ)`-quantile of the KDE TV error over an `n` grid per σ,
/// a fitted bound constant per σ, and the log-log slope of the mean error.
pub fn check_kde_rate(
    d: &Density1D,
    ns: &[usize],
    sigmas: &[f64],
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<TheoremReport> {
    if ns.len() < 2 || sigmas.is_empty() {
        return Err(Error::invalid("rate check needs at least two n values and one sigma"));
    }
    if ns.contains(&0) || trials == 0 {
        return Err(Error::invalid("n values and trials must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    let lipschitz = d.lipschitz_constant();
    let mut notes = vec![format!("lipschitz constant {lipschitz}")];
    if trials < 100 {
        notes.push(format!("only {trials} trials; quantiles are coarse"));
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut seeds = Vec::new();
    for (si, &s) in sigmas.iter().enumerate() {
        let mut means = Vec::with_capacity(ns.len());
        let mut quants = Vec::with_capacity(ns.len());
        let mut bounds = Vec::with_capacity(ns.len());
        for (ni, &n) in ns.iter().enumerate() {
            let cell_seed = crate::rng::derive_seed(seed, si as u64, ni as u64);
            seeds.push(cell_seed);
            let e = empirical_tv_error(d, n, s, trials, cell_seed)?;
            means.push(e.mean);
            quants.push(stats::quantile(&e.trials, 1.0 - delta));
            bounds.push(kde_bound(n, s, lipschitz, delta));
        }
        let fitted_c =
            quants.iter().zip(&bounds).map(|(q, b)| if b.is_finite() { q / b } else { 0.0 }).fold(0.0, f64::max);
        for (i, &n) in ns.iter().enumerate() {
            let bound = fitted_c * bounds[i];
            let ok = !bounds[i].is_finite() || quants[i] <= bound;
            rows.push(CheckRow::new(
                "quantile",
                &[("sigma", s), ("n", n as f64), ("mean_error", means[i]), ("unit_bound", bounds[i])],
                quants[i],
                bound,
                ok,
            ));
        }
        let fit = if means.iter().all(|&m| m < DEGENERATE_ERROR) {
            RateFit {
                sigma: s,
                fitted_c,
                slope: None,
                slope_se: None,
                skipped: Some(format!("every mean error is below {DEGENERATE_ERROR:e}; slope is meaningless")),
                pass: true,
            }
        } else {
            let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
            let y: Vec<f64> = means.iter().map(|m| m.max(f64::MIN_POSITIVE).ln()).collect();
            let line = stats::linear_fit(&x, &y);
            RateFit {
                sigma: s,
                fitted_c,
                slope: Some(line.slope),
                slope_se: Some(line.slope_se),
                skipped: None,
                pass: (RATE_SLOPE_RANGE.0..=RATE_SLOPE_RANGE.1).contains(&line.slope),
            }
        };
        fits.push(fit);
    }
    Ok(TheoremReport::finish(TheoremId::KdeRate, rows, fits, seeds, notes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingReport {
    pub sigmas: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    pub trials: usize,
    pub seed: u64,
    /// Mean TV error of the KDE on `n1` clean draws.
    pub alg1_mean: Vec<f64>,
    pub alg1_se: Vec<f64>,
    /// Mean TV error of the KDE on the same `n1` clean draws plus `n2` biased ones.
    pub alg2_mean: Vec<f64>,
    pub alg2_se: Vec<f64>,
    /// Smallest grid σ where the mixed estimator's mean error is lower.
    pub crossing: Option<f64>,
    /// Mixed estimator strictly better at every grid σ from the crossing up.
    pub dominates_above_crossing: bool,
    /// Fraction of grid levels where the mixed estimator is better.
    pub alg2_win_fraction: f64,
    /// Level where the Bayes classifier's expected output reaches τ = 0.45.
    pub annotate_sigma: Option<f64>,
    /// `max(σ*, σ_annot) / min(σ*, σ_annot)` when both exist.
    pub correspondence_ratio: Option<f64>,
}

impl CrossingReport {
    pub fn to_theorem_report(&self) -> TheoremReport {
        let rows = self
            .sigmas
            .iter()
            .enumerate()
            .filter(|(_, &s)| self.crossing.is_some_and(|c| s >= c))
            .map(|(i, &s)| {
                CheckRow::new(
                    "mixed-below-clean",
                    &[("sigma", s), ("n1", self.n1 as f64), ("n2", self.n2 as f64)],
                    self.alg2_mean[i],
                    self.alg1_mean[i],
                    self.alg2_mean[i] < self.alg1_mean[i],
                )
            })
            .collect::<Vec<_>>();
        let mut notes = Vec::new();
        match (self.crossing, self.correspondence_ratio) {
            (None, _) => notes.push("no crossing on the grid".to_string()),
            (Some(c), Some(r)) => notes.push(format!(
                "crossing {c}, classifier level {}, ratio {r:.3} ({} the factor-3 band)",
                self.annotate_sigma.unwrap_or(f64::NAN),
                if r <= 3.0 { "within" } else { "outside" }
            )),
            (Some(c), None) => notes.push(format!("crossing {c}; classifier never reached tau")),
        }
        let mut report =
            TheoremReport::finish(TheoremId::AlgorithmComparison, rows, Vec::new(), vec![self.seed], notes);
        report.pass = report.pass && self.crossing.is_some() && self.dominates_above_crossing;
        report
    }
}

fn kde_error(target: &Density1D, atoms: Vec<f64>, sigma: f64) -> Result<f64> {
    let (model, _) = KdeModel::clean(atoms)?.mixture(sigma)?;
    tv_distance(target, &model)
}

/// Paired trials of the clean-only KDE (`n1` draws of `p0`) against the
/// mixed KDE (the same draws plus `n2` of `q0`), both scored against `p0⊛N_σ`.
pub fn compare_algorithms(
    p0: &Density1D,
    q0: &Density1D,
    n1: usize,
    n2: usize,
    sigmas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<CrossingReport> {
    if n1 < 8 {
        return Err(Error::invalid("n1 must be >= 8"));
    }
    if sigmas.is_empty() || trials == 0 {
        return Err(Error::invalid("need a non-empty sigma grid and trials >= 1"));
    }
    if sigmas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("sigma grid must be strictly increasing"));
    }
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .map(|t| {
            (
                p0.sample(n1, &mut child_rng(seed, streams::DATA_CLEAN, t as u64)),
                q0.sample(n2, &mut child_rng(seed, streams::DATA_CORRUPT, t as u64)),
            )
        })
        .collect();
    let mut out = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &s in sigmas {
        let target = p0.convolve(s)?;
        let errs: Result<Vec<(f64, f64)>> = draws
            .par_iter()
            .map(|(clean, biased)| {
                let e1 = kde_error(&target, clean.clone(), s)?;
                let e2 = if biased.is_empty() {
                    e1
                } else {
                    let mut all = clean.clone();
                    all.extend_from_slice(biased);
                    kde_error(&target, all, s)?
                };
                Ok((e1, e2))
            })
            .collect();
        let (e1, e2): (Vec<f64>, Vec<f64>) = errs?.into_iter().unzip();
        let se = |v: &[f64]| if v.len() > 1 { stats::std_error(v) } else { 0.0 };
        out.0.push(stats::mean(&e1));
        out.1.push(se(&e1));
        out.2.push(stats::mean(&e2));
        out.3.push(se(&e2));
    }
    let (alg1_mean, alg1_se, alg2_mean, alg2_se) = out;
    let wins: Vec<bool> = alg1_mean.iter().zip(&alg2_mean).map(|(a, b)| b < a).collect();
    let first = wins.iter().position(|&w| w);
    let crossing = first.map(|i| sigmas[i]);
    let dominates_above_crossing = first.is_some_and(|i| wins[i..].iter().all(|&w| w));
    let schedule = NoiseSchedule::log_spaced(sigmas[0].min(0.002), sigmas[sigmas.len() - 1].max(80.0), 64)?;
    let annotate_sigma = bayes_crossing(p0, q0, DEFAULT_TAU, &schedule)?.map(|c| c.sigma);
    let correspondence_ratio = match (crossing, annotate_sigma) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some(a.max(b) / a.min(b)),
        _ => None,
    };
    if let Some(r) = correspondence_ratio {
        log::info!("crossing vs classifier level ratio {r:.3}");
    }
    Ok(CrossingReport {
        sigmas: sigmas.to_vec(),
        n1,
        n2,
        trials,
        seed,
        alg1_mean,
        alg1_se,
        alg2_mean,
        alg2_se,
        crossing,
        dominates_above_crossing,
        alg2_win_fraction: wins.iter().filter(|&&w| w).count() as f64 / wins.len() as f64,
        annotate_sigma,
        correspondence_ratio,
    })
}

/// Bounded distributions with a known range and mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundedSource {
    Uniform { a: f64, b: f64 },
    Bernoulli { p: f64 },
    Constant { value: f64 },
}

impl BoundedSource {
    pub fn range(&self) -> (f64, f64) {
        match *self {
            BoundedSource::Uniform { a, b } => (a, b),
            BoundedSource::Bernoulli { .. } => (0.0, 1.0),
            BoundedSource::Constant { value } => (value, value),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            BoundedSource::Uniform { a, b } => 0.5 * (a + b),
            BoundedSource::Bernoulli { p } => p,
            BoundedSource::Constant { value } => value,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            BoundedSource::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            BoundedSource::Bernoulli { p } => (0.0..=1.0).contains(&p),
            BoundedSource::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid bounded source {self:?}")))
        }
    }

    fn draw<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        match *self {
            BoundedSource::Uniform { a, b } => a + (b - a) * r.random::<f64>(),
            BoundedSource::Bernoulli { p } => f64::from(u8::from(r.random::<f64>() < p)),
            BoundedSource::Constant { value } => value,
        }
    }
}

/// `2·exp(−2nt²/(b−a)²)`; a zero-width range gives 0 for `t > 0`.
pub fn hoeffding_bound(n: usize, t: f64, width: f64) -> f64 {
    if t <= 0.0 {
        return 2.0;
    }
    if width <= 0.0 {
        return 0.0;
    }
    2.0 * (-2.0 * n as f64 * t * t / (width * width)).exp()
}

/// Frequency of `|mean_n − μ| ≥ t` over `trials` sample means against the
/// Hoeffding bound, allowing three binomial standard errors of slack.
pub fn hoeffding_oracle(
    source: BoundedSource,
    n: usize,
    ts: &[f64],
    trials: usize,
    seed: u64,
) -> Result<TheoremReport> {
    source.validate()?;
    if n == 0 || trials == 0 || ts.is_empty() || ts.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::invalid("hoeffding oracle needs n, trials >= 1 and a grid of t >= 0"));
    }
    let mu = source.mean();
    let (a, b) = source.range();
    let devs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = child_rng(seed, streams::TRIAL, i as u64);
            let s: f64 = (0..n).map(|_| source.draw(&mut r)).sum();
            (s / n as f64 - mu).abs()
        })
        .collect();
    let rows = ts
        .iter()
        .map(|&t| {
            let freq = devs.iter().filter(|&&d| d >= t).count() as f64 / trials as f64;
            let bound = hoeffding_bound(n, t, b - a);
            let p = bound.min(1.0);
            let slack = HOEFFDING_SLACK_SE * (p * (1.0 - p) / trials as f64).sqrt();
            CheckRow::new(
                "hoeffding",
                &[("t", t), ("n", n as f64), ("trials", trials as f64), ("slack", slack)],
                freq,
                bound,
                freq <= bound + slack,
            )
        })
        .collect();
    Ok(TheoremReport::finish(TheoremId::Hoeffding, rows, Vec::new(), vec![seed], Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::big_phi;

    #[test]
    fn identical_pair_contracts_trivially() {
        let p = Density1D::gaussian(0.3, 0.5).unwrap();
        let r = check_contraction(&p, &p, &[0.5, 1.0, 4.0]).unwrap();
        assert!(r.pass);
        assert!(r.rows.iter().all(|row| row.measured < 1e-9));
    }

    #[test]
    fn near_point_masses_match_closed_form() {
        let p = Density1D::gaussian(0.0, 1e-12).unwrap();
        let q = Density1D::gaussian(1.0, 1e-12).unwrap();
        let r = check_contraction(&p, &q, &[1.0]).unwrap();
        let expected = 2.0 * big_phi(0.5) - 1.0;
        assert!((r.rows[0].measured - expected).abs() < 1e-6, "{}", r.rows[0].measured);
        assert!((r.rows[0].bound - 0.5).abs() < 1e-4);
        assert!(r.pass);
    }

    #[test]
    fn kde_bound_shape() {
        let b = kde_bound(100, 1.0, 1.0, 0.1);
        let expected = 0.01 + 0.01 + ((100f64.ln() + 20f64.ln()) / 100.0).sqrt();
        assert!((b - expected).abs() < 1e-15);
        assert!(kde_bound(100, 1.0, 0.5, 0.1) == b);
        assert!(kde_bound(400, 1.0, 1.0, 0.1) < b);
    }

    #[test]
    fn hoeffding_bound_edges() {
        assert_eq!(hoeffding_bound(10, 0.0, 1.0), 2.0);
        assert_eq!(hoeffding_bound(10, 0.1, 0.0), 0.0);
        assert!((hoeffding_bound(100, 0.1, 1.0) - 2.0 * (-2f64).exp()).abs() < 1e-15);
    }
}

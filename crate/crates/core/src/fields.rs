//! Stationary zero-mean Gaussian fields on a ring of `L` pixels.
//!
//! A circulant covariance makes every pixel statistically identical, so a
//! single windowed solve gives the optimal restricted-context denoiser for all
//! positions at once.

use crate::error::{Error, Result};
use crate::rng::{child_rng, std_normal, streams};
use crate::schedule::NoiseSchedule;
use crate::stats;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Spectral entries below this are treated as negative.
pub const SPECTRUM_TOL: f64 = -1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSpec {
    covariance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldSpec", into = "FieldSpec")]
pub struct GaussianField {
    cov: Vec<f64>,
}

impl TryFrom<FieldSpec> for GaussianField {
    type Error = Error;
    fn try_from(s: FieldSpec) -> Result<Self> {
        GaussianField::new(s.covariance)
    }
}

impl From<GaussianField> for FieldSpec {
    fn from(f: GaussianField) -> Self {
        FieldSpec { covariance: f.cov }
    }
}

impl GaussianField {
    /// `cov[d]` is the covariance at circular lag `d`; it must satisfy
    /// `cov[d] = cov[L−d]` and have a nonnegative discrete spectrum.
    pub fn new(cov: Vec<f64>) -> Result<Self> {
        let l = cov.len();
        if l == 0 {
            return Err(Error::invalid("field length must be >= 1"));
        }
        if cov.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("covariance entries must be finite"));
        }
        if !(cov[0] > 0.0) {
            return Err(Error::invalid("C(0) must be > 0"));
        }
        for d in 1..l {
            let (a, b) = (cov[d], cov[l - d]);
            if (a - b).abs() > 1e-12 * cov[0] {
                return Err(Error::invalid(format!("covariance not circulant-symmetric at lag {d}")));
            }
        }
        let f = Self { cov };
        if let Some((j, s)) = f.spectrum().iter().enumerate().find(|(_, &s)| s < SPECTRUM_TOL) {
            return Err(Error::invalid(format!("covariance not positive semidefinite: spectrum[{j}] = {s:e}")));
        }
        Ok(f)
    }

    /// `C(d) = profile(min(d, L−d))`.
    pub fn from_profile<F: Fn(usize) -> f64>(len: usize, profile: F) -> Result<Self> {
        Self::new((0..len).map(|d| profile(d.min(len - d))).collect())
    }

    /// `C(d) = rho^min(d, L−d)`.
    pub fn geometric(len: usize, rho: f64) -> Result<Self> {
        Self::from_profile(len, |d| rho.powi(d as i32))
    }

    pub fn white(len: usize, var: f64) -> Result<Self> {
        Self::from_profile(len, |d| if d == 0 { var } else { 0.0 })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn len(&self) -> usize {
        self.cov.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    pub fn variance(&self) -> f64 {
        self.cov[0]
    }

    /// Covariance at signed offset `d`, wrapped onto the ring.
    pub fn at_lag(&self, d: i64) -> f64 {
        let l = self.cov.len() as i64;
        self.cov[d.rem_euclid(l) as usize]
    }

    /// Real discrete spectrum `S_j = Σ_d C(d) cos(2π j d / L)`.
    pub fn spectrum(&self) -> Vec<f64> {
        let l = self.cov.len();
        (0..l)
            .map(|j| {
                self.cov
                    .iter()
                    .enumerate()
                    .map(|(d, c)| {
                        let ph = 2.0 * std::f64::consts::PI * ((j * d) % l) as f64 / l as f64;
                        c * ph.cos()
                    })
                    .sum()
            })
            .collect()
    }

    /// Covariance of `k` consecutive pixels.
    pub fn window_covariance(&self, k: usize) -> Result<DMatrix<f64>> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!("window {k} outside 1..={}", self.len())));
        }
        Ok(DMatrix::from_fn(k, k, |i, j| self.at_lag(i as i64 - j as i64)))
    }

    /// Mean squared error of the best denoiser seeing every pixel.
    pub fn full_context_loss(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        let s2 = sigma * sigma;
        let spec = self.spectrum();
        Ok(spec
            .iter()
            .map(|&s| {
                let s = s.max(0.0);
                s * s2 / (s + s2)
            })
            .sum::<f64>()
            / self.len() as f64)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma must be > 0, got {sigma}")))
    }
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::numeric(format!("{what} is not positive definite"), f64::NAN))
}

fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowDenoiser {
    pub k: usize,
    pub sigma: f64,
    pub weights: Vec<f64>,
    pub residual_loss: f64,
}

/// Best linear (hence Bayes, for Gaussians) estimate of the centre pixel from a
/// centred window of `k` noisy pixels. `k` is odd, or `k = L` for the full ring.
pub fn optimal_window_denoiser(f: &GaussianField, sigma: f64, k: usize) -> Result<WindowDenoiser> {
    check_sigma(sigma)?;
    if k == 0 || k > f.len() || (k.is_multiple_of(2) && k != f.len()) {
        return Err(Error::invalid(format!("window size must be odd and <= {} (or equal to it), got {k}", f.len())));
    }
    let centre = (k / 2) as i64;
    let mut a = f.window_covariance(k)?;
    for i in 0..k {
        a[(i, i)] += sigma * sigma;
    }
    let c = DVector::from_fn(k, |i, _| f.at_lag(i as i64 - centre));
    let ch = cholesky(a, "noisy window covariance")?;
    let w = ch.solve(&c);
    let residual = (f.variance() - c.dot(&w)).max(0.0);
    Ok(WindowDenoiser { k, sigma, weights: w.iter().copied().collect(), residual_loss: residual })
}

/// Odd window sizes `1, 3, …` up to `L`, with `L` itself appended when even.
pub fn window_grid(len: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (1..=len).step_by(2).collect();
    if len.is_multiple_of(2) {
        ks.push(len);
    }
    ks
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextCurve {
    pub sigma: f64,
    pub points: Vec<(usize, f64)>,
    pub full_context_loss: f64,
    pub plateau_k: usize,
    pub eps: f64,
}

/// Residual loss against window size, plus the smallest window within `eps`
/// (absolute) of the full-context loss.
pub fn context_curve(f: &GaussianField, sigma: f64, ks: &[usize], eps: f64) -> Result<ContextCurve> {
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("k-grid must be strictly increasing"));
    }
    let points: Result<Vec<(usize, f64)>> =
        ks.par_iter().map(|&k| optimal_window_denoiser(f, sigma, k).map(|d| (k, d.residual_loss))).collect();
    Ok(ContextCurve {
        sigma,
        points: points?,
        full_context_loss: f.full_context_loss(sigma)?,
        plateau_k: plateau_k(f, sigma, eps)?,
        eps,
    })
}

pub fn plateau_k(f: &GaussianField, sigma: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be > 0, got {eps}")));
    }
    let target = f.full_context_loss(sigma)? + eps;
    for k in window_grid(f.len()) {
        if optimal_window_denoiser(f, sigma, k)?.residual_loss <= target {
            return Ok(k);
        }
    }
    Ok(f.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowMap {
    pub sigmas: Vec<f64>,
    pub eps: f64,
    /// `plateau_k` per level as computed.
    pub raw: Vec<usize>,
    /// Running maximum of `raw`, the map used for crop annotation.
    pub k: Vec<usize>,
    pub monotone: bool,
}

pub fn window_to_sigma_map(f: &GaussianField, schedule: &NoiseSchedule, eps: f64) -> Result<WindowMap> {
    let raw: Result<Vec<usize>> = schedule.sigmas().par_iter().map(|&s| plateau_k(f, s, eps)).collect();
    let raw = raw?;
    let monotone = raw.windows(2).all(|w| w[1] >= w[0]);
    let mut k = raw.clone();
    for i in 1..k.len() {
        k[i] = k[i].max(k[i - 1]);
    }
    Ok(WindowMap { sigmas: schedule.sigmas().to_vec(), eps, raw, k, monotone })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CropDistance {
    pub k: usize,
    pub bhattacharyya: f64,
    pub tv_mc: f64,
    pub tv_se: f64,
}

pub const CROP_MC_DRAWS: usize = 100_000;

/// Log-density difference `ln p1(y) − ln p2(y)` of two zero-mean Gaussians.
pub(crate) struct GaussianPair {
    pub(crate) c1: Cholesky<f64, Dyn>,
    pub(crate) c2: Cholesky<f64, Dyn>,
    half_logdet_gap: f64,
}

impl GaussianPair {
    pub(crate) fn new(f1: &GaussianField, f2: &GaussianField, k: usize) -> Result<Self> {
        let c1 = cholesky(f1.window_covariance(k)?, "first window covariance")?;
        let c2 = cholesky(f2.window_covariance(k)?, "second window covariance")?;
        let half_logdet_gap = 0.5 * (log_det(&c2) - log_det(&c1));
        Ok(Self { c1, c2, half_logdet_gap })
    }

    fn quad(ch: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> f64 {
        let z = ch.l_dirty().solve_lower_triangular(y).expect("Cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    pub(crate) fn log_ratio(&self, y: &DVector<f64>) -> f64 {
        0.5 * (Self::quad(&self.c2, y) - Self::quad(&self.c1, y)) + self.half_logdet_gap
    }

    /// `y = L z` for the chosen side.
    pub(crate) fn draw(&self, first: bool, z: &DVector<f64>) -> DVector<f64> {
        let l = if first { self.c1.l() } else { self.c2.l() };
        l * z
    }
}

/// Bhattacharyya distance between the `k`-pixel window marginals, plus a
/// likelihood-ratio Monte Carlo estimate of their TV distance.
pub fn crop_marginal_distance(f1: &GaussianField, f2: &GaussianField, k: usize, seed: u64) -> Result<CropDistance> {
    crop_marginal_distance_with(f1, f2, k, seed, CROP_MC_DRAWS)
}

pub fn crop_marginal_distance_with(
    f1: &GaussianField,
    f2: &GaussianField,
    k: usize,
    seed: u64,
    draws: usize,
) -> Result<CropDistance> {
    if k == 0 || k > f1.len().min(f2.len()) {
        return Err(Error::invalid(format!("window {k} exceeds field lengths")));
    }
    if draws < 2 {
        return Err(Error::invalid("need at least 2 Monte Carlo draws"));
    }
    let s1 = f1.window_covariance(k)?;
    let s2 = f2.window_covariance(k)?;
    let mid = (&s1 + &s2) * 0.5;
    let pair = GaussianPair::new(f1, f2, k)?;
    let cm = cholesky(mid, "averaged window covariance")?;
    let bhattacharyya = (0.5 * (log_det(&cm) - 0.5 * (log_det(&pair.c1) + log_det(&pair.c2)))).max(0.0);

    // TV = E_{y~p1}[(1 − p2/p1)_+].
    const CHUNK: usize = 4096;
    let chunks = draws.div_ceil(CHUNK);
    let vals: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = child_rng(seed, streams::CROP_MC, c as u64);
            let n = CHUNK.min(draws - c * CHUNK);
            let pair = &pair;
            (0..n)
                .map(move |_| {
                    let z = DVector::from_fn(k, |_, _| std_normal(&mut r));
                    let y = pair.draw(true, &z);
                    (1.0 - (-pair.log_ratio(&y)).exp()).max(0.0)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(CropDistance { k, bhattacharyya, tv_mc: stats::mean(&vals), tv_se: stats::std_error(&vals) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_validation() {
        assert!(GaussianField::new(vec![]).is_err());
        assert!(GaussianField::new(vec![0.0, 0.0]).is_err());
        assert!(GaussianField::new(vec![1.0, 0.5, 0.2]).is_err());
        // Spectrum (2.8, 0.1, 0.1) versus (-0.8, 1.9, 1.9).
        assert!(GaussianField::new(vec![1.0, 0.9, 0.9]).is_ok());
        assert!(GaussianField::new(vec![1.0, -0.9, -0.9]).is_err());
        let g = GaussianField::from_json_str(r#"{"covariance":[2,1,1]}"#).unwrap();
        assert_eq!(g.variance(), 2.0);
        assert!(GaussianField::from_json_str(r#"{"covariance":[1],"len":1}"#).is_err());
    }

    #[test]
    fn white_field_gains_nothing_from_context() {
        let f = GaussianField::white(16, 1.0).unwrap();
        for s in [0.1, 1.0, 3.0] {
            let d1 = optimal_window_denoiser(&f, s, 1).unwrap();
            assert!((d1.weights[0] - 1.0 / (1.0 + s * s)).abs() < 1e-15);
            assert!((d1.residual_loss - s * s / (1.0 + s * s)).abs() < 1e-15);
            let d3 = optimal_window_denoiser(&f, s, 3).unwrap();
            assert!((d3.residual_loss - d1.residual_loss).abs() < 1e-15);
            assert_eq!(plateau_k(&f, s, 1e-3).unwrap(), 1);
        }
    }

    #[test]
    fn huge_noise_returns_prior_variance() {
        let f = GaussianField::geometric(64, 0.9).unwrap();
        let d = optimal_window_denoiser(&f, 1e3, 9).unwrap();
        assert!((d.residual_loss - f.variance()).abs() < 1e-3);
    }

    #[test]
    fn window_size_validation() {
        let f = GaussianField::geometric(8, 0.5).unwrap();
        assert!(optimal_window_denoiser(&f, 1.0, 2).is_err());
        assert!(optimal_window_denoiser(&f, 1.0, 9).is_err());
        assert!(optimal_window_denoiser(&f, 1.0, 8).is_ok());
        assert!(optimal_window_denoiser(&f, 0.0, 1).is_err());
        assert_eq!(window_grid(8), vec![1, 3, 5, 7, 8]);
        assert_eq!(window_grid(5), vec![1, 3, 5]);
    }

    #[test]
    fn identical_fields_have_zero_distance() {
        let f = GaussianField::geometric(16, 0.8).unwrap();
        for k in [1, 4, 9] {
            let d = crop_marginal_distance_with(&f, &f, k, 1, 1000).unwrap();
            assert!(d.bhattacharyya.abs() < 1e-12);
            assert_eq!(d.tv_mc, 0.0);
        }
    }
}

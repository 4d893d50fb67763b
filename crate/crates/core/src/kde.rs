//! The empirical diffusion model: a Gaussian KDE over a finite sample.
//!
//! The optimum of the denoising objective over a finite training set is the
//! kernel density estimate smoothed at the current noise level, with the
//! softmax-weighted atom average as its posterior mean. Atoms annotated with
//! a minimum noise level `s` already carry noise of variance `s²`, so they
//! contribute kernels of variance `σ² − s²` and are excluded once `s ≥ σ`.

use crate::densities::{tv_distance, Component, Density1D};
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KdeModelSpec {
    atoms: Vec<f64>,
    #[serde(default)]
    sigma_min: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KdeModelSpec", into = "KdeModelSpec")]
pub struct KdeModel {
    atoms: Vec<f64>,
    sigma_min: Vec<f64>,
}

impl TryFrom<KdeModelSpec> for KdeModel {
    type Error = Error;
    fn try_from(s: KdeModelSpec) -> Result<Self> {
        let n = s.atoms.len();
        KdeModel::new(s.atoms, s.sigma_min.unwrap_or_else(|| vec![0.0; n]))
    }
}

impl From<KdeModel> for KdeModelSpec {
    fn from(m: KdeModel) -> Self {
        KdeModelSpec { atoms: m.atoms, sigma_min: Some(m.sigma_min) }
    }
}

/// A KDE quantity together with the number of atoms left out because their
/// annotation noise is not below the query level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub excluded: usize,
}

impl KdeModel {
    pub fn new(atoms: Vec<f64>, sigma_min: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("KDE model needs at least one atom"));
        }
        if atoms.len() != sigma_min.len() {
            return Err(Error::invalid(format!("{} atoms but {} sigma_min entries", atoms.len(), sigma_min.len())));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("atoms must be finite"));
        }
        if sigma_min.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("sigma_min entries must be finite and >= 0"));
        }
        Ok(Self { atoms, sigma_min })
    }

    /// All atoms clean (`sigma_min = 0`).
    pub fn clean(atoms: Vec<f64>) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![0.0; n])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn sigma_min(&self) -> &[f64] {
        &self.sigma_min
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(atom, effective kernel variance)` for atoms usable at `sigma`.
    fn eligible(&self, sigma: f64) -> Result<(Vec<(f64, f64)>, usize)> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
        }
        let s2 = sigma * sigma;
        let kept: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .zip(&self.sigma_min)
            .filter(|(_, &s)| s < sigma)
            .map(|(&a, &s)| (a, s2 - s * s))
            .collect();
        let excluded = self.atoms.len() - kept.len();
        if kept.is_empty() {
            return Err(Error::EmptyModel { sigma });
        }
        Ok((kept, excluded))
    }

    /// The smoothed empirical density at level `sigma` as an explicit mixture.
    pub fn mixture(&self, sigma: f64) -> Result<(Density1D, usize)> {
        let (kept, excluded) = self.eligible(sigma)?;
        let w = 1.0 / kept.len() as f64;
        let d = Density1D::mixture(kept.iter().map(|&(mu, var)| Component { w, mu, var }).collect())?;
        Ok((d, excluded))
    }

    pub fn density_at(&self, x: f64, sigma: f64) -> Result<Evaluation> {
        let (kept, excluded) = self.eligible(sigma)?;
        let n = kept.len() as f64;
        let value = kept.iter().map(|&(mu, var)| crate::special::normal_pdf(x, mu, var)).sum::<f64>() / n;
        Ok(Evaluation { value, excluded })
    }

    /// `E[X_{t_min} | X_t = x_t]` under the KDE mixture: a softmax over atoms
    /// reduced in the log domain.
    pub fn posterior_mean(&self, x_t: f64, sigma: f64) -> Result<Evaluation> {
        let (kept, excluded) = self.eligible(sigma)?;
        let logw: Vec<f64> = kept
            .iter()
            .map(|&(mu, var)| {
                let d = x_t - mu;
                -0.5 * d * d / var - 0.5 * var.ln()
            })
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (&(mu, _), &lw) in kept.iter().zip(&logw) {
            let e = (lw - max).exp();
            num += e * mu;
            den += e;
        }
        Ok(Evaluation { value: num / den, excluded })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvErrorStats {
    pub mean: f64,
    pub p95: f64,
    pub trials: Vec<f64>,
}

/// TV error between `d ⊛ N(0, σ²)` and the KDE of `n` fresh draws, over
/// `trials` independent trials seeded from `seed`.
pub fn empirical_tv_error(d: &Density1D, n: usize, sigma: f64, trials: usize, seed: u64) -> Result<TvErrorStats> {
    if n == 0 || trials == 0 {
        return Err(Error::invalid("empirical_tv_error needs n >= 1 and trials >= 1"));
    }
    let target = d.convolve(sigma)?;
    let errors: Result<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::child_rng(seed, streams::TRIAL, t as u64);
            let xs = d.sample(n, &mut r);
            let (model, _) = KdeModel::clean(xs)?.mixture(sigma)?;
            tv_distance(&target, &model)
        })
        .collect();
    let errors = errors?;
    Ok(TvErrorStats { mean: stats::mean(&errors), p95: stats::quantile(&errors, 0.95), trials: errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::phi;

    #[test]
    fn density_examples() {
        let m = KdeModel::clean(vec![0.0]).unwrap();
        let v = m.density_at(0.0, 1.0).unwrap();
        assert!((v.value - 0.398_942_280_401_432_7).abs() < 1e-15);
        let m = KdeModel::clean(vec![-1.0, 1.0]).unwrap();
        assert!((m.density_at(0.0, 1.0).unwrap().value - phi(1.0)).abs() < 1e-15);
        let m = KdeModel::new(vec![0.0], vec![1.0]).unwrap();
        let v = m.density_at(0.0, 2f64.sqrt()).unwrap();
        assert!((v.value - phi(0.0)).abs() < 1e-15);
        assert_eq!(v.excluded, 0);
    }

    #[test]
    fn posterior_examples() {
        let m = KdeModel::clean(vec![-1.0, 1.0]).unwrap();
        assert_eq!(m.posterior_mean(0.0, 1.0).unwrap().value, 0.0);
        let m = KdeModel::clean(vec![0.0, 2.0]).unwrap();
        let expected = 2.0 / (std::f64::consts::E + 1.0);
        assert!((m.posterior_mean(0.5, 1.0).unwrap().value - expected).abs() < 1e-15);
        let m = KdeModel::clean(vec![3.25]).unwrap();
        for x in [-1e6, 0.0, 7.0] {
            assert_eq!(m.posterior_mean(x, 0.3).unwrap().value, 3.25);
        }
    }

    #[test]
    fn far_atoms_do_not_underflow() {
        let m = KdeModel::clean(vec![1000.0, 1001.0]).unwrap();
        let v = m.posterior_mean(0.0, 1.0).unwrap().value;
        assert!((v - 1000.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn ineligible_atoms_are_excluded_and_reported() {
        let m = KdeModel::new(vec![0.0, 5.0], vec![0.0, 2.0]).unwrap();
        let v = m.posterior_mean(4.0, 1.0).unwrap();
        assert_eq!(v.excluded, 1);
        assert_eq!(v.value, 0.0);
        let only_noisy = KdeModel::new(vec![5.0], vec![2.0]).unwrap();
        assert!(matches!(only_noisy.density_at(0.0, 2.0), Err(Error::EmptyModel { .. })));
        assert!(matches!(m.density_at(0.0, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn model_validation_and_json() {
        assert!(KdeModel::clean(vec![]).is_err());
        assert!(KdeModel::new(vec![1.0], vec![]).is_err());
        assert!(KdeModel::new(vec![1.0], vec![-0.1]).is_err());
        let m = KdeModel::from_json_str(r#"{"atoms":[0.5,1.5],"sigma_min":[0,0.2]}"#).unwrap();
        assert_eq!(m.sigma_min(), &[0.0, 0.2]);
        let m = KdeModel::from_json_str(r#"{"atoms":[0.5]}"#).unwrap();
        assert_eq!(m.sigma_min(), &[0.0]);
        assert!(KdeModel::from_json_str(r#"{"atoms":[0.5],"bandwidth":1}"#).is_err());
    }

    #[test]
    fn tv_error_validation() {
        let d = Density1D::gaussian(0.0, 1.0).unwrap();
        assert!(empirical_tv_error(&d, 0, 1.0, 1, 0).is_err());
        assert!(empirical_tv_error(&d, 1, 1.0, 0, 0).is_err());
    }
}

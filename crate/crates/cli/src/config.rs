//! Experiment configuration. One JSON file holds a global seed and one block
//! per subcommand; only the block for the command being run is required.

use crate::CliError;
use ambient_core::annotate::ClassifierKind;
use ambient_core::densities::Density1D;
use ambient_core::fields::GaussianField;
use ambient_core::pipeline::PipelineConfig;
use ambient_core::schedule::{MaskEntry, NoiseSchedule, WeightRule};
use ambient_core::verify::BoundedSource;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used when `--seed` is not given.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub annotate: Option<AnnotateConfig>,
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub fields: Option<FieldsConfig>,
}

/// A parsed config together with the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn parse_config(bytes: &[u8]) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse_config(&bytes)?;
    let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, sha256 })
}

fn default_bayes() -> ClassifierKind {
    ClassifierKind::BayesExact
}
fn default_n_samples() -> usize {
    1000
}
fn default_n_fit() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateConfig {
    pub clean: Density1D,
    pub corrupt: Density1D,
    #[serde(default)]
    pub schedule: Option<NoiseSchedule>,
    #[serde(default = "default_bayes")]
    pub classifier: ClassifierKind,
    pub tau: f64,
    /// Corrupted draws annotated one by one.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Draws per class used to fit the learned classifier.
    #[serde(default = "default_n_fit")]
    pub n_fit: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub theorem1: Theorem1Config,
    #[serde(default)]
    pub theorem2: Theorem2Config,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub hoeffding: HoeffdingConfig,
    #[serde(default)]
    pub locality: LocalityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem1Config {
    pub density: Density1D,
    pub ns: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub delta: f64,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Self {
            density: Density1D::tent(),
            ns: (0..8).map(|i| 64usize << i).collect(),
            sigmas: vec![0.5, 1.0, 2.0],
            trials: 200,
            delta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem2Config {
    /// Random Gaussian-mixture pairs drawn from the seed.
    pub random_pairs: usize,
    /// Extra explicit `[p, q]` pairs.
    pub pairs: Vec<[Density1D; 2]>,
    pub sigmas: Vec<f64>,
}

impl Default for Theorem2Config {
    fn default() -> Self {
        Self { random_pairs: 100, pairs: Vec::new(), sigmas: geometric_grid(0.5, 8.0, 8) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub p0: Density1D,
    pub q0: Density1D,
    pub n1: usize,
    pub n2: usize,
    pub sigmas: Vec<f64>,
    pub trials: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            p0: Density1D::gaussian(0.0, 1.0).expect("valid"),
            q0: Density1D::gaussian(0.0, 2.0).expect("valid"),
            n1: 32,
            n2: 2048,
            sigmas: geometric_grid(0.5, 16.0, 11),
            trials: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoeffdingConfig {
    pub source: BoundedSource,
    pub n: usize,
    pub ts: Vec<f64>,
    pub trials: usize,
}

impl Default for HoeffdingConfig {
    fn default() -> Self {
        Self {
            source: BoundedSource::Uniform { a: 0.0, b: 1.0 },
            n: 100,
            ts: vec![0.0, 0.05, 0.1, 0.15, 0.2],
            trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalityConfig {
    pub field: GaussianField,
    pub schedule: NoiseSchedule,
    pub eps: f64,
}

impl Default for LocalityConfig {
    fn default() -> Self {
        Self {
            field: GaussianField::geometric(64, 0.9).expect("valid"),
            schedule: NoiseSchedule::log_spaced(0.05, 5.0, 8).expect("valid"),
            eps: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskGroup {
    pub count: usize,
    pub mask: MaskEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvailabilityConfig {
    pub groups: Vec<MaskGroup>,
    /// Defaults to the number of clean or t_min-annotated entries.
    #[serde(default)]
    pub reference_size: Option<usize>,
}

fn default_rule() -> WeightRule {
    WeightRule::Buffer { max: 4.0 }
}

fn default_weight_sigma_min() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub schedule: Option<NoiseSchedule>,
    #[serde(default = "default_rule")]
    pub rule: WeightRule,
    /// `σ_min` used for the per-level α and λ table.
    #[serde(default = "default_weight_sigma_min")]
    pub sigma_min: f64,
    #[serde(default)]
    pub availability: Option<AvailabilityConfig>,
}

fn default_eps() -> f64 {
    1e-3
}
fn default_ood_tau() -> f64 {
    ambient_core::annotate::DEFAULT_TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodConfig {
    pub field: GaussianField,
    #[serde(default = "default_ood_tau")]
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsConfig {
    pub field: GaussianField,
    #[serde(default)]
    pub schedule: Option<NoiseSchedule>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Window sizes for the loss-vs-context curves; all odd sizes by default.
    #[serde(default)]
    pub ks: Option<Vec<usize>>,
    #[serde(default)]
    pub ood: Option<OodConfig>,
}

pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { hi } else { lo * (hi / lo).powf(i as f64 / (n - 1) as f64) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_valid() {
        assert_eq!(parse_config(b"{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let err = parse_config(br#"{"verify":{"theorem2":{"bogus":1}}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("verify.theorem2"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = geometric_grid(0.5, 16.0, 11);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[10], 16.0);
        assert!((g[2] - 1.0).abs() < 1e-15);
    }
}

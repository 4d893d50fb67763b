//! Discrete noise schedules, ambient weights and per-sample usability masks.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Strictly increasing positive noise levels `σ_0 < … < σ_T`. Clean data sits
/// conceptually at σ = 0, below index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

impl TryFrom<Vec<f64>> for NoiseSchedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        NoiseSchedule::new(v)
    }
}

impl From<NoiseSchedule> for Vec<f64> {
    fn from(s: NoiseSchedule) -> Self {
        s.sigmas
    }
}

impl Default for NoiseSchedule {
    /// 64 log-spaced levels on [0.02, 80].
    fn default() -> Self {
        Self::log_spaced(0.02, 80.0, 64).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::invalid("schedule needs at least 2 levels"));
        }
        if !(sigmas[0] > 0.0) || sigmas.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("schedule levels must be finite and > 0"));
        }
        if sigmas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("schedule levels must be strictly increasing"));
        }
        Ok(Self { sigmas })
    }

    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || n < 2 {
            return Err(Error::invalid("log_spaced needs 0 < lo < hi and n >= 2"));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut s: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
        s[0] = lo;
        s[n - 1] = hi;
        Self::new(s)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index `T` of the highest level.
    pub fn top(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    fn check_index(&self, t: usize, what: &str) -> Result<()> {
        if t > self.top() {
            return Err(Error::invalid(format!("{what} index {t} outside schedule of {} levels", self.len())));
        }
        Ok(())
    }
}

/// `α = (σ_t² − σ_min²)/σ_t²`.
pub fn alpha(sigma_t: f64, sigma_min: f64) -> Result<f64> {
    if !(sigma_t > 0.0) || !(sigma_min >= 0.0) {
        return Err(Error::invalid("alpha needs sigma_t > 0 and sigma_min >= 0"));
    }
    if sigma_t < sigma_min {
        return Err(Error::invalid(format!("alpha: sigma_t {sigma_t} below sigma_min {sigma_min}")));
    }
    let t2 = sigma_t * sigma_t;
    Ok((t2 - sigma_min * sigma_min) / t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightRule {
    #[default]
    None,
    Clip {
        max: f64,
    },
    Buffer {
        max: f64,
    },
}

impl WeightRule {
    pub fn validate(self) -> Result<Self> {
        match self {
            WeightRule::None => Ok(self),
            WeightRule::Clip { max } | WeightRule::Buffer { max } => {
                if max > 1.0 && max.is_finite() {
                    Ok(self)
                } else {
                    Err(Error::invalid(format!("weight rule max must be > 1, got {max}")))
                }
            }
        }
    }
}

/// Smallest admitted `σ_t` under `buffer(max)` is anything strictly above
/// `√(1 + 1/(max−1))·σ_min`.
pub fn buffer_threshold(sigma_min: f64, max: f64) -> f64 {
    (1.0 + 1.0 / (max - 1.0)).sqrt() * sigma_min
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Value(f64),
    Excluded,
}

impl Weight {
    pub fn value(self) -> Option<f64> {
        match self {
            Weight::Value(v) => Some(v),
            Weight::Excluded => None,
        }
    }
}

/// `λ_amb = σ⁴/(σ² − σ_min²)² = 1/α²`, passed through the stability rule.
/// Returns `+∞` for the unruled weight at `σ_t = σ_min > 0`.
pub fn lambda_amb(sigma_t: f64, sigma_min: f64, rule: WeightRule) -> Result<Weight> {
    let rule = rule.validate()?;
    let a = alpha(sigma_t, sigma_min)?;
    let raw = 1.0 / (a * a);
    Ok(match rule {
        WeightRule::None => Weight::Value(raw),
        WeightRule::Clip { max } => Weight::Value(raw.min(max)),
        WeightRule::Buffer { max } => {
            if sigma_min > 0.0 && sigma_t <= buffer_threshold(sigma_min, max) {
                Weight::Excluded
            } else {
                Weight::Value(raw)
            }
        }
    })
}

/// Per-sample usability: clean, or annotated with the lowest level it may be
/// merged at (`t_min`) and/or the highest level its crops are in
/// distribution (`t_max`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MaskEntry {
    Clean,
    Annotated { t_min: Option<usize>, t_max: Option<usize> },
}

impl MaskEntry {
    pub fn t_min(t_min: usize) -> Self {
        MaskEntry::Annotated { t_min: Some(t_min), t_max: None }
    }

    pub fn t_max(t_max: usize) -> Self {
        MaskEntry::Annotated { t_min: None, t_max: Some(t_max) }
    }

    pub fn donut(t_min: usize, t_max: usize) -> Self {
        MaskEntry::Annotated { t_min: Some(t_min), t_max: Some(t_max) }
    }

    /// `σ(t_min)`, or 0 for clean data and t_max-only samples.
    pub fn sigma_min(&self, schedule: &NoiseSchedule) -> f64 {
        match self {
            MaskEntry::Annotated { t_min: Some(t), .. } => schedule.sigma(*t),
            _ => 0.0,
        }
    }
}

/// Whether level `t` is usable by `entry`. On the high-noise branch the weight
/// rule's buffer is applied with `σ_min = σ(t_min)`; the crop branch is never
/// buffered.
pub fn is_usable(entry: &MaskEntry, t: usize, schedule: &NoiseSchedule, rule: WeightRule) -> Result<bool> {
    schedule.check_index(t, "level")?;
    match *entry {
        MaskEntry::Clean => Ok(true),
        MaskEntry::Annotated { t_min, t_max } => {
            if let Some(tx) = t_max {
                schedule.check_index(tx, "t_max")?;
                if t <= tx {
                    return Ok(true);
                }
            }
            if let Some(tm) = t_min {
                schedule.check_index(tm, "t_min")?;
                if t >= tm {
                    let w = lambda_amb(schedule.sigma(t), schedule.sigma(tm), rule)?;
                    return Ok(w != Weight::Excluded);
                }
            }
            Ok(false)
        }
    }
}

pub fn usable_times(entry: &MaskEntry, schedule: &NoiseSchedule, rule: WeightRule) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for t in 0..schedule.len() {
        if is_usable(entry, t, schedule, rule)? {
            out.push(t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvailabilityRow {
    pub sigma: f64,
    pub count: usize,
    pub percent: f64,
}

/// Samples usable at each level, as a count and as a percentage of
/// `reference_size` (the size of the clean set the curve is normalised to).
pub fn availability_curve(
    entries: &[MaskEntry],
    schedule: &NoiseSchedule,
    rule: WeightRule,
    reference_size: usize,
) -> Result<Vec<AvailabilityRow>> {
    if reference_size == 0 {
        return Err(Error::invalid("availability reference size must be > 0"));
    }
    let mut counts = vec![0usize; schedule.len()];
    for e in entries {
        for t in usable_times(e, schedule, rule)? {
            counts[t] += 1;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(t, count)| AvailabilityRow {
            sigma: schedule.sigma(t),
            count,
            percent: 100.0 * count as f64 / reference_size as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten() -> NoiseSchedule {
        NoiseSchedule::new((1..=11).map(|i| i as f64 * 0.1).collect()).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(NoiseSchedule::new(vec![1.0]).is_err());
        assert!(NoiseSchedule::new(vec![0.0, 1.0]).is_err());
        assert!(NoiseSchedule::new(vec![1.0, 1.0]).is_err());
        assert!(NoiseSchedule::new(vec![2.0, 1.0]).is_err());
        let d = NoiseSchedule::default();
        assert_eq!(d.len(), 64);
        assert_eq!(d.sigma(0), 0.02);
        assert_eq!(d.sigma(63), 80.0);
        let j = serde_json::to_string(&d).unwrap();
        assert_eq!(NoiseSchedule::from_json_str(&j).unwrap(), d);
        assert!(NoiseSchedule::from_json_str("[0.5, 0.1]").is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha(2.0, 0.0).unwrap(), 1.0);
        assert_eq!(alpha(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(alpha(2.0, 1.0).unwrap(), 0.75);
        assert!(alpha(0.5, 1.0).is_err());
    }

    #[test]
    fn lambda_examples() {
        for s in [0.1, 1.0, 30.0] {
            assert_eq!(lambda_amb(s, 0.0, WeightRule::None).unwrap(), Weight::Value(1.0));
        }
        let w = lambda_amb(2f64.sqrt(), 1.0, WeightRule::None).unwrap().value().unwrap();
        assert!((w - 4.0).abs() < 1e-12);
        assert_eq!(lambda_amb(1.0, 1.0, WeightRule::None).unwrap(), Weight::Value(f64::INFINITY));
        let c = WeightRule::Clip { max: 3.0 };
        assert_eq!(lambda_amb(2f64.sqrt(), 1.0, c).unwrap(), Weight::Value(3.0));
        assert!(lambda_amb(1.0, 0.5, WeightRule::Clip { max: 1.0 }).is_err());
        assert!(lambda_amb(1.0, 0.5, WeightRule::Buffer { max: 0.5 }).is_err());
    }

    #[test]
    fn buffer_four_boundary() {
        let b = WeightRule::Buffer { max: 4.0 };
        let edge = 2.0 / 3f64.sqrt();
        assert!((buffer_threshold(1.0, 4.0) - edge).abs() < 1e-15);
        assert_eq!(lambda_amb(edge * (1.0 - 1e-9), 1.0, b).unwrap(), Weight::Excluded);
        assert_eq!(lambda_amb(buffer_threshold(1.0, 4.0), 1.0, b).unwrap(), Weight::Excluded);
        assert!(lambda_amb(edge * (1.0 + 1e-9), 1.0, b).unwrap().value().is_some());
    }

    #[test]
    fn usable_examples() {
        let s = ten();
        assert_eq!(usable_times(&MaskEntry::Clean, &s, WeightRule::None).unwrap(), (0..=10).collect::<Vec<_>>());
        assert_eq!(usable_times(&MaskEntry::t_min(7), &s, WeightRule::None).unwrap(), vec![7, 8, 9, 10]);
        // σ_min = 0.8: buffer(4) needs σ > 0.9238, dropping 0.8 and 0.9.
        assert_eq!(usable_times(&MaskEntry::t_min(7), &s, WeightRule::Buffer { max: 4.0 }).unwrap(), vec![9, 10]);
        assert_eq!(usable_times(&MaskEntry::donut(7, 2), &s, WeightRule::None).unwrap(), vec![0, 1, 2, 7, 8, 9, 10]);
        assert_eq!(
            usable_times(&MaskEntry::donut(7, 2), &s, WeightRule::Buffer { max: 4.0 }).unwrap(),
            vec![0, 1, 2, 9, 10]
        );
        let none = MaskEntry::Annotated { t_min: None, t_max: None };
        assert!(usable_times(&none, &s, WeightRule::None).unwrap().is_empty());
        assert!(usable_times(&MaskEntry::t_min(11), &s, WeightRule::None).is_err());
    }

    #[test]
    fn availability_examples() {
        let s = ten();
        let flat = availability_curve(&[MaskEntry::Clean; 5], &s, WeightRule::None, 5).unwrap();
        assert!(flat.iter().all(|r| r.count == 5 && r.percent == 100.0));

        let mut ds = vec![MaskEntry::Clean; 10];
        ds.extend((0..90).map(|i| MaskEntry::t_min(1 + i % 9)));
        let c = availability_curve(&ds, &s, WeightRule::None, 100).unwrap();
        assert_eq!(c[0].percent, 10.0);
        assert!(c.windows(2).all(|w| w[1].count >= w[0].count));
        assert_eq!(c[10].percent, 100.0);

        let mut ood = vec![MaskEntry::Clean; 10];
        ood.extend((0..150).map(|_| MaskEntry::t_max(3)));
        let c = availability_curve(&ood, &s, WeightRule::None, 100).unwrap();
        assert!(c[0].percent > 100.0);
        assert_eq!(c[10].percent, 10.0);
        assert!(availability_curve(&ood, &s, WeightRule::None, 0).is_err());
    }

    #[test]
    fn json_forms() {
        let r: WeightRule = serde_json::from_str(r#"{"rule":"buffer","max":4}"#).unwrap();
        assert_eq!(r, WeightRule::Buffer { max: 4.0 });
        let r: WeightRule = serde_json::from_str(r#"{"rule":"none"}"#).unwrap();
        assert_eq!(r, WeightRule::None);
        let m: MaskEntry = serde_json::from_str(r#"{"kind":"annotated","t_min":3,"t_max":null}"#).unwrap();
        assert_eq!(m, MaskEntry::t_min(3));
    }
}

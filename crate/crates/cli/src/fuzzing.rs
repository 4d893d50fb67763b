//! Entry points shared by the fuzz targets and the corpus replay test. Each
//! takes arbitrary bytes and must not panic; accepted inputs are exercised
//! through a few cheap evaluations.

use ambient_core::annotate::NoiseClassifier;
use ambient_core::densities::Density1D;
use ambient_core::fields::GaussianField;
use ambient_core::kde::KdeModel;
use ambient_core::schedule::NoiseSchedule;
use ambient_core::train::Denoiser;

/// A fuzz entry point: arbitrary bytes in, no panic out.
pub type Entry = fn(&[u8]);

const PROBES: [f64; 5] = [-3.0, -0.5, 0.0, 0.25, 4.0];

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn density_json(data: &[u8]) {
    let Some(d) = text(data).and_then(|s| Density1D::from_json_str(s).ok()) else {
        return;
    };
    for x in PROBES {
        let _ = (d.pdf(x), d.cdf(x), d.pdf_derivative(x));
    }
    let _ = (d.mean(), d.variance(), d.support_interval(1e-12));
    let back = Density1D::from_json_str(&d.to_json_string()).expect("serialised density reparses");
    assert_eq!(back, d);
}

pub fn kde_model_json(data: &[u8]) {
    let Some(m) = text(data).and_then(|s| KdeModel::from_json_str(s).ok()) else {
        return;
    };
    for x in PROBES {
        let _ = m.density_at(x, 1.0);
        let _ = m.posterior_mean(x, 0.5);
    }
}

pub fn schedule_json(data: &[u8]) {
    let Some(s) = text(data).and_then(|s| NoiseSchedule::from_json_str(s).ok()) else {
        return;
    };
    assert!(s.sigmas().windows(2).all(|w| w[0] < w[1]));
    let _ = s.sigma(s.top());
}

pub fn field_json(data: &[u8]) {
    let Some(f) = text(data).and_then(|s| GaussianField::from_json_str(s).ok()) else {
        return;
    };
    let _ = f.variance();
    if f.len() <= 256 {
        let _ = f.spectrum();
        let _ = f.full_context_loss(1.0);
    }
}

pub fn denoiser_json(data: &[u8]) {
    let Some(h) = text(data).and_then(|s| Denoiser::from_json_str(s).ok()) else {
        return;
    };
    for t in 0..h.schedule().len() {
        for x in PROBES {
            let _ = h.predict(x, t);
        }
    }
}

pub fn classifier_json(data: &[u8]) {
    let Some(c) = text(data).and_then(|s| NoiseClassifier::from_json_str(s).ok()) else {
        return;
    };
    for t in 0..c.schedule().len() {
        for x in PROBES {
            let p = c.prob(x, t);
            assert!(p.is_nan() || (0.0..=1.0).contains(&p));
        }
    }
}

pub fn experiment_config(data: &[u8]) {
    let _ = crate::config::parse_config(data);
}

/// Target name to entry point, in the order of `fuzz/fuzz_targets`.
pub const TARGETS: [(&str, Entry); 7] = [
    ("density_json", density_json),
    ("kde_model_json", kde_model_json),
    ("schedule_json", schedule_json),
    ("field_json", field_json),
    ("denoiser_json", denoiser_json),
    ("classifier_json", classifier_json),
    ("experiment_config", experiment_config),
];

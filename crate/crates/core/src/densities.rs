//! Analytic one-dimensional densities.
//!
//! Two families are supported: finite Gaussian mixtures (closed under
//! Gaussian convolution) and piecewise-linear densities on a bounded interval
//! (the bounded, Lipschitz class). Every other module uses these as ground
//! truth, so evaluation, CDFs, quantiles and distances are computed in closed
//! form or by adaptive quadrature with explicit error control.

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadOptions};
use crate::rng;
use crate::special::{big_phi, log_sum_exp, normal_ln_pdf, phi};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Tail mass left out when an unbounded density needs a finite diameter.
pub const DIAMETER_TAIL_MASS: f64 = 1e-12;

/// Half-width, in component standard deviations, of the interval each
/// mixture component contributes to quadrature breakpoints.
const TAIL_SIGMAS: f64 = 8.0;

const GL_ORDER: usize = 16;

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| quadrature::gauss_legendre(GL_ORDER))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub w: f64,
    pub mu: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityKind {
    GaussianMixture,
    PiecewiseLinear,
}

impl DensityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DensityKind::GaussianMixture => "gaussian-mixture",
            DensityKind::PiecewiseLinear => "piecewise-linear",
        }
    }
}

/// Wire form of a density; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub kind: DensityKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Component>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub knots: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Mixture {
        components: Vec<Component>,
        // (mu, w / sqrt(2 pi var), -0.5 / var) per component
        terms: Vec<(f64, f64, f64)>,
    },
    Linear {
        knots: Vec<(f64, f64)>,
        // CDF and integrated CDF at each knot
        cdf: Vec<f64>,
        icdf: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensitySpec", into = "DensitySpec")]
pub struct Density1D {
    shape: Shape,
}

impl TryFrom<DensitySpec> for Density1D {
    type Error = Error;

    fn try_from(spec: DensitySpec) -> Result<Self> {
        match spec.kind {
            DensityKind::GaussianMixture => {
                if !spec.knots.is_empty() {
                    return Err(Error::invalid("a gaussian-mixture density takes no knots"));
                }
                Density1D::mixture(spec.components)
            }
            DensityKind::PiecewiseLinear => {
                if !spec.components.is_empty() {
                    return Err(Error::invalid("a piecewise-linear density takes no components"));
                }
                Density1D::piecewise_linear(spec.knots.into_iter().map(|[x, y]| (x, y)).collect())
            }
        }
    }
}

impl From<Density1D> for DensitySpec {
    fn from(d: Density1D) -> Self {
        match d.shape {
            Shape::Mixture { components, .. } => {
                DensitySpec { kind: DensityKind::GaussianMixture, components, knots: Vec::new() }
            }
            Shape::Linear { knots, .. } => DensitySpec {
                kind: DensityKind::PiecewiseLinear,
                components: Vec::new(),
                knots: knots.into_iter().map(|(x, y)| [x, y]).collect(),
            },
        }
    }
}

fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

impl Density1D {
    pub fn mixture(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        for c in &components {
            if !(c.w.is_finite() && c.mu.is_finite() && c.var.is_finite()) {
                return Err(Error::invalid("mixture parameters must be finite"));
            }
            if c.w < 0.0 {
                return Err(Error::invalid(format!("negative mixture weight {}", c.w)));
            }
            if c.var <= 0.0 {
                return Err(Error::invalid(format!("component variance must be > 0, got {}", c.var)));
            }
        }
        let total = neumaier_sum(components.iter().map(|c| c.w));
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let terms = components.iter().map(|c| (c.mu, c.w / (2.0 * PI * c.var).sqrt(), -0.5 / c.var)).collect();
        Ok(Self { shape: Shape::Mixture { components, terms } })
    }

    pub fn gaussian(mu: f64, var: f64) -> Result<Self> {
        Self::mixture(vec![Component { w: 1.0, mu, var }])
    }

    /// Equal-weight mixture with common variance, one component per atom.
    pub fn equal_mixture(atoms: &[f64], var: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("mixture needs at least one atom"));
        }
        let w = 1.0 / atoms.len() as f64;
        Self::mixture(atoms.iter().map(|&mu| Component { w, mu, var }).collect())
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("piecewise-linear density needs at least two knots"));
        }
        for &(x, y) in &knots {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::invalid("knots must be finite"));
            }
            if y < 0.0 {
                return Err(Error::invalid(format!("negative density value {y} at knot {x}")));
            }
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("knot positions must be strictly increasing"));
        }
        let mut cdf = vec![0.0; knots.len()];
        let mut icdf = vec![0.0; knots.len()];
        for i in 1..knots.len() {
            let (x0, y0) = knots[i - 1];
            let (x1, y1) = knots[i];
            let h = x1 - x0;
            let slope = (y1 - y0) / h;
            cdf[i] = cdf[i - 1] + 0.5 * (y0 + y1) * h;
            icdf[i] = icdf[i - 1] + cdf[i - 1] * h + y0 * h * h / 2.0 + slope * h * h * h / 6.0;
        }
        let total = cdf[knots.len() - 1];
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("piecewise-linear mass is {total}, not 1")));
        }
        Ok(Self { shape: Shape::Linear { knots, cdf, icdf } })
    }

    /// Uniform density on `[a, b]` as a two-knot piecewise-linear density.
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::invalid("uniform needs a < b"));
        }
        let h = 1.0 / (b - a);
        Self::piecewise_linear(vec![(a, h), (b, h)])
    }

    /// Symmetric tent on `[0, 1]` peaking at 2.
    pub fn tent() -> Self {
        Self::piecewise_linear(vec![(0.0, 0.0), (0.5, 2.0), (1.0, 0.0)]).expect("tent is valid")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("densities serialize")
    }

    pub fn kind(&self) -> DensityKind {
        match self.shape {
            Shape::Mixture { .. } => DensityKind::GaussianMixture,
            Shape::Linear { .. } => DensityKind::PiecewiseLinear,
        }
    }

    pub fn components(&self) -> Option<&[Component]> {
        match &self.shape {
            Shape::Mixture { components, .. } => Some(components),
            Shape::Linear { .. } => None,
        }
    }

    pub fn knots(&self) -> Option<&[(f64, f64)]> {
        match &self.shape {
            Shape::Linear { knots, .. } => Some(knots),
            Shape::Mixture { .. } => None,
        }
    }

    fn segment(knots: &[(f64, f64)], x: f64) -> usize {
        // index i with knots[i].0 <= x < knots[i+1].0, clamped to the last segment
        let i = knots.partition_point(|k| k.0 <= x);
        i.saturating_sub(1).min(knots.len() - 2)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Mixture { terms, .. } => terms
                .iter()
                .map(|&(mu, a, b)| {
                    let d = x - mu;
                    a * (b * d * d).exp()
                })
                .sum(),
            Shape::Linear { knots, .. } => {
                let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
                if x < lo || x > hi {
                    return 0.0;
                }
                let i = Self::segment(knots, x);
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Mixture { components, .. } => {
                log_sum_exp(components.iter().filter(|c| c.w > 0.0).map(|c| c.w.ln() + normal_ln_pdf(x, c.mu, c.var)))
            }
            Shape::Linear { .. } => self.pdf(x).ln(),
        }
    }

    /// Derivative of the density; one-sided (right) at piecewise-linear knots.
    pub fn pdf_derivative(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Mixture { terms, .. } => terms
                .iter()
                .map(|&(mu, a, b)| {
                    let d = x - mu;
                    a * (b * d * d).exp() * (2.0 * b * d)
                })
                .sum(),
            Shape::Linear { knots, .. } => {
                let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
                if x < lo || x >= hi {
                    return 0.0;
                }
                let i = Self::segment(knots, x);
                (knots[i + 1].1 - knots[i].1) / (knots[i + 1].0 - knots[i].0)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Mixture { components, .. } => {
                components.iter().map(|c| c.w * big_phi((x - c.mu) / c.var.sqrt())).sum::<f64>().min(1.0)
            }
            Shape::Linear { knots, cdf, .. } => {
                let n = knots.len();
                if x <= knots[0].0 {
                    return 0.0;
                }
                if x >= knots[n - 1].0 {
                    return 1.0;
                }
                let i = Self::segment(knots, x);
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                let d = x - x0;
                let slope = (y1 - y0) / (x1 - x0);
                (cdf[i] + y0 * d + 0.5 * slope * d * d).min(1.0)
            }
        }
    }

    /// Upper tail `1 - F(x)`, computed without cancellation for mixtures.
    pub fn sf(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Mixture { components, .. } => {
                components.iter().map(|c| c.w * big_phi((c.mu - x) / c.var.sqrt())).sum::<f64>().min(1.0)
            }
            Shape::Linear { .. } => 1.0 - self.cdf(x),
        }
    }

    /// `∫_{-∞}^{x} F(u) du`.
    pub fn cdf_integral(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Mixture { components, .. } => components
                .iter()
                .map(|c| {
                    let s = c.var.sqrt();
                    let z = (x - c.mu) / s;
                    c.w * ((x - c.mu) * big_phi(z) + s * phi(z))
                })
                .sum(),
            Shape::Linear { knots, cdf, icdf } => {
                let n = knots.len();
                if x <= knots[0].0 {
                    return 0.0;
                }
                if x >= knots[n - 1].0 {
                    return icdf[n - 1] + (x - knots[n - 1].0);
                }
                let i = Self::segment(knots, x);
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                let d = x - x0;
                let slope = (y1 - y0) / (x1 - x0);
                icdf[i] + cdf[i] * d + y0 * d * d / 2.0 + slope * d * d * d / 6.0
            }
        }
    }

    /// `∫_{x}^{∞} (1 - F(u)) du`.
    pub fn sf_integral(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Mixture { components, .. } => components
                .iter()
                .map(|c| {
                    let s = c.var.sqrt();
                    let z = (x - c.mu) / s;
                    c.w * (s * phi(z) - (x - c.mu) * big_phi(-z))
                })
                .sum(),
            Shape::Linear { knots, .. } => {
                let hi = knots[knots.len() - 1].0;
                if x >= hi {
                    return 0.0;
                }
                let lo = knots[0].0;
                let xe = x.max(lo);
                (lo - x).max(0.0) + (hi - xe) - (self.cdf_integral(hi) - self.cdf_integral(xe))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.shape {
            Shape::Mixture { components, .. } => components.iter().map(|c| c.w * c.mu).sum(),
            Shape::Linear { knots, .. } => knots
                .windows(2)
                .map(|w| {
                    let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                    // ∫ x y(x) over the segment for linear y
                    (x1 - x0) * (y0 * (2.0 * x0 + x1) + y1 * (x0 + 2.0 * x1)) / 6.0
                })
                .sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        match &self.shape {
            Shape::Mixture { components, .. } => {
                components.iter().map(|c| c.w * (c.var + (c.mu - m) * (c.mu - m))).sum()
            }
            Shape::Linear { knots, .. } => {
                let second: f64 = knots
                    .windows(2)
                    .map(|w| {
                        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                        let h = x1 - x0;
                        // ∫ x^2 y(x) dx for linear y, via 3-point Gauss (exact to degree 5)
                        let (gx, gw) = (
                            [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
                            [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
                        );
                        gx.iter()
                            .zip(gw.iter())
                            .map(|(t, wt)| {
                                let u = x0 + 0.5 * h * (t + 1.0);
                                let y = y0 + (y1 - y0) * (u - x0) / h;
                                wt * u * u * y
                            })
                            .sum::<f64>()
                            * 0.5
                            * h
                    })
                    .sum();
                second - m * m
            }
        }
    }

    /// Inverse CDF; `u` is clamped into `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.shape {
            Shape::Linear { knots, cdf, .. } => {
                let n = knots.len();
                if u <= 0.0 {
                    return knots[0].0;
                }
                if u >= 1.0 {
                    return knots[n - 1].0;
                }
                let i = cdf.partition_point(|&c| c <= u).saturating_sub(1).min(n - 2);
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                let slope = (y1 - y0) / (x1 - x0);
                let m = u - cdf[i];
                let d = solve_segment_mass(y0, slope, m);
                (x0 + d).clamp(x0, x1)
            }
            Shape::Mixture { components, .. } => {
                let (mut lo, mut hi) = mixture_bracket(components, 40.0);
                if u <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                if u >= 1.0 {
                    return f64::INFINITY;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let below = if u < 0.5 { self.cdf(mid) < u } else { self.sf(mid) > 1.0 - u };
                    if below {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 2.0 * f64::EPSILON * mid.abs().max(1e-300) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Interval holding all but `tail_mass` of the probability, split evenly
    /// between the tails. Piecewise-linear densities return their exact support.
    pub fn support_interval(&self, tail_mass: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Linear { knots, .. } => (knots[0].0, knots[knots.len() - 1].0),
            Shape::Mixture { components, .. } => {
                let half = 0.5 * tail_mass;
                let (blo, bhi) = mixture_bracket(components, 40.0);
                let lo = bisect(blo, bhi, |x| self.cdf(x) < half);
                let hi = bisect(blo, bhi, |x| self.sf(x) > half);
                (lo, hi)
            }
        }
    }

    /// Diameter of the support, truncated at [`DIAMETER_TAIL_MASS`] for
    /// unbounded densities.
    pub fn support_diameter(&self) -> f64 {
        let (lo, hi) = self.support_interval(DIAMETER_TAIL_MASS);
        hi - lo
    }

    /// Breakpoints that resolve every feature of the density for quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Linear { knots, .. } => knots.iter().map(|k| k.0).collect(),
            Shape::Mixture { components, .. } => {
                let mut cand: Vec<(f64, f64)> = Vec::with_capacity(3 * components.len());
                for c in components.iter().filter(|c| c.w > 0.0) {
                    let s = c.var.sqrt();
                    cand.push((c.mu - TAIL_SIGMAS * s, s));
                    cand.push((c.mu, s));
                    cand.push((c.mu + TAIL_SIGMAS * s, s));
                }
                cand.sort_by(|a, b| a.0.total_cmp(&b.0));
                thin_breaks(&cand)
            }
        }
    }

    /// Gaussian convolution `d ⊛ N(0, sigma²)`.
    ///
    /// Mixtures shift every component variance by `sigma²`. Piecewise-linear
    /// inputs become a Gaussian-mixture surrogate: each segment is cut into
    /// chunks no wider than `sigma` and the convolution integral over each
    /// chunk is replaced by a 16-point Gauss–Legendre rule, i.e. one
    /// `N(node, sigma²)` component per node weighted by the density there.
    pub fn convolve(&self, sigma: f64) -> Result<Density1D> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("convolution needs sigma > 0, got {sigma}")));
        }
        let s2 = sigma * sigma;
        match &self.shape {
            Shape::Mixture { components, .. } => {
                Density1D::mixture(components.iter().map(|c| Component { var: c.var + s2, ..*c }).collect())
            }
            Shape::Linear { knots, .. } => {
                let (gx, gw) = gl16();
                let mut comps = Vec::new();
                for w in knots.windows(2) {
                    let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                    let chunks = ((x1 - x0) / sigma).ceil().max(1.0) as usize;
                    let h = (x1 - x0) / chunks as f64;
                    for c in 0..chunks {
                        let a = x0 + c as f64 * h;
                        for (t, wt) in gx.iter().zip(gw.iter()) {
                            let u = a + 0.5 * h * (t + 1.0);
                            let y = y0 + (y1 - y0) * (u - x0) / (x1 - x0);
                            let weight = 0.5 * h * wt * y;
                            if weight > 0.0 {
                                comps.push(Component { w: weight, mu: u, var: s2 });
                            }
                        }
                    }
                }
                // Gauss–Legendre is exact for the linear mass, so the weights
                // already sum to one up to rounding; fold the residue in.
                let total = neumaier_sum(comps.iter().map(|c| c.w));
                for c in &mut comps {
                    c.w /= total;
                }
                Density1D::mixture(comps)
            }
        }
    }

    /// `n` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, r: &mut R) -> Vec<f64> {
        match &self.shape {
            Shape::Mixture { components, .. } => {
                let mut cum = Vec::with_capacity(components.len());
                let mut acc = 0.0;
                for c in components {
                    acc += c.w;
                    cum.push(acc);
                }
                (0..n)
                    .map(|_| {
                        let u: f64 = r.random::<f64>() * acc;
                        let i = cum.partition_point(|&c| c <= u).min(components.len() - 1);
                        let c = components[i];
                        c.mu + c.var.sqrt() * rng::std_normal(r)
                    })
                    .collect()
            }
            Shape::Linear { .. } => (0..n).map(|_| self.quantile(r.random::<f64>())).collect(),
        }
    }

    pub fn sample_seeded(&self, n: usize, seed: u64) -> Vec<f64> {
        self.sample(n, &mut rng::rng(seed))
    }

    /// Supremum of `|d'|`.
    ///
    /// Piecewise-linear densities return the largest segment slope, or
    /// infinity when an end knot is nonzero (a jump). Mixtures are scanned on
    /// a grid that resolves the narrowest component, seeded with the closed
    /// form maximizers `mu ± sd` of each component, and the best candidates
    /// are polished by golden-section search.
    pub fn lipschitz_constant(&self) -> f64 {
        match &self.shape {
            Shape::Linear { knots, .. } => {
                if knots[0].1 != 0.0 || knots[knots.len() - 1].1 != 0.0 {
                    return f64::INFINITY;
                }
                knots.windows(2).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max)
            }
            Shape::Mixture { components, .. } => {
                let g = |x: f64| self.pdf_derivative(x).abs();
                let mut xs: Vec<f64> = Vec::new();
                for c in components.iter().filter(|c| c.w > 0.0) {
                    let s = c.var.sqrt();
                    xs.push(c.mu - s);
                    xs.push(c.mu + s);
                }
                let min_sd = components.iter().map(|c| c.var.sqrt()).fold(f64::INFINITY, f64::min);
                if components.len() <= 64 {
                    for c in components.iter().filter(|c| c.w > 0.0) {
                        let s = c.var.sqrt();
                        let step = s.min(4.0 * min_sd) / 16.0;
                        let span = 4.0 * s;
                        let n = (2.0 * span / step).ceil() as usize;
                        xs.extend((0..=n).map(|k| c.mu - span + k as f64 * step));
                    }
                } else {
                    let (lo, hi) = mixture_bracket(components, 4.0);
                    let n = 20_000usize;
                    let step = (hi - lo) / n as f64;
                    xs.extend((0..=n).map(|k| lo + k as f64 * step));
                }
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                let vals: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
                let mut idx: Vec<usize> = (0..xs.len()).collect();
                idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
                let mut best = vals[idx[0]];
                for &i in idx.iter().take(8) {
                    let lo = xs[i.saturating_sub(1)];
                    let hi = xs[(i + 1).min(xs.len() - 1)];
                    let (_, v) = golden_max(&g, lo, hi);
                    best = best.max(v);
                }
                best
            }
        }
    }
}

/// Mixture of a clean and a corrupted density in the proportions of the
/// sample counts that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub clean: Density1D,
    pub corrupt: Density1D,
    pub n1: usize,
    pub n2: usize,
}

impl MixtureSpec {
    /// Weight of the clean density in the materialized mixture.
    pub fn clean_weight(&self) -> f64 {
        self.n1 as f64 / (self.n1 + self.n2) as f64
    }

    /// The tilted density `n1/(n1+n2)·clean + n2/(n1+n2)·corrupt`. Both parts
    /// must be Gaussian mixtures.
    pub fn materialize(&self) -> Result<Density1D> {
        let total = self.n1 + self.n2;
        if total == 0 {
            return Err(Error::invalid("mixture needs n1 + n2 > 0"));
        }
        let (Some(a), Some(b)) = (self.clean.components(), self.corrupt.components()) else {
            return Err(Error::invalid("only Gaussian-mixture parts can be materialized as one mixture"));
        };
        let wa = self.n1 as f64 / total as f64;
        let wb = self.n2 as f64 / total as f64;
        let mut comps: Vec<Component> = a.iter().map(|c| Component { w: c.w * wa, ..*c }).collect();
        comps.extend(b.iter().map(|c| Component { w: c.w * wb, ..*c }));
        comps.retain(|c| c.w > 0.0);
        Density1D::mixture(comps)
    }
}

fn solve_segment_mass(y0: f64, slope: f64, m: f64) -> f64 {
    // y0 d + slope d²/2 = m, the root in [0, h]
    if m <= 0.0 {
        return 0.0;
    }
    let disc = (y0 * y0 + 2.0 * slope * m).max(0.0);
    let denom = y0 + disc.sqrt();
    if denom > 0.0 {
        2.0 * m / denom
    } else {
        (2.0 * m / slope).sqrt()
    }
}

fn mixture_bracket(components: &[Component], k: f64) -> (f64, f64) {
    let lo = components.iter().map(|c| c.mu - k * c.var.sqrt()).fold(f64::INFINITY, f64::min);
    let hi = components.iter().map(|c| c.mu + k * c.var.sqrt()).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Boundary of `{x : below(x)}` in `[lo, hi]`, assuming a single switch.
fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * mid.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x).max(fc).max(fd))
}

/// Keeps a candidate only when it is at least half its own scale away from
/// the previously kept point; the first and last candidates always survive.
fn thin_breaks(cand: &[(f64, f64)]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &(x, s) in cand {
        match out.last() {
            Some(&last) if x - last < 0.5 * s => {}
            _ => out.push(x),
        }
    }
    if let Some(&(x, _)) = cand.last() {
        if out.last() != Some(&x) {
            out.push(x);
        }
    }
    out
}

/// Options used for every total-variation evaluation.
pub const TV_QUAD: QuadOptions = QuadOptions { abs_tol: 1e-10, max_panels: 100_000 };

/// `½∫|a − b|` by adaptive quadrature over the union of both densities'
/// breakpoints.
pub fn tv_distance(a: &Density1D, b: &Density1D) -> Result<f64> {
    let mut breaks = a.breakpoints();
    breaks.extend(b.breakpoints());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let est = quadrature::integrate_abs(|x| a.pdf(x) - b.pdf(x), &breaks, TV_QUAD)?;
    Ok((0.5 * est.value).clamp(0.0, 1.0))
}

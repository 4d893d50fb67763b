//! Globally adaptive Gauss–Kronrod (10/21) integration over a list of
//! breakpoints, with an absolute-value mode that splits panels at sign
//! changes of the integrand so kinks of `|f|` never sit inside a panel.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7, 9).
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, max_panels: 20_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Kronrod nodes mapped onto `[a, b]`, ordered left to right.
fn nodes(a: f64, b: f64) -> [f64; 21] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut x = [0.0; 21];
    for j in 0..10 {
        x[j] = c - h * XGK[j];
        x[20 - j] = c + h * XGK[j];
    }
    x[10] = c;
    x
}

/// Applies the rule to function values at `nodes(a, b)`.
fn rule(a: f64, b: f64, fv: &[f64; 21]) -> (f64, f64) {
    let h = 0.5 * (b - a);
    let fc = fv[10];
    let mut kron = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let pair = fv[j] + fv[20 - j];
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    // resasc: integral of |f - mean| used for the QUADPACK error scaling
    let mean = 0.5 * kron;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv[j] - mean).abs() + (fv[20 - j] - mean).abs());
    }
    let value = kron * h;
    let resasc = resasc * h.abs();
    let mut err = ((kron - gauss) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    (value, err)
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let x = nodes(a, b);
    let mut fv = [0.0; 21];
    for (v, &xi) in fv.iter_mut().zip(x.iter()) {
        *v = f(xi);
    }
    let (value, error) = rule(a, b, &fv);
    Panel { a, b, value, error }
}

enum AbsPanel {
    Done(Panel),
    Split(f64),
}

fn abs_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> AbsPanel {
    let x = nodes(a, b);
    let mut fv = [0.0; 21];
    for (v, &xi) in fv.iter_mut().zip(x.iter()) {
        *v = f(xi);
    }
    let fa = f(a);
    let fb = f(b);
    // locate the first strict sign change, endpoints included
    let mut pts = Vec::with_capacity(23);
    pts.push((a, fa));
    pts.extend(x.iter().copied().zip(fv.iter().copied()));
    pts.push((b, fb));
    let mut last: Option<(f64, f64)> = None;
    for &(xi, vi) in &pts {
        if vi == 0.0 || !vi.is_finite() {
            continue;
        }
        if let Some((xl, vl)) = last {
            if vl.signum() != vi.signum() {
                let r = bracket_root(f, xl, vl, xi, vi);
                if r > a && r < b {
                    return AbsPanel::Split(r);
                }
            }
        }
        last = Some((xi, vi));
    }
    let (value, error) = rule(a, b, &fv);
    AbsPanel::Done(Panel { a, b, value: value.abs(), error })
}

/// Illinois false-position root of a bracketed sign change.
fn bracket_root<F: Fn(f64) -> f64>(f: &F, mut xl: f64, mut fl: f64, mut xr: f64, mut fr: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        let xm = (xl * fr - xr * fl) / (fr - fl);
        let xm = if xm.is_finite() && xm > xl && xm < xr { xm } else { 0.5 * (xl + xr) };
        let fm = f(xm);
        if fm == 0.0 || (xr - xl) <= 4.0 * f64::EPSILON * xm.abs().max(1e-300) {
            return xm;
        }
        if fm.signum() == fr.signum() {
            xr = xm;
            fr = fm;
            if side == -1 {
                fl *= 0.5;
            }
            side = -1;
        } else {
            xl = xm;
            fl = fm;
            if side == 1 {
                fr *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (xl + xr)
}

fn too_narrow(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    (b - a) <= 64.0 * f64::EPSILON * scale
}

fn sorted_breaks(breaks: &[f64]) -> Result<Vec<f64>> {
    if breaks.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("quadrature breakpoints must be finite"));
    }
    let mut b: Vec<f64> = breaks.to_vec();
    b.sort_by(f64::total_cmp);
    b.dedup();
    if b.len() < 2 {
        return Err(Error::invalid("quadrature needs at least two distinct breakpoints"));
    }
    Ok(b)
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    initial: Vec<Panel>,
    opts: QuadOptions,
    abs_mode: bool,
    what: &str,
) -> Result<Estimate> {
    let mut heap: BinaryHeap<Panel> = BinaryHeap::new();
    let mut frozen_value = 0.0;
    let mut frozen_error = 0.0;
    let mut count = initial.len();
    for p in initial {
        heap.push(p);
    }
    loop {
        let total_err: f64 = frozen_error + heap.iter().map(|p| p.error).sum::<f64>();
        if total_err <= opts.abs_tol {
            break;
        }
        if count >= opts.max_panels {
            return Err(Error::numeric(what, total_err));
        }
        let Some(worst) = heap.pop() else { break };
        if too_narrow(worst.a, worst.b) {
            frozen_value += worst.value;
            frozen_error += worst.error;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            if abs_mode {
                split_abs(f, lo, hi, &mut heap, &mut count);
            } else {
                heap.push(panel(f, lo, hi));
                count += 1;
            }
        }
    }
    let value = frozen_value + heap.iter().map(|p| p.value).sum::<f64>();
    let error = frozen_error + heap.iter().map(|p| p.error).sum::<f64>();
    if error > opts.abs_tol {
        return Err(Error::numeric(what, error));
    }
    Ok(Estimate { value, error, panels: count })
}

fn split_abs<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, heap: &mut BinaryHeap<Panel>, count: &mut usize) {
    let mut stack = vec![(a, b)];
    while let Some((lo, hi)) = stack.pop() {
        if too_narrow(lo, hi) {
            let p = panel(f, lo, hi);
            heap.push(Panel { value: p.value.abs(), ..p });
            *count += 1;
            continue;
        }
        match abs_panel(f, lo, hi) {
            AbsPanel::Done(p) => {
                heap.push(p);
                *count += 1;
            }
            AbsPanel::Split(r) => {
                stack.push((lo, r));
                stack.push((r, hi));
            }
        }
    }
}

/// `∫ f` over `[min(breaks), max(breaks)]`, refining until the summed error
/// estimate is below `opts.abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], opts: QuadOptions) -> Result<Estimate> {
    let b = sorted_breaks(breaks)?;
    let initial: Vec<Panel> = b.windows(2).map(|w| panel(&f, w[0], w[1])).collect();
    refine(&f, initial, opts, false, "adaptive quadrature")
}

/// `∫ |f|` with panels split at every detected sign change of `f`.
pub fn integrate_abs<F: Fn(f64) -> f64>(f: F, breaks: &[f64], opts: QuadOptions) -> Result<Estimate> {
    let b = sorted_breaks(breaks)?;
    let mut heap = BinaryHeap::new();
    let mut count = 0;
    for w in b.windows(2) {
        split_abs(&f, w[0], w[1], &mut heap, &mut count);
    }
    let initial = heap.into_vec();
    refine(&f, initial, opts, true, "adaptive |f| quadrature")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let e = integrate(|x| x * x * x - 2.0 * x, &[0.0, 2.0], QuadOptions::default()).unwrap();
        assert!((e.value - 0.0).abs() < 1e-14);
        let e = integrate(|x| x.powi(6), &[-1.0, 1.0], QuadOptions::default()).unwrap();
        assert!((e.value - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_mass() {
        let g = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let e = integrate(g, &[-12.0, 12.0], QuadOptions::default()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12, "{}", e.value);
    }

    #[test]
    fn abs_of_sine_splits_at_roots() {
        let e = integrate_abs(f64::sin, &[0.0, 3.0 * std::f64::consts::PI], QuadOptions::default()).unwrap();
        assert!((e.value - 6.0).abs() < 1e-12, "{}", e.value);
    }

    #[test]
    fn kink_inside_panel() {
        let e = integrate_abs(|x| x - 0.3, &[0.0, 1.0], QuadOptions::default()).unwrap();
        assert!((e.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn non_convergence_reports_error() {
        let opts = QuadOptions { abs_tol: 1e-14, max_panels: 4 };
        let err = integrate(|x| 1.0 / x.abs().sqrt().max(1e-300), &[-1.0, 1.0], opts).unwrap_err();
        assert!(matches!(err, Error::NumericFailure { .. }));
    }

    #[test]
    fn rejects_degenerate_breaks() {
        assert!(integrate(|x| x, &[1.0], QuadOptions::default()).is_err());
        assert!(integrate(|x| x, &[0.0, f64::NAN], QuadOptions::default()).is_err());
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod gl_tests {
    use super::gauss_legendre;

    #[test]
    fn legendre_rule_integrates_high_degree() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
    }
}

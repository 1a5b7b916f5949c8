//! Named parametric families used for temporal intensities, birth-time
//! densities, speeds and mark densities.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geom::{Point, Window};

/// A nonnegative function of time on `[0, inf)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemporalFn {
    Constant { value: f64 },
    /// `scale * rate * exp(-rate t)`; a probability density when `scale = 1`.
    Exponential {
        rate: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `1 / (hi - lo)` on `[lo, hi]`, zero elsewhere.
    Uniform { lo: f64, hi: f64 },
    /// Linear interpolation through `[t, value]` knots, held constant outside
    /// the knot range.
    PiecewiseLinear { knots: Vec<[f64; 2]> },
}

fn one() -> f64 {
    1.0
}

impl TemporalFn {
    pub fn constant(value: f64) -> Self {
        TemporalFn::Constant { value }
    }

    pub fn exponential(rate: f64) -> Self {
        TemporalFn::Exponential { rate, scale: 1.0 }
    }

    pub fn linear_ramp(end: f64) -> Self {
        TemporalFn::PiecewiseLinear { knots: vec![[0.0, 0.0], [end, end]] }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            TemporalFn::Constant { value } => *value,
            TemporalFn::Exponential { rate, scale } => scale * rate * (-rate * t).exp(),
            TemporalFn::Uniform { lo, hi } => {
                if t >= *lo && t <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            TemporalFn::PiecewiseLinear { knots } => piecewise_value(knots, t),
        }
    }

    /// Exact `∫_a^b value(t) dt` for `a <= b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let a = a.max(0.0);
        let b = b.max(0.0);
        match self {
            TemporalFn::Constant { value } => value * (b - a),
            TemporalFn::Exponential { rate, scale } => scale * ((-rate * a).exp() - (-rate * b).exp()),
            TemporalFn::Uniform { lo, hi } => {
                let l = a.max(*lo);
                let r = b.min(*hi);
                if r > l {
                    (r - l) / (hi - lo)
                } else {
                    0.0
                }
            }
            TemporalFn::PiecewiseLinear { knots } => piecewise_integral(knots, b) - piecewise_integral(knots, a),
        }
    }

    /// `∫_0^inf`, or `None` when infinite.
    pub fn total_mass(&self) -> Option<f64> {
        match self {
            TemporalFn::Constant { value } => (*value == 0.0).then_some(0.0),
            TemporalFn::Exponential { scale, .. } => Some(*scale),
            TemporalFn::Uniform { .. } => Some(1.0),
            TemporalFn::PiecewiseLinear { knots } => {
                let last = knots.last().map(|k| k[1]).unwrap_or(0.0);
                (last == 0.0).then(|| piecewise_integral(knots, knots.last().map(|k| k[0]).unwrap_or(0.0)))
            }
        }
    }

    /// Points where the function or its derivative may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            TemporalFn::Uniform { lo, hi } => vec![*lo, *hi],
            TemporalFn::PiecewiseLinear { knots } => knots.iter().map(|k| k[0]).collect(),
            _ => Vec::new(),
        }
    }

    /// Upper bound of the function on `[a, b]`.
    pub fn sup_on(&self, a: f64, b: f64) -> f64 {
        self.extremes_on(a, b).1
    }

    /// Lower bound of the function on `[a, b]`.
    pub fn inf_on(&self, a: f64, b: f64) -> f64 {
        self.extremes_on(a, b).0
    }

    fn extremes_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut probes = vec![a, b];
        probes.extend(self.breakpoints().into_iter().filter(|&x| x > a && x < b));
        if let TemporalFn::Uniform { lo, hi } = self {
            // Values just inside and outside the support edges.
            for e in [*lo, *hi] {
                if e > a && e < b {
                    probes.push(e - 1e-12);
                    probes.push(e + 1e-12);
                }
            }
        }
        probes.iter().map(|&t| self.value(t)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Checks finiteness and sign; with `density = true` also unit total mass.
    pub fn validate(&self, path: &str, density: bool) -> Result<()> {
        let bad = |m: String| Err(Error::config(path, m));
        match self {
            TemporalFn::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return bad(format!("constant value must be finite and >= 0, got {value}"));
                }
            }
            TemporalFn::Exponential { rate, scale } => {
                if !(rate.is_finite() && *rate > 0.0 && scale.is_finite() && *scale >= 0.0) {
                    return bad(format!("exponential needs rate > 0 and scale >= 0, got rate {rate}, scale {scale}"));
                }
            }
            TemporalFn::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && hi > lo) {
                    return bad(format!("uniform needs 0 <= lo < hi, got [{lo}, {hi}]"));
                }
            }
            TemporalFn::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return bad("piecewise_linear needs at least one knot".into());
                }
                if knots.iter().any(|k| !(k[0].is_finite() && k[1].is_finite() && k[1] >= 0.0 && k[0] >= 0.0)) {
                    return bad("piecewise_linear knots must be finite with t >= 0 and value >= 0".into());
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return bad("piecewise_linear knot times must be strictly increasing".into());
                }
            }
        }
        if density {
            match self.total_mass() {
                Some(m) if (m - 1.0).abs() <= 1e-6 => {}
                Some(m) => return bad(format!("a probability density must integrate to 1, integrates to {m}")),
                None => return bad("a probability density must be integrable on [0, inf)".into()),
            }
        }
        Ok(())
    }

    /// Smallest `t >= 0` with `∫_0^t value = target`; `None` if the total
    /// mass never reaches `target`.
    pub fn invert_integral(&self, target: f64) -> Option<f64> {
        if target <= 0.0 {
            return Some(0.0);
        }
        match self {
            TemporalFn::Exponential { rate, scale } => {
                let x = 1.0 - target / scale;
                return (x > 0.0).then(|| -x.ln() / rate);
            }
            TemporalFn::Uniform { lo, hi } => return (target <= 1.0).then(|| lo + target * (hi - lo)),
            TemporalFn::Constant { value } if *value > 0.0 => return Some(target / value),
            _ => {}
        }
        if let Some(m) = self.total_mass() {
            if target > m {
                return None;
            }
        }
        let mut hi = 1.0;
        let mut guard = 0;
        while self.integral(0.0, hi) < target {
            hi *= 2.0;
            guard += 1;
            if guard > 80 {
                return None;
            }
        }
        Some(bisect_monotone(|t| self.integral(0.0, t), target, 0.0, hi))
    }

    /// Draws from the density `value` (requires unit total mass).
    pub fn sample_density<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            TemporalFn::Exponential { rate, .. } => -(1.0 - u).ln() / rate,
            _ => self.invert_integral(u).unwrap_or(f64::INFINITY),
        }
    }
}

/// Bisection for a nondecreasing `f` on `[lo, hi]` with `f(lo) <= target <= f(hi)`.
pub(crate) fn bisect_monotone(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn piecewise_value(knots: &[[f64; 2]], t: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first[0] {
        return first[1];
    }
    if t >= last[0] {
        return last[1];
    }
    let i = knots.partition_point(|k| k[0] <= t);
    let (a, b) = (knots[i - 1], knots[i]);
    a[1] + (b[1] - a[1]) * (t - a[0]) / (b[0] - a[0])
}

/// `∫_0^t` of the piecewise-linear function, `t >= 0`.
fn piecewise_integral(knots: &[[f64; 2]], t: f64) -> f64 {
    let first = knots[0];
    if t <= first[0] {
        return first[1] * t;
    }
    let mut acc = first[1] * first[0];
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if t <= a[0] {
            return acc;
        }
        let end = t.min(b[0]);
        let vend = a[1] + (b[1] - a[1]) * (end - a[0]) / (b[0] - a[0]);
        acc += 0.5 * (a[1] + vend) * (end - a[0]);
        if t <= b[0] {
            return acc;
        }
    }
    let last = knots[knots.len() - 1];
    acc + last[1] * (t - last[0])
}

/// Mark density family as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkSpec {
    /// Uniform on a box (default: the whole nucleation window).
    Uniform {
        #[serde(default)]
        lo: Option<Vec<f64>>,
        #[serde(default)]
        hi: Option<Vec<f64>>,
    },
    /// Isotropic gaussian truncated to the nucleation window.
    TruncatedGaussian { mean: Vec<f64>, sigma: f64 },
}

impl Default for MarkSpec {
    fn default() -> Self {
        MarkSpec::Uniform { lo: None, hi: None }
    }
}

impl MarkSpec {
    /// Restricts the family to the nucleation window and renormalizes it there.
    pub fn resolve(&self, window: &Window, path: &str) -> Result<MarkDensity> {
        match self {
            MarkSpec::Uniform { lo, hi } => {
                let b = match (lo, hi) {
                    (Some(lo), Some(hi)) => Window::new(lo, hi).map_err(|e| Error::config(path, e.to_string()))?,
                    (None, None) => *window,
                    _ => return Err(Error::config(path, "uniform marks need both lo and hi, or neither")),
                };
                let support = b
                    .intersect(window)
                    .ok_or_else(|| Error::config(path, "uniform mark box does not meet the nucleation window"))?;
                Ok(MarkDensity::uniform(support))
            }
            MarkSpec::TruncatedGaussian { mean, sigma } => {
                if mean.len() != window.dim {
                    return Err(Error::config(path, format!("mean needs {} coordinates", window.dim)));
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::config(path, "truncated_gaussian needs sigma > 0"));
                }
                let mean = Point::from_slice(mean).map_err(|e| Error::config(path, e.to_string()))?;
                MarkDensity::truncated_gaussian(mean, *sigma, *window)
                    .ok_or_else(|| Error::config(path, "gaussian has no mass inside the nucleation window"))
            }
        }
    }
}

/// A probability density on R^d, supported in a box.
#[derive(Clone, Debug, PartialEq)]
pub enum MarkDensity {
    Uniform { support: Window, density: f64 },
    TruncatedGaussian { mean: Point, sigma: f64, support: Window, norm: f64 },
}

impl MarkDensity {
    pub fn uniform(support: Window) -> Self {
        MarkDensity::Uniform { density: 1.0 / support.volume(), support }
    }

    pub fn truncated_gaussian(mean: Point, sigma: f64, support: Window) -> Option<Self> {
        let std = Normal::standard();
        let norm: f64 = (0..support.dim)
            .map(|a| std.cdf((support.hi[a] - mean.0[a]) / sigma) - std.cdf((support.lo[a] - mean.0[a]) / sigma))
            .product();
        (norm > 0.0).then_some(MarkDensity::TruncatedGaussian { mean, sigma, support, norm })
    }

    pub fn support(&self) -> &Window {
        match self {
            MarkDensity::Uniform { support, .. } | MarkDensity::TruncatedGaussian { support, .. } => support,
        }
    }

    /// `q(t, x)`; the shipped families do not depend on `t`.
    #[inline]
    pub fn density(&self, _t: f64, x: &Point) -> f64 {
        match self {
            MarkDensity::Uniform { support, density } => {
                if support.contains(x) {
                    *density
                } else {
                    0.0
                }
            }
            MarkDensity::TruncatedGaussian { mean, sigma, support, norm } => {
                if !support.contains(x) {
                    return 0.0;
                }
                let d = support.dim as i32;
                let r2 = (0..support.dim).map(|a| (x.0[a] - mean.0[a]).powi(2)).sum::<f64>();
                (-0.5 * r2 / (sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma).powi(d) / norm
            }
        }
    }

    /// Mass of the lattice cell `[x - h/2, x + h/2]^d`: the density at the
    /// nearest support point times the cell volume inside the support.
    pub fn cell_mass(&self, x: &Point, h: f64) -> f64 {
        let support = self.support();
        let mut overlap = 1.0;
        let mut p = *x;
        for a in 0..support.dim {
            let lo = (x.0[a] - 0.5 * h).max(support.lo[a]);
            let hi = (x.0[a] + 0.5 * h).min(support.hi[a]);
            if hi <= lo {
                return 0.0;
            }
            overlap *= hi - lo;
            p.0[a] = x.0[a].clamp(support.lo[a], support.hi[a]);
        }
        self.density(0.0, &p) * overlap
    }

    /// Sup of the density (used as a bound by rejection-style checks).
    pub fn max_density(&self) -> f64 {
        match self {
            MarkDensity::Uniform { density, .. } => *density,
            MarkDensity::TruncatedGaussian { mean, support, .. } => {
                let mut p = *mean;
                for a in 0..support.dim {
                    p.0[a] = p.0[a].clamp(support.lo[a], support.hi[a]);
                }
                self.density(0.0, &p)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut p = Point::ORIGIN;
        match self {
            MarkDensity::Uniform { support, .. } => {
                for a in 0..support.dim {
                    p.0[a] = support.lo[a] + rng.random::<f64>() * support.extent(a);
                }
            }
            MarkDensity::TruncatedGaussian { mean, sigma, support, .. } => {
                let std = Normal::standard();
                for a in 0..support.dim {
                    let lo = std.cdf((support.lo[a] - mean.0[a]) / sigma);
                    let hi = std.cdf((support.hi[a] - mean.0[a]) / sigma);
                    let u = lo + rng.random::<f64>() * (hi - lo);
                    let z = std.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
                    p.0[a] = (mean.0[a] + sigma * z).clamp(support.lo[a], support.hi[a]);
                }
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn integrals_match_closed_forms() {
        assert_eq!(TemporalFn::constant(2.0).integral(0.0, 3.0), 6.0);
        let e = TemporalFn::exponential(1.0);
        assert!((e.integral(0.0, 2.0) - (1.0 - (-2.0f64).exp())).abs() < 1e-15);
        let ramp = TemporalFn::linear_ramp(10.0);
        assert!((ramp.integral(1.0, 2.0) - 1.5).abs() < 1e-15);
        assert_eq!(TemporalFn::Uniform { lo: 1.0, hi: 3.0 }.integral(0.0, 2.0), 0.5);
    }

    #[test]
    fn piecewise_integral_agrees_with_quadrature() {
        let f = TemporalFn::PiecewiseLinear { knots: vec![[0.5, 1.0], [1.0, 3.0], [2.0, 0.5]] };
        for &(a, b) in &[(0.0, 0.7), (0.2, 1.7), (0.0, 4.0), (1.5, 3.0)] {
            let q = crate::quadrature::integrate_piecewise(&|t| f.value(t), a, b, &f.breakpoints(), 1e-12, 40);
            assert!((f.integral(a, b) - q).abs() < 1e-10, "[{a},{b}]");
        }
    }

    #[test]
    fn density_validation() {
        assert!(TemporalFn::exponential(2.0).validate("f", true).is_ok());
        assert!(TemporalFn::constant(1.0).validate("f", true).is_err());
        assert!(TemporalFn::Exponential { rate: 1.0, scale: 2.0 }.validate("f", true).is_err());
        assert!(TemporalFn::Uniform { lo: 2.0, hi: 1.0 }.validate("f", false).is_err());
        let tri = TemporalFn::PiecewiseLinear { knots: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]] };
        assert!(tri.validate("f", true).is_ok());
    }

    #[test]
    fn inversion_roundtrips() {
        let fams = [
            TemporalFn::exponential(1.3),
            TemporalFn::Uniform { lo: 0.5, hi: 2.0 },
            TemporalFn::PiecewiseLinear { knots: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]] },
            TemporalFn::constant(0.7),
        ];
        for f in &fams {
            for &p in &[0.05, 0.3, 0.77] {
                let t = f.invert_integral(p).unwrap();
                assert!((f.integral(0.0, t) - p).abs() < 1e-10, "{f:?} at {p}");
            }
        }
        assert!(TemporalFn::exponential(1.0).invert_integral(1.5).is_none());
    }

    #[test]
    fn bounds_on_interval() {
        let g = TemporalFn::linear_ramp(10.0);
        assert_eq!(g.inf_on(1.0, 2.0), 1.0);
        assert_eq!(g.sup_on(1.0, 2.0), 2.0);
        let u = TemporalFn::Uniform { lo: 1.0, hi: 2.0 };
        assert_eq!(u.sup_on(0.0, 3.0), 1.0);
        assert_eq!(u.inf_on(0.0, 3.0), 0.0);
    }

    fn mass_by_midpoint(q: &MarkDensity, w: &Window, n: usize) -> f64 {
        let hx = w.extent(0) / n as f64;
        let hy = w.extent(1) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = Point::new2(w.lo[0] + (i as f64 + 0.5) * hx, w.lo[1] + (j as f64 + 0.5) * hy);
                s += q.density(0.0, &p);
            }
        }
        s * hx * hy
    }

    #[test]
    fn mark_densities_integrate_to_one() {
        let win = Window::square(-1.0, 5.0);
        let u = MarkSpec::Uniform { lo: Some(vec![0.0, 0.0]), hi: Some(vec![4.0, 4.0]) }.resolve(&win, "m").unwrap();
        assert!((mass_by_midpoint(&u, &win, 600) - 1.0).abs() < 1e-6);
        let g = MarkSpec::TruncatedGaussian { mean: vec![4.5, 2.0], sigma: 0.8 }.resolve(&win, "m").unwrap();
        assert!((mass_by_midpoint(&g, &win, 1200) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_marks_clip_to_window() {
        let win = Window::square(0.0, 2.0);
        let q = MarkSpec::Uniform { lo: Some(vec![1.0, 1.0]), hi: Some(vec![3.0, 3.0]) }.resolve(&win, "m").unwrap();
        assert_eq!(q.support(), &Window::square(1.0, 2.0));
        assert_eq!(q.density(0.0, &Point::new2(1.5, 1.5)), 1.0);
    }

    #[test]
    fn gaussian_samples_stay_in_support() {
        let win = Window::square(0.0, 1.0);
        let g = MarkDensity::truncated_gaussian(Point::new2(0.9, 0.1), 0.3, win).unwrap();
        let mut rng = stream(1, 0);
        for _ in 0..2000 {
            assert!(win.contains(&g.sample(&mut rng)));
        }
    }
}

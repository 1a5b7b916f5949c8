//! Marked point processes used as nucleation laws.
//!
//! History-free kinds (Poisson, single nucleus, staircase) are sampled here.
//! Thinned and free-space kinds depend on the growing set and are only
//! validated here; `simulate` samples them.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{bisect_monotone, MarkDensity, TemporalFn};
use crate::geom::{Point, Window};
use crate::rng::stream;

/// A nucleation event: birth time and location of one nucleus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub birth_time: f64,
    pub location: Point,
    pub grain_id: usize,
}

impl MarkedPoint {
    pub fn new(birth_time: f64, location: Point, grain_id: usize) -> Self {
        MarkedPoint { birth_time, location, grain_id }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    /// Marked Poisson process with temporal intensity `λ(t)`.
    Poisson { intensity: TemporalFn },
    /// Exactly one nucleus with birth-time density `f`.
    SingleNucleus { birth_density: TemporalFn },
    /// Births at `T1, T1 + 1, T1 + 2, ...` with `T1 ~ f`.
    Staircase { first_birth_density: TemporalFn },
    /// Base process with nuclei born inside the covered region removed.
    Thinned { base: Box<NucleationModel> },
    /// Base birth times; each mark uniform on the uncovered part of `region`.
    FreeSpace { base: Box<NucleationModel>, region: Window },
}

/// A nucleation law together with its mark density `q` and the (padded)
/// window nuclei are sampled in.
#[derive(Clone, Debug, PartialEq)]
pub struct NucleationModel {
    kind: ModelKind,
    marks: MarkDensity,
    window: Window,
}

impl NucleationModel {
    pub fn poisson(intensity: TemporalFn, marks: MarkDensity, window: Window) -> Result<Self> {
        intensity.validate("model.intensity", false)?;
        Self::checked(ModelKind::Poisson { intensity }, marks, window)
    }

    /// Poisson model with constant space-time density `alpha` on `window`:
    /// `λ = alpha |window|`, uniform marks.
    pub fn homogeneous_poisson(alpha: f64, window: Window) -> Result<Self> {
        Self::poisson(TemporalFn::constant(alpha * window.volume()), MarkDensity::uniform(window), window)
    }

    pub fn single_nucleus(birth_density: TemporalFn, marks: MarkDensity, window: Window) -> Result<Self> {
        birth_density.validate("model.birth_density", true)?;
        Self::checked(ModelKind::SingleNucleus { birth_density }, marks, window)
    }

    pub fn staircase(first_birth_density: TemporalFn, marks: MarkDensity, window: Window) -> Result<Self> {
        first_birth_density.validate("model.birth_density", true)?;
        Self::checked(ModelKind::Staircase { first_birth_density }, marks, window)
    }

    pub fn thinned(base: NucleationModel) -> Result<Self> {
        if base.is_history_dependent() {
            return Err(Error::config("model.base", "the base of a thinned model must be history-free"));
        }
        let (marks, window) = (base.marks.clone(), base.window);
        Ok(NucleationModel { kind: ModelKind::Thinned { base: Box::new(base) }, marks, window })
    }

    pub fn free_space(base: NucleationModel, region: Window) -> Result<Self> {
        if base.is_history_dependent() {
            return Err(Error::config("model.base", "the base of a free-space model must be history-free"));
        }
        if !base.window.contains_window(&region) {
            return Err(Error::config("model.region", "free-space region must lie inside the nucleation window"));
        }
        let window = base.window;
        Ok(NucleationModel {
            kind: ModelKind::FreeSpace { base: Box::new(base), region },
            marks: MarkDensity::uniform(region),
            window,
        })
    }

    fn checked(kind: ModelKind, marks: MarkDensity, window: Window) -> Result<Self> {
        if !window.contains_window(marks.support()) {
            return Err(Error::config("model.marks", "mark support must lie inside the nucleation window"));
        }
        Ok(NucleationModel { kind, marks, window })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::Poisson { .. } => "poisson",
            ModelKind::SingleNucleus { .. } => "single_nucleus",
            ModelKind::Staircase { .. } => "staircase",
            ModelKind::Thinned { .. } => "thinned",
            ModelKind::FreeSpace { .. } => "free_space",
        }
    }

    pub fn marks(&self) -> &MarkDensity {
        &self.marks
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim
    }

    pub fn is_history_dependent(&self) -> bool {
        matches!(self.kind, ModelKind::Thinned { .. } | ModelKind::FreeSpace { .. })
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self.kind, ModelKind::Poisson { .. })
    }

    /// `Λ̃([0, t])`, the expected number of births up to `t`.
    pub fn marginal_cumulative_intensity(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::domain(format!("time must be >= 0, got {t}")));
        }
        match &self.kind {
            ModelKind::Poisson { intensity } => Ok(intensity.integral(0.0, t)),
            ModelKind::SingleNucleus { birth_density } => Ok(birth_density.integral(0.0, t)),
            ModelKind::Staircase { first_birth_density } => {
                Ok((0..=t.floor() as usize).map(|j| first_birth_density.integral(0.0, t - j as f64)).sum())
            }
            _ => Err(Error::UnsupportedAnalytic { kind: self.kind_name() }),
        }
    }

    /// Marginal temporal density `λ(t)` of the birth times.
    pub fn temporal_density(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            ModelKind::Poisson { intensity } => Ok(intensity.value(t)),
            ModelKind::SingleNucleus { birth_density } => Ok(birth_density.value(t)),
            ModelKind::Staircase { first_birth_density } => {
                Ok((0..=t.floor() as usize).map(|k| first_birth_density.value(t - k as f64)).sum())
            }
            _ => Err(Error::UnsupportedAnalytic { kind: self.kind_name() }),
        }
    }

    /// `α(t, x) = λ(t) q(t, x)`.
    pub fn intensity_density(&self, t: f64, x: &Point) -> Result<f64> {
        Ok(self.temporal_density(t)? * self.marks.density(t, x))
    }

    /// Times in `[0, t_max]` where `λ` may be nonsmooth.
    pub fn temporal_breakpoints(&self, t_max: f64) -> Vec<f64> {
        let mut out = match &self.kind {
            ModelKind::Poisson { intensity } => intensity.breakpoints(),
            ModelKind::SingleNucleus { birth_density } => birth_density.breakpoints(),
            ModelKind::Staircase { first_birth_density } => {
                let base = first_birth_density.breakpoints();
                let mut v = Vec::new();
                for k in 0..=t_max.floor() as usize {
                    v.push(k as f64);
                    v.extend(base.iter().map(|b| b + k as f64));
                }
                v
            }
            ModelKind::Thinned { base } | ModelKind::FreeSpace { base, .. } => base.temporal_breakpoints(t_max),
        };
        out.retain(|&b| b > 0.0 && b < t_max);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Samples a history-free model on `[0, horizon]` from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Result<Vec<MarkedPoint>> {
        if !(horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        let mut times = match &self.kind {
            ModelKind::Poisson { intensity } => poisson_birth_times(intensity, horizon, rng)?,
            ModelKind::SingleNucleus { birth_density } => vec![birth_density.sample_density(rng)],
            ModelKind::Staircase { first_birth_density } => {
                let t1 = first_birth_density.sample_density(rng);
                let mut v = Vec::new();
                let mut k = 0.0;
                while t1 + k <= horizon {
                    v.push(t1 + k);
                    k += 1.0;
                }
                v
            }
            _ => {
                return Err(Error::domain(format!(
                    "{} nucleation depends on the growing set; sample it through simulate::realize",
                    self.kind_name()
                )))
            }
        };
        // Stable sort keeps sampling order for (measure-zero) ties.
        times.sort_by(f64::total_cmp);
        Ok(times
            .into_iter()
            .enumerate()
            .map(|(j, t)| MarkedPoint::new(t, self.marks.sample(rng), j))
            .collect())
    }
}

/// Birth times of a Poisson process on `[0, horizon]`: a Poisson count, then
/// times by inverting the cumulative intensity, tabulated at step
/// `horizon * 1e-3` and refined by bisection inside the bracketing cell.
fn poisson_birth_times<R: Rng + ?Sized>(intensity: &TemporalFn, horizon: f64, rng: &mut R) -> Result<Vec<f64>> {
    let total = intensity.integral(0.0, horizon);
    if !total.is_finite() {
        return Err(Error::config("model.intensity", "intensity is not integrable over [0, horizon]"));
    }
    if total <= 0.0 {
        return Ok(Vec::new());
    }
    let count = Poisson::new(total)
        .map_err(|e| Error::config("model.intensity", format!("cannot sample Poisson({total}): {e}")))?
        .sample(rng) as usize;
    if let TemporalFn::Constant { .. } = intensity {
        return Ok((0..count).map(|_| rng.random::<f64>() * horizon).collect());
    }
    const CELLS: usize = 1000;
    let step = horizon / CELLS as f64;
    let table: Vec<f64> = (0..=CELLS).map(|k| intensity.integral(0.0, k as f64 * step)).collect();
    Ok((0..count)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let k = table.partition_point(|&c| c < target).clamp(1, CELLS);
            let (lo, hi) = ((k - 1) as f64 * step, k as f64 * step);
            bisect_monotone(|t| intensity.integral(0.0, t), target, lo, hi)
        })
        .collect())
}

fn expect_kind(model: &NucleationModel, want: &'static str) -> Result<()> {
    if model.kind_name() == want {
        Ok(())
    } else {
        Err(Error::domain(format!("expected a {want} model, got {}", model.kind_name())))
    }
}

pub fn sample_poisson(model: &NucleationModel, horizon: f64, seed: u64) -> Result<Vec<MarkedPoint>> {
    expect_kind(model, "poisson")?;
    model.sample(horizon, &mut stream(seed, 0))
}

/// One nucleus; the horizon plays no role.
pub fn sample_single_nucleus(model: &NucleationModel, seed: u64) -> Result<Vec<MarkedPoint>> {
    expect_kind(model, "single_nucleus")?;
    model.sample(f64::INFINITY, &mut stream(seed, 0))
}

pub fn sample_staircase(model: &NucleationModel, horizon: f64, seed: u64) -> Result<Vec<MarkedPoint>> {
    expect_kind(model, "staircase")?;
    model.sample(horizon, &mut stream(seed, 0))
}

/// Counts births in `[a, b]`.
pub fn count_in(points: &[MarkedPoint], a: f64, b: f64) -> usize {
    points.iter().filter(|p| p.birth_time >= a && p.birth_time <= b).count()
}

/// Empirical `E[Ñ([t, t+Δ]) 1{Ñ([t, t+Δ]) >= 2}]` over realizations: the
/// quantity that must be `o(Δ)` for the multiple-birth condition.
pub fn multiple_birth_mass(realizations: &[Vec<MarkedPoint>], t: f64, dt: f64) -> f64 {
    if realizations.is_empty() {
        return 0.0;
    }
    let s: usize = realizations
        .iter()
        .map(|r| count_in(r, t, t + dt))
        .filter(|&n| n >= 2)
        .sum();
    s as f64 / realizations.len() as f64
}

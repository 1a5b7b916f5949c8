//! Monte Carlo estimates of the mean volume and surface densities, and of
//! the law of the capture time `T(x)`.
//!
//! A single pass over the ensemble serves any number of requested
//! `(quantity, t, r)` triples. Per realization every node contributes an
//! integer count (covered or not, number of covering grains, ...), and the
//! accumulators hold integer sums and sums of squares, so the reduction is
//! exact and independent of thread count and scheduling.
//!
//! Surface densities use the Minkowski quotient `1{x ∈ Θ_r \ Θ} / r`, with
//! sets taken at node centres and r-neighbourhoods from a Euclidean distance
//! transform of the lattice sets.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Window};
use crate::grid::{Grid, ScalarField};
use crate::growth::{dilate, GrainFront, GrowthField};
use crate::simulate::{capture_field_from, union_capture_time, Ensemble, Realization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "V_V")]
    VolumeDensity,
    #[serde(rename = "V_ex")]
    ExtendedVolumeDensity,
    #[serde(rename = "S_V")]
    SurfaceDensity,
    #[serde(rename = "S_ex")]
    ExtendedSurfaceDensity,
}

impl Quantity {
    pub fn label(&self) -> &'static str {
        match self {
            Quantity::VolumeDensity => "V_V",
            Quantity::ExtendedVolumeDensity => "V_ex",
            Quantity::SurfaceDensity => "S_V",
            Quantity::ExtendedSurfaceDensity => "S_ex",
        }
    }

    pub fn is_surface(&self) -> bool {
        matches!(self, Quantity::SurfaceDensity | Quantity::ExtendedSurfaceDensity)
    }

    pub fn is_extended(&self) -> bool {
        matches!(self, Quantity::ExtendedVolumeDensity | Quantity::ExtendedSurfaceDensity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityRequest {
    pub quantity: Quantity,
    pub t: f64,
    /// Minkowski radius, surface quantities only.
    pub r: Option<f64>,
}

impl DensityRequest {
    pub fn vv(t: f64) -> Self {
        DensityRequest { quantity: Quantity::VolumeDensity, t, r: None }
    }

    pub fn vex(t: f64) -> Self {
        DensityRequest { quantity: Quantity::ExtendedVolumeDensity, t, r: None }
    }

    pub fn sv(t: f64, r: f64) -> Self {
        DensityRequest { quantity: Quantity::SurfaceDensity, t, r: Some(r) }
    }

    pub fn sex(t: f64, r: f64) -> Self {
        DensityRequest { quantity: Quantity::ExtendedSurfaceDensity, t, r: Some(r) }
    }

    fn radius(&self) -> f64 {
        self.r.unwrap_or(0.0)
    }

    /// Divisor turning node counts into density values.
    fn scale(&self) -> f64 {
        if self.quantity.is_surface() {
            self.radius()
        } else {
            1.0
        }
    }
}

/// Nodewise estimate of one mean density with standard errors.
#[derive(Clone, Debug)]
pub struct DensityEstimate {
    pub quantity: Quantity,
    pub t: f64,
    pub r: Option<f64>,
    pub estimate: ScalarField,
    pub stderr: ScalarField,
    pub n_realizations: usize,
    /// Saturated realizations left out.
    pub n_excluded: usize,
}

impl DensityEstimate {
    /// `∫_A estimate` as a half-open node sum.
    pub fn integrate_box(&self, a: &Window) -> f64 {
        self.estimate.integrate_box(a)
    }

    pub fn at(&self, x: &Point) -> Option<(f64, f64)> {
        let idx = self.estimate.grid().nearest_node(x)?;
        Some((self.estimate.get(idx), self.stderr.get(idx)))
    }
}

/// Output of one estimator pass.
#[derive(Clone, Debug)]
pub struct PassResult {
    pub estimates: Vec<DensityEstimate>,
    /// `box_samples[k][b][i]`: integral over box `b` of request `k`'s
    /// per-realization density, realization `i` in ensemble order.
    pub box_samples: Vec<Vec<Vec<f64>>>,
}

struct Accumulator {
    sum: Vec<Vec<u64>>,
    sumsq: Vec<Vec<u64>>,
    boxes: Vec<Vec<Vec<f64>>>,
}

impl Accumulator {
    fn new(requests: usize, nodes: usize, boxes: usize, n: usize) -> Self {
        Accumulator {
            sum: vec![vec![0; nodes]; requests],
            sumsq: vec![vec![0; nodes]; requests],
            boxes: vec![vec![vec![0.0; n]; boxes]; requests],
        }
    }

    fn merge(mut self, other: Accumulator) -> Self {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.sumsq.iter_mut().zip(other.sumsq) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.boxes.iter_mut().zip(other.boxes) {
            for (u, v) in a.iter_mut().zip(b) {
                u.iter_mut().zip(v).for_each(|(x, y)| *x += y);
            }
        }
        self
    }
}

/// Estimates every request on `grid` in one pass over the usable
/// realizations, and integrates each realization's density over `boxes`.
pub fn estimate_pass(ens: &Ensemble, grid: &Grid, requests: &[DensityRequest], boxes: &[Window]) -> Result<PassResult> {
    estimate_pass_weighted(ens, grid, requests, boxes, &[])
}

/// As [`estimate_pass`]; integrals over box `b` are weighted by the nodewise
/// field `weights[b]` when present (e.g. `G(x)` for weak forms).
pub fn estimate_pass_weighted(
    ens: &Ensemble,
    grid: &Grid,
    requests: &[DensityRequest],
    boxes: &[Window],
    weights: &[Option<ScalarField>],
) -> Result<PassResult> {
    validate_requests(ens, grid, requests)?;
    for w in weights.iter().flatten() {
        if w.grid() != grid {
            return Err(Error::domain("box weights must live on the estimation grid"));
        }
    }
    let usable = ens.usable();
    let n = usable.len();
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let box_nodes: Vec<Vec<usize>> = boxes.iter().map(|b| grid.nodes_in_box(b)).collect();
    let nodes = grid.len();
    let acc = usable
        .par_iter()
        .enumerate()
        .try_fold(
            || Accumulator::new(requests.len(), nodes, boxes.len(), n),
            |mut acc, (i, real)| -> Result<Accumulator> {
                let counts = realization_counts(real, grid, requests)?;
                for (k, c) in counts.iter().enumerate() {
                    for (node, &v) in c.iter().enumerate() {
                        let v = v as u64;
                        acc.sum[k][node] += v;
                        acc.sumsq[k][node] += v * v;
                    }
                    for (b, list) in box_nodes.iter().enumerate() {
                        acc.boxes[k][b][i] = match weights.get(b).and_then(|w| w.as_ref()) {
                            Some(w) => list.iter().map(|&j| c[j] as f64 * w.get(j)).sum(),
                            None => list.iter().map(|&j| c[j] as u64).sum::<u64>() as f64,
                        };
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(|| Accumulator::new(requests.len(), nodes, boxes.len(), n), |a, b| Ok(a.merge(b)))?;

    let cell = grid.cell_volume();
    let nf = n as f64;
    let mut estimates = Vec::with_capacity(requests.len());
    let mut box_samples = Vec::with_capacity(requests.len());
    for (k, req) in requests.iter().enumerate() {
        let scale = req.scale();
        let mut est = vec![0.0; nodes];
        let mut se = vec![0.0; nodes];
        for node in 0..nodes {
            let s = acc.sum[k][node] as f64;
            let s2 = acc.sumsq[k][node] as f64;
            let mean = s / nf;
            est[node] = mean / scale;
            se[node] = if req.quantity == Quantity::VolumeDensity {
                (mean * (1.0 - mean) / nf).max(0.0).sqrt()
            } else if n > 1 {
                let var = ((s2 - s * s / nf) / (nf - 1.0)).max(0.0);
                (var / nf).sqrt() / scale
            } else {
                0.0
            };
        }
        estimates.push(DensityEstimate {
            quantity: req.quantity,
            t: req.t,
            r: req.r,
            estimate: ScalarField::from_values(grid.clone(), est)?,
            stderr: ScalarField::from_values(grid.clone(), se)?,
            n_realizations: n,
            n_excluded: ens.saturated_count(),
        });
        box_samples.push(
            acc.boxes[k].iter().map(|b| b.iter().map(|&c| c * cell / scale).collect()).collect(),
        );
    }
    Ok(PassResult { estimates, box_samples })
}

fn validate_requests(ens: &Ensemble, grid: &Grid, requests: &[DensityRequest]) -> Result<()> {
    let h = grid.spacing();
    for req in requests {
        if !(0.0..=ens.horizon()).contains(&req.t) {
            return Err(Error::domain(format!("estimate time {} outside [0, {}]", req.t, ens.horizon())));
        }
        if req.quantity.is_surface() {
            let r = req.r.ok_or_else(|| Error::domain("surface estimates need a Minkowski radius"))?;
            if !(r >= 2.0 * h * (1.0 - 1e-12)) {
                return Err(Error::RadiusTooSmall { r, h, min: 2.0 * h });
            }
        }
    }
    Ok(())
}

/// A grain as a lattice set on the work grid.
enum LatticeGrain {
    /// Time-only: node in the grain at `t` iff `|x - c| <= P(t) - P(T_j)`.
    Ball { birth: f64, birth_primitive: f64, center: Point },
    /// Space-only: per-node capture times.
    Field { birth: f64, capture: Vec<f64> },
}

impl LatticeGrain {
    fn birth(&self) -> f64 {
        match self {
            LatticeGrain::Ball { birth, .. } | LatticeGrain::Field { birth, .. } => *birth,
        }
    }
}

/// Per-request node counts for one realization. Node membership is decided
/// at node centres; r-neighbourhoods are dilations of the lattice sets.
fn realization_counts(real: &Realization, grid: &Grid, requests: &[DensityRequest]) -> Result<Vec<Vec<u32>>> {
    let h = grid.spacing();
    let r_max = requests.iter().map(|r| r.radius()).fold(0.0, f64::max);
    let margin = if r_max > 0.0 { (r_max / h).ceil() as usize + 1 } else { 0 };
    let work = grid.grown(margin);
    let inner = grid.offset_in(&work).expect("grid sits inside its own growth");
    let to_work = |idx: usize| {
        let m = grid.multi(idx);
        work.flat([m[0] + inner[0], m[1] + inner[1], m[2] + inner[2]])
    };
    let to_grid = |w: usize| -> Option<usize> {
        let m = work.multi(w);
        let mut q = [0usize; 3];
        for a in 0..grid.dim() {
            if m[a] < inner[a] || m[a] - inner[a] >= grid.shape()[a] {
                return None;
            }
            q[a] = m[a] - inner[a];
        }
        Some(grid.flat(q))
    };

    // Union membership on the work grid: `level(t)` compared with `union`.
    let (union, level, grains): (Vec<f64>, Box<dyn Fn(f64) -> f64 + '_>, Vec<LatticeGrain>) = match real.growth() {
        GrowthField::TimeOnly(g) => {
            let t_max = requests.iter().map(|r| r.t).fold(0.0, f64::max);
            let top = g.primitive(t_max);
            let mut m = vec![f64::INFINITY; work.len()];
            let mut grains = Vec::new();
            for p in &real.accepted {
                let pj = g.primitive(p.birth_time);
                if p.birth_time > t_max {
                    continue;
                }
                work.for_each_in_bbox(&p.location, top - pj, |idx, q| {
                    let v = pj + q.dist(&p.location);
                    if v < m[idx] {
                        m[idx] = v;
                    }
                });
                grains.push(LatticeGrain::Ball { birth: p.birth_time, birth_primitive: pj, center: p.location });
            }
            (m, Box::new(move |t| g.primitive(t)), grains)
        }
        GrowthField::SpaceOnly(g) => {
            let offset = work.offset_in(g.grid()).ok_or_else(|| {
                Error::domain("estimation grid plus the Minkowski margin must lie on the speed lattice; enlarge the padding")
            })?;
            let mut grains = Vec::new();
            for f in real.fronts()? {
                let arrival = f.arrival().expect("space-only front");
                let capture = (0..work.len())
                    .map(|i| {
                        let m = work.multi(i);
                        f.birth() + arrival.get(g.grid().flat([m[0] + offset[0], m[1] + offset[1], m[2] + offset[2]]))
                    })
                    .collect();
                grains.push(LatticeGrain::Field { birth: f.birth(), capture });
            }
            let union = (0..work.len())
                .map(|i| {
                    grains
                        .iter()
                        .map(|gr| match gr {
                            LatticeGrain::Field { capture, .. } => capture[i],
                            LatticeGrain::Ball { .. } => unreachable!(),
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            (union, Box::new(|t| t), grains)
        }
    };

    let mut out = vec![vec![0u32; grid.len()]; requests.len()];
    for (k, req) in requests.iter().enumerate() {
        let t = req.t;
        let lvl = level(t);
        match req.quantity {
            Quantity::VolumeDensity => {
                for (idx, o) in out[k].iter_mut().enumerate() {
                    *o = (union[to_work(idx)] <= lvl) as u32;
                }
            }
            Quantity::SurfaceDensity => {
                let ind = ScalarField::from_fn_indexed(work.clone(), |i| (union[i] <= lvl) as u8 as f64);
                let grown = dilate(&ind, req.radius())?;
                for (idx, o) in out[k].iter_mut().enumerate() {
                    let w = to_work(idx);
                    *o = (grown.get(w) > 0.5 && ind.get(w) <= 0.5) as u32;
                }
            }
            Quantity::ExtendedVolumeDensity => {
                for gr in grains.iter().filter(|gr| gr.birth() <= t) {
                    match gr {
                        LatticeGrain::Ball { birth_primitive, center, .. } => {
                            let rad = lvl - birth_primitive;
                            // Same expression as the union test, so V_ex >= V_V
                            // holds bit for bit.
                            work.for_each_in_bbox(center, rad, |w, p| {
                                if birth_primitive + p.dist(center) <= lvl {
                                    if let Some(idx) = to_grid(w) {
                                        out[k][idx] += 1;
                                    }
                                }
                            });
                        }
                        LatticeGrain::Field { capture, .. } => {
                            for (idx, o) in out[k].iter_mut().enumerate() {
                                *o += (capture[to_work(idx)] <= t) as u32;
                            }
                        }
                    }
                }
            }
            Quantity::ExtendedSurfaceDensity => {
                for gr in grains.iter().filter(|gr| gr.birth() <= t) {
                    grain_ring(&work, gr, lvl, req.radius(), |w| {
                        if let Some(idx) = to_grid(w) {
                            out[k][idx] += 1;
                        }
                    })?;
                }
            }
        }
    }
    Ok(out)
}

/// Calls `hit` for every work node in `grain_r \ grain` at level `lvl`
/// (primitive value for balls, time for fields); the dilation runs on the
/// grain's bounding box grown by the radius.
fn grain_ring(work: &Grid, grain: &LatticeGrain, lvl: f64, r: f64, mut hit: impl FnMut(usize)) -> Result<()> {
    let d = work.dim();
    let shape = work.shape();
    let h = work.spacing();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    match grain {
        LatticeGrain::Ball { birth_primitive, center, .. } => {
            let reach = lvl - birth_primitive + r;
            for a in 0..d {
                let (wlo, whi) = (work.window().lo[a], work.window().hi[a]);
                let (blo, bhi) = (center.0[a] - reach, center.0[a] + reach);
                if bhi < wlo || blo > whi {
                    return Ok(());
                }
                lo[a] = (((blo - wlo) / h).floor().max(0.0) as usize).min(shape[a] - 1);
                hi[a] = (((bhi - wlo) / h).ceil().max(0.0) as usize).min(shape[a] - 1);
            }
        }
        LatticeGrain::Field { capture, .. } => {
            let mut any = false;
            lo[..d].fill(usize::MAX);
            for (i, &c) in capture.iter().enumerate() {
                if c <= lvl {
                    any = true;
                    let m = work.multi(i);
                    for a in 0..d {
                        lo[a] = lo[a].min(m[a]);
                        hi[a] = hi[a].max(m[a]);
                    }
                }
            }
            if !any {
                return Ok(());
            }
            let pad = (r / h).ceil() as usize + 1;
            for a in 0..d {
                lo[a] = lo[a].saturating_sub(pad);
                hi[a] = (hi[a] + pad).min(shape[a] - 1);
            }
        }
    }
    let mut wlo = vec![0.0; d];
    let mut whi = vec![0.0; d];
    for a in 0..d {
        if hi[a] == lo[a] {
            if hi[a] + 1 < shape[a] {
                hi[a] += 1;
            } else {
                lo[a] -= 1;
            }
        }
        wlo[a] = work.coord(a, lo[a]);
        whi[a] = work.coord(a, lo[a]) + (hi[a] - lo[a]) as f64 * h;
    }
    let sub = Grid::new(Window::new(&wlo, &whi)?, h)?;
    let to_work = |i: usize| {
        let m = sub.multi(i);
        work.flat([m[0] + lo[0], m[1] + lo[1], m[2] + lo[2]])
    };
    let ind = ScalarField::from_fn_indexed(sub.clone(), |i| {
        let inside = match grain {
            LatticeGrain::Ball { birth_primitive, center, .. } => {
                birth_primitive + work.point(to_work(i)).dist(center) <= lvl
            }
            LatticeGrain::Field { capture, .. } => capture[to_work(i)] <= lvl,
        };
        inside as u8 as f64
    });
    let grown = dilate(&ind, r)?;
    for i in 0..sub.len() {
        if grown.get(i) > 0.5 && ind.get(i) <= 0.5 {
            hit(to_work(i));
        }
    }
    Ok(())
}

fn single(ens: &Ensemble, req: DensityRequest) -> Result<DensityEstimate> {
    Ok(estimate_pass(ens, ens.grid(), &[req], &[])?.estimates.remove(0))
}

/// `V̂_V(t, ·)`: fraction of realizations covering each node.
pub fn estimate_vv(ens: &Ensemble, t: f64) -> Result<DensityEstimate> {
    single(ens, DensityRequest::vv(t))
}

/// `V̂_ex(t, ·)`: mean number of grains covering each node.
pub fn estimate_vex(ens: &Ensemble, t: f64) -> Result<DensityEstimate> {
    single(ens, DensityRequest::vex(t))
}

/// `Ŝ_V(t, ·)` with Minkowski radius `r`.
pub fn estimate_sv(ens: &Ensemble, t: f64, r: f64) -> Result<DensityEstimate> {
    single(ens, DensityRequest::sv(t, r))
}

/// `Ŝ_ex(t, ·)` with Minkowski radius `r`.
pub fn estimate_sex(ens: &Ensemble, t: f64, r: f64) -> Result<DensityEstimate> {
    single(ens, DensityRequest::sex(t, r))
}

/// Union capture-time fields of every usable realization on `grid`, in
/// ensemble order.
pub fn capture_fields(ens: &Ensemble, grid: &Grid) -> Result<Vec<ScalarField>> {
    ens.usable()
        .par_iter()
        .map(|r| {
            let fronts = r.fronts()?;
            capture_field_from(r.growth(), &fronts, r.horizon, grid)
        })
        .collect()
}

/// Exact capture times of one point across an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureTimeSample {
    pub x: Vec<f64>,
    /// Finite capture times, ascending.
    pub times: Vec<f64>,
    /// Realizations not covering `x` by the horizon.
    pub censored: usize,
    pub n_realizations: usize,
    pub horizon: f64,
}

impl CaptureTimeSample {
    pub fn from_times(x: Vec<f64>, raw: &[f64], horizon: f64) -> Self {
        let mut times: Vec<f64> = raw.iter().copied().filter(|t| t.is_finite()).collect();
        times.sort_by(f64::total_cmp);
        CaptureTimeSample { x, censored: raw.len() - times.len(), n_realizations: raw.len(), times, horizon }
    }

    /// Empirical CDF `#{T <= t} / n`.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.times.partition_point(|&v| v <= t) as f64 / self.n_realizations as f64
    }
}

pub fn sample_capture_time(ens: &Ensemble, x: &Point) -> Result<CaptureTimeSample> {
    let raw: Vec<f64> = ens.usable().par_iter().map(|r| union_capture_time(r, x)).collect::<Result<_>>()?;
    if raw.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(CaptureTimeSample::from_times(x.coords(ens.model().dim()).to_vec(), &raw, ens.horizon()))
}

/// Kolmogorov–Smirnov distance between the empirical CDF and `cdf` on
/// `[0, horizon]` (the censored tail is not compared).
pub fn ks_statistic(sample: &CaptureTimeSample, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sample.n_realizations as f64;
    let mut d = 0.0f64;
    for (i, &t) in sample.times.iter().enumerate() {
        let f = cdf(t);
        d = d.max((((i + 1) as f64) / n - f).abs()).max((i as f64 / n - f).abs());
    }
    d.max((sample.times.len() as f64 / n - cdf(sample.horizon)).abs())
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomReport {
    /// Largest group of exactly equal finite times, over the finite count.
    pub max_repeat_fraction: f64,
    /// Largest jump of the empirical CDF below the horizon.
    pub largest_cdf_jump: f64,
    pub threshold: f64,
    pub n_finite: usize,
    pub inconclusive: bool,
    pub pass: bool,
}

/// Minimum finite samples for a conclusive atom test.
pub const ATOM_TEST_MIN_SAMPLES: usize = 100;

/// Absence of atoms in the capture-time law, checked through exact ties.
pub fn atom_test(sample: &CaptureTimeSample) -> AtomReport {
    let n = sample.times.len();
    let mut largest = 0usize;
    let mut run = 0usize;
    for (i, t) in sample.times.iter().enumerate() {
        run = if i > 0 && *t == sample.times[i - 1] { run + 1 } else { 1 };
        largest = largest.max(run);
    }
    let frac = if n > 0 { largest as f64 / n as f64 } else { 0.0 };
    let threshold = if n > 0 { (2.0 / n as f64).max(1e-3) } else { 1e-3 };
    let inconclusive = n < ATOM_TEST_MIN_SAMPLES;
    AtomReport {
        max_repeat_fraction: frac,
        largest_cdf_jump: largest as f64 / sample.n_realizations.max(1) as f64,
        threshold,
        n_finite: n,
        inconclusive,
        pass: !inconclusive && frac <= threshold,
    }
}

/// Descriptive histogram of the finite capture times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Counts normalized by `n_realizations * width`, so the bars integrate
    /// to the uncensored fraction.
    pub density: Vec<f64>,
    pub bin_width: f64,
}

/// Histogram with bin width `IQR n^{-1/3}`; `None` for fewer than four
/// samples or a degenerate spread.
pub fn capture_histogram(sample: &CaptureTimeSample) -> Option<Histogram> {
    let t = &sample.times;
    let n = t.len();
    if n < 4 {
        return None;
    }
    let q = |p: f64| {
        let pos = p * (n - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        t[i] + frac * (t[(i + 1).min(n - 1)] - t[i])
    };
    let width = (q(0.75) - q(0.25)) * (n as f64).powf(-1.0 / 3.0);
    if !(width > 0.0) {
        return None;
    }
    let (lo, hi) = (t[0], t[n - 1]);
    let bins = (((hi - lo) / width).ceil() as usize).max(1);
    let mut counts = vec![0usize; bins];
    for &v in t {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let norm = sample.n_realizations as f64 * width;
    Some(Histogram {
        edges: (0..=bins).map(|k| lo + k as f64 * width).collect(),
        density: counts.iter().map(|&c| c as f64 / norm).collect(),
        bin_width: width,
    })
}

/// CSV with one row per node: axis coordinates, estimate, stderr, n, t,
/// quantity, r.
pub fn write_density_csv(est: &DensityEstimate, header: &[String], out: &mut impl Write) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let grid = est.estimate.grid();
    let dim = grid.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut cols: Vec<&str> = ["x", "y", "z"][..dim].to_vec();
    cols.extend(["estimate", "stderr", "n", "t", "quantity", "r"]);
    w.write_record(&cols)?;
    let r = est.r.map(|r| format!("{r}")).unwrap_or_default();
    for i in 0..grid.len() {
        let p = grid.point(i);
        let mut rec: Vec<String> = p.coords(dim).iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{}", est.estimate.get(i)));
        rec.push(format!("{}", est.stderr.get(i)));
        rec.push(est.n_realizations.to_string());
        rec.push(format!("{}", est.t));
        rec.push(est.quantity.label().into());
        rec.push(r.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Sorted capture times as CSV; censoring metadata goes to the sidecar.
pub fn write_capture_csv(sample: &CaptureTimeSample, header: &[String], out: &mut impl Write) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["capture_time"])?;
    for t in &sample.times {
        w.write_record([format!("{t}")])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON sidecar for a capture-time CSV.
pub fn capture_sidecar(sample: &CaptureTimeSample, fingerprint: &str) -> serde_json::Value {
    serde_json::json!({
        "fingerprint": fingerprint,
        "x": sample.x,
        "n_realizations": sample.n_realizations,
        "n_finite": sample.times.len(),
        "censored": sample.censored,
        "censoring_time": sample.horizon,
    })
}

/// Capture-time sample rebuilt from stored fronts; used to cross-check the
/// lattice indicators against exact capture times.
pub fn capture_times_at_nodes(real: &Realization, grid: &Grid) -> Result<Vec<f64>> {
    let fronts: Vec<GrainFront> = real.fronts()?;
    Ok((0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            let t = fronts.iter().map(|f| f.capture_time(real.growth(), &p)).fold(f64::INFINITY, f64::min);
            if t <= real.horizon {
                t
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{MarkDensity, TemporalFn};
    use crate::nucleation::{MarkedPoint, NucleationModel};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn unit() -> Arc<GrowthField> {
        Arc::new(GrowthField::constant(1.0, 10.0).unwrap())
    }

    fn single_grain_ensemble(h: f64) -> Ensemble {
        let win = Window::square(-2.0, 2.0);
        let m = NucleationModel::single_nucleus(
            TemporalFn::Uniform { lo: 0.0, hi: 1.0 },
            MarkDensity::uniform(win),
            win,
        )
        .unwrap();
        let real = Realization::from_points(unit(), 2.0, vec![MarkedPoint::new(0.0, Point::ORIGIN, 0)]);
        Ensemble::from_realizations(&m, unit(), 2.0, Grid::new(win, h).unwrap(), vec![real])
    }

    #[test]
    fn weighted_boxes_scale_with_the_weight() {
        let ens = single_grain_ensemble(0.02);
        let a = Window::square(-1.0, 1.0);
        let two = ScalarField::filled(ens.grid().clone(), 2.0);
        let res = estimate_pass_weighted(&ens, ens.grid(), &[DensityRequest::vv(0.5)], &[a, a], &[None, Some(two)]).unwrap();
        let (plain, weighted) = (res.box_samples[0][0][0], res.box_samples[0][1][0]);
        assert!(plain > 0.7 && plain < 0.87, "{plain}");
        assert_eq!(weighted, 2.0 * plain);
    }

    #[test]
    fn single_grain_surface_is_perimeter() {
        let ens = single_grain_ensemble(0.01);
        let a = Window::square(-1.8, 1.8);
        let sv = estimate_sv(&ens, 1.0, 0.05).unwrap();
        let sex = estimate_sex(&ens, 1.0, 0.05).unwrap();
        assert_eq!(sv.estimate.values(), sex.estimate.values());
        let total = sv.integrate_box(&a);
        assert!((total / (2.0 * PI) - 1.0).abs() < 0.02, "{total}");
        let vv = estimate_vv(&ens, 1.0).unwrap();
        let vex = estimate_vex(&ens, 1.0).unwrap();
        assert_eq!(vv.estimate.values(), vex.estimate.values());
    }

    #[test]
    fn overlapping_grains_extended_exceeds_union() {
        let win = Window::square(-2.0, 2.0);
        let m = NucleationModel::homogeneous_poisson(0.1, win).unwrap();
        let pts = vec![
            MarkedPoint::new(0.0, Point::new2(0.0, 0.0), 0),
            MarkedPoint::new(0.0, Point::new2(0.3, 0.0), 1),
        ];
        let real = Realization::from_points(unit(), 2.0, pts);
        let ens = Ensemble::from_realizations(&m, unit(), 2.0, Grid::new(win, 0.02).unwrap(), vec![real]);
        let a = Window::square(-1.9, 1.9);
        let reqs = [DensityRequest::vv(1.0), DensityRequest::vex(1.0), DensityRequest::sv(1.0, 0.06), DensityRequest::sex(1.0, 0.06)];
        let pass = estimate_pass(&ens, ens.grid(), &reqs, &[a]).unwrap();
        for (v, e) in pass.estimates[0].estimate.values().iter().zip(pass.estimates[1].estimate.values()) {
            assert!(e >= v);
        }
        assert!(pass.box_samples[3][0][0] > pass.box_samples[2][0][0]);
    }

    #[test]
    fn capture_sample_bookkeeping() {
        let times = [0.3, f64::INFINITY, 0.1, 0.2, f64::INFINITY];
        let s = CaptureTimeSample::from_times(vec![0.0, 0.0], &times, 1.0);
        assert_eq!(s.times, vec![0.1, 0.2, 0.3]);
        assert_eq!(s.censored + s.times.len(), s.n_realizations);
        assert!((s.ecdf(s.horizon) - (1.0 - 2.0 / 5.0)).abs() < 1e-15);
    }

    #[test]
    fn atom_test_detects_point_mass() {
        let tied = CaptureTimeSample::from_times(vec![0.0], &vec![0.5; 500], 1.0);
        let r = atom_test(&tied);
        assert!(!r.pass && r.max_repeat_fraction == 1.0);
        let spread: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let ok = atom_test(&CaptureTimeSample::from_times(vec![0.0], &spread, 1.0));
        assert!(ok.pass);
        let few = atom_test(&CaptureTimeSample::from_times(vec![0.0], &spread[..50], 1.0));
        assert!(few.inconclusive && !few.pass);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let raw: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let s = CaptureTimeSample::from_times(vec![0.0], &raw, 1.0);
        assert!(ks_statistic(&s, |t| t.clamp(0.0, 1.0)) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn empty_ensemble_errors() {
        let ens = single_grain_ensemble(0.1);
        let empty = Ensemble::from_realizations(ens.model(), unit(), 2.0, ens.grid().clone(), vec![]);
        assert!(matches!(estimate_vv(&empty, 0.5), Err(Error::EmptyEnsemble)));
    }
}

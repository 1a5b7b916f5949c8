//! First-order upwind fast marching for `|∇τ| = 1 / G(x)` on a lattice.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::{Point, MAX_DIM};
use crate::grid::{Grid, ScalarField};

/// Default radius of the source disc initialized with straight-ray times.
/// A disc of fixed physical size keeps the point-source error at O(h); the
/// disc never shrinks below one lattice diagonal.
pub const DEFAULT_SEED_RADIUS: f64 = 0.1;

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    time: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on time, ties by node index for determinism.
        other.time.total_cmp(&self.time).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Slowness integrated along the segment from `a` to `b` (midpoint rule,
/// two samples per lattice step).
pub fn straight_ray_time(speed: &ScalarField, a: &Point, b: &Point) -> f64 {
    let len = a.dist(b);
    if len == 0.0 {
        return 0.0;
    }
    let m = ((2.0 * len / speed.grid().spacing()).ceil() as usize).max(1);
    let mut acc = 0.0;
    for k in 0..m {
        let u = (k as f64 + 0.5) / m as f64;
        let mut p = *a;
        for i in 0..MAX_DIM {
            p.0[i] = a.0[i] + u * (b.0[i] - a.0[i]);
        }
        acc += 1.0 / speed.interpolate(&p).unwrap_or(f64::NAN);
    }
    acc * len / m as f64
}

/// Arrival times from `source` through the speed field, plus the seeded
/// source nodes. Nodes within `seed_radius` of the source take straight-ray
/// times; the rest are marched.
pub fn fast_marching(speed: &ScalarField, source: &Point, seed_radius: f64) -> Result<(ScalarField, Vec<usize>)> {
    fast_marching_until(speed, source, seed_radius, f64::INFINITY)
}

/// As [`fast_marching`], stopping once the front passes `max_time`; nodes
/// not reached by then stay `+inf`. Values up to `max_time` are unchanged.
pub fn fast_marching_until(
    speed: &ScalarField,
    source: &Point,
    seed_radius: f64,
    max_time: f64,
) -> Result<(ScalarField, Vec<usize>)> {
    let grid = speed.grid();
    if !grid.window().contains(source) {
        return Err(Error::domain(format!("source {:?} lies outside the speed grid", source.coords(grid.dim()))));
    }
    if !(seed_radius >= 0.0) {
        return Err(Error::domain(format!("seed radius must be >= 0, got {seed_radius}")));
    }
    let h = grid.spacing();
    let n = grid.len();
    let mut times = vec![f64::INFINITY; n];
    let mut known = vec![false; n];
    let mut heap = BinaryHeap::new();

    let seed_radius = seed_radius.max((grid.dim() as f64).sqrt() * h) * (1.0 + 1e-9);
    let mut sources = Vec::new();
    grid.for_each_in_bbox(source, seed_radius, |idx, p| {
        if p.dist(source) <= seed_radius {
            sources.push(idx);
        }
    });
    if sources.is_empty() {
        sources.push(grid.nearest_node(source).expect("source inside window"));
    }
    for &s in &sources {
        times[s] = straight_ray_time(speed, source, &grid.point(s));
    }
    for &s in &sources {
        known[s] = true;
    }
    for &s in &sources {
        for nb in neighbours(grid, s) {
            if !known[nb] {
                times[nb] = upwind_update(grid, &times, &known, speed.values(), nb);
                heap.push(Entry { time: times[nb], node: nb });
            }
        }
    }

    while let Some(Entry { time, node }) = heap.pop() {
        if known[node] || time > times[node] {
            continue;
        }
        if time > max_time {
            // Everything left is later; drop the tentative values.
            for (t, k) in times.iter_mut().zip(&known) {
                if !k {
                    *t = f64::INFINITY;
                }
            }
            break;
        }
        known[node] = true;
        for nb in neighbours(grid, node) {
            if known[nb] {
                continue;
            }
            let t = upwind_update(grid, &times, &known, speed.values(), nb);
            if t < times[nb] {
                times[nb] = t;
                heap.push(Entry { time: t, node: nb });
            }
        }
    }
    Ok((ScalarField::from_values(grid.clone(), times)?, sources))
}

pub(crate) fn neighbours(grid: &Grid, idx: usize) -> impl Iterator<Item = usize> + '_ {
    let m = grid.multi(idx);
    let shape = grid.shape();
    (0..grid.dim()).flat_map(move |a| {
        let mut out = [None, None];
        if m[a] > 0 {
            let mut q = m;
            q[a] -= 1;
            out[0] = Some(grid.flat(q));
        }
        if m[a] + 1 < shape[a] {
            let mut q = m;
            q[a] += 1;
            out[1] = Some(grid.flat(q));
        }
        out.into_iter().flatten()
    })
}

/// Smallest known neighbour value per axis, sorted ascending.
fn axis_minima(grid: &Grid, times: &[f64], usable: impl Fn(usize) -> bool, idx: usize) -> ([f64; 3], usize) {
    let m = grid.multi(idx);
    let shape = grid.shape();
    let mut mins = [f64::INFINITY; 3];
    for a in 0..grid.dim() {
        let mut best = f64::INFINITY;
        if m[a] > 0 {
            let mut q = m;
            q[a] -= 1;
            let i = grid.flat(q);
            if usable(i) {
                best = best.min(times[i]);
            }
        }
        if m[a] + 1 < shape[a] {
            let mut q = m;
            q[a] += 1;
            let i = grid.flat(q);
            if usable(i) {
                best = best.min(times[i]);
            }
        }
        mins[a] = best;
    }
    mins[..grid.dim()].sort_by(f64::total_cmp);
    (mins, grid.dim())
}

/// Solves `Σ_a (τ - m_a)_+^2 = (h / G)^2` for the sorted axis minima.
fn solve_quadratic(mins: &[f64], f: f64) -> f64 {
    let mut tau = mins[0] + f;
    let mut sum = mins[0];
    let mut sum2 = mins[0] * mins[0];
    for k in 1..mins.len() {
        if tau <= mins[k] {
            break;
        }
        sum += mins[k];
        sum2 += mins[k] * mins[k];
        let kf = (k + 1) as f64;
        let disc = sum * sum - kf * (sum2 - f * f);
        tau = (sum + disc.max(0.0).sqrt()) / kf;
    }
    tau
}

fn upwind_update(grid: &Grid, times: &[f64], known: &[bool], speed: &[f64], idx: usize) -> f64 {
    let (mins, d) = axis_minima(grid, times, |i| known[i], idx);
    solve_quadratic(&mins[..d], grid.spacing() / speed[idx])
}

/// Largest relative residual of the discrete upwind equation over the
/// non-source nodes, recomputed from the final values of all neighbours.
pub fn eikonal_residual(times: &ScalarField, speed: &ScalarField, sources: &[usize]) -> f64 {
    let grid = times.grid();
    let vals = times.values();
    let mut is_source = vec![false; grid.len()];
    for &s in sources {
        is_source[s] = true;
    }
    let mut worst = 0.0f64;
    for idx in 0..grid.len() {
        if is_source[idx] || !vals[idx].is_finite() {
            continue;
        }
        let (mins, d) = axis_minima(grid, vals, |_| true, idx);
        let tau = solve_quadratic(&mins[..d], grid.spacing() / speed.get(idx));
        worst = worst.max((tau - vals[idx]).abs() / vals[idx].max(f64::MIN_POSITIVE));
    }
    worst
}

//! Causal cones `C(t, x)`: the births `(s, y)` whose grain covers `x` by `t`.
//!
//! The cone measure `Λ(C) = ∫_0^t λ(s) Q(s, S_x(s, t)) ds`, its time
//! derivative and the extended surface density are evaluated by
//! deterministic quadrature.
//!
//! For a time-only speed the section `S_x(s, t)` is the ball of radius
//! `R(s, t)` about `x` and the boundary kernel is 1. For a space-only speed
//! the section is `{y : τ(x, y) ≤ t - s}` and the kernel is `G(y) / G(x)`.
//! Sections on the lattice use node cells; their `s`-integrals are done in
//! closed form through `Λ̃`, which is the exact integral of the midpoint
//! section mass.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{MarkDensity, TemporalFn};
use crate::geom::{disc_box_area, Point, MAX_DIM};
use crate::grid::ScalarField;
use crate::growth::{GrowthField, TimeGrowth};
use crate::nucleation::{ModelKind, NucleationModel};
use crate::quadrature::{integrate_piecewise, GaussLegendre};

/// Quadrature controls for cone integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOptions {
    /// Absolute tolerance of the adaptive Simpson rule in `s`.
    pub tol: f64,
    pub max_depth: u32,
    /// Gauss–Legendre nodes in the radial direction.
    pub radial_nodes: usize,
    /// Angular resolution on the unit sphere (points per great circle).
    pub angular_nodes: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { tol: 1e-6, max_depth: 30, radial_nodes: 64, angular_nodes: 256 }
    }
}

impl QuadratureOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Quadrature rule on the unit sphere `S^{d-1}`; weights sum to its area.
#[derive(Clone, Debug)]
struct SphereRule {
    dirs: Vec<[f64; MAX_DIM]>,
    weights: Vec<f64>,
}

impl SphereRule {
    fn new(dim: usize, n: usize) -> Self {
        let mut dirs = Vec::new();
        let mut weights = Vec::new();
        match dim {
            1 => {
                dirs = vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
                weights = vec![1.0, 1.0];
            }
            2 => {
                let n = n.max(8);
                for k in 0..n {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    dirs.push([th.cos(), th.sin(), 0.0]);
                    weights.push(2.0 * std::f64::consts::PI / n as f64);
                }
            }
            _ => {
                let n_phi = (n / 4).max(8);
                let gl = GaussLegendre::new((n / 8).max(8));
                for (mu, wmu) in gl.mapped(-1.0, 1.0) {
                    let rho = (1.0 - mu * mu).max(0.0).sqrt();
                    for k in 0..n_phi {
                        let ph = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
                        dirs.push([rho * ph.cos(), rho * ph.sin(), mu]);
                        weights.push(wmu * 2.0 * std::f64::consts::PI / n_phi as f64);
                    }
                }
            }
        }
        SphereRule { dirs, weights }
    }

    /// `∫_{S^{d-1}} q(x + ρ ω) dω`.
    fn integrate(&self, marks: &MarkDensity, s: f64, x: &Point, rho: f64) -> f64 {
        let mut acc = 0.0;
        for (d, w) in self.dirs.iter().zip(&self.weights) {
            let p = Point([x.0[0] + rho * d[0], x.0[1] + rho * d[1], x.0[2] + rho * d[2]]);
            acc += w * marks.density(s, &p);
        }
        acc
    }
}

/// Boundary weight `w(y) = |∇_x S| / |∇_y S|` of the measure `dK`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConeKernel {
    /// Time-only speeds: `w ≡ 1`.
    Unit,
    /// Space-only speeds: `w(y) = G(y) / G(x)`.
    SpeedRatio { target_speed: f64 },
}

impl ConeKernel {
    pub fn weight(&self, speed_at_y: f64) -> f64 {
        match *self {
            ConeKernel::Unit => 1.0,
            ConeKernel::SpeedRatio { target_speed } => speed_at_y / target_speed,
        }
    }
}

/// Lattice cells reachable from the target, sorted by travel time.
#[derive(Debug)]
struct ArrivalCells {
    field: ScalarField,
    /// `(τ(x, y_c), node index)` ascending.
    order: Vec<(f64, usize)>,
}

#[derive(Clone, Debug)]
enum Shape {
    Ball,
    Arrival(Arc<ArrivalCells>),
}

/// The causal cone of target `x` at time `t`.
#[derive(Clone, Debug)]
pub struct CausalCone<'g> {
    growth: &'g GrowthField,
    target: Point,
    time: f64,
    shape: Shape,
    opts: QuadratureOptions,
    radial: Arc<GaussLegendre>,
    sphere: Arc<SphereRule>,
}

impl<'g> CausalCone<'g> {
    pub fn new(growth: &'g GrowthField, target: Point, time: f64) -> Result<Self> {
        Self::with_options(growth, target, time, QuadratureOptions::default())
    }

    /// Builds the cone; for space-only speeds this runs one eikonal solve
    /// from `target`, shared by every `at_time` copy.
    pub fn with_options(growth: &'g GrowthField, target: Point, time: f64, opts: QuadratureOptions) -> Result<Self> {
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::domain(format!("cone time must be finite and >= 0, got {time}")));
        }
        let (shape, dim) = match growth {
            GrowthField::TimeOnly(_) => (Shape::Ball, target_dim(&target)),
            GrowthField::SpaceOnly(g) => {
                let field = g.arrival_field(&target)?;
                let mut order: Vec<(f64, usize)> = field
                    .values()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.is_finite())
                    .map(|(i, &v)| (v, i))
                    .collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let dim = field.grid().dim();
                (Shape::Arrival(Arc::new(ArrivalCells { field, order })), dim)
            }
        };
        Ok(CausalCone {
            growth,
            target,
            time,
            shape,
            opts,
            radial: Arc::new(GaussLegendre::new(opts.radial_nodes.max(1))),
            sphere: Arc::new(SphereRule::new(dim, opts.angular_nodes)),
        })
    }

    /// Same target, different time; reuses the eikonal field.
    pub fn at_time(&self, time: f64) -> Result<Self> {
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::domain(format!("cone time must be finite and >= 0, got {time}")));
        }
        Ok(CausalCone { time, ..self.clone() })
    }

    pub fn target(&self) -> &Point {
        &self.target
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn growth(&self) -> &GrowthField {
        self.growth
    }

    pub fn options(&self) -> &QuadratureOptions {
        &self.opts
    }

    pub fn kernel(&self) -> ConeKernel {
        match self.growth {
            GrowthField::TimeOnly(_) => ConeKernel::Unit,
            GrowthField::SpaceOnly(g) => ConeKernel::SpeedRatio {
                target_speed: g.speed_at(&self.target).unwrap_or(f64::NAN),
            },
        }
    }

    /// `G(t, x)` at the cone's apex.
    pub fn apex_speed(&self) -> f64 {
        self.growth.speed_at(self.time, &self.target)
    }

    /// `τ(x, y)` (space-only) or `|x - y|` (time-only).
    fn reach(&self, y: &Point) -> f64 {
        match &self.shape {
            Shape::Ball => self.target.dist(y),
            Shape::Arrival(cells) => cells.field.interpolate(y).unwrap_or(f64::INFINITY),
        }
    }

    /// `(s, y) ∈ C(t, x)`, i.e. a grain born at `(s, y)` covers `x` by `t`.
    pub fn contains(&self, s: f64, y: &Point) -> bool {
        if s < 0.0 || s > self.time {
            return false;
        }
        match self.growth {
            GrowthField::TimeOnly(g) => self.target.dist(y) <= g.primitive(self.time) - g.primitive(s),
            GrowthField::SpaceOnly(_) => self.reach(y) <= self.time - s,
        }
    }

    /// Latest birth time at `y` that still covers `x` by `t`, or `None` when
    /// no birth at `y` in `[0, t]` does.
    pub fn birth_time_function(&self, y: &Point) -> Option<f64> {
        let s = match self.growth {
            GrowthField::TimeOnly(g) => {
                let p = g.primitive(self.time) - self.target.dist(y);
                if p < 0.0 {
                    return None;
                }
                g.invert_primitive(p)
            }
            GrowthField::SpaceOnly(_) => self.time - self.reach(y),
        };
        (s >= 0.0).then_some(s)
    }

    fn section_radius(&self, g: &TimeGrowth, s: f64) -> f64 {
        (g.primitive(self.time) - g.primitive(s)).max(0.0)
    }

    /// `Q(s, S_x(s, t))`, the mark mass of the section at birth time `s`.
    pub fn section_mass(&self, s: f64, marks: &MarkDensity) -> f64 {
        if s < 0.0 || s >= self.time {
            return 0.0;
        }
        match (&self.shape, self.growth) {
            (Shape::Ball, GrowthField::TimeOnly(g)) => {
                let r = self.section_radius(g, s);
                if r == 0.0 {
                    return 0.0;
                }
                match marks {
                    MarkDensity::Uniform { support, density } if self.sphere_dim() == 2 => {
                        (density * disc_box_area(&self.target, r, support)).clamp(0.0, 1.0)
                    }
                    _ => self.ball_section_quadrature(s, r, marks),
                }
            }
            (Shape::Arrival(cells), _) => {
                let h = cells.field.grid().spacing();
                let grid = cells.field.grid();
                let u = self.time - s;
                let mut acc = 0.0;
                for &(tau, idx) in &cells.order {
                    if tau > u {
                        break;
                    }
                    acc += marks.cell_mass(&grid.point(idx), h);
                }
                acc.clamp(0.0, 1.0)
            }
            _ => unreachable!("cone shape follows the growth family"),
        }
    }

    /// Polar quadrature of the mark mass of the ball `B(x, r)`.
    fn ball_section_quadrature(&self, s: f64, r: f64, marks: &MarkDensity) -> f64 {
        let d = self.sphere_dim();
        let mut acc = 0.0;
        for (rho, w) in self.radial.mapped(0.0, r) {
            acc += w * rho.powi(d as i32 - 1) * self.sphere.integrate(marks, s, &self.target, rho);
        }
        acc.clamp(0.0, 1.0)
    }

    /// `∫_{∂S_x(s, t)} q(s, y) w(y) dH^{d-1}(y)`.
    ///
    /// Space-only sections use the coarea form with a tent band one cell
    /// wide in `τ`.
    pub fn section_boundary_integral(&self, s: f64, marks: &MarkDensity) -> f64 {
        if s < 0.0 || s >= self.time {
            return 0.0;
        }
        match (&self.shape, self.growth) {
            (Shape::Ball, GrowthField::TimeOnly(g)) => {
                let r = self.section_radius(g, s);
                if r == 0.0 {
                    return 0.0;
                }
                let d = self.sphere_dim();
                r.powi(d as i32 - 1) * self.sphere.integrate(marks, s, &self.target, r)
            }
            (Shape::Arrival(cells), GrowthField::SpaceOnly(g)) => {
                let kernel = self.kernel();
                let grid = cells.field.grid();
                let h = grid.spacing();
                let u = self.time - s;
                let speed = g.speed().values();
                let mut acc = 0.0;
                for &(tau, idx) in &cells.order {
                    let width = h / speed[idx];
                    if tau > u + width {
                        break;
                    }
                    let tent = (1.0 - (tau - u).abs() / width).max(0.0) / width;
                    if tent > 0.0 {
                        let grad = 1.0 / speed[idx];
                        acc += marks.cell_mass(&grid.point(idx), h) * kernel.weight(speed[idx]) * grad * tent;
                    }
                }
                acc
            }
            _ => unreachable!("cone shape follows the growth family"),
        }
    }

    fn sphere_dim(&self) -> usize {
        match self.growth {
            GrowthField::SpaceOnly(g) => g.grid().dim(),
            GrowthField::TimeOnly(_) => target_dim(&self.target),
        }
    }
}

/// Dimension of a target point for time-only cones, where no grid carries
/// it: trailing zero coordinates are treated as absent.
fn target_dim(p: &Point) -> usize {
    if p.0[2] != 0.0 {
        3
    } else {
        2
    }
}

fn require_analytic(model: &NucleationModel) -> Result<()> {
    if model.is_history_dependent() {
        Err(Error::UnsupportedAnalytic { kind: model.kind_name() })
    } else {
        Ok(())
    }
}

fn check_dims(cone: &CausalCone, model: &NucleationModel) -> Result<()> {
    if cone.sphere_dim() != model.dim() {
        return Err(Error::domain(format!(
            "cone lives in dimension {} but the model in dimension {}",
            cone.sphere_dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// `Λ(C(t, x)) = ∫_0^t λ(s) Q(s, S_x(s, t)) ds`.
pub fn cone_measure(cone: &CausalCone, model: &NucleationModel) -> Result<f64> {
    require_analytic(model)?;
    check_dims(cone, model)?;
    let t = cone.time;
    if t == 0.0 {
        return Ok(0.0);
    }
    match &cone.shape {
        Shape::Ball => {
            let marks = model.marks();
            let f = |s: f64| model.temporal_density(s).unwrap_or(0.0) * cone.section_mass(s, marks);
            Ok(integrate_piecewise(&f, 0.0, t, &model.temporal_breakpoints(t), cone.opts.tol, cone.opts.max_depth))
        }
        Shape::Arrival(cells) => {
            let GrowthField::SpaceOnly(g) = cone.growth else { unreachable!("cone shape follows the growth family") };
            let grid = cells.field.grid();
            let h = grid.spacing();
            let speed = g.speed().values();
            let reach = h / cone.growth.g_min();
            let mut acc = 0.0;
            for &(tau, idx) in &cells.order {
                if tau - reach >= t {
                    break;
                }
                let m = model.marks().cell_mass(&grid.point(idx), h);
                if m > 0.0 {
                    let w = (h / speed[idx]).min(tau);
                    acc += m * tent_average(t - tau, w, |s| model.marginal_cumulative_intensity(s))?;
                }
            }
            Ok(acc)
        }
    }
}

/// `∂_t Λ(C(t, x)) = G(t, x) ∫_0^t ∫_{∂S_x(s, t)} α(s, y) dK ds`.
pub fn cone_measure_rate(cone: &CausalCone, model: &NucleationModel) -> Result<f64> {
    require_analytic(model)?;
    check_dims(cone, model)?;
    let t = cone.time;
    if t == 0.0 {
        return Ok(0.0);
    }
    let inner = match (&cone.shape, cone.growth) {
        (Shape::Ball, _) => {
            let marks = model.marks();
            let f = |s: f64| model.temporal_density(s).unwrap_or(0.0) * cone.section_boundary_integral(s, marks);
            integrate_piecewise(&f, 0.0, t, &model.temporal_breakpoints(t), cone.opts.tol, cone.opts.max_depth)
        }
        (Shape::Arrival(cells), GrowthField::SpaceOnly(g)) => {
            // The coarea band integrated exactly over s: a cell at travel time
            // τ sits on the section boundary at s = t - τ, and its band weight
            // q w |∇τ| h^d picks up λ(t - τ).
            let kernel = cone.kernel();
            let grid = cells.field.grid();
            let h = grid.spacing();
            let speed = g.speed().values();
            let reach = h / cone.growth.g_min();
            let mut acc = 0.0;
            for &(tau, idx) in &cells.order {
                if tau - reach >= t {
                    break;
                }
                let m = model.marks().cell_mass(&grid.point(idx), h);
                if m > 0.0 {
                    let grad = 1.0 / speed[idx];
                    let w = (h / speed[idx]).min(tau);
                    acc += m * kernel.weight(speed[idx]) * grad * tent_average(t - tau, w, |s| model.temporal_density(s))?;
                }
            }
            acc
        }
        _ => unreachable!("cone shape follows the growth family"),
    };
    Ok(cone.apex_speed() * inner)
}

/// Mean extended surface density `S_ex(t, x) = ∂_t Λ(C) / G(t, x)`.
pub fn extended_surface_density(cone: &CausalCone, model: &NucleationModel) -> Result<f64> {
    let rate = cone_measure_rate(cone, model)?;
    if rate == 0.0 {
        return Ok(0.0);
    }
    Ok(rate / cone.apex_speed())
}

/// `P(x ∈ Θ^t) = P(N(C(t, x)) > 0)` for the history-free kinds.
///
/// Poisson: `1 - exp(-Λ)`. Single nucleus: `Λ`. Staircase with first birth
/// density `f`: `1 - ∫ f(u) Π_j (1 - Q(S_x(u + j - 1, t))) du`.
pub fn coverage_probability(cone: &CausalCone, model: &NucleationModel) -> Result<f64> {
    require_analytic(model)?;
    match model.kind() {
        ModelKind::Poisson { .. } => Ok(1.0 - (-cone_measure(cone, model)?).exp()),
        ModelKind::SingleNucleus { .. } => cone_measure(cone, model),
        ModelKind::Staircase { first_birth_density } => staircase_coverage(cone, model, first_birth_density),
        _ => Err(Error::UnsupportedAnalytic { kind: model.kind_name() }),
    }
}

fn staircase_coverage(cone: &CausalCone, model: &NucleationModel, f: &TemporalFn) -> Result<f64> {
    check_dims(cone, model)?;
    let t = cone.time;
    if t == 0.0 {
        return Ok(0.0);
    }
    let marks = model.marks();
    let sections = SectionTable::new(cone, marks);
    let miss = |u: f64| {
        let mut prod = 1.0;
        let mut s = u;
        while s < t {
            prod *= 1.0 - sections.mass(s);
            s += 1.0;
        }
        f.value(u) * prod
    };
    let mut breaks: Vec<f64> = (1..=t.floor() as usize).map(|k| t - k as f64).collect();
    breaks.extend(f.breakpoints());
    let tol = cone.opts.tol;
    let inside = integrate_piecewise(&miss, 0.0, t, &breaks, tol, cone.opts.max_depth);
    let tail = 1.0 - f.integral(0.0, t);
    Ok((1.0 - inside - tail).clamp(0.0, 1.0))
}

/// Section masses with lattice prefix sums for space-only cones.
struct SectionTable<'a, 'g> {
    cone: &'a CausalCone<'g>,
    marks: &'a MarkDensity,
    taus: Vec<f64>,
    prefix: Vec<f64>,
}

impl<'a, 'g> SectionTable<'a, 'g> {
    fn new(cone: &'a CausalCone<'g>, marks: &'a MarkDensity) -> Self {
        let (mut taus, mut prefix) = (Vec::new(), vec![0.0]);
        if let Shape::Arrival(cells) = &cone.shape {
            let grid = cells.field.grid();
            let h = grid.spacing();
            for &(tau, idx) in &cells.order {
                taus.push(tau);
                prefix.push(prefix.last().unwrap() + marks.cell_mass(&grid.point(idx), h));
            }
        }
        SectionTable { cone, marks, taus, prefix }
    }

    fn mass(&self, s: f64) -> f64 {
        match self.cone.shape {
            Shape::Ball => self.cone.section_mass(s, self.marks),
            Shape::Arrival(_) => {
                if s < 0.0 || s >= self.cone.time {
                    return 0.0;
                }
                let k = self.taus.partition_point(|&tau| tau <= self.cone.time - s);
                self.prefix[k].clamp(0.0, 1.0)
            }
        }
    }
}

/// One row of a batch cone evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub cone_measure: f64,
    pub rate: f64,
    pub extended_surface_density: f64,
}

/// Evaluates `Λ(C)`, its rate and `S_ex` at every `(t, x)` pair; one cone
/// (and eikonal solve) per distinct target.
pub fn evaluate_cones(
    growth: &GrowthField,
    model: &NucleationModel,
    pairs: &[(f64, Point)],
    opts: QuadratureOptions,
) -> Result<Vec<ConeRow>> {
    require_analytic(model)?;
    let mut targets: Vec<Point> = Vec::new();
    let mut slot = HashMap::new();
    for (_, x) in pairs {
        let key = x.0.map(f64::to_bits);
        slot.entry(key).or_insert_with(|| {
            targets.push(*x);
            targets.len() - 1
        });
    }
    let cones: Vec<CausalCone> =
        targets.par_iter().map(|x| CausalCone::with_options(growth, *x, 0.0, opts)).collect::<Result<_>>()?;
    let dim = model.dim();
    pairs
        .par_iter()
        .map(|(t, x)| {
            let cone = cones[slot[&x.0.map(f64::to_bits)]].at_time(*t)?;
            let rate = cone_measure_rate(&cone, model)?;
            Ok(ConeRow {
                t: *t,
                x: x.coords(dim).to_vec(),
                cone_measure: cone_measure(&cone, model)?,
                rate,
                extended_surface_density: if rate == 0.0 { 0.0 } else { rate / cone.apex_speed() },
            })
        })
        .collect()
}

/// Writes rows as CSV, preceded by `#`-prefixed header lines.
pub fn write_cone_csv(rows: &[ConeRow], dim: usize, header: &[String], out: &mut impl Write) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let axes = ["x", "y", "z"];
    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend(axes[..dim].iter().map(|s| s.to_string()));
    cols.extend(["cone_measure", "rate", "extended_surface_density"].map(String::from));
    w.write_record(&cols)?;
    for r in rows {
        let mut rec = vec![format!("{}", r.t)];
        rec.extend(r.x.iter().map(|v| format!("{v}")));
        rec.extend([r.cone_measure, r.rate, r.extended_surface_density].map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `∫ f(c - u) k_w(u) du` over the unit tent `k_w` of half-width `w`, with
/// `f` taken as zero for negative arguments. Pieces split at the kinks so a
/// three-point rule is exact for linear `f`.
fn tent_average(c: f64, w: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if w <= 0.0 {
        return if c > 0.0 { f(c) } else { Ok(0.0) };
    }
    let gl = GaussLegendre::new(3);
    let mut acc = 0.0;
    for (a, b) in [(-w, 0.0f64), (0.0, w)] {
        let b = b.min(c);
        if b <= a {
            continue;
        }
        for (u, wt) in gl.mapped(a, b) {
            acc += wt * (1.0 - u.abs() / w) / w * f(c - u)?;
        }
    }
    Ok(acc)
}

/// `(Λ(C(t + δ)) - Λ(C(t - δ))) / 2δ`.
pub fn central_difference(cone: &CausalCone, model: &NucleationModel, delta: f64) -> Result<f64> {
    if cone.time < delta {
        return Err(Error::domain(format!("central difference needs t >= δ = {delta}, got t = {}", cone.time)));
    }
    let plus = cone_measure(&cone.at_time(cone.time + delta)?, model)?;
    let minus = cone_measure(&cone.at_time(cone.time - delta)?, model)?;
    Ok((plus - minus) / (2.0 * delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_disc_sections_match_polar_quadrature() {
        let g = GrowthField::constant(1.0, 10.0).unwrap();
        let support = Window::new(&[0.0, 0.0], &[4.0, 3.0]).unwrap();
        let marks = MarkDensity::uniform(support);
        for (x, t) in [(Point::new2(2.0, 1.5), 1.0), (Point::new2(0.2, 0.1), 0.7), (Point::new2(3.9, 2.5), 2.0)] {
            let cone = CausalCone::new(&g, x, t).unwrap();
            for s in [0.0, 0.3, 0.6] {
                let fast = cone.section_mass(s, &marks);
                let quad = cone.ball_section_quadrature(s, t - s, &marks);
                // The polar rule sees the box edges as angular kinks.
                assert!((fast - quad).abs() < 1e-3, "{x:?} t={t} s={s}: {fast} vs {quad}");
            }
        }
    }
    use crate::geom::Window;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn kjma() -> (GrowthField, NucleationModel) {
        let g = GrowthField::constant(1.0, 10.0).unwrap();
        let m = NucleationModel::homogeneous_poisson(0.5, Window::square(-4.0, 8.0)).unwrap();
        (g, m)
    }

    #[test]
    fn membership_examples() {
        let g = GrowthField::constant(1.0, 10.0).unwrap();
        let c = CausalCone::new(&g, Point::ORIGIN, 1.0).unwrap();
        assert!(!c.contains(1.5, &Point::ORIGIN));
        assert!(c.contains(0.5, &Point::new2(0.4, 0.0)));
        assert!(!c.contains(0.5, &Point::new2(0.6, 0.0)));
        assert_eq!(c.birth_time_function(&Point::new2(0.25, 0.0)), Some(0.75));
        assert_eq!(c.birth_time_function(&Point::new2(1.5, 0.0)), None);
    }

    #[test]
    fn section_mass_disc_area() {
        let g = GrowthField::constant(1.0, 10.0).unwrap();
        let marks = MarkDensity::uniform(Window::square(-5.0, 5.0));
        let c = CausalCone::new(&g, Point::ORIGIN, 2.0).unwrap();
        let q = c.section_mass(0.5, &marks);
        assert!((q - PI * 1.5 * 1.5 / 100.0).abs() < 1e-14);
        assert_eq!(c.section_mass(2.0, &marks), 0.0);
        let far = MarkDensity::uniform(Window::square(20.0, 21.0));
        assert_eq!(c.section_mass(0.0, &far), 0.0);
    }

    #[test]
    fn kjma_values() {
        let (g, m) = kjma();
        let x = Point::new2(2.0, 2.0);
        let c = CausalCone::new(&g, x, 1.0).unwrap();
        let lam = cone_measure(&c, &m).unwrap();
        assert!((lam - 0.5 * PI / 3.0).abs() < 1e-9, "{lam}");
        let rate = cone_measure_rate(&c, &m).unwrap();
        assert!((rate - 0.5 * PI).abs() < 1e-9, "{rate}");
        assert!((extended_surface_density(&c, &m).unwrap() - 0.5 * PI).abs() < 1e-9);
        let c0 = c.at_time(0.0).unwrap();
        assert_eq!(cone_measure(&c0, &m).unwrap(), 0.0);
        assert_eq!(cone_measure_rate(&c0, &m).unwrap(), 0.0);
    }

    #[test]
    fn doubling_speed_doubles_surface_density() {
        let (g1, m) = kjma();
        let g2 = GrowthField::constant(2.0, 10.0).unwrap();
        let x = Point::new2(2.0, 2.0);
        let s1 = extended_surface_density(&CausalCone::new(&g1, x, 1.0).unwrap(), &m).unwrap();
        let s2 = extended_surface_density(&CausalCone::new(&g2, x, 1.0).unwrap(), &m).unwrap();
        // S_ex = rate / G = α π G t^2.
        assert!((s2 / s1 - 2.0).abs() < 1e-9, "{}", s2 / s1);
    }

    #[test]
    fn history_dependent_models_are_refused() {
        let (g, m) = kjma();
        let th = NucleationModel::thinned(m).unwrap();
        let c = CausalCone::new(&g, Point::new2(1.0, 1.0), 1.0).unwrap();
        assert!(matches!(cone_measure(&c, &th), Err(Error::UnsupportedAnalytic { .. })));
    }

    #[test]
    fn poisson_coverage_is_kjma() {
        let (g, m) = kjma();
        let c = CausalCone::new(&g, Point::new2(2.0, 2.0), 1.0).unwrap();
        let v = coverage_probability(&c, &m).unwrap();
        assert!((v - (1.0 - (-0.5 * PI / 3.0).exp())).abs() < 1e-9);
    }

    #[test]
    fn space_only_constant_speed_agrees_with_time_only() {
        let win = Window::square(0.0, 4.0);
        let grid = Grid::new(win, 0.02).unwrap();
        let gs = GrowthField::space_only(ScalarField::filled(grid, 1.0)).unwrap();
        let gt = GrowthField::constant(1.0, 10.0).unwrap();
        let m = NucleationModel::homogeneous_poisson(0.5, win).unwrap();
        let x = Point::new2(2.0, 2.0);
        let a = cone_measure(&CausalCone::new(&gs, x, 1.0).unwrap(), &m).unwrap();
        let b = cone_measure(&CausalCone::new(&gt, x, 1.0).unwrap(), &m).unwrap();
        let ra = cone_measure_rate(&CausalCone::new(&gs, x, 1.0).unwrap(), &m).unwrap();
        let rb = cone_measure_rate(&CausalCone::new(&gt, x, 1.0).unwrap(), &m).unwrap();
        // Tolerances: the effect of shifting every travel time by 2h.
        let h = 0.02;
        assert!((a - b).abs() <= 2.0 * h * rb, "{a} vs {b}");
        assert!((ra - rb).abs() <= 2.0 * h * (0.5 * PI * 2.0), "{ra} vs {rb}");
    }
}

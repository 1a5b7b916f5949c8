//! Full realizations of the birth-and-growth process, including the
//! history-dependent thinned and free-space nucleation regimes.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Window;
use crate::grid::{Grid, ScalarField};
use crate::growth::{dilate, GrainFront, GrowthField};
use crate::nucleation::{MarkedPoint, ModelKind, NucleationModel};
use crate::rng::{stream, StreamRng};

/// Proposals per birth before a free-space realization is declared saturated.
pub const FREE_SPACE_ATTEMPT_CAP: usize = 1_000_000;

/// One realization: the nuclei that grew, plus the ones thinning removed.
#[derive(Clone, Debug)]
pub struct Realization {
    pub index: u64,
    pub seed: u64,
    pub horizon: f64,
    pub accepted: Vec<MarkedPoint>,
    pub rejected: Vec<MarkedPoint>,
    /// Free-space only: some birth found no uncovered mark within the cap.
    pub saturated: bool,
    growth: Arc<GrowthField>,
}

impl Realization {
    /// A realization with given nuclei, bypassing sampling.
    pub fn from_points(growth: Arc<GrowthField>, horizon: f64, accepted: Vec<MarkedPoint>) -> Self {
        Realization { index: 0, seed: 0, horizon, accepted, rejected: Vec::new(), saturated: false, growth }
    }

    pub fn growth(&self) -> &GrowthField {
        &self.growth
    }

    /// Fronts of the accepted grains, resolved up to the horizon.
    pub fn fronts(&self) -> Result<Vec<GrainFront>> {
        self.accepted.iter().map(|p| GrainFront::until(&self.growth, p, self.horizon)).collect()
    }

    /// Union capture times at the nodes of `grid` (`+inf` past the horizon).
    pub fn capture_field(&self, grid: &Grid) -> Result<ScalarField> {
        let fronts = self.fronts()?;
        capture_field_from(&self.growth, &fronts, self.horizon, grid)
    }
}

/// `min_j` capture time over `fronts` at every node of `grid`, `+inf` when
/// later than `horizon`.
pub fn capture_field_from(growth: &GrowthField, fronts: &[GrainFront], horizon: f64, grid: &Grid) -> Result<ScalarField> {
    let mut out = vec![f64::INFINITY; grid.len()];
    match growth {
        GrowthField::TimeOnly(g) => {
            // Minimize in primitive space, where grains are plain balls, and
            // invert once per node.
            let p_end = g.primitive(horizon);
            for f in fronts {
                let GrainFront::TimeOnly { center, birth_primitive, .. } = f else { unreachable!() };
                let reach = p_end - birth_primitive;
                if reach < 0.0 {
                    continue;
                }
                grid.for_each_in_bbox(center, reach, |idx, p| {
                    let m = birth_primitive + p.dist(center);
                    if m <= p_end && m < out[idx] {
                        out[idx] = m;
                    }
                });
            }
            for v in out.iter_mut().filter(|v| v.is_finite()) {
                *v = g.invert_primitive(*v).min(horizon);
            }
        }
        GrowthField::SpaceOnly(g) => {
            let offset = grid.offset_in(g.grid());
            for f in fronts {
                let arrival = f.arrival().expect("space-only front");
                let birth = f.birth();
                for (idx, slot) in out.iter_mut().enumerate() {
                    let tau = match offset {
                        Some(o) => {
                            let m = grid.multi(idx);
                            arrival.get(g.grid().flat([m[0] + o[0], m[1] + o[1], m[2] + o[2]]))
                        }
                        None => arrival.interpolate(&grid.point(idx)).unwrap_or(f64::INFINITY),
                    };
                    let c = birth + tau;
                    if c <= horizon && c < *slot {
                        *slot = c;
                    }
                }
            }
        }
    }
    ScalarField::from_values(grid.clone(), out)
}

/// Samples one realization on `[0, horizon]` from stream `(seed, 0)`.
pub fn realize(model: &NucleationModel, growth: &Arc<GrowthField>, horizon: f64, seed: u64) -> Result<Realization> {
    realize_indexed(model, growth, horizon, seed, 0)
}

/// Realization `index` of the experiment with master `seed`.
pub fn realize_indexed(
    model: &NucleationModel,
    growth: &Arc<GrowthField>,
    horizon: f64,
    seed: u64,
    index: u64,
) -> Result<Realization> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    let mut rng = stream(seed, index);
    let mut real = Realization {
        index,
        seed,
        horizon,
        accepted: Vec::new(),
        rejected: Vec::new(),
        saturated: false,
        growth: growth.clone(),
    };
    match model.kind() {
        ModelKind::Thinned { base } => {
            let points = base.sample(horizon, &mut rng)?;
            thin(&mut real, points)?;
        }
        ModelKind::FreeSpace { base, .. } => {
            let births = base.sample(horizon, &mut rng)?;
            free_space(&mut real, model, births, &mut rng)?;
        }
        _ => real.accepted = model.sample(horizon, &mut rng)?,
    }
    Ok(real)
}

/// Strictly earlier capture: a point reached exactly at its birth time is
/// still free.
fn covered_before(growth: &GrowthField, fronts: &[GrainFront], p: &MarkedPoint) -> bool {
    fronts.iter().any(|f| f.capture_time(growth, &p.location) < p.birth_time)
}

fn thin(real: &mut Realization, points: Vec<MarkedPoint>) -> Result<()> {
    let growth = real.growth.clone();
    let mut fronts = Vec::new();
    for p in points {
        if covered_before(&growth, &fronts, &p) {
            real.rejected.push(p);
        } else {
            fronts.push(GrainFront::until(&growth, &p, real.horizon)?);
            real.accepted.push(p);
        }
    }
    Ok(())
}

fn free_space(
    real: &mut Realization,
    model: &NucleationModel,
    births: Vec<MarkedPoint>,
    rng: &mut StreamRng,
) -> Result<()> {
    let growth = real.growth.clone();
    let marks = model.marks();
    let mut fronts = Vec::new();
    'births: for b in births {
        for _ in 0..FREE_SPACE_ATTEMPT_CAP {
            let p = MarkedPoint::new(b.birth_time, marks.sample(rng), b.grain_id);
            if !covered_before(&growth, &fronts, &p) {
                fronts.push(GrainFront::until(&growth, &p, real.horizon)?);
                real.accepted.push(p);
                continue 'births;
            }
        }
        real.saturated = true;
        break;
    }
    Ok(())
}

/// `T(x)`: first time the union covers `x`, `+inf` past the horizon.
pub fn union_capture_time(real: &Realization, x: &crate::geom::Point) -> Result<f64> {
    let mut best = f64::INFINITY;
    for p in &real.accepted {
        let t = GrainFront::until(&real.growth, p, real.horizon)?.capture_time(&real.growth, x);
        best = best.min(t);
    }
    Ok(if best <= real.horizon { best } else { f64::INFINITY })
}

/// Indicator of `Θ^t` on `grid`.
pub fn union_indicator(real: &Realization, t: f64, grid: &Grid) -> Result<ScalarField> {
    if !(0.0..=real.horizon).contains(&t) {
        return Err(Error::domain(format!("time {t} outside [0, {}]", real.horizon)));
    }
    let cap = real.capture_field(grid)?;
    Ok(ScalarField::from_fn_indexed(grid.clone(), |i| (cap.get(i) <= t) as u8 as f64))
}

/// `H^d((Θ_r \ Θ) ∩ A) / r` on the lattice: cell volume times the number of
/// nodes of `A` (half-open) that the dilation adds, over `r`.
///
/// The indicator must extend at least `r` beyond `A` for the dilation to see
/// every set point that can reach `A`.
pub fn minkowski_surface_mass(indicator: &ScalarField, r: f64, a: &Window) -> Result<f64> {
    let grid = indicator.grid();
    let h = grid.spacing();
    if !(r >= 2.0 * h * (1.0 - 1e-12)) {
        return Err(Error::RadiusTooSmall { r, h, min: 2.0 * h });
    }
    let grown = dilate(indicator, r)?;
    let nodes = grid.nodes_in_box(a);
    let count = nodes.iter().filter(|&&i| grown.get(i) > 0.5 && indicator.get(i) <= 0.5).count();
    Ok(count as f64 * grid.cell_volume() / r)
}

/// A seeded collection of independent realizations.
#[derive(Clone, Debug)]
pub struct Ensemble {
    fingerprint: String,
    model: NucleationModel,
    growth: Arc<GrowthField>,
    horizon: f64,
    seed: u64,
    grid: Grid,
    realizations: Vec<Realization>,
}

impl Ensemble {
    /// Realizations `0..n`, generated in parallel; realization `i` depends
    /// only on `(seed, i)`.
    pub fn build(
        model: &NucleationModel,
        growth: Arc<GrowthField>,
        horizon: f64,
        seed: u64,
        n: usize,
        grid: Grid,
    ) -> Result<Self> {
        let realizations = (0..n as u64)
            .into_par_iter()
            .map(|i| realize_indexed(model, &growth, horizon, seed, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble { fingerprint: String::new(), model: model.clone(), growth, horizon, seed, grid, realizations })
    }

    /// Wraps hand-made realizations (negative controls, tests).
    pub fn from_realizations(
        model: &NucleationModel,
        growth: Arc<GrowthField>,
        horizon: f64,
        grid: Grid,
        realizations: Vec<Realization>,
    ) -> Self {
        Ensemble { fingerprint: String::new(), model: model.clone(), growth, horizon, seed: 0, grid, realizations }
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = fingerprint.into();
        self
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn model(&self) -> &NucleationModel {
        &self.model
    }

    pub fn growth(&self) -> &Arc<GrowthField> {
        &self.growth
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Default estimation lattice.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn realizations(&self) -> &[Realization] {
        &self.realizations
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    /// Realizations the estimators use (saturated ones are excluded).
    pub fn usable(&self) -> Vec<&Realization> {
        self.realizations.iter().filter(|r| !r.saturated).collect()
    }

    pub fn saturated_count(&self) -> usize {
        self.realizations.iter().filter(|r| r.saturated).count()
    }
}

/// One CSV row per nucleus (accepted and rejected).
pub fn write_points_csv(real: &Realization, dim: usize, header: &[String], out: &mut impl Write) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut cols = vec!["status".to_string(), "grain_id".into(), "birth_time".into()];
    cols.extend(["x", "y", "z"][..dim].iter().map(|s| s.to_string()));
    w.write_record(&cols)?;
    let rows = real.accepted.iter().map(|p| ("accepted", p)).chain(real.rejected.iter().map(|p| ("rejected", p)));
    for (status, p) in rows {
        let mut rec = vec![status.to_string(), p.grain_id.to_string(), format!("{}", p.birth_time)];
        rec.extend(p.location.coords(dim).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{MarkDensity, TemporalFn};
    use crate::geom::Point;
    use crate::growth::grain_indicator;
    use std::f64::consts::PI;

    fn unit() -> Arc<GrowthField> {
        Arc::new(GrowthField::constant(1.0, 10.0).unwrap())
    }

    #[test]
    fn capture_examples() {
        let g = unit();
        let empty = Realization::from_points(g.clone(), 5.0, vec![]);
        assert_eq!(union_capture_time(&empty, &Point::ORIGIN).unwrap(), f64::INFINITY);
        let one = Realization::from_points(g.clone(), 5.0, vec![MarkedPoint::new(0.0, Point::ORIGIN, 0)]);
        assert!((union_capture_time(&one, &Point::new2(0.3, 0.0)).unwrap() - 0.3).abs() < 1e-15);
        let (y1, y2) = (Point::new2(0.0, 0.0), Point::new2(1.0, 0.0));
        let two = Realization::from_points(
            g,
            5.0,
            vec![MarkedPoint::new(0.0, y1, 0), MarkedPoint::new(0.1, y2, 1)],
        );
        let x = Point::new2(0.7, 0.2);
        let want = x.dist(&y1).min(0.1 + x.dist(&y2));
        assert!((union_capture_time(&two, &x).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn thinning_examples() {
        let g = unit();
        let win = Window::square(0.0, 4.0);
        let single = NucleationModel::single_nucleus(TemporalFn::exponential(1.0), MarkDensity::uniform(win), win)
            .unwrap();
        let base = realize(&single, &g, 3.0, 5).unwrap();
        let th = realize(&NucleationModel::thinned(single).unwrap(), &g, 3.0, 5).unwrap();
        assert_eq!(th.accepted, base.accepted);
        assert!(th.rejected.is_empty());

        let x = Point::new2(1.0, 1.0);
        let mut r = Realization::from_points(g, 3.0, vec![]);
        thin(&mut r, vec![MarkedPoint::new(0.2, x, 0), MarkedPoint::new(0.5, x, 1)]).unwrap();
        assert_eq!(r.accepted.len(), 1);
        assert_eq!(r.rejected[0].grain_id, 1);
    }

    #[test]
    fn union_is_max_of_grains() {
        let g = unit();
        let grid = Grid::new(Window::square(0.0, 2.0), 0.05).unwrap();
        let pts = vec![
            MarkedPoint::new(0.0, Point::new2(0.5, 0.5), 0),
            MarkedPoint::new(0.3, Point::new2(1.4, 1.1), 1),
        ];
        let r = Realization::from_points(g.clone(), 2.0, pts.clone());
        let u = union_indicator(&r, 0.8, &grid).unwrap();
        let a = grain_indicator(&g, &pts[0], 0.8, &grid).unwrap();
        let b = grain_indicator(&g, &pts[1], 0.8, &grid).unwrap();
        for i in 0..grid.len() {
            assert_eq!(u.get(i), a.get(i).max(b.get(i)));
        }
    }

    #[test]
    fn minkowski_examples() {
        let grid = Grid::new(Window::square(-2.0, 2.0), 0.01).unwrap();
        let a = Window::square(-1.5, 1.5);
        let empty = ScalarField::filled(grid.clone(), 0.0);
        assert_eq!(minkowski_surface_mass(&empty, 0.05, &a).unwrap(), 0.0);
        let full = ScalarField::filled(grid.clone(), 1.0);
        assert_eq!(minkowski_surface_mass(&full, 0.05, &a).unwrap(), 0.0);
        let disc = ScalarField::from_fn(grid.clone(), |p| (p.dist(&Point::ORIGIN) <= 1.0) as u8 as f64);
        let s = minkowski_surface_mass(&disc, 0.05, &a).unwrap();
        assert!((s / (2.0 * PI) - 1.0).abs() < 0.02, "{s}");
        assert!(matches!(minkowski_surface_mass(&disc, 0.015, &a), Err(Error::RadiusTooSmall { .. })));
    }

    #[test]
    fn ensemble_is_reproducible() {
        let win = Window::square(-1.0, 3.0);
        let m = NucleationModel::homogeneous_poisson(0.5, win).unwrap();
        let grid = Grid::new(Window::square(0.0, 2.0), 0.1).unwrap();
        let a = Ensemble::build(&m, unit(), 1.0, 11, 8, grid.clone()).unwrap();
        let b = Ensemble::build(&m, unit(), 1.0, 11, 8, grid).unwrap();
        for (x, y) in a.realizations().iter().zip(b.realizations()) {
            assert_eq!(x.accepted, y.accepted);
        }
        let single = realize_indexed(&m, a.growth(), 1.0, 11, 3).unwrap();
        assert_eq!(single.accepted, a.realizations()[3].accepted);
    }
}

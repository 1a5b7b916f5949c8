//! Normal growth of grains: speed fields, radii, arrival times and grain
//! indicators.
//!
//! Two speed families are supported. With a time-only speed `G(t)` every
//! grain is a ball of radius `R(s, t) = ∫_s^t G`. With a space-only speed
//! `G(x)` the front from a nucleus `y` reaches `x` after the eikonal travel
//! time `τ(y, x)`.

pub mod edt;
pub mod eikonal;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functions::{bisect_monotone, TemporalFn};
use crate::geom::Point;
use crate::grid::{Grid, ScalarField};
use crate::nucleation::MarkedPoint;

pub use edt::dilate;

/// Cells per table; the primitive is tabulated at step `table_end * 1e-4`.
const TABLE_CELLS: usize = 10_000;

/// Speed depending on time only, with its tabulated primitive.
#[derive(Clone, Debug)]
pub struct TimeGrowth {
    speed: TemporalFn,
    table_end: f64,
    table: Vec<f64>,
    g_min: f64,
    g_max: f64,
}

impl TimeGrowth {
    /// `table_end` bounds the times for which captures can be resolved;
    /// later captures report `+inf`.
    pub fn new(speed: TemporalFn, table_end: f64) -> Result<Self> {
        speed.validate("growth.speed", false)?;
        if !(table_end > 0.0 && table_end.is_finite()) {
            return Err(Error::config("growth", format!("table end must be positive, got {table_end}")));
        }
        let step = table_end / TABLE_CELLS as f64;
        let table: Vec<f64> = (0..=TABLE_CELLS).map(|k| speed.integral(0.0, k as f64 * step)).collect();
        if table.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("growth.speed", "the cumulative primitive of G(t) must be strictly increasing"));
        }
        let g_min = speed.inf_on(0.0, table_end);
        let g_max = speed.sup_on(0.0, table_end);
        Ok(TimeGrowth { speed, table_end, table, g_min, g_max })
    }

    pub fn speed(&self) -> &TemporalFn {
        &self.speed
    }

    pub fn table_end(&self) -> f64 {
        self.table_end
    }

    pub fn constant_speed(&self) -> Option<f64> {
        match self.speed {
            TemporalFn::Constant { value } => Some(value),
            _ => None,
        }
    }

    /// `P(t) = ∫_0^t G`.
    #[inline]
    pub fn primitive(&self, t: f64) -> f64 {
        match self.speed {
            TemporalFn::Constant { value } => value * t.max(0.0),
            _ => self.speed.integral(0.0, t),
        }
    }

    /// Time `t` with `P(t) = p`, `+inf` past the table.
    pub fn invert_primitive(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if let Some(g) = self.constant_speed() {
            let t = p / g;
            return if t <= self.table_end { t } else { f64::INFINITY };
        }
        let last = *self.table.last().unwrap();
        if p > last {
            return f64::INFINITY;
        }
        let k = self.table.partition_point(|&c| c < p).clamp(1, TABLE_CELLS);
        let step = self.table_end / TABLE_CELLS as f64;
        bisect_monotone(|t| self.speed.integral(0.0, t), p, (k - 1) as f64 * step, k as f64 * step)
    }
}

/// Speed depending on position only, sampled on the padded lattice.
#[derive(Clone, Debug)]
pub struct SpaceGrowth {
    speed: ScalarField,
    seed_radius: f64,
    g_min: f64,
    g_max: f64,
}

impl SpaceGrowth {
    pub fn new(speed: ScalarField) -> Result<Self> {
        let vals = speed.values();
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("growth.speed", "space-only speeds must be finite and strictly positive"));
        }
        let g_min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let g_max = vals.iter().copied().fold(0.0, f64::max);
        Ok(SpaceGrowth { speed, seed_radius: eikonal::DEFAULT_SEED_RADIUS, g_min, g_max })
    }

    /// Radius of the straight-ray source disc used by fast marching.
    pub fn with_seed_radius(mut self, r: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::config("growth.seed_radius", format!("must be finite and >= 0, got {r}")));
        }
        self.seed_radius = r;
        Ok(self)
    }

    pub fn seed_radius(&self) -> f64 {
        self.seed_radius
    }

    pub fn speed(&self) -> &ScalarField {
        &self.speed
    }

    pub fn grid(&self) -> &Grid {
        self.speed.grid()
    }

    pub fn speed_at(&self, x: &Point) -> Option<f64> {
        self.speed.interpolate(x)
    }

    /// Eikonal travel times from `source`.
    pub fn arrival_field(&self, source: &Point) -> Result<ScalarField> {
        Ok(eikonal::fast_marching(&self.speed, source, self.seed_radius)?.0)
    }

    /// Travel times up to `max_time`; later nodes are `+inf`.
    pub fn arrival_field_until(&self, source: &Point, max_time: f64) -> Result<ScalarField> {
        Ok(eikonal::fast_marching_until(&self.speed, source, self.seed_radius, max_time)?.0)
    }
}

#[derive(Clone, Debug)]
pub enum GrowthField {
    TimeOnly(TimeGrowth),
    SpaceOnly(SpaceGrowth),
}

impl GrowthField {
    pub fn time_only(speed: TemporalFn, table_end: f64) -> Result<Self> {
        Ok(GrowthField::TimeOnly(TimeGrowth::new(speed, table_end)?))
    }

    pub fn constant(speed: f64, table_end: f64) -> Result<Self> {
        Self::time_only(TemporalFn::constant(speed), table_end)
    }

    pub fn space_only(speed: ScalarField) -> Result<Self> {
        Ok(GrowthField::SpaceOnly(SpaceGrowth::new(speed)?))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            GrowthField::TimeOnly(_) => "time_only",
            GrowthField::SpaceOnly(_) => "space_only",
        }
    }

    /// Lower speed bound `g0`.
    pub fn g_min(&self) -> f64 {
        match self {
            GrowthField::TimeOnly(g) => g.g_min,
            GrowthField::SpaceOnly(g) => g.g_min,
        }
    }

    /// Upper speed bound `G0`.
    pub fn g_max(&self) -> f64 {
        match self {
            GrowthField::TimeOnly(g) => g.g_max,
            GrowthField::SpaceOnly(g) => g.g_max,
        }
    }

    /// `G(t, x)` for whichever variable the field depends on.
    pub fn speed_at(&self, t: f64, x: &Point) -> f64 {
        match self {
            GrowthField::TimeOnly(g) => g.speed.value(t),
            GrowthField::SpaceOnly(g) => g.speed_at(x).unwrap_or(f64::NAN),
        }
    }

    /// `R(s, t) = ∫_s^t G` for time-only fields.
    pub fn radius(&self, s: f64, t: f64) -> Result<f64> {
        let GrowthField::TimeOnly(g) = self else {
            return Err(Error::domain("radius is defined for time-only speed fields"));
        };
        if s < 0.0 || s > t {
            return Err(Error::domain(format!("radius needs 0 <= s <= t, got s = {s}, t = {t}")));
        }
        Ok(g.primitive(t) - g.primitive(s))
    }

    pub fn arrival_field(&self, source: &Point) -> Result<ScalarField> {
        match self {
            GrowthField::SpaceOnly(g) => g.arrival_field(source),
            GrowthField::TimeOnly(_) => Err(Error::domain("arrival fields are defined for space-only speed fields")),
        }
    }
}

/// One grain's front: answers "when does this grain reach `x`".
#[derive(Clone, Debug)]
pub enum GrainFront {
    TimeOnly { birth: f64, center: Point, birth_primitive: f64 },
    SpaceOnly { birth: f64, center: Point, arrival: Arc<ScalarField> },
}

impl GrainFront {
    pub fn new(growth: &GrowthField, nucleus: &MarkedPoint) -> Result<Self> {
        Self::until(growth, nucleus, f64::INFINITY)
    }

    /// Front whose arrival times are only resolved up to time `horizon`
    /// (space-only fields march no further).
    pub fn until(growth: &GrowthField, nucleus: &MarkedPoint, horizon: f64) -> Result<Self> {
        Ok(match growth {
            GrowthField::TimeOnly(g) => GrainFront::TimeOnly {
                birth: nucleus.birth_time,
                center: nucleus.location,
                birth_primitive: g.primitive(nucleus.birth_time),
            },
            GrowthField::SpaceOnly(g) => GrainFront::SpaceOnly {
                birth: nucleus.birth_time,
                center: nucleus.location,
                arrival: Arc::new(if horizon.is_finite() {
                    g.arrival_field_until(&nucleus.location, (horizon - nucleus.birth_time).max(0.0))?
                } else {
                    g.arrival_field(&nucleus.location)?
                }),
            },
        })
    }

    pub fn birth(&self) -> f64 {
        match self {
            GrainFront::TimeOnly { birth, .. } | GrainFront::SpaceOnly { birth, .. } => *birth,
        }
    }

    pub fn center(&self) -> &Point {
        match self {
            GrainFront::TimeOnly { center, .. } | GrainFront::SpaceOnly { center, .. } => center,
        }
    }

    /// Travel-time field of a space-only front.
    pub fn arrival(&self) -> Option<&ScalarField> {
        match self {
            GrainFront::SpaceOnly { arrival, .. } => Some(arrival),
            GrainFront::TimeOnly { .. } => None,
        }
    }

    /// First time the grain contains `x`; `+inf` beyond the resolvable range.
    pub fn capture_time(&self, growth: &GrowthField, x: &Point) -> f64 {
        match (self, growth) {
            (GrainFront::TimeOnly { center, birth_primitive, .. }, GrowthField::TimeOnly(g)) => {
                g.invert_primitive(birth_primitive + center.dist(x))
            }
            (GrainFront::SpaceOnly { birth, arrival, .. }, _) => {
                arrival.interpolate(x).map_or(f64::INFINITY, |tau| birth + tau)
            }
            _ => f64::NAN,
        }
    }
}

/// Time at which the grain of `nucleus` first covers `x`.
pub fn grain_capture_time(growth: &GrowthField, nucleus: &MarkedPoint, x: &Point) -> f64 {
    match GrainFront::new(growth, nucleus) {
        Ok(front) => front.capture_time(growth, x),
        Err(_) => f64::INFINITY,
    }
}

/// 0/1 field of the grain at time `t` on `grid`.
pub fn grain_indicator(growth: &GrowthField, nucleus: &MarkedPoint, t: f64, grid: &Grid) -> Result<ScalarField> {
    if t < 0.0 {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    if t < nucleus.birth_time {
        return Ok(ScalarField::filled(grid.clone(), 0.0));
    }
    let front = GrainFront::new(growth, nucleus)?;
    Ok(ScalarField::from_fn(grid.clone(), |p| (front.capture_time(growth, p) <= t) as u8 as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Window;
    use std::f64::consts::PI;

    fn unit() -> GrowthField {
        GrowthField::constant(1.0, 20.0).unwrap()
    }

    #[test]
    fn radius_examples() {
        assert_eq!(unit().radius(0.0, 2.0).unwrap(), 2.0);
        assert_eq!(unit().radius(5.0, 5.0).unwrap(), 0.0);
        let ramp = GrowthField::time_only(TemporalFn::linear_ramp(10.0), 10.0).unwrap();
        assert!((ramp.radius(1.0, 2.0).unwrap() - 1.5).abs() < 1e-15);
        assert!(unit().radius(2.0, 1.0).is_err());
    }

    #[test]
    fn capture_time_examples() {
        let g = unit();
        let n0 = MarkedPoint::new(0.0, Point::ORIGIN, 0);
        assert!((grain_capture_time(&g, &n0, &Point::new2(0.7, 0.0)) - 0.7).abs() < 1e-15);
        let n2 = MarkedPoint::new(2.0, Point::ORIGIN, 0);
        assert_eq!(grain_capture_time(&g, &n2, &Point::ORIGIN), 2.0);
        let ramp = GrowthField::time_only(TemporalFn::linear_ramp(10.0), 10.0).unwrap();
        let n1 = MarkedPoint::new(1.0, Point::ORIGIN, 0);
        let t = grain_capture_time(&ramp, &n1, &Point::new2(1.5, 0.0));
        assert!((t - 2.0).abs() < 1e-9, "{t}");
        // Beyond the table the sentinel is returned.
        assert_eq!(grain_capture_time(&g, &n0, &Point::new2(30.0, 0.0)), f64::INFINITY);
    }

    #[test]
    fn zero_speed_interval_rejected() {
        let stall = TemporalFn::PiecewiseLinear { knots: vec![[0.0, 1.0], [1.0, 0.0], [2.0, 0.0], [3.0, 1.0]] };
        assert!(GrowthField::time_only(stall, 4.0).is_err());
    }

    #[test]
    fn indicator_before_birth_is_empty_and_ball_area() {
        let grid = Grid::new(Window::square(-2.0, 2.0), 0.02).unwrap();
        let g = unit();
        let n = MarkedPoint::new(0.5, Point::ORIGIN, 0);
        let early = grain_indicator(&g, &n, 0.4, &grid).unwrap();
        assert!(early.values().iter().all(|&v| v == 0.0));
        let n0 = MarkedPoint::new(0.0, Point::ORIGIN, 0);
        let ball = grain_indicator(&g, &n0, 1.0, &grid).unwrap();
        let area: f64 = ball.values().iter().sum::<f64>() * grid.cell_volume();
        assert!((area - PI).abs() <= 2.0 * PI * grid.spacing(), "area {area}");
        let later = grain_indicator(&g, &n0, 1.3, &grid).unwrap();
        assert!(ball.values().iter().zip(later.values()).all(|(a, b)| a <= b));
    }

    #[test]
    fn space_only_speed_scaling() {
        let grid = Grid::new(Window::square(0.0, 2.0), 0.05).unwrap();
        let one = GrowthField::space_only(ScalarField::filled(grid.clone(), 1.0)).unwrap();
        let two = GrowthField::space_only(ScalarField::filled(grid, 2.0)).unwrap();
        let src = Point::new2(0.6, 1.1);
        let a = one.arrival_field(&src).unwrap();
        let b = two.arrival_field(&src).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(*y, x / 2.0);
        }
        assert_eq!(one.g_min(), 1.0);
        assert_eq!(two.g_max(), 2.0);
    }
}

//! Declarative experiment configuration (TOML) and its validated form.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal_cone::QuadratureOptions;
use crate::error::{Error, Result};
use crate::functions::{MarkSpec, TemporalFn};
use crate::geom::{Point, Window};
use crate::grid::{Grid, ScalarField};
use crate::growth::eikonal::DEFAULT_SEED_RADIUS;
use crate::growth::{GrowthField, SpaceGrowth};
use crate::nucleation::NucleationModel;

/// An axis-aligned box written as two corners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSpec {
    pub fn window(&self, path: &str) -> Result<Window> {
        Window::new(&self.lo, &self.hi).map_err(|e| Error::config(path, e.to_string()))
    }
}

impl From<&Window> for BoxSpec {
    fn from(w: &Window) -> Self {
        BoxSpec { lo: w.lo[..w.dim].to_vec(), hi: w.hi[..w.dim].to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Lattice spacing `h` of the observation grid (and of space-only speeds).
    pub spacing: f64,
    /// Margin added around the window for nucleation; at least `G_max * horizon`.
    pub padding: f64,
    /// Spacing of the fine grid over the test box used by surface checks;
    /// defaults to `spacing`.
    #[serde(default)]
    pub surface_spacing: Option<f64>,
    /// Minkowski radius in units of the surface spacing.
    #[serde(default = "default_radius")]
    pub minkowski_radius: f64,
    /// Radii (same units) reported as a sensitivity sweep.
    #[serde(default = "default_sweep")]
    pub minkowski_sweep: Vec<f64>,
}

fn default_radius() -> f64 {
    5.0
}

fn default_sweep() -> Vec<f64> {
    vec![3.0, 5.0, 8.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    pub times: Vec<f64>,
    /// Snapped to the nearest grid node.
    pub points: Vec<Vec<f64>>,
    pub test_box: BoxSpec,
    /// Half-width of the central differences in the evolution checks.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Point whose capture-time law is tested; defaults to the first point.
    #[serde(default)]
    pub capture_point: Option<Vec<f64>>,
    /// Number of `(t, x)` pairs in the derivative-consistency check.
    #[serde(default = "default_derivative_pairs")]
    pub derivative_pairs: usize,
}

fn default_fd_step() -> f64 {
    0.05
}

fn default_derivative_pairs() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Either `alpha` (constant space-time density on the nucleation window,
    /// uniform marks) or an explicit temporal `intensity` with `marks`.
    Poisson {
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        intensity: Option<TemporalFn>,
        #[serde(default)]
        marks: Option<MarkSpec>,
    },
    SingleNucleus {
        birth_density: TemporalFn,
        #[serde(default)]
        marks: MarkSpec,
    },
    Staircase {
        birth_density: TemporalFn,
        #[serde(default)]
        marks: MarkSpec,
    },
    Thinned {
        base: Box<ModelSpec>,
    },
    FreeSpace {
        base: Box<ModelSpec>,
        region: BoxSpec,
    },
}

impl ModelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Poisson { .. } => "poisson",
            ModelSpec::SingleNucleus { .. } => "single_nucleus",
            ModelSpec::Staircase { .. } => "staircase",
            ModelSpec::Thinned { .. } => "thinned",
            ModelSpec::FreeSpace { .. } => "free_space",
        }
    }

    fn build(&self, window: &Window, path: &str) -> Result<NucleationModel> {
        let sub = |f: &str| format!("{path}.{f}");
        match self {
            ModelSpec::Poisson { alpha, intensity, marks } => match (alpha, intensity) {
                (Some(a), None) => {
                    if marks.is_some() {
                        return Err(Error::config(sub("marks"), "`alpha` implies uniform marks; drop `marks`"));
                    }
                    if !(a.is_finite() && *a > 0.0) {
                        return Err(Error::config(sub("alpha"), format!("must be positive, got {a}")));
                    }
                    NucleationModel::homogeneous_poisson(*a, *window)
                }
                (None, Some(f)) => {
                    f.validate(&sub("intensity"), false)?;
                    let marks = marks.clone().unwrap_or_default().resolve(window, &sub("marks"))?;
                    NucleationModel::poisson(f.clone(), marks, *window)
                }
                _ => Err(Error::config(path, "poisson needs exactly one of `alpha` or `intensity`")),
            },
            ModelSpec::SingleNucleus { birth_density, marks } => {
                birth_density.validate(&sub("birth_density"), true)?;
                NucleationModel::single_nucleus(birth_density.clone(), marks.resolve(window, &sub("marks"))?, *window)
            }
            ModelSpec::Staircase { birth_density, marks } => {
                birth_density.validate(&sub("birth_density"), true)?;
                NucleationModel::staircase(birth_density.clone(), marks.resolve(window, &sub("marks"))?, *window)
            }
            ModelSpec::Thinned { base } => {
                if matches!(**base, ModelSpec::Thinned { .. } | ModelSpec::FreeSpace { .. }) {
                    return Err(Error::config(sub("base"), "the base must be history-free"));
                }
                NucleationModel::thinned(base.build(window, &sub("base"))?)
            }
            ModelSpec::FreeSpace { base, region } => {
                if matches!(**base, ModelSpec::Thinned { .. } | ModelSpec::FreeSpace { .. }) {
                    return Err(Error::config(sub("base"), "the base must be history-free"));
                }
                let region = region.window(&sub("region"))?;
                if !window.contains_window(&region) {
                    return Err(Error::config(sub("region"), "must lie inside the padded window"));
                }
                NucleationModel::free_space(base.build(window, &sub("base"))?, region)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthSpec {
    TimeOnly {
        speed: TemporalFn,
    },
    SpaceOnly {
        field: SpeedFieldSpec,
        #[serde(default = "default_seed_radius")]
        seed_radius: f64,
    },
}

fn default_seed_radius() -> f64 {
    DEFAULT_SEED_RADIUS
}

/// Position-dependent speed on the padded lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedFieldSpec {
    Uniform { value: f64 },
    /// `low` where `x[axis] < split`, `high` elsewhere.
    TwoHalfspace { axis: usize, split: f64, low: f64, high: f64 },
    /// Node values of the padded lattice, row-major with the last axis fastest.
    Grid { values: Vec<f64> },
}

impl SpeedFieldSpec {
    fn build(&self, grid: &Grid, path: &str) -> Result<ScalarField> {
        let field = match self {
            SpeedFieldSpec::Uniform { value } => ScalarField::filled(grid.clone(), *value),
            SpeedFieldSpec::TwoHalfspace { axis, split, low, high } => {
                if *axis >= grid.dim() {
                    return Err(Error::config(format!("{path}.axis"), format!("must be < {}", grid.dim())));
                }
                ScalarField::from_fn(grid.clone(), |p| if p.0[*axis] < *split { *low } else { *high })
            }
            SpeedFieldSpec::Grid { values } => {
                if values.len() != grid.len() {
                    return Err(Error::config(
                        format!("{path}.values"),
                        format!("expected {} node values for shape {:?}, got {}", grid.len(), grid.shape(), values.len()),
                    ));
                }
                ScalarField::from_values(grid.clone(), values.clone())?
            }
        };
        if field.values().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config(path, "speeds must be finite and strictly positive"));
        }
        Ok(field)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub tol: f64,
    pub max_depth: u32,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    /// Simpson tolerance used inside the derivative-consistency check.
    pub derivative_tol: f64,
    /// Half-width of the central difference of `Λ(C)`.
    pub fd_delta: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        let q = QuadratureOptions::default();
        QuadratureSpec {
            tol: q.tol,
            max_depth: q.max_depth,
            radial_nodes: q.radial_nodes,
            angular_nodes: q.angular_nodes,
            derivative_tol: 1e-10,
            fd_delta: 1e-3,
        }
    }
}

impl QuadratureSpec {
    pub fn options(&self) -> QuadratureOptions {
        QuadratureOptions {
            tol: self.tol,
            max_depth: self.max_depth,
            radial_nodes: self.radial_nodes,
            angular_nodes: self.angular_nodes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Pointwise z-score gate for stochastic checks.
    pub z: f64,
    /// Relative allowance for the weak-form finite differences.
    pub evolution_allowance: f64,
    /// Relative grid allowance for the extended surface density.
    pub surface_allowance: f64,
    /// Rate vs central difference of the cone measure.
    pub derivative_rel: f64,
    /// Quadrature-vs-quadrature branches.
    pub oracle_rel: f64,
    /// Algebraic identities.
    pub identity_rel: f64,
    /// Minimum expected count per thinning bin before merging.
    pub min_bin_expected: f64,
    /// Family-wise level for multiplicity-adjusted verdicts (the two-sided
    /// level of `|z| = 3`).
    pub family_level: f64,
    /// Relative mismatch a deterministic negative control must exceed.
    pub control_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            z: 3.0,
            evolution_allowance: 0.05,
            surface_allowance: 0.02,
            derivative_rel: 1e-3,
            oracle_rel: 1e-6,
            identity_rel: 1e-12,
            min_bin_expected: 20.0,
            family_level: 0.0027,
            control_rel: 1e-3,
        }
    }
}

/// Binning for the thinned-intensity check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThinnedSpec {
    /// `[t0, t1]` bins; default: width `0.2` (last bin ends at the horizon).
    pub time_bins: Option<Vec<[f64; 2]>>,
    /// Space bins; default: the padded window cut at the observation window,
    /// `3^d` boxes with the observation window in the middle.
    pub space_bins: Option<Vec<BoxSpec>>,
    /// Lattice spacing for `V̂_V(t-, x)`; defaults to `2 h`.
    pub spacing: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
    /// Realizations whose nuclei (CSV) and capture fields (raw grid) are dumped.
    pub dump_realizations: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: "out".into(), dump_realizations: 0 }
    }
}

/// Everything an experiment needs, as written in the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub realizations: usize,
    pub horizon: f64,
    pub window: BoxSpec,
    pub grid: GridSpec,
    pub evaluation: EvaluationSpec,
    pub model: ModelSpec,
    pub growth: GrowthSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub thinned: ThinnedSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output.dir = String::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every field and builds the runtime objects.
    pub fn validate(&self) -> Result<Experiment> {
        Experiment::new(self.clone())
    }
}

/// A validated configuration with its model, growth field and lattices.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub dim: usize,
    /// Observation window.
    pub window: Window,
    /// Observation window plus padding; nuclei live here.
    pub nucleation_window: Window,
    /// Observation lattice at spacing `h`.
    pub grid: Grid,
    pub test_box: Window,
    /// Lattice over the test box at the surface spacing.
    pub surface_grid: Grid,
    /// Minkowski radius (absolute) on the surface grid.
    pub minkowski_radius: f64,
    pub model: NucleationModel,
    pub growth: Arc<GrowthField>,
    /// Evaluation points snapped to nodes of `grid`.
    pub points: Vec<Point>,
    pub capture_point: Point,
}

fn positive(v: f64, path: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be finite and positive, got {v}")))
    }
}

fn is_multiple(x: f64, h: f64) -> bool {
    let k = x / h;
    (k - k.round()).abs() <= 1e-6
}

impl Experiment {
    fn new(config: ExperimentConfig) -> Result<Self> {
        let c = &config;
        if c.realizations == 0 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        positive(c.horizon, "horizon")?;
        let window = c.window.window("window")?;
        let dim = window.dim;
        let h = c.grid.spacing;
        positive(h, "grid.spacing")?;
        let grid = Grid::new(window, h).map_err(|e| Error::config("grid.spacing", e.to_string()))?;
        if !(c.grid.padding.is_finite() && c.grid.padding >= 0.0) {
            return Err(Error::config("grid.padding", "must be finite and >= 0"));
        }
        if !is_multiple(c.grid.padding, h) {
            return Err(Error::config("grid.padding", format!("must be a multiple of grid.spacing = {h}")));
        }
        let nucleation_window = window.padded(c.grid.padding);

        let growth = match &c.growth {
            GrowthSpec::TimeOnly { speed } => {
                speed.validate("growth.speed", false)?;
                GrowthField::time_only(speed.clone(), 2.0 * c.horizon)
                    .map_err(|e| Error::config("growth.speed", e.to_string()))?
            }
            GrowthSpec::SpaceOnly { field, seed_radius } => {
                let lattice = Grid::new(nucleation_window, h)?;
                let speed = field.build(&lattice, "growth.field")?;
                GrowthField::SpaceOnly(SpaceGrowth::new(speed)?.with_seed_radius(*seed_radius)?)
            }
        };
        let g_max = match &c.growth {
            GrowthSpec::TimeOnly { speed } => speed.sup_on(0.0, c.horizon),
            GrowthSpec::SpaceOnly { .. } => growth.g_max(),
        };
        let needed = g_max * c.horizon;
        if c.grid.padding < needed * (1.0 - 1e-12) {
            return Err(Error::config(
                "grid.padding",
                format!("{} is below G_max * horizon = {g_max} * {} = {needed}", c.grid.padding, c.horizon),
            ));
        }

        let model = c.model.build(&nucleation_window, "model")?;

        let e = &c.evaluation;
        if e.times.is_empty() {
            return Err(Error::config("evaluation.times", "need at least one time"));
        }
        for (i, &t) in e.times.iter().enumerate() {
            if !(t >= 0.0 && t <= c.horizon) {
                return Err(Error::config(format!("evaluation.times[{i}]"), format!("{t} is outside [0, {}]", c.horizon)));
            }
        }
        if e.points.is_empty() {
            return Err(Error::config("evaluation.points", "need at least one point"));
        }
        let snap = |coords: &[f64], path: String| -> Result<Point> {
            if coords.len() != dim {
                return Err(Error::config(path, format!("needs {dim} coordinates")));
            }
            let p = Point::from_slice(coords).map_err(|err| Error::config(&path, err.to_string()))?;
            if !window.contains(&p) {
                return Err(Error::config(path, "lies outside the (unpadded) window"));
            }
            Ok(grid.point(grid.nearest_node(&p).expect("inside window")))
        };
        let points = e
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| snap(p, format!("evaluation.points[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let capture_point = match &e.capture_point {
            Some(p) => snap(p, "evaluation.capture_point".into())?,
            None => points[0],
        };
        positive(e.fd_step, "evaluation.fd_step")?;

        let test_box = e.test_box.window("evaluation.test_box")?;
        if test_box.dim != dim || !window.contains_window(&test_box) {
            return Err(Error::config("evaluation.test_box", "must lie inside the window"));
        }
        let hs = c.grid.surface_spacing.unwrap_or(h);
        positive(hs, "grid.surface_spacing")?;
        if matches!(c.growth, GrowthSpec::SpaceOnly { .. }) && (hs - h).abs() > 1e-12 * h {
            return Err(Error::config(
                "grid.surface_spacing",
                "space-only growth estimates on the speed lattice; surface_spacing must equal spacing",
            ));
        }
        let surface_grid =
            Grid::new(test_box, hs).map_err(|err| Error::config("evaluation.test_box", err.to_string()))?;
        for a in 0..dim {
            if !is_multiple(test_box.lo[a] - window.lo[a], hs) {
                return Err(Error::config("evaluation.test_box", "corners must sit on the surface lattice"));
            }
        }
        if !(c.grid.minkowski_radius >= 2.0) {
            return Err(Error::config("grid.minkowski_radius", "must be at least 2 (units of the surface spacing)"));
        }
        for (i, &k) in c.grid.minkowski_sweep.iter().enumerate() {
            if !(k >= 2.0) {
                return Err(Error::config(format!("grid.minkowski_sweep[{i}]"), "radii must be at least 2"));
            }
        }
        if let GrowthField::SpaceOnly(g) = &growth {
            // Surface estimates dilate beyond the test box; the work lattice must
            // stay on the speed lattice.
            let k_max = c.grid.minkowski_sweep.iter().copied().fold(c.grid.minkowski_radius, f64::max);
            let work = surface_grid.grown(k_max.ceil() as usize + 1);
            if work.offset_in(g.grid()).is_none() {
                return Err(Error::config(
                    "evaluation.test_box",
                    "test box plus the Minkowski margin must lie inside the padded window",
                ));
            }
        }

        let q = &c.quadrature;
        positive(q.tol, "quadrature.tol")?;
        positive(q.derivative_tol, "quadrature.derivative_tol")?;
        positive(q.fd_delta, "quadrature.fd_delta")?;
        if q.radial_nodes == 0 || q.angular_nodes < 4 {
            return Err(Error::config("quadrature", "need radial_nodes >= 1 and angular_nodes >= 4"));
        }
        let t = &c.tolerances;
        for (v, p) in [
            (t.z, "tolerances.z"),
            (t.derivative_rel, "tolerances.derivative_rel"),
            (t.oracle_rel, "tolerances.oracle_rel"),
            (t.identity_rel, "tolerances.identity_rel"),
            (t.family_level, "tolerances.family_level"),
            (t.control_rel, "tolerances.control_rel"),
        ] {
            positive(v, p)?;
        }
        for (v, p) in [
            (t.evolution_allowance, "tolerances.evolution_allowance"),
            (t.surface_allowance, "tolerances.surface_allowance"),
            (t.min_bin_expected, "tolerances.min_bin_expected"),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(p, "must be finite and >= 0"));
            }
        }
        if let Some(bins) = &c.thinned.time_bins {
            for (i, b) in bins.iter().enumerate() {
                if !(b[0] >= 0.0 && b[1] > b[0] && b[1] <= c.horizon) {
                    return Err(Error::config(format!("thinned.time_bins[{i}]"), "need 0 <= t0 < t1 <= horizon"));
                }
            }
        }
        if let Some(bins) = &c.thinned.space_bins {
            for (i, b) in bins.iter().enumerate() {
                let path = format!("thinned.space_bins[{i}]");
                let w = b.window(&path)?;
                if !nucleation_window.contains_window(&w) {
                    return Err(Error::config(path, "must lie inside the padded window"));
                }
            }
        }
        if let Some(s) = c.thinned.spacing {
            positive(s, "thinned.spacing")?;
            if !is_multiple(nucleation_window.extent(0), s) {
                return Err(Error::config("thinned.spacing", "must divide the padded window"));
            }
        }

        Ok(Experiment {
            fingerprint: config.fingerprint(),
            dim,
            window,
            nucleation_window,
            grid,
            test_box,
            minkowski_radius: c.grid.minkowski_radius * hs,
            surface_grid,
            model,
            growth: Arc::new(growth),
            points,
            capture_point,
            config,
        })
    }

    pub fn quadrature(&self) -> QuadratureOptions {
        self.config.quadrature.options()
    }

    /// `(t, x)` pairs of the evaluation design, times outermost.
    pub fn pairs(&self) -> Vec<(f64, Point)> {
        let mut out = Vec::new();
        for &t in &self.config.evaluation.times {
            for p in &self.points {
                out.push((t, *p));
            }
        }
        out
    }

    /// Sweep radii in absolute units on the surface grid.
    pub fn sweep_radii(&self) -> Vec<f64> {
        let hs = self.surface_grid.spacing();
        self.config.grid.minkowski_sweep.iter().map(|k| k * hs).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const KJMA: &str = r#"
name = "kjma"
seed = 7
realizations = 10
horizon = 1.5

[window]
lo = [0.0, 0.0]
hi = [4.0, 4.0]

[grid]
spacing = 0.02
padding = 1.5
surface_spacing = 0.005

[evaluation]
times = [0.5, 1.0, 1.5]
points = [[2.0, 2.0], [1.0, 1.0]]
test_box = { lo = [1.5, 1.5], hi = [2.5, 2.5] }

[model]
kind = "poisson"
alpha = 0.5

[growth]
kind = "time_only"
speed = { family = "constant", value = 1.0 }
"#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::from_toml_str(KJMA).unwrap();
        let e = c.validate().unwrap();
        assert_eq!(e.dim, 2);
        assert_eq!(e.nucleation_window, Window::square(-1.5, 5.5));
        assert!((e.minkowski_radius - 0.025).abs() < 1e-15);
        assert_eq!(e.pairs().len(), 6);
        assert_eq!(e.fingerprint.len(), 64);
    }

    #[test]
    fn short_padding_is_rejected_with_path() {
        let text = KJMA.replace("padding = 1.5", "padding = 1.0");
        let err = ExperimentConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "grid.padding"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn late_times_and_outside_points_are_rejected() {
        let text = KJMA.replace("times = [0.5, 1.0, 1.5]", "times = [0.5, 2.0]");
        let err = ExperimentConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("evaluation.times[1]"), "{err}");
        let text = KJMA.replace("[1.0, 1.0]]", "[4.5, 1.0]]");
        let err = ExperimentConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("evaluation.points[1]"), "{err}");
    }

    #[test]
    fn unknown_fields_fail_to_parse() {
        let text = KJMA.replace("alpha = 0.5", "alpha = 0.5\nbeta = 1.0");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn fingerprint_ignores_output_dir_but_not_seed() {
        let c = ExperimentConfig::from_toml_str(KJMA).unwrap();
        let mut d = c.clone();
        d.output.dir = "elsewhere".into();
        assert_eq!(c.fingerprint(), d.fingerprint());
        d.seed += 1;
        assert_ne!(c.fingerprint(), d.fingerprint());
    }
}

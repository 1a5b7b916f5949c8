//! Python bindings: models, growth fields, cone quantities, ensembles with
//! their estimators, and the config-driven harness.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use grainsim::causal_cone::{self, CausalCone};
use grainsim::estimators::{self, DensityEstimate};
use grainsim::harness::{self, ExperimentConfig, RunOptions};
use grainsim::{Error, Grid, GrowthField, MarkDensity, NucleationModel, Point, ScalarField, TemporalFn, Window};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn point(x: &[f64]) -> PyResult<Point> {
    Point::from_slice(x).map_err(py_err)
}

fn window(lo: &[f64], hi: &[f64]) -> PyResult<Window> {
    Window::new(lo, hi).map_err(py_err)
}

fn marks(win: &Window, lo: Option<Vec<f64>>, hi: Option<Vec<f64>>) -> PyResult<MarkDensity> {
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok(MarkDensity::uniform(window(&lo, &hi)?)),
        (None, None) => Ok(MarkDensity::uniform(*win)),
        _ => Err(PyValueError::new_err("give both marks_lo and marks_hi, or neither")),
    }
}

/// A nucleation process on a (padded) window.
#[pyclass(frozen, name = "Model")]
struct PyModel(NucleationModel);

#[pymethods]
impl PyModel {
    /// Homogeneous Poisson nucleation with space-time density `alpha`.
    #[staticmethod]
    fn poisson(alpha: f64, lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Self> {
        NucleationModel::homogeneous_poisson(alpha, window(&lo, &hi)?).map(PyModel).map_err(py_err)
    }

    /// One nucleus with an Exp(`rate`) birth time.
    #[staticmethod]
    #[pyo3(signature = (rate, lo, hi, marks_lo=None, marks_hi=None))]
    fn single_nucleus(rate: f64, lo: Vec<f64>, hi: Vec<f64>, marks_lo: Option<Vec<f64>>, marks_hi: Option<Vec<f64>>) -> PyResult<Self> {
        let w = window(&lo, &hi)?;
        NucleationModel::single_nucleus(TemporalFn::exponential(rate), marks(&w, marks_lo, marks_hi)?, w)
            .map(PyModel)
            .map_err(py_err)
    }

    /// First birth Exp(`rate`), then one nucleus per unit time.
    #[staticmethod]
    #[pyo3(signature = (rate, lo, hi, marks_lo=None, marks_hi=None))]
    fn staircase(rate: f64, lo: Vec<f64>, hi: Vec<f64>, marks_lo: Option<Vec<f64>>, marks_hi: Option<Vec<f64>>) -> PyResult<Self> {
        let w = window(&lo, &hi)?;
        NucleationModel::staircase(TemporalFn::exponential(rate), marks(&w, marks_lo, marks_hi)?, w)
            .map(PyModel)
            .map_err(py_err)
    }

    /// Removes nuclei born inside the already covered region.
    #[staticmethod]
    fn thinned(base: &PyModel) -> PyResult<Self> {
        NucleationModel::thinned(base.0.clone()).map(PyModel).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind_name()
    }

    #[getter]
    fn is_poisson(&self) -> bool {
        self.0.is_poisson()
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.0.kind_name())
    }
}

/// A normal growth speed, either `G(t)` or `G(x)` on a lattice.
#[pyclass(frozen, name = "Growth")]
struct PyGrowth(Arc<GrowthField>);

#[pymethods]
impl PyGrowth {
    #[staticmethod]
    #[pyo3(signature = (speed, table_end=100.0))]
    fn constant(speed: f64, table_end: f64) -> PyResult<Self> {
        GrowthField::constant(speed, table_end).map(|g| PyGrowth(Arc::new(g))).map_err(py_err)
    }

    /// Space-only speed from node values (row-major, last axis fastest).
    #[staticmethod]
    fn field(lo: Vec<f64>, hi: Vec<f64>, spacing: f64, values: Vec<f64>) -> PyResult<Self> {
        let grid = Grid::new(window(&lo, &hi)?, spacing).map_err(py_err)?;
        let f = ScalarField::from_values(grid, values).map_err(py_err)?;
        GrowthField::space_only(f).map(|g| PyGrowth(Arc::new(g))).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind_name()
    }
}

fn cone<'g>(growth: &'g PyGrowth, t: f64, x: &[f64]) -> PyResult<CausalCone<'g>> {
    CausalCone::new(&growth.0, point(x)?, t).map_err(py_err)
}

/// `Λ(C(t, x))`.
#[pyfunction]
fn cone_measure(growth: &PyGrowth, model: &PyModel, t: f64, x: Vec<f64>) -> PyResult<f64> {
    causal_cone::cone_measure(&cone(growth, t, &x)?, &model.0).map_err(py_err)
}

/// `∂_t Λ(C(t, x))`.
#[pyfunction]
fn cone_measure_rate(growth: &PyGrowth, model: &PyModel, t: f64, x: Vec<f64>) -> PyResult<f64> {
    causal_cone::cone_measure_rate(&cone(growth, t, &x)?, &model.0).map_err(py_err)
}

/// `S_ex(t, x)`.
#[pyfunction]
fn extended_surface_density(growth: &PyGrowth, model: &PyModel, t: f64, x: Vec<f64>) -> PyResult<f64> {
    causal_cone::extended_surface_density(&cone(growth, t, &x)?, &model.0).map_err(py_err)
}

/// `P(N(C(t, x)) > 0)`.
#[pyfunction]
fn coverage_probability(growth: &PyGrowth, model: &PyModel, t: f64, x: Vec<f64>) -> PyResult<f64> {
    causal_cone::coverage_probability(&cone(growth, t, &x)?, &model.0).map_err(py_err)
}

/// Independent realizations on an observation grid.
#[pyclass(frozen, name = "Ensemble")]
struct PyEnsemble(grainsim::Ensemble);

fn estimate_dict<'py>(py: Python<'py>, e: &DensityEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let grid = e.estimate.grid();
    d.set_item("quantity", e.quantity.label())?;
    d.set_item("t", e.t)?;
    d.set_item("r", e.r)?;
    d.set_item("shape", grid.shape()[..grid.dim()].to_vec())?;
    d.set_item("lo", grid.window().lo[..grid.dim()].to_vec())?;
    d.set_item("spacing", grid.spacing())?;
    d.set_item("values", e.estimate.values().to_vec())?;
    d.set_item("stderr", e.stderr.values().to_vec())?;
    d.set_item("n", e.n_realizations)?;
    Ok(d)
}

#[pymethods]
impl PyEnsemble {
    /// `n` realizations up to `horizon`; realization `i` depends only on
    /// `(seed, i)`.
    #[new]
    fn new(model: &PyModel, growth: &PyGrowth, horizon: f64, seed: u64, n: usize, lo: Vec<f64>, hi: Vec<f64>, spacing: f64) -> PyResult<Self> {
        let grid = Grid::new(window(&lo, &hi)?, spacing).map_err(py_err)?;
        grainsim::Ensemble::build(&model.0, growth.0.clone(), horizon, seed, n, grid).map(PyEnsemble).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Node estimate of `"VV"`, `"Vex"`, `"SV"` or `"Sex"` at time `t`;
    /// surface densities need the Minkowski radius `r`.
    #[pyo3(signature = (quantity, t, r=None))]
    fn estimate<'py>(&self, py: Python<'py>, quantity: &str, t: f64, r: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let need_r = || r.ok_or_else(|| PyValueError::new_err(format!("{quantity} needs a Minkowski radius r")));
        let e = py
            .detach(|| -> PyResult<DensityEstimate> {
                match quantity {
                    "VV" => estimators::estimate_vv(&self.0, t).map_err(py_err),
                    "Vex" => estimators::estimate_vex(&self.0, t).map_err(py_err),
                    "SV" => estimators::estimate_sv(&self.0, t, need_r()?).map_err(py_err),
                    "Sex" => estimators::estimate_sex(&self.0, t, need_r()?).map_err(py_err),
                    q => Err(PyValueError::new_err(format!("unknown quantity `{q}` (VV, Vex, SV, Sex)"))),
                }
            })?;
        estimate_dict(py, &e)
    }

    /// Exact capture times of `x`: `(sorted finite times, censored count)`.
    fn capture_times(&self, py: Python<'_>, x: Vec<f64>) -> PyResult<(Vec<f64>, usize)> {
        let p = point(&x)?;
        let s = py.detach(|| estimators::sample_capture_time(&self.0, &p)).map_err(py_err)?;
        Ok((s.times, s.censored))
    }
}

/// A validated experiment config.
#[pyclass(frozen, name = "Experiment")]
struct PyExperiment(harness::Experiment);

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pymethods]
impl PyExperiment {
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let c = ExperimentConfig::load(&path).map_err(py_err)?;
        c.validate().map(PyExperiment).map_err(py_err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let c = ExperimentConfig::from_toml_str(text).map_err(py_err)?;
        c.validate().map(PyExperiment).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.config.name.clone()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.0.fingerprint.clone()
    }

    /// The config as a dict.
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(&self.0.config).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }

    /// Runs the checks, writes outputs to `out_dir` and returns the summary.
    #[pyo3(signature = (out_dir, checks=None, negative_controls=false, threads=None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        out_dir: PathBuf,
        checks: Option<Vec<String>>,
        negative_controls: bool,
        threads: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = RunOptions { out_dir, checks, negative_controls, threads };
        let summary = py.detach(|| harness::run_experiment(&self.0, &opts)).map_err(py_err)?;
        let text = serde_json::to_string(&summary).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }
}

/// `name  description` lines of every check.
#[pyfunction]
fn list_checks() -> Vec<String> {
    harness::list_checks()
}

#[pymodule]
#[pyo3(name = "grainsim")]
fn grainsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyGrowth>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(cone_measure, m)?)?;
    m.add_function(wrap_pyfunction!(cone_measure_rate, m)?)?;
    m.add_function(wrap_pyfunction!(extended_surface_density, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_probability, m)?)?;
    m.add_function(wrap_pyfunction!(list_checks, m)?)?;
    Ok(())
}

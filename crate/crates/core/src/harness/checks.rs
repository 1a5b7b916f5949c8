//! Identity checks. Each check reads the shared ensemble and estimator
//! passes from a [`Context`] and returns an [`IdentityReport`] plus any
//! extra tables it produced.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::causal_cone::{
    central_difference, cone_measure, cone_measure_rate, coverage_probability, evaluate_cones, extended_surface_density,
    CausalCone, QuadratureOptions,
};
use crate::error::{Error, Result};
use crate::estimators::{
    atom_test, capture_histogram, capture_sidecar, estimate_pass, estimate_pass_weighted, ks_critical_1pct,
    sample_capture_time, write_capture_csv, DensityEstimate, DensityRequest, PassResult, Quantity,
};
use crate::geom::{Point, Window};
use crate::grid::{Grid, ScalarField};
use crate::growth::GrowthField;
use crate::harness::config::Experiment;
use crate::harness::report::{IdentityReport, ReportRow, Rule, Status};
use crate::nucleation::{MarkedPoint, ModelKind, NucleationModel};
use crate::quadrature::GaussLegendre;
use crate::simulate::{Ensemble, Realization};

pub const DERIVATIVE_CONSISTENCY: &str = "derivative_consistency";
pub const VEX_IDENTITY: &str = "vex_identity";
pub const POISSON_COVERAGE: &str = "poisson_coverage";
pub const COVERAGE_PROBABILITY: &str = "coverage_probability";
pub const EVOLUTION_EQUATIONS: &str = "evolution_equations";
pub const POISSON_VV_VEX: &str = "poisson_vv_vex";
pub const EXTENDED_SURFACE_DENSITY: &str = "extended_surface_density";
pub const THINNED_INTENSITY: &str = "thinned_intensity";
pub const CAPTURE_TIME_LAW: &str = "capture_time_law";
pub const POISSON_COVERAGE_CONTROL: &str = "poisson_coverage_control";
pub const POISSON_VV_VEX_CONTROL: &str = "poisson_vv_vex_control";
pub const ATOM_CONTROL: &str = "atom_control";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckInfo {
    pub name: &'static str,
    pub negative_control: bool,
    pub summary: &'static str,
}

pub const CHECKS: [CheckInfo; 12] = [
    CheckInfo { name: DERIVATIVE_CONSISTENCY, negative_control: false, summary: "cone measure rate vs central difference of the cone measure" },
    CheckInfo { name: VEX_IDENTITY, negative_control: false, summary: "V_ex estimate vs cone measure" },
    CheckInfo { name: POISSON_COVERAGE, negative_control: false, summary: "V_V estimate vs 1 - exp(-cone measure) (Poisson)" },
    CheckInfo { name: COVERAGE_PROBABILITY, negative_control: false, summary: "V_V estimate vs quadrature P(N(C) > 0) (single nucleus, staircase)" },
    CheckInfo { name: EVOLUTION_EQUATIONS, negative_control: false, summary: "weak-form d/dt V_V = G S_V and d/dt V_ex = G S_ex over the test box" },
    CheckInfo { name: POISSON_VV_VEX, negative_control: false, summary: "d/dt V_V = (1 - V_V) d/dt V_ex (Poisson)" },
    CheckInfo { name: EXTENDED_SURFACE_DENSITY, negative_control: false, summary: "box integral of S_ex vs cone rate / G" },
    CheckInfo { name: THINNED_INTENSITY, negative_control: false, summary: "binned thinned nucleation counts vs base intensity times (1 - V_V(t-))" },
    CheckInfo { name: CAPTURE_TIME_LAW, negative_control: false, summary: "capture-time KS distance and atom test" },
    CheckInfo { name: POISSON_COVERAGE_CONTROL, negative_control: true, summary: "Poisson coverage formula applied to a non-Poisson model" },
    CheckInfo { name: POISSON_VV_VEX_CONTROL, negative_control: true, summary: "Poisson-only rate identity applied to a non-Poisson model" },
    CheckInfo { name: ATOM_CONTROL, negative_control: true, summary: "atom test on capture times with a constructed atom" },
];

pub fn check_info(name: &str) -> Option<CheckInfo> {
    CHECKS.iter().copied().find(|c| c.name == name)
}

/// Why a check does not apply to `exp` (`None`: it applies).
pub fn skip_reason(exp: &Experiment, name: &str) -> Option<String> {
    let model = &exp.model;
    let kind = model.kind_name();
    let analytic = !model.is_history_dependent();
    let no_oracle = || Some(format!("{kind} nucleation is history-dependent; no analytic cone measure exists"));
    match name {
        DERIVATIVE_CONSISTENCY => None,
        VEX_IDENTITY | EXTENDED_SURFACE_DENSITY if !analytic => no_oracle(),
        POISSON_COVERAGE | POISSON_VV_VEX if !model.is_poisson() => {
            Some(format!("identity not claimed for {kind} nucleation (Poisson only)"))
        }
        COVERAGE_PROBABILITY => match model.kind() {
            ModelKind::SingleNucleus { .. } | ModelKind::Staircase { .. } => None,
            ModelKind::Poisson { .. } => Some("covered by poisson_coverage".into()),
            _ => no_oracle(),
        },
        THINNED_INTENSITY if !matches!(model.kind(), ModelKind::Thinned { .. }) => Some("model is not thinned".into()),
        POISSON_COVERAGE_CONTROL | POISSON_VV_VEX_CONTROL if model.is_poisson() || !analytic => {
            Some("control needs a history-free non-Poisson model".into())
        }
        _ => None,
    }
}

/// A report plus extra files (name, bytes) the check produced.
pub struct CheckOutput {
    pub report: IdentityReport,
    pub artifacts: Vec<(String, Vec<u8>)>,
}

type Shared<T> = std::result::Result<Arc<T>, String>;

fn shared<T>(cell: &OnceLock<Shared<T>>, f: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
    cell.get_or_init(|| f().map(Arc::new).map_err(|e| e.to_string())).clone().map_err(Error::Domain)
}

/// `V_V` and `V_ex` at every evaluation time on the observation grid.
pub struct MainPass {
    pub vv: Vec<DensityEstimate>,
    pub vex: Vec<DensityEstimate>,
}

/// Request indices of one central-difference time.
#[derive(Clone, Copy, Debug)]
pub struct FdSlot {
    pub t: f64,
    pub vv_minus: usize,
    pub vv_plus: usize,
    pub vv: usize,
    pub vex_minus: usize,
    pub vex_plus: usize,
    pub sv: usize,
    pub sex: usize,
}

/// Estimates on the surface grid over the test box. Box 0 is the plain test
/// box; for space-only growth box 1 is the same box weighted by `G(x)`.
pub struct SurfacePass {
    pub result: PassResult,
    pub requests: Vec<DensityRequest>,
    pub fd: Vec<FdSlot>,
    /// `(t, request)` of `S_ex` at every positive evaluation time.
    pub sex: Vec<(f64, usize)>,
    pub sweep_time: Option<f64>,
    /// `(r, S_V request, S_ex request)`.
    pub sweep: Vec<(f64, usize, usize)>,
    pub weighted: bool,
}

impl SurfacePass {
    pub fn samples(&self, req: usize, weighted: bool) -> &[f64] {
        let b = if weighted && self.weighted { 1 } else { 0 };
        &self.result.box_samples[req][b]
    }
}

/// Shared state of one experiment run; the ensemble and passes are built on
/// first use.
pub struct Context<'e> {
    pub exp: &'e Experiment,
    ensemble: OnceLock<Shared<Ensemble>>,
    main: OnceLock<Shared<MainPass>>,
    surface: OnceLock<Shared<SurfacePass>>,
}

impl<'e> Context<'e> {
    pub fn new(exp: &'e Experiment) -> Self {
        Context { exp, ensemble: OnceLock::new(), main: OnceLock::new(), surface: OnceLock::new() }
    }

    pub fn ensemble(&self) -> Result<Arc<Ensemble>> {
        shared(&self.ensemble, || {
            let c = &self.exp.config;
            Ok(Ensemble::build(&self.exp.model, self.exp.growth.clone(), c.horizon, c.seed, c.realizations, self.exp.grid.clone())?
                .with_fingerprint(self.exp.fingerprint.clone()))
        })
    }

    pub fn main_pass(&self) -> Result<Arc<MainPass>> {
        let ens = self.ensemble()?;
        shared(&self.main, || {
            let times = &self.exp.config.evaluation.times;
            let mut reqs: Vec<DensityRequest> = times.iter().map(|&t| DensityRequest::vv(t)).collect();
            reqs.extend(times.iter().map(|&t| DensityRequest::vex(t)));
            let mut est = estimate_pass(&ens, &self.exp.grid, &reqs, &[])?.estimates;
            let vex = est.split_off(times.len());
            Ok(MainPass { vv: est, vex })
        })
    }

    pub fn surface_pass(&self) -> Result<Arc<SurfacePass>> {
        let ens = self.ensemble()?;
        shared(&self.surface, || self.build_surface(&ens))
    }

    fn build_surface(&self, ens: &Ensemble) -> Result<SurfacePass> {
        let exp = self.exp;
        let horizon = exp.config.horizon;
        let dt = exp.config.evaluation.fd_step;
        let r = exp.minkowski_radius;
        let mut reqs: Vec<DensityRequest> = Vec::new();
        let mut add = |q: DensityRequest| -> usize {
            if let Some(i) = reqs.iter().position(|x| *x == q) {
                return i;
            }
            reqs.push(q);
            reqs.len() - 1
        };
        let eps = 1e-12 * horizon;
        let mut fd = Vec::new();
        for &t in &exp.config.evaluation.times {
            if t - dt >= -eps && t + dt <= horizon + eps && t > 0.0 {
                let (lo, hi) = ((t - dt).max(0.0), (t + dt).min(horizon));
                fd.push(FdSlot {
                    t,
                    vv_minus: add(DensityRequest::vv(lo)),
                    vv_plus: add(DensityRequest::vv(hi)),
                    vv: add(DensityRequest::vv(t)),
                    vex_minus: add(DensityRequest::vex(lo)),
                    vex_plus: add(DensityRequest::vex(hi)),
                    sv: add(DensityRequest::sv(t, r)),
                    sex: add(DensityRequest::sex(t, r)),
                });
            }
        }
        let positive: Vec<f64> = exp.config.evaluation.times.iter().copied().filter(|&t| t > 0.0).collect();
        let sex = positive.iter().map(|&t| (t, add(DensityRequest::sex(t, r)))).collect();
        let sweep_time = if positive.is_empty() { None } else { Some(positive[positive.len() / 2]) };
        let sweep = match sweep_time {
            Some(t) => exp
                .sweep_radii()
                .into_iter()
                .map(|rr| (rr, add(DensityRequest::sv(t, rr)), add(DensityRequest::sex(t, rr))))
                .collect(),
            None => Vec::new(),
        };
        let weighted = matches!(*exp.growth, GrowthField::SpaceOnly(_));
        let grid = &exp.surface_grid;
        let result = if weighted {
            let g = ScalarField::from_fn(grid.clone(), |p| exp.growth.speed_at(0.0, p));
            estimate_pass_weighted(ens, grid, &reqs, &[exp.test_box, exp.test_box], &[None, Some(g)])?
        } else {
            estimate_pass(ens, grid, &reqs, &[exp.test_box])?
        };
        Ok(SurfacePass { result, requests: reqs, fd, sex, sweep_time, sweep, weighted })
    }
}

/// Runs one check by name, timing it and attaching provenance metadata.
pub fn run_check(ctx: &Context, name: &str) -> CheckOutput {
    let info = check_info(name);
    let exp = ctx.exp;
    let start = Instant::now();
    let mut out = match skip_reason(exp, name) {
        Some(reason) => CheckOutput {
            report: IdentityReport::skipped(name, info.map_or("", |i| i.summary), reason),
            artifacts: Vec::new(),
        },
        None => {
            let res = match name {
                DERIVATIVE_CONSISTENCY => derivative_consistency(ctx),
                VEX_IDENTITY => vex_identity(ctx),
                POISSON_COVERAGE => coverage(ctx, false),
                COVERAGE_PROBABILITY => coverage_probability_check(ctx),
                EVOLUTION_EQUATIONS => evolution_equations(ctx),
                POISSON_VV_VEX => poisson_vv_vex(ctx, false),
                EXTENDED_SURFACE_DENSITY => extended_surface(ctx),
                THINNED_INTENSITY => thinned_intensity(ctx),
                CAPTURE_TIME_LAW => capture_time_law(ctx),
                POISSON_COVERAGE_CONTROL => coverage(ctx, true),
                POISSON_VV_VEX_CONTROL => poisson_vv_vex(ctx, true),
                ATOM_CONTROL => atom_control(ctx),
                other => Err(Error::domain(format!("unknown check `{other}`"))),
            };
            res.unwrap_or_else(|e| {
                let mut r = IdentityReport::new(name, info.map_or("", |i| i.summary), "none");
                r.status = Status::Error { message: e.to_string() };
                CheckOutput { report: r, artifacts: Vec::new() }
            })
        }
    };
    let r = &mut out.report;
    r.name = name.to_string();
    r.negative_control = info.is_some_and(|i| i.negative_control);
    r.fingerprint = exp.fingerprint.clone();
    r.seed = exp.config.seed;
    if r.n_realizations == 0 && r.stochastic {
        r.n_realizations = exp.config.realizations;
    }
    r.runtime_seconds = start.elapsed().as_secs_f64();
    out
}

fn done(report: IdentityReport) -> Result<CheckOutput> {
    Ok(CheckOutput { report, artifacts: Vec::new() })
}

fn coords(exp: &Experiment, p: &Point) -> Vec<f64> {
    p.coords(exp.dim).to_vec()
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

/// The history-free process whose cone the check can integrate: the model
/// itself, or the base of a thinned / free-space model.
fn cone_model(model: &NucleationModel) -> &NucleationModel {
    match model.kind() {
        ModelKind::Thinned { base } | ModelKind::FreeSpace { base, .. } => base,
        _ => model,
    }
}

/// Tensor Gauss–Legendre rule on a box.
fn box_rule(a: &Window, n: usize) -> Vec<(Point, f64)> {
    let gl = GaussLegendre::new(n);
    let axes: Vec<Vec<(f64, f64)>> = (0..a.dim).map(|k| gl.mapped(a.lo[k], a.hi[k]).collect()).collect();
    let mut out = vec![(Point::ORIGIN, 1.0)];
    for (k, ax) in axes.iter().enumerate() {
        out = out
            .into_iter()
            .flat_map(|(p, w)| {
                ax.iter().map(move |&(x, wx)| {
                    let mut q = p;
                    q.0[k] = x;
                    (q, w * wx)
                })
            })
            .collect();
    }
    out
}

/// `∫_A f(cone(t, x)) dx` for every time, one cone per rule node.
fn box_oracle(
    exp: &Experiment,
    model: &NucleationModel,
    times: &[f64],
    f: impl Fn(&CausalCone, &NucleationModel) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    let rule = box_rule(&exp.test_box, 3);
    let per_node: Vec<Vec<f64>> = rule
        .par_iter()
        .map(|(p, w)| {
            let cone = CausalCone::with_options(&exp.growth, *p, 0.0, exp.quadrature())?;
            times.iter().map(|&t| Ok(w * f(&cone.at_time(t)?, model)?)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..times.len()).map(|k| per_node.iter().map(|v| v[k]).sum()).collect())
}

fn derivative_consistency(ctx: &Context) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let model = cone_model(&exp.model);
    let q = &exp.config.quadrature;
    let tol = &exp.config.tolerances;
    let opts = QuadratureOptions { tol: q.derivative_tol, ..exp.quadrature() };
    let m = exp.config.evaluation.derivative_pairs.max(1);
    let horizon = exp.config.horizon;
    let pairs: Vec<(f64, Point)> = (0..m)
        .map(|k| {
            let u = if m > 1 { k as f64 / (m - 1) as f64 } else { 1.0 };
            (horizon * (0.25 + 0.75 * u), exp.points[k % exp.points.len()])
        })
        .collect();
    let mut rep = IdentityReport::new(DERIVATIVE_CONSISTENCY, "cone measure rate vs central difference of the cone measure", "quadrature")
        .tolerance("relative", tol.derivative_rel)
        .tolerance("delta", q.fd_delta)
        .tolerance("quadrature_tol", q.derivative_tol);
    if model != &exp.model {
        rep.notes.push(format!("{} nucleation: cones of its history-free base process", exp.model.kind_name()));
    }
    let rows: Vec<ReportRow> = pairs
        .par_iter()
        .map(|(t, x)| {
            let cone = CausalCone::with_options(&exp.growth, *x, *t, opts)?;
            let rate = cone_measure_rate(&cone, model)?;
            let fd = central_difference(&cone, model, q.fd_delta)?;
            Ok(ReportRow::new("rate", Some(*t), coords(exp, x), rate, None, Some(fd), Rule::Relative { max: tol.derivative_rel }))
        })
        .collect::<Result<_>>()?;
    rep.rows = rows;
    rep.finish();
    done(rep)
}

fn vex_identity(ctx: &Context) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let z = exp.config.tolerances.z;
    let main = ctx.main_pass()?;
    let cones = evaluate_cones(&exp.growth, &exp.model, &exp.pairs(), exp.quadrature())?;
    let mut rep = IdentityReport::new(VEX_IDENTITY, "V_ex estimate vs cone measure", "quadrature").tolerance("z", z);
    rep.stochastic = true;
    let np = exp.points.len();
    for (k, row) in cones.iter().enumerate() {
        let (ti, x) = (k / np, exp.points[k % np]);
        let (est, se) = main.vex[ti].at(&x).expect("point on grid");
        rep.rows.push(ReportRow::new("V_ex", Some(row.t), row.x.clone(), est, Some(se), Some(row.cone_measure), Rule::Z { max: z }));
    }
    if matches!(exp.model.kind(), ModelKind::SingleNucleus { .. }) {
        for (ti, (vv, vex)) in main.vv.iter().zip(&main.vex).enumerate() {
            let diff = vv
                .estimate
                .values()
                .iter()
                .zip(vex.estimate.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let t = exp.config.evaluation.times[ti];
            rep.rows.push(ReportRow::new("max |V_ex - V_V| over nodes", Some(t), vec![], diff, None, Some(0.0), Rule::Exact));
        }
    }
    rep.n_realizations = main.vv.first().map_or(0, |e| e.n_realizations);
    rep.finish();
    done(rep)
}

/// `V̂_V` vs `1 - exp(-Λ)`; as a control the semi-analytic coverage is added
/// as informational rows.
fn coverage(ctx: &Context, control: bool) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let z = exp.config.tolerances.z;
    let main = ctx.main_pass()?;
    let cones = evaluate_cones(&exp.growth, &exp.model, &exp.pairs(), exp.quadrature())?;
    let name = if control { POISSON_COVERAGE_CONTROL } else { POISSON_COVERAGE };
    let mut rep = IdentityReport::new(name, "V_V estimate vs 1 - exp(-cone measure)", "quadrature (cone measure), closed form in it")
        .tolerance("z", z);
    rep.stochastic = true;
    let np = exp.points.len();
    let truth: Vec<Option<f64>> = if control {
        exp.pairs()
            .par_iter()
            .map(|(t, x)| {
                let cone = CausalCone::with_options(&exp.growth, *x, *t, exp.quadrature())?;
                Ok(Some(coverage_probability(&cone, &exp.model)?))
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; cones.len()]
    };
    for (k, row) in cones.iter().enumerate() {
        let (ti, x) = (k / np, exp.points[k % np]);
        let (est, se) = main.vv[ti].at(&x).expect("point on grid");
        let oracle = 1.0 - (-row.cone_measure).exp();
        rep.rows.push(ReportRow::new("V_V vs 1-exp(-Lambda)", Some(row.t), row.x.clone(), est, Some(se), Some(oracle), Rule::Z { max: z }));
        if let Some(p) = truth[k] {
            rep.rows.push(ReportRow::new("V_V vs quadrature coverage", Some(row.t), row.x.clone(), est, Some(se), Some(p), Rule::Info));
        }
    }
    if control {
        rep.notes.push(format!(
            "negative control: {} nucleation is not Poisson, so 1 - exp(-Lambda) is not its coverage; a failing verdict is the expected outcome. Informational rows compare against the quadrature coverage P(N(C) > 0).",
            exp.model.kind_name()
        ));
    }
    rep.n_realizations = main.vv.first().map_or(0, |e| e.n_realizations);
    rep.finish();
    done(rep)
}

fn coverage_probability_check(ctx: &Context) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let z = exp.config.tolerances.z;
    let main = ctx.main_pass()?;
    let pairs = exp.pairs();
    let oracle: Vec<f64> = pairs
        .par_iter()
        .map(|(t, x)| coverage_probability(&CausalCone::with_options(&exp.growth, *x, *t, exp.quadrature())?, &exp.model))
        .collect::<Result<_>>()?;
    let mut rep = IdentityReport::new(COVERAGE_PROBABILITY, "V_V estimate vs quadrature P(N(C) > 0)", "quadrature").tolerance("z", z);
    rep.stochastic = true;
    let np = exp.points.len();
    for (k, (t, x)) in pairs.iter().enumerate() {
        let (est, se) = main.vv[k / np].at(x).expect("point on grid");
        rep.rows.push(ReportRow::new("V_V", Some(*t), coords(exp, x), est, Some(se), Some(oracle[k]), Rule::Z { max: z }));
    }
    rep.n_realizations = main.vv.first().map_or(0, |e| e.n_realizations);
    rep.finish();
    done(rep)
}

fn refuse_fd(exp: &Experiment, pass: &SurfacePass) -> Option<String> {
    let dt = exp.config.evaluation.fd_step;
    if dt > 0.2 * exp.config.horizon {
        return Some(format!("time step {dt} exceeds 0.2 * horizon; central differences too coarse"));
    }
    if pass.fd.is_empty() {
        return Some(format!("no evaluation time t > 0 with [t - {dt}, t + {dt}] inside [0, horizon]"));
    }
    None
}

/// Paired weak-form samples `(FD_i, G S_i)` for one branch.
fn weak_form(exp: &Experiment, pass: &SurfacePass, slot: &FdSlot, extended: bool) -> (Vec<f64>, Vec<f64>) {
    let dt = exp.config.evaluation.fd_step;
    let (minus, plus, surf) =
        if extended { (slot.vex_minus, slot.vex_plus, slot.sex) } else { (slot.vv_minus, slot.vv_plus, slot.sv) };
    let span = pass.requests[plus].t - pass.requests[minus].t;
    debug_assert!((span - 2.0 * dt).abs() < 1e-9);
    let fd: Vec<f64> =
        pass.samples(plus, false).iter().zip(pass.samples(minus, false)).map(|(p, m)| (p - m) / span).collect();
    let gs: Vec<f64> = if pass.weighted {
        pass.samples(surf, true).to_vec()
    } else {
        let g = exp.growth.speed_at(slot.t, &exp.test_box.center());
        pass.samples(surf, false).iter().map(|s| g * s).collect()
    };
    (fd, gs)
}

fn evolution_equations(ctx: &Context) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let tol = exp.config.tolerances;
    let pass = ctx.surface_pass()?;
    let desc = "weak-form d/dt V_V = G S_V and d/dt V_ex = G S_ex over the test box";
    if let Some(reason) = refuse_fd(exp, &pass) {
        return done(IdentityReport::skipped(EVOLUTION_EQUATIONS, desc, reason));
    }
    let mut rep = IdentityReport::new(EVOLUTION_EQUATIONS, desc, "monte carlo (same ensemble); quadrature for the reference and oracle-branch rows")
        .tolerance("z", tol.z)
        .tolerance("evolution_allowance", tol.evolution_allowance)
        .tolerance("oracle_rel", tol.oracle_rel)
        .tolerance("fd_step", exp.config.evaluation.fd_step)
        .tolerance("minkowski_radius", exp.minkowski_radius);
    rep.stochastic = true;
    rep.notes.push(format!(
        "box A = {:?}..{:?}, surface spacing {}, Minkowski radius {}",
        &exp.test_box.lo[..exp.dim],
        &exp.test_box.hi[..exp.dim],
        exp.surface_grid.spacing(),
        exp.minkowski_radius
    ));
    let analytic = !exp.model.is_history_dependent();
    let times: Vec<f64> = pass.fd.iter().map(|s| s.t).collect();
    // Reference ∫_A ∂_t V_V and ∫_A ∂_t V_ex where closed forms in the cone exist.
    let reference: Option<(Vec<f64>, Vec<f64>)> = if analytic {
        let rate = box_oracle(exp, &exp.model, &times, |c, m| cone_measure_rate(c, m))?;
        let vv = match exp.model.kind() {
            ModelKind::Poisson { .. } => Some(box_oracle(exp, &exp.model, &times, |c, m| {
                Ok(cone_measure_rate(c, m)? * (-cone_measure(c, m)?).exp())
            })?),
            ModelKind::SingleNucleus { .. } => Some(rate.clone()),
            _ => None,
        };
        vv.map(|v| (v, rate))
    } else {
        None
    };
    let single = matches!(exp.model.kind(), ModelKind::SingleNucleus { .. });
    for (k, slot) in pass.fd.iter().enumerate() {
        let mut pair = Vec::new();
        for (extended, label) in [(false, "V_V"), (true, "V_ex")] {
            let (fd, gs) = weak_form(exp, &pass, slot, extended);
            let d: Vec<f64> = fd.iter().zip(&gs).map(|(a, b)| a - b).collect();
            let (fd_mean, _) = mean_se(&fd);
            let (gs_mean, gs_se) = mean_se(&gs);
            let (_, d_se) = mean_se(&d);
            let rule = Rule::ZAllowance { z: tol.z, allowance: tol.evolution_allowance };
            let surf = if extended { "S_ex" } else { "S_V" };
            let row = ReportRow::new(format!("d/dt {label} vs G {surf} (box)"), Some(slot.t), vec![], fd_mean, Some(d_se), Some(gs_mean), rule);
            pair.push(row.clone());
            rep.rows.push(row);
            if let Some((vv, rate)) = &reference {
                let r = if extended { rate[k] } else { vv[k] };
                rep.rows.push(ReportRow::new(format!("G {surf} (box) vs analytic d/dt {label}"), Some(slot.t), vec![], gs_mean, Some(gs_se), Some(r), Rule::Info));
            }
        }
        if single {
            let diff = (pair[0].estimate - pair[1].estimate).abs() + (pair[0].oracle.unwrap() - pair[1].oracle.unwrap()).abs();
            rep.rows.push(ReportRow::new("V_V and V_ex branches identical", Some(slot.t), vec![], diff, None, Some(0.0), Rule::Exact));
        }
    }
    if analytic {
        let cones = evaluate_cones(&exp.growth, &exp.model, &exp.pairs(), exp.quadrature())?;
        for row in cones.iter().filter(|r| r.t > 0.0) {
            let x = Point::from_slice(&row.x)?;
            let cone = CausalCone::with_options(&exp.growth, x, row.t, exp.quadrature())?;
            let g = exp.growth.speed_at(row.t, &x);
            let rhs = g * extended_surface_density(&cone, &exp.model)?;
            rep.rows.push(ReportRow::new("oracle: rate vs G S_ex", Some(row.t), row.x.clone(), row.rate, None, Some(rhs), Rule::Relative { max: tol.oracle_rel }));
        }
    }
    rep.n_realizations = pass.result.estimates.first().map_or(0, |e| e.n_realizations);
    rep.finish();
    done(rep)
}

fn poisson_vv_vex(ctx: &Context, control: bool) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let tol = exp.config.tolerances;
    let name = if control { POISSON_VV_VEX_CONTROL } else { POISSON_VV_VEX };
    let desc = "d/dt V_V = (1 - V_V) d/dt V_ex";
    let mut rep = IdentityReport::new(name, desc, if control { "quadrature coverage; monte carlo" } else { "closed form in the quadrature cone measure; monte carlo" })
        .tolerance("z", tol.z)
        .tolerance("identity_rel", tol.identity_rel);
    rep.stochastic = true;

    // Deterministic form.
    let pairs = exp.pairs();
    let cones = evaluate_cones(&exp.growth, &exp.model, &pairs, exp.quadrature())?;
    if control {
        let q = &exp.config.quadrature;
        let opts = QuadratureOptions { tol: q.derivative_tol, ..exp.quadrature() };
        rep = rep.tolerance("control_rel", tol.control_rel);
        let rows: Vec<ReportRow> = pairs
            .par_iter()
            .filter(|(t, _)| *t >= q.fd_delta)
            .map(|(t, x)| {
                let cone = CausalCone::with_options(&exp.growth, *x, *t, opts)?;
                let v = coverage_probability(&cone, &exp.model)?;
                let plus = coverage_probability(&cone.at_time(t + q.fd_delta)?, &exp.model)?;
                let minus = coverage_probability(&cone.at_time(t - q.fd_delta)?, &exp.model)?;
                let lhs = (plus - minus) / (2.0 * q.fd_delta);
                let rhs = (1.0 - v) * cone_measure_rate(&cone, &exp.model)?;
                Ok(ReportRow::new("quadrature: d/dt V_V vs (1-V_V) d/dt V_ex", Some(*t), coords(exp, x), lhs, None, Some(rhs), Rule::Relative { max: tol.control_rel }))
            })
            .collect::<Result<_>>()?;
        rep.rows.extend(rows);
        rep.notes.push(format!(
            "negative control: {} nucleation is not Poisson; a failing verdict is the expected outcome",
            exp.model.kind_name()
        ));
    } else {
        for row in &cones {
            let lhs = row.rate * (-row.cone_measure).exp();
            let vv = 1.0 - (-row.cone_measure).exp();
            let rhs = (1.0 - vv) * row.rate;
            rep.rows.push(ReportRow::new("oracle: d/dt V_V vs (1-V_V) d/dt V_ex", Some(row.t), row.x.clone(), lhs, None, Some(rhs), Rule::Relative { max: tol.identity_rel }));
        }
    }

    // Monte Carlo form on the test box, delta-method standard errors.
    let pass = ctx.surface_pass()?;
    if let Some(reason) = refuse_fd(exp, &pass) {
        rep.notes.push(format!("monte carlo form skipped: {reason}"));
    } else {
        let vol = exp.test_box.volume();
        for slot in &pass.fd {
            let (a, _) = weak_form(exp, &pass, slot, false);
            let (b, _) = weak_form(exp, &pass, slot, true);
            let a: Vec<f64> = a.iter().map(|v| v / vol).collect();
            let b: Vec<f64> = b.iter().map(|v| v / vol).collect();
            let c: Vec<f64> = pass.samples(slot.vv, false).iter().map(|v| v / vol).collect();
            let n = a.len() as f64;
            let (ma, mb, mc) = (mean_se(&a).0, mean_se(&b).0, mean_se(&c).0);
            let grad = [1.0, -(1.0 - mc), mb];
            let cols = [&a, &b, &c];
            let mut var = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    var += grad[i] * grad[j] * covariance(cols[i], cols[j]);
                }
            }
            let se = (var.max(0.0) / n).sqrt();
            rep.rows.push(ReportRow::new("mc: d/dt V_V vs (1-V_V) d/dt V_ex (box mean)", Some(slot.t), vec![], ma, Some(se), Some((1.0 - mc) * mb), Rule::Z { max: tol.z }));
        }
        rep.n_realizations = pass.result.estimates.first().map_or(0, |e| e.n_realizations);
    }
    rep.finish();
    done(rep)
}

fn extended_surface(ctx: &Context) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let tol = exp.config.tolerances;
    let pass = ctx.surface_pass()?;
    let mut rep = IdentityReport::new(EXTENDED_SURFACE_DENSITY, "box integral of S_ex vs cone rate / G", "quadrature (3-point Gauss-Legendre per axis over the box)")
        .tolerance("z", tol.z)
        .tolerance("surface_allowance", tol.surface_allowance)
        .tolerance("minkowski_radius", exp.minkowski_radius)
        .tolerance("surface_spacing", exp.surface_grid.spacing());
    rep.stochastic = true;
    let times: Vec<f64> = pass.sex.iter().map(|(t, _)| *t).collect();
    let oracle = box_oracle(exp, &exp.model, &times, |c, m| extended_surface_density(c, m))?;
    for (k, (t, idx)) in pass.sex.iter().enumerate() {
        let (m, se) = mean_se(pass.samples(*idx, false));
        let rule = Rule::ZAllowance { z: tol.z, allowance: tol.surface_allowance };
        rep.rows.push(ReportRow::new("integral of S_ex over A", Some(*t), vec![], m, Some(se), Some(oracle[k]), rule));
    }
    if let Some(ts) = pass.sweep_time {
        let sex_o = box_oracle(exp, &exp.model, &[ts], |c, m| extended_surface_density(c, m))?[0];
        let sv_o = match exp.model.kind() {
            ModelKind::Poisson { .. } => Some(
                box_oracle(exp, &exp.model, &[ts], |c, m| Ok(extended_surface_density(c, m)? * (-cone_measure(c, m)?).exp()))?[0],
            ),
            ModelKind::SingleNucleus { .. } => Some(sex_o),
            _ => None,
        };
        let h = exp.surface_grid.spacing();
        for &(r, sv, sex) in &pass.sweep {
            let k = r / h;
            let (m, se) = mean_se(pass.samples(sex, false));
            rep.rows.push(ReportRow::new(format!("sweep r = {k}h: S_ex over A"), Some(ts), vec![], m, Some(se), Some(sex_o), Rule::Info));
            let (m, se) = mean_se(pass.samples(sv, false));
            rep.rows.push(ReportRow::new(format!("sweep r = {k}h: S_V over A"), Some(ts), vec![], m, Some(se), sv_o, Rule::Info));
        }
    }
    rep.n_realizations = pass.result.estimates.first().map_or(0, |e| e.n_realizations);
    rep.finish();
    done(rep)
}

fn default_time_bins(horizon: f64) -> Vec<[f64; 2]> {
    let mut bins = Vec::new();
    let mut hi = horizon;
    while hi > 1e-12 {
        let lo = (hi - 0.2).max(0.0);
        bins.push([if lo < 1e-12 { 0.0 } else { lo }, hi]);
        hi = lo;
    }
    bins.reverse();
    bins
}

/// The padded window cut at the observation window: `3^d` boxes (fewer
/// without padding), the observation window among them.
fn default_space_bins(exp: &Experiment) -> Vec<Window> {
    let (outer, inner) = (exp.nucleation_window, exp.window);
    let cuts: Vec<Vec<(f64, f64)>> = (0..exp.dim)
        .map(|a| {
            let pts = [outer.lo[a], inner.lo[a], inner.hi[a], outer.hi[a]];
            pts.windows(2).filter(|w| w[1] > w[0] + 1e-12).map(|w| (w[0], w[1])).collect()
        })
        .collect();
    let mut boxes = vec![(Vec::new(), Vec::new())];
    for ax in &cuts {
        boxes = boxes
            .into_iter()
            .flat_map(|(lo, hi): (Vec<f64>, Vec<f64>)| {
                ax.iter().map(move |&(a, b)| {
                    let (mut l, mut h) = (lo.clone(), hi.clone());
                    l.push(a);
                    h.push(b);
                    (l, h)
                })
            })
            .collect();
    }
    boxes.into_iter().map(|(lo, hi)| Window::new(&lo, &hi).expect("nonempty box")).collect()
}

/// Half-open box membership, closed on the outer faces of `outer`.
fn in_bin(b: &Window, outer: &Window, p: &Point) -> bool {
    (0..b.dim).all(|a| {
        let x = p.0[a];
        x >= b.lo[a] && (x < b.hi[a] || (x == b.hi[a] && b.hi[a] >= outer.hi[a]))
    })
}

fn thinned_intensity(ctx: &Context) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let tol = exp.config.tolerances;
    let ModelKind::Thinned { base } = exp.model.kind() else {
        unreachable!("guarded by skip_reason")
    };
    let desc = "binned thinned nucleation counts vs base intensity times (1 - V_V(t-))";
    let ens = ctx.ensemble()?;
    let usable = ens.usable();
    let n = usable.len();
    if n < 2 {
        return Err(Error::EmptyEnsemble);
    }
    let outer = exp.nucleation_window;
    let time_bins = exp.config.thinned.time_bins.clone().unwrap_or_else(|| default_time_bins(exp.config.horizon));
    let space_bins: Vec<Window> = match &exp.config.thinned.space_bins {
        Some(b) => b.iter().enumerate().map(|(i, s)| s.window(&format!("thinned.space_bins[{i}]"))).collect::<Result<_>>()?,
        None => default_space_bins(exp),
    };
    let central = space_bins.iter().position(|b| *b == exp.window);

    // Base-point counts per (time bin, space bin): (accepted, all).
    let counts = |r: &Realization| -> Vec<Vec<(f64, f64)>> {
        let mut c = vec![vec![(0.0, 0.0); space_bins.len()]; time_bins.len()];
        let mut tally = |p: &MarkedPoint, accepted: bool| {
            for (ti, tb) in time_bins.iter().enumerate() {
                if p.birth_time >= tb[0] && p.birth_time < tb[1] {
                    for (si, sb) in space_bins.iter().enumerate() {
                        if in_bin(sb, &outer, &p.location) {
                            c[ti][si].0 += accepted as u8 as f64;
                            c[ti][si].1 += 1.0;
                        }
                    }
                }
            }
        };
        r.accepted.iter().for_each(|p| tally(p, true));
        r.rejected.iter().for_each(|p| tally(p, false));
        c
    };

    if !base.is_poisson() {
        if !matches!(base.kind(), ModelKind::SingleNucleus { .. }) {
            return done(IdentityReport::skipped(THINNED_INTENSITY, desc, format!("no intensity identity for a {} base", base.kind_name())));
        }
        // Nothing is covered before the only birth: every point is accepted.
        let mut rep = IdentityReport::new(THINNED_INTENSITY, desc, "exact (single nucleus base)");
        rep.stochastic = true;
        let all: Vec<Vec<Vec<(f64, f64)>>> = usable.par_iter().map(|r| counts(r)).collect();
        for (ti, tb) in time_bins.iter().enumerate() {
            let (a, b) = all.iter().fold((0.0, 0.0), |acc, c| {
                let s = c[ti].iter().fold((0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
                (acc.0 + s.0, acc.1 + s.1)
            });
            let ratio = if b > 0.0 { a / b } else { 1.0 };
            rep.rows.push(ReportRow::new(format!("acceptance ratio t in [{}, {})", tb[0], tb[1]), Some(0.5 * (tb[0] + tb[1])), vec![], ratio, None, Some(1.0), Rule::Exact));
        }
        rep.n_realizations = n;
        rep.finish();
        return done(rep);
    }

    let spacing = exp.config.thinned.spacing.unwrap_or(2.0 * exp.grid.spacing());
    let lattice = Grid::new(outer, spacing)?;
    let marks = base.marks();
    let support = *marks.support();
    // Node masses of q per space bin: density at the clamped node times the
    // cell volume inside bin and support.
    let node_mass: Vec<Vec<(usize, f64)>> = (0..lattice.len())
        .map(|i| {
            let x = lattice.point(i);
            let mut p = x;
            for a in 0..exp.dim {
                p.0[a] = x.0[a].clamp(support.lo[a], support.hi[a]);
            }
            let dens = marks.density(0.0, &p);
            space_bins
                .iter()
                .enumerate()
                .filter_map(|(si, sb)| {
                    let mut v = dens;
                    for a in 0..exp.dim {
                        let lo = (x.0[a] - 0.5 * spacing).max(sb.lo[a]).max(support.lo[a]);
                        let hi = (x.0[a] + 0.5 * spacing).min(sb.hi[a]).min(support.hi[a]);
                        if hi <= lo {
                            return None;
                        }
                        v *= hi - lo;
                    }
                    (v > 0.0).then_some((si, v))
                })
                .collect()
        })
        .collect();
    let cum = |t: f64| base.marginal_cumulative_intensity(t);

    struct PerReal {
        observed: Vec<Vec<f64>>,
        expected: Vec<Vec<f64>>,
        counts: Vec<Vec<(f64, f64)>>,
    }
    let per: Vec<PerReal> = usable
        .par_iter()
        .map(|r| {
            let cap = r.capture_field(&lattice)?;
            let mut expected = vec![vec![0.0; space_bins.len()]; time_bins.len()];
            for (i, masses) in node_mass.iter().enumerate() {
                if masses.is_empty() {
                    continue;
                }
                let c = cap.get(i);
                for (ti, tb) in time_bins.iter().enumerate() {
                    // Uncovered at t- iff the capture time is >= t.
                    let end = c.clamp(tb[0], tb[1]);
                    if end <= tb[0] {
                        continue;
                    }
                    let u = cum(end)? - cum(tb[0])?;
                    for &(si, m) in masses {
                        expected[ti][si] += m * u;
                    }
                }
            }
            let counts = counts(r);
            let observed = counts.iter().map(|row| row.iter().map(|c| c.0).collect()).collect();
            Ok(PerReal { observed, expected, counts })
        })
        .collect::<Result<_>>()?;

    // Merge consecutive time bins inside each space bin until the expected
    // total reaches the minimum.
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut merged = 0;
    for si in 0..space_bins.len() {
        let mut cur: Vec<usize> = Vec::new();
        let mut total = 0.0;
        let start = groups.len();
        for ti in 0..time_bins.len() {
            cur.push(ti);
            total += per.iter().map(|p| p.expected[ti][si]).sum::<f64>();
            if total >= tol.min_bin_expected {
                groups.push((si, std::mem::take(&mut cur)));
                total = 0.0;
            }
        }
        if !cur.is_empty() {
            if groups.len() > start {
                groups.last_mut().unwrap().1.extend(cur);
            } else {
                groups.push((si, cur));
            }
        }
        merged += time_bins.len() - (groups.len() - start);
    }
    let m = groups.len();
    let level = 1.0 - (1.0 - tol.family_level).powf(1.0 / m as f64);
    let z_crit = Normal::standard().inverse_cdf(1.0 - 0.5 * level);

    let mut rep = IdentityReport::new(THINNED_INTENSITY, desc, "monte carlo (V_V from the same ensemble)")
        .tolerance("family_level", tol.family_level)
        .tolerance("z_adjusted", z_crit)
        .tolerance("min_bin_expected", tol.min_bin_expected)
        .tolerance("lattice_spacing", spacing);
    rep.stochastic = true;
    if merged > 0 {
        rep.notes.push(format!("{merged} time bins merged into neighbours (expected count < {})", tol.min_bin_expected));
    }
    rep.notes.push(format!("{m} bins, Sidak-adjusted |z| gate {z_crit:.4} at family level {}", tol.family_level));
    for (si, tis) in &groups {
        let obs: Vec<f64> = per.iter().map(|p| tis.iter().map(|&ti| p.observed[ti][*si]).sum()).collect();
        let exq: Vec<f64> = per.iter().map(|p| tis.iter().map(|&ti| p.expected[ti][*si]).sum()).collect();
        let d: Vec<f64> = obs.iter().zip(&exq).map(|(a, b)| a - b).collect();
        let (t0, t1) = (time_bins[tis[0]][0], time_bins[*tis.last().unwrap()][1]);
        let sb = &space_bins[*si];
        rep.rows.push(ReportRow::new(
            format!("count t in [{t0}, {t1}) box {si}"),
            Some(0.5 * (t0 + t1)),
            coords(exp, &sb.center()),
            mean_se(&obs).0,
            Some(mean_se(&d).1),
            Some(mean_se(&exq).0),
            Rule::Z { max: z_crit },
        ));
    }

    // Acceptance ratio in the observation window against the quadrature
    // coverage of the base process; the window sits a padding away from the
    // nucleation boundary, so coverage there is the unbounded-space value.
    if let Some(ci) = central {
        let homogeneous = matches!(*exp.growth, GrowthField::TimeOnly(_)) && marks.support().contains_window(&outer);
        let x = exp.window.center();
        let gl = GaussLegendre::new(8);
        let cone = CausalCone::with_options(&exp.growth, x, 0.0, exp.quadrature())?;
        for (ti, tb) in time_bins.iter().enumerate() {
            let a: Vec<f64> = per.iter().map(|p| p.counts[ti][ci].0).collect();
            let b: Vec<f64> = per.iter().map(|p| p.counts[ti][ci].1).collect();
            let (ma, mb) = (mean_se(&a).0, mean_se(&b).0);
            if mb == 0.0 {
                continue;
            }
            let ratio = ma / mb;
            let resid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - ratio * v).collect();
            let se = (covariance(&resid, &resid).max(0.0) / n as f64).sqrt() / mb;
            let label = format!("acceptance ratio t in [{}, {}) window", tb[0], tb[1]);
            let mid = Some(0.5 * (tb[0] + tb[1]));
            if homogeneous {
                let mut num = 0.0;
                let mut den = 0.0;
                for (t, w) in gl.mapped(tb[0], tb[1]) {
                    let lam = base.temporal_density(t)?;
                    num += w * lam * (1.0 - coverage_probability(&cone.at_time(t)?, base)?);
                    den += w * lam;
                }
                rep.rows.push(ReportRow::new(label, mid, coords(exp, &x), ratio, Some(se), Some(num / den), Rule::Z { max: z_crit }));
            } else {
                rep.rows.push(ReportRow::new(label, mid, coords(exp, &x), ratio, Some(se), None, Rule::Info));
            }
        }
    }
    rep.n_realizations = n;
    rep.finish();
    done(rep)
}

/// Oracle CDF of the capture time at `x`, where one exists.
fn capture_cdf_model(exp: &Experiment) -> Option<&NucleationModel> {
    match exp.model.kind() {
        // Thinning removes only nuclei inside the union, whose grains stay
        // inside it, so the union (and T(x)) equals the base process's.
        ModelKind::Thinned { base } => Some(base),
        ModelKind::FreeSpace { .. } => None,
        _ => Some(&exp.model),
    }
}

fn capture_time_law(ctx: &Context) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let ens = ctx.ensemble()?;
    let x = exp.capture_point;
    let sample = sample_capture_time(&ens, &x)?;
    let n = sample.n_realizations;
    let mut rep = IdentityReport::new(CAPTURE_TIME_LAW, "capture-time KS distance and atom test", "quadrature CDF P(N(C(t, x)) > 0)");
    rep.stochastic = true;
    rep.n_realizations = n;
    let header = vec![format!("fingerprint: {}", exp.fingerprint), format!("x: {:?}", coords(exp, &x))];
    let mut artifacts = Vec::new();

    let model = capture_cdf_model(exp);
    let cone = CausalCone::with_options(&exp.growth, x, 0.0, exp.quadrature())?;
    let cdf_at = |t: f64| -> Result<f64> { coverage_probability(&cone.at_time(t.max(0.0))?, model.expect("checked")) };
    if let Some(_m) = model {
        let at_samples: Vec<f64> = sample.times.par_iter().map(|&t| cdf_at(t)).collect::<Result<_>>()?;
        let at_horizon = cdf_at(sample.horizon)?;
        // KS statistic against the tabulated values (sample order is sorted).
        let nf = n as f64;
        let mut d = 0.0f64;
        for (i, f) in at_samples.iter().enumerate() {
            d = d.max(((i + 1) as f64 / nf - f).abs()).max((i as f64 / nf - f).abs());
        }
        d = d.max((sample.times.len() as f64 / nf - at_horizon).abs());
        let crit = ks_critical_1pct(n);
        rep = rep.tolerance("ks_critical_1pct", crit);
        rep.rows.push(ReportRow::new("KS distance to the oracle CDF", None, coords(exp, &x), d, None, None, Rule::AtMost { max: crit }));
        let grid: Vec<f64> = (0..=200).map(|k| sample.horizon * k as f64 / 200.0).collect();
        let curve: Vec<f64> = grid.par_iter().map(|&t| cdf_at(t)).collect::<Result<_>>()?;
        let mut buf = Vec::new();
        {
            use std::io::Write;
            for line in &header {
                writeln!(buf, "# {line}")?;
            }
            writeln!(buf, "t,oracle_cdf,ecdf")?;
            for (t, f) in grid.iter().zip(&curve) {
                writeln!(buf, "{t},{f},{}", sample.ecdf(*t))?;
            }
        }
        artifacts.push(("capture_cdf.csv".to_string(), buf));
    } else {
        rep.provenance = "none (no analytic capture law for this model)".into();
        rep.notes.push("no oracle CDF for this model; only the atom test is gated".into());
    }

    let atoms = atom_test(&sample);
    rep = rep.tolerance("atom_threshold", atoms.threshold);
    let rule = if atoms.inconclusive { Rule::Info } else { Rule::AtMost { max: atoms.threshold } };
    if atoms.inconclusive {
        rep.notes.push(format!("atom test inconclusive: {} finite samples", atoms.n_finite));
    }
    rep.rows.push(ReportRow::new("max tie fraction", None, coords(exp, &x), atoms.max_repeat_fraction, None, None, rule));
    rep.rows.push(ReportRow::new("largest ECDF jump", None, coords(exp, &x), atoms.largest_cdf_jump, None, None, Rule::Info));
    rep.rows.push(ReportRow::new("censored fraction", None, coords(exp, &x), sample.censored as f64 / n as f64, None, None, Rule::Info));

    let mut buf = Vec::new();
    write_capture_csv(&sample, &header, &mut buf)?;
    artifacts.push(("capture_times.csv".to_string(), buf));
    artifacts.push(("capture_times.json".to_string(), serde_json::to_vec_pretty(&capture_sidecar(&sample, &exp.fingerprint))?));
    if let Some(hist) = capture_histogram(&sample) {
        let mut buf = Vec::new();
        {
            use std::io::Write;
            for line in &header {
                writeln!(buf, "# {line}")?;
            }
            writeln!(buf, "lo,hi,density")?;
            for (k, d) in hist.density.iter().enumerate() {
                writeln!(buf, "{},{},{d}", hist.edges[k], hist.edges[k + 1])?;
            }
        }
        artifacts.push(("capture_histogram.csv".to_string(), buf));
    }
    rep.finish();
    Ok(CheckOutput { report: rep, artifacts })
}

/// Capture times with an atom: half the realizations cover `x` at exactly
/// the same time.
pub fn constructed_atom_ensemble(exp: &Experiment, n: usize) -> Ensemble {
    let x = exp.capture_point;
    let horizon = exp.config.horizon;
    let reals = (0..n)
        .map(|i| {
            let birth = if i % 2 == 0 { 0.5 * horizon } else { horizon * (0.05 + 0.9 * i as f64 / n as f64) };
            let mut r = Realization::from_points(exp.growth.clone(), horizon, vec![MarkedPoint::new(birth, x, 0)]);
            r.index = i as u64;
            r
        })
        .collect();
    Ensemble::from_realizations(&exp.model, exp.growth.clone(), horizon, exp.grid.clone(), reals)
        .with_fingerprint(exp.fingerprint.clone())
}

fn atom_control(ctx: &Context) -> Result<CheckOutput> {
    let exp = ctx.exp;
    let n = exp.config.realizations.max(200);
    let ens = constructed_atom_ensemble(exp, n);
    let sample = sample_capture_time(&ens, &exp.capture_point)?;
    let atoms = atom_test(&sample);
    let mut rep = IdentityReport::new(ATOM_CONTROL, "atom test on capture times with a constructed atom", "constructed (half the realizations share one capture time)")
        .tolerance("atom_threshold", atoms.threshold);
    rep.stochastic = true;
    rep.n_realizations = n;
    rep.rows.push(ReportRow::new("max tie fraction", None, coords(exp, &exp.capture_point), atoms.max_repeat_fraction, None, None, Rule::AtMost { max: atoms.threshold }));
    rep.notes.push("negative control: a failing verdict is the expected outcome".into());
    rep.finish();
    Ok(CheckOutput { report: rep, artifacts: Vec::new() })
}

/// `Quantity` label for density CSV names.
pub fn density_file_name(q: Quantity, t: f64) -> String {
    let tag = match q {
        Quantity::VolumeDensity => "VV",
        Quantity::ExtendedVolumeDensity => "Vex",
        Quantity::SurfaceDensity => "SV",
        Quantity::ExtendedSurfaceDensity => "Sex",
    };
    format!("{tag}_t{t}.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_rule_integrates_polynomials() {
        let a = Window::new(&[0.0, 1.0], &[2.0, 2.0]).unwrap();
        let rule = box_rule(&a, 3);
        let vol: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((vol - 2.0).abs() < 1e-14);
        let xy2: f64 = rule.iter().map(|(p, w)| w * p.0[0] * p.0[1].powi(2)).sum();
        // ∫_0^2 x dx ∫_1^2 y^2 dy = 2 * 7/3
        assert!((xy2 - 14.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn default_bins_cover_the_horizon() {
        let b = default_time_bins(1.5);
        assert_eq!(b.first().unwrap()[0], 0.0);
        assert_eq!(b.last().unwrap()[1], 1.5);
        assert!((b.last().unwrap()[0] - 1.3).abs() < 1e-12);
        assert!(b.windows(2).all(|w| w[0][1] == w[1][0]));
    }

    #[test]
    fn mean_and_covariance() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!((covariance(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-15);
    }
}

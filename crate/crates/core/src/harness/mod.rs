//! Validation harness: config files in, per-check reports, density tables,
//! oracle curves and plots out.

pub mod checks;
pub mod config;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal_cone::{coverage_probability, evaluate_cones, write_cone_csv, CausalCone};
use crate::error::{Error, Result};
use crate::estimators::write_density_csv;
use crate::simulate::write_points_csv;

pub use checks::{check_info, run_check, skip_reason, CheckInfo, CheckOutput, Context, CHECKS};
pub use config::{Experiment, ExperimentConfig};
pub use report::{IdentityReport, ReportRow, Rule, Status};

/// What to run and where to write it.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Subset of checks by name; all non-control checks when `None`.
    pub checks: Option<Vec<String>>,
    pub negative_controls: bool,
    /// Worker threads; the rayon default when `None`.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub name: String,
    pub status: String,
    pub negative_control: bool,
    pub gated_rows: usize,
    pub failed_rows: usize,
    pub runtime_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub fingerprint: String,
    pub seed: u64,
    pub realizations: usize,
    pub checks: Vec<SummaryEntry>,
    /// No non-control check failed or errored.
    pub pass: bool,
    pub runtime_seconds: f64,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("experiment {} (fingerprint {})\nseed {}, {} realizations\n", self.name, self.fingerprint, self.seed, self.realizations);
        for c in &self.checks {
            let tag = if c.negative_control { " [control]" } else { "" };
            s += &format!("{:<8} {}{} ({} / {} gated rows failed, {:.2}s)", c.status, c.name, tag, c.failed_rows, c.gated_rows, c.runtime_seconds);
            if let Some(m) = &c.message {
                s += &format!(": {m}");
            }
            s.push('\n');
        }
        s += &format!("overall: {}\n", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

/// Names of the checks selected by `opts`, in registry order.
pub fn selected_checks(opts: &RunOptions) -> Result<Vec<&'static str>> {
    if let Some(names) = &opts.checks {
        for n in names {
            if check_info(n).is_none() {
                return Err(Error::config("--check", format!("unknown check `{n}`")));
            }
        }
    }
    Ok(CHECKS
        .iter()
        .filter(|c| match &opts.checks {
            Some(names) => names.iter().any(|n| n == c.name),
            None => !c.negative_control || opts.negative_controls,
        })
        .map(|c| c.name)
        .collect())
}

/// Runs the selected checks and writes every output under `opts.out_dir`.
pub fn run_experiment(exp: &Experiment, opts: &RunOptions) -> Result<Summary> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(exp, opts))
}

fn run_inner(exp: &Experiment, opts: &RunOptions) -> Result<Summary> {
    let start = Instant::now();
    let out = &opts.out_dir;
    fs::create_dir_all(out)?;
    let names = selected_checks(opts)?;
    let ctx = Context::new(exp);
    let header = vec![format!("fingerprint: {}", exp.fingerprint)];

    let mut entries = Vec::new();
    for name in names {
        let res = run_check(&ctx, name);
        report::write_report(&res.report, out)?;
        for (file, bytes) in &res.artifacts {
            fs::write(out.join(file), bytes)?;
        }
        let r = &res.report;
        let message = match &r.status {
            Status::Skipped { reason } => Some(reason.clone()),
            Status::Error { message } => Some(message.clone()),
            _ => None,
        };
        entries.push(SummaryEntry {
            name: r.name.clone(),
            status: r.status.label().to_string(),
            negative_control: r.negative_control,
            gated_rows: r.rows.iter().filter(|x| x.gated()).count(),
            failed_rows: r.rows.iter().filter(|x| x.gated() && !x.pass).count(),
            runtime_seconds: r.runtime_seconds,
            message,
        });
    }

    write_oracle_tables(exp, out, &header)?;
    if let Ok(main) = ctx.main_pass() {
        let dir = out.join("densities");
        fs::create_dir_all(&dir)?;
        for est in main.vv.iter().chain(&main.vex) {
            let mut f = fs::File::create(dir.join(checks::density_file_name(est.quantity, est.t)))?;
            write_density_csv(est, &header, &mut f)?;
        }
    }
    if exp.config.output.dump_realizations > 0 {
        dump_realizations(exp, &ctx, out, &header)?;
    }

    let pass = entries.iter().filter(|e| !e.negative_control).all(|e| e.status != "FAIL" && e.status != "ERROR");
    let summary = Summary {
        name: exp.config.name.clone(),
        fingerprint: exp.fingerprint.clone(),
        seed: exp.config.seed,
        realizations: exp.config.realizations,
        checks: entries,
        pass,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(out.join("summary.txt"), summary.to_text())?;
    let config = serde_json::json!({ "fingerprint": exp.fingerprint, "config": exp.config });
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&config)?)?;
    rerender(out)?;
    Ok(summary)
}

/// `cones.csv` at the evaluation design and `curves.csv`: cone measure and
/// coverage on a time grid at every evaluation point.
fn write_oracle_tables(exp: &Experiment, out: &Path, header: &[String]) -> Result<()> {
    if exp.model.is_history_dependent() {
        return Ok(());
    }
    let rows = evaluate_cones(&exp.growth, &exp.model, &exp.pairs(), exp.quadrature())?;
    let mut f = fs::File::create(out.join("cones.csv"))?;
    write_cone_csv(&rows, exp.dim, header, &mut f)?;

    let times: Vec<f64> = (0..=60).map(|k| exp.config.horizon * k as f64 / 60.0).collect();
    let per_point: Vec<Vec<(f64, f64)>> = exp
        .points
        .par_iter()
        .map(|x| {
            let cone = CausalCone::with_options(&exp.growth, *x, 0.0, exp.quadrature())?;
            times
                .iter()
                .map(|&t| {
                    let c = cone.at_time(t)?;
                    Ok((crate::causal_cone::cone_measure(&c, &exp.model)?, coverage_probability(&c, &exp.model)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut buf = Vec::new();
    for line in header {
        writeln!(buf, "# {line}")?;
    }
    writeln!(buf, "point,t,{},cone_measure,coverage", ["x", "y", "z"][..exp.dim].join(","))?;
    for (i, (x, vals)) in exp.points.iter().zip(&per_point).enumerate() {
        let xs: Vec<String> = x.coords(exp.dim).iter().map(|v| v.to_string()).collect();
        for (t, (l, c)) in times.iter().zip(vals) {
            writeln!(buf, "{i},{t},{},{l},{c}", xs.join(","))?;
        }
    }
    fs::write(out.join("curves.csv"), buf)?;
    Ok(())
}

/// Nuclei (CSV) and capture-time fields (raw grid plus JSON sidecar) of the
/// first realizations.
fn dump_realizations(exp: &Experiment, ctx: &Context, out: &Path, header: &[String]) -> Result<()> {
    let ens = ctx.ensemble()?;
    let dir = out.join("realizations");
    fs::create_dir_all(&dir)?;
    for r in ens.realizations().iter().take(exp.config.output.dump_realizations) {
        let stem = format!("realization_{:05}", r.index);
        let mut f = fs::File::create(dir.join(format!("{stem}_nuclei.csv")))?;
        let mut h = header.to_vec();
        h.push(format!("realization: {}", r.index));
        write_points_csv(r, exp.dim, &h, &mut f)?;
        let cap = r.capture_field(&exp.grid)?;
        cap.save_raw(&dir.join(format!("{stem}_capture.raw")))?;
        let side = serde_json::json!({
            "fingerprint": exp.fingerprint,
            "realization": r.index,
            "seed": exp.config.seed,
            "quantity": "capture_time",
            "unreached": "inf",
            "horizon": exp.config.horizon,
            "saturated": r.saturated,
        });
        fs::write(dir.join(format!("{stem}_capture.json")), serde_json::to_string_pretty(&side)?)?;
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(rd.records().collect::<std::result::Result<_, _>>()?)
}

fn field(rec: &csv::StringRecord, i: usize) -> f64 {
    rec.get(i).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN)
}

/// Rebuilds the SVG plots of `out_dir` from its stored tables alone.
pub fn rerender(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let fp = match fs::read_to_string(out_dir.join("summary.json")) {
        Ok(text) => serde_json::from_str::<Summary>(&text)?.fingerprint,
        Err(_) => String::new(),
    };
    let fp = &fp;
    let mut written = Vec::new();
    let mut save = |name: &str, svg: String| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, svg)?;
        written.push(p);
        Ok(())
    };

    // Volume fraction: oracle curves with estimate markers.
    let curves = out_dir.join("curves.csv");
    if curves.exists() {
        let recs = read_table(&curves)?;
        let ncol = recs.first().map_or(0, |r| r.len());
        let mut series: Vec<report::Series> = Vec::new();
        let npoints = recs.iter().map(|r| field(r, 0) as usize + 1).max().unwrap_or(0);
        for i in 0..npoints {
            let pts: Vec<(f64, f64)> =
                recs.iter().filter(|r| field(r, 0) as usize == i).map(|r| (field(r, 1), field(r, ncol - 1))).collect();
            series.push(report::Series { name: format!("oracle x{i}"), points: pts, errors: None, markers: false, step: false });
        }
        for check in ["poisson_coverage", "coverage_probability"] {
            let p = out_dir.join(format!("{check}.csv"));
            if p.exists() {
                let rows = report::read_rows_csv(&p)?;
                let pts: Vec<&ReportRow> = rows.iter().filter(|r| r.rule.name() != "info").collect();
                series.push(report::Series {
                    name: "estimate".into(),
                    points: pts.iter().map(|r| (r.t.unwrap_or(f64::NAN), r.estimate)).collect(),
                    errors: Some(pts.iter().map(|r| 2.0 * r.stderr.unwrap_or(0.0)).collect()),
                    markers: true,
                    step: false,
                });
            }
        }
        save("volume_fraction.svg", report::svg_plot("Volume fraction", "t", "V_V", &series, fp))?;
    }

    let cdf = out_dir.join("capture_cdf.csv");
    if cdf.exists() {
        let recs = read_table(&cdf)?;
        let series = vec![
            report::Series { name: "oracle".into(), points: recs.iter().map(|r| (field(r, 0), field(r, 1))).collect(), errors: None, markers: false, step: false },
            report::Series { name: "ECDF".into(), points: recs.iter().map(|r| (field(r, 0), field(r, 2))).collect(), errors: None, markers: false, step: true },
        ];
        save("capture_cdf.svg", report::svg_plot("Capture-time distribution", "t", "P(T <= t)", &series, fp))?;
    }

    let thinned = out_dir.join("thinned_intensity.csv");
    if thinned.exists() {
        let rows: Vec<ReportRow> =
            report::read_rows_csv(&thinned)?.into_iter().filter(|r| r.label.starts_with("acceptance ratio")).collect();
        if !rows.is_empty() {
            let series = vec![
                report::Series {
                    name: "estimate".into(),
                    points: rows.iter().map(|r| (r.t.unwrap_or(f64::NAN), r.estimate)).collect(),
                    errors: Some(rows.iter().map(|r| 2.0 * r.stderr.unwrap_or(0.0)).collect()),
                    markers: true,
                    step: false,
                },
                report::Series {
                    name: "oracle".into(),
                    points: rows.iter().map(|r| (r.t.unwrap_or(f64::NAN), r.oracle.unwrap_or(f64::NAN))).collect(),
                    errors: None,
                    markers: false,
                    step: false,
                },
            ];
            save("thinned_acceptance.svg", report::svg_plot("Thinned acceptance ratio", "t", "accepted / proposed", &series, fp))?;
        }
    }
    Ok(written)
}

/// One line per check: name, control flag, description.
pub fn list_checks() -> Vec<String> {
    CHECKS
        .iter()
        .map(|c| format!("{:<26} {}{}", c.name, if c.negative_control { "[control] " } else { "" }, c.summary))
        .collect()
}

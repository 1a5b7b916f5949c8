//! Identity reports, their CSV/JSON tables and hand-written SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};

/// How a row decides pass/fail; stored with the row so verdicts can be
/// recomputed from the table alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// `|estimate - oracle| <= max * stderr`.
    Z { max: f64 },
    /// `|estimate - oracle| <= z * stderr + allowance * |oracle|`.
    ZAllowance { z: f64, allowance: f64 },
    /// `|estimate - oracle| / |oracle| <= max`.
    Relative { max: f64 },
    /// `estimate <= max` (test statistics).
    AtMost { max: f64 },
    /// `estimate == oracle` bit for bit.
    Exact,
    /// Reported, not gated.
    Info,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Z { .. } => "z",
            Rule::ZAllowance { .. } => "z_allowance",
            Rule::Relative { .. } => "relative",
            Rule::AtMost { .. } => "at_most",
            Rule::Exact => "exact",
            Rule::Info => "info",
        }
    }

    fn params(&self) -> (f64, f64) {
        match *self {
            Rule::Z { max } | Rule::Relative { max } | Rule::AtMost { max } => (max, 0.0),
            Rule::ZAllowance { z, allowance } => (z, allowance),
            Rule::Exact | Rule::Info => (0.0, 0.0),
        }
    }

    fn from_parts(name: &str, threshold: f64, allowance: f64) -> Option<Rule> {
        Some(match name {
            "z" => Rule::Z { max: threshold },
            "z_allowance" => Rule::ZAllowance { z: threshold, allowance },
            "relative" => Rule::Relative { max: threshold },
            "at_most" => Rule::AtMost { max: threshold },
            "exact" => Rule::Exact,
            "info" => Rule::Info,
            _ => return None,
        })
    }
}

/// One line of an identity table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub t: Option<f64>,
    /// Empty for box-integrated rows.
    pub x: Vec<f64>,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub oracle: Option<f64>,
    pub z: Option<f64>,
    pub rel_error: Option<f64>,
    #[serde(flatten)]
    pub rule: Rule,
    pub pass: bool,
}

impl ReportRow {
    /// Builds a row and fills `z`, `rel_error` and `pass` from the rule.
    pub fn new(label: impl Into<String>, t: Option<f64>, x: Vec<f64>, estimate: f64, stderr: Option<f64>, oracle: Option<f64>, rule: Rule) -> Self {
        let mut row = ReportRow { label: label.into(), t, x, estimate, stderr, oracle, z: None, rel_error: None, rule, pass: true };
        if let Some(o) = oracle {
            let diff = estimate - o;
            row.z = stderr.map(|se| z_score(diff, se));
            row.rel_error = Some(if o != 0.0 { diff.abs() / o.abs() } else { diff.abs() });
        }
        row.pass = row.evaluate();
        row
    }

    /// Verdict implied by the stored numbers and rule.
    pub fn evaluate(&self) -> bool {
        let diff = self.oracle.map(|o| (self.estimate - o).abs());
        match self.rule {
            Rule::Info => true,
            Rule::Exact => self.oracle == Some(self.estimate),
            Rule::AtMost { max } => self.estimate <= max,
            Rule::Relative { max } => self.rel_error.is_some_and(|r| r <= max),
            Rule::Z { max } => match (diff, self.stderr) {
                (Some(d), Some(se)) => d <= max * se,
                _ => false,
            },
            Rule::ZAllowance { z, allowance } => match (diff, self.stderr, self.oracle) {
                (Some(d), Some(se), Some(o)) => d <= z * se + allowance * o.abs(),
                _ => false,
            },
        }
    }

    pub fn gated(&self) -> bool {
        self.rule != Rule::Info
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable to this configuration (or refused by a precondition).
    Skipped { reason: String },
    /// The check itself could not run.
    Error { message: String },
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped { .. } => "SKIP",
            Status::Error { .. } => "ERROR",
        }
    }
}

/// Result of one identity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub description: String,
    /// Negative controls are expected to fail and never affect the exit status.
    pub negative_control: bool,
    pub stochastic: bool,
    /// Where the oracle values come from: closed form, quadrature, or MC.
    pub provenance: String,
    pub fingerprint: String,
    pub seed: u64,
    pub n_realizations: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub rows: Vec<ReportRow>,
    pub status: Status,
    /// `|z| > 3` count among gated z rows and its binomial 99% envelope.
    pub exceedances: Option<Exceedances>,
    pub notes: Vec<String>,
    pub runtime_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exceedances {
    pub count: usize,
    pub rows: usize,
    pub envelope_99: usize,
}

impl IdentityReport {
    pub fn new(name: &str, description: &str, provenance: &str) -> Self {
        IdentityReport {
            name: name.into(),
            description: description.into(),
            negative_control: false,
            stochastic: false,
            provenance: provenance.into(),
            fingerprint: String::new(),
            seed: 0,
            n_realizations: 0,
            tolerances: BTreeMap::new(),
            rows: Vec::new(),
            status: Status::Pass,
            exceedances: None,
            notes: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    pub fn skipped(name: &str, description: &str, reason: impl Into<String>) -> Self {
        let mut r = Self::new(name, description, "none");
        r.status = Status::Skipped { reason: reason.into() };
        r
    }

    pub fn tolerance(mut self, key: &str, value: f64) -> Self {
        self.tolerances.insert(key.into(), value);
        self
    }

    /// Sets the status from the rows: pass iff every gated row passes.
    pub fn finish(&mut self) {
        let zs: Vec<&ReportRow> = self.rows.iter().filter(|r| matches!(r.rule, Rule::Z { .. })).collect();
        if !zs.is_empty() {
            let count = zs.iter().filter(|r| r.z.is_none_or(|z| z.abs() > 3.0)).count();
            self.exceedances = Some(Exceedances { count, rows: zs.len(), envelope_99: binomial_envelope(zs.len(), 0.0027, 0.99) });
        }
        self.status = if self.recomputed_pass() { Status::Pass } else { Status::Fail };
    }

    /// Verdict recomputed from the stored table.
    pub fn recomputed_pass(&self) -> bool {
        self.rows.iter().all(|r| !r.gated() || r.evaluate())
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, Status::Fail | Status::Error { .. })
    }
}

/// Smallest `k` with `P(Bin(m, p) <= k) >= level`.
pub fn binomial_envelope(m: usize, p: f64, level: f64) -> usize {
    if m == 0 {
        return 0;
    }
    let b = Binomial::new(p, m as u64).expect("valid binomial");
    (0..=m).find(|&k| b.cdf(k as u64) >= level).unwrap_or(m)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|e| Error::domain(format!("bad number `{s}`: {e}")))
}

pub const ROW_COLUMNS: [&str; 13] =
    ["label", "t", "x", "estimate", "stderr", "oracle", "z", "rel_error", "rule", "threshold", "allowance", "pass", "gated"];

/// The row table as CSV with `#` header lines (fingerprint first).
pub fn write_rows_csv(report: &IdentityReport, out: &mut impl Write) -> Result<()> {
    writeln!(out, "# fingerprint: {}", report.fingerprint)?;
    writeln!(out, "# check: {}", report.name)?;
    writeln!(out, "# provenance: {}", report.provenance)?;
    writeln!(out, "# negative_control: {}", report.negative_control)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROW_COLUMNS)?;
    for r in &report.rows {
        let (threshold, allowance) = r.rule.params();
        let x: Vec<String> = r.x.iter().map(|v| format!("{v}")).collect();
        w.write_record([
            r.label.clone(),
            fmt_opt(r.t),
            x.join(" "),
            format!("{}", r.estimate),
            fmt_opt(r.stderr),
            fmt_opt(r.oracle),
            fmt_opt(r.z),
            fmt_opt(r.rel_error),
            r.rule.name().to_string(),
            format!("{threshold}"),
            format!("{allowance}"),
            r.pass.to_string(),
            r.gated().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_rows_csv`].
pub fn read_rows_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let x = get(2)
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| Error::domain(format!("bad coordinate `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let rule = Rule::from_parts(get(8), get(9).parse().unwrap_or(0.0), get(10).parse().unwrap_or(0.0))
            .ok_or_else(|| Error::domain(format!("unknown rule `{}`", get(8))))?;
        rows.push(ReportRow {
            label: get(0).into(),
            t: parse_opt(get(1))?,
            x,
            estimate: get(3).parse().map_err(|e| Error::domain(format!("bad estimate: {e}")))?,
            stderr: parse_opt(get(4))?,
            oracle: parse_opt(get(5))?,
            z: parse_opt(get(6))?,
            rel_error: parse_opt(get(7))?,
            rule,
            pass: get(11) == "true",
        });
    }
    Ok(rows)
}

/// Writes `<name>.csv` and `<name>.json` into `dir`.
pub fn write_report(report: &IdentityReport, dir: &Path) -> Result<()> {
    let mut f = fs::File::create(dir.join(format!("{}.csv", report.name)))?;
    write_rows_csv(report, &mut f)?;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(dir.join(format!("{}.json", report.name)), json)?;
    Ok(())
}

/// One series of a line plot.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Optional symmetric error bars.
    pub errors: Option<Vec<f64>>,
    /// Markers instead of a polyline.
    pub markers: bool,
    /// Staircase polyline (ECDFs).
    pub step: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal SVG line/scatter chart.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], fingerprint: &str) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 170.0, 40.0, 50.0);
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (i, &(x, y)) in s.points.iter().enumerate() {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
            xs = (xs.0.min(x), xs.1.max(x));
            ys = (ys.0.min(y - e), ys.1.max(y + e));
        }
    }
    if !xs.0.is_finite() {
        xs = (0.0, 1.0);
        ys = (0.0, 1.0);
    }
    if xs.1 <= xs.0 {
        xs.1 = xs.0 + 1.0;
    }
    if ys.1 <= ys.0 {
        ys.1 = ys.0 + 1.0;
    }
    let pad = 0.05 * (ys.1 - ys.0);
    ys = (ys.0 - pad, ys.1 + pad);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let sx = |x: f64| ml + (x - xs.0) / (xs.1 - xs.0) * pw;
    let sy = |y: f64| mt + ph - (y - ys.0) / (ys.1 - ys.0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, "<!-- fingerprint: {fingerprint} -->");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, ml + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let fx = xs.0 + (xs.1 - xs.0) * k as f64 / 4.0;
        let fy = ys.0 + (ys.1 - ys.0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, sx(fx), mt + ph + 16.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, ml - 6.0, sy(fy) + 4.0, tick(fy));
        let _ = writeln!(s, r##"<line x1="{ml}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##, ml + pw, sy(fy), sy(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 12.0, escape(xlabel));
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, mt + ph / 2.0, mt + ph / 2.0, escape(ylabel));

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = ser.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        if ser.markers {
            for (i, &(x, y)) in ser.points.iter().enumerate() {
                if !(x.is_finite() && y.is_finite()) {
                    continue;
                }
                if let Some(e) = &ser.errors {
                    let _ = writeln!(s, r#"<line x1="{:.2}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="{color}"/>"#, sx(x), sx(x), sy(y - e[i]), sy(y + e[i]));
                }
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
            }
        } else if !pts.is_empty() {
            let mut d = String::new();
            for (i, &(x, y)) in pts.iter().enumerate() {
                if i == 0 {
                    let _ = write!(d, "M{:.2},{:.2}", sx(x), sy(y));
                } else if ser.step {
                    let _ = write!(d, " H{:.2} V{:.2}", sx(x), sy(y));
                } else {
                    let _ = write!(d, " L{:.2},{:.2}", sx(x), sy(y));
                }
            }
            let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        }
        let ly = mt + 14.0 + 18.0 * k as f64;
        let lx = ml + pw + 12.0;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{}" width="12" height="4" fill="{color}"/>"#, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11">{}</text>"#, lx + 18.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

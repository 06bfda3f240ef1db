//! Per-trial CSV rows, the JSON summary and the log-log SVG plot.

use super::config::Coupling;
use crate::decouple::RatioReport;
use crate::error::{Error, Result};
use crate::util::growth_exponent;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

/// `git describe --always` of the build, or `unknown`.
pub const GIT_DESCRIBE: &str = env!("HYPDEC_GIT_DESCRIBE");

pub const CSV_COLUMNS: [&str; 11] =
    ["scenario", "r", "seed", "trial", "ensemble", "lhs", "rhs", "ratio", "degenerate", "params", "git"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub scenario: String,
    pub r: u64,
    pub seed: u64,
    pub trial: u64,
    /// Series label: ensemble, generator or estimator variant.
    pub ensemble: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub degenerate: bool,
    /// `key=value` pairs joined by `;`, keys sorted.
    pub params: String,
    pub git: String,
}

impl Row {
    pub fn from_report(scenario: &str, r: u64, seed: u64, trial: u64, series: &str, rep: &RatioReport) -> Row {
        let params = rep.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        Row {
            scenario: scenario.to_string(),
            r,
            seed,
            trial,
            ensemble: series.to_string(),
            lhs: rep.lhs,
            rhs: rep.rhs,
            ratio: rep.ratio,
            degenerate: rep.degenerate,
            params,
            git: GIT_DESCRIBE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Check {
        Check { name: name.to_string(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub name: String,
    pub scales: Vec<u64>,
    /// Largest non-degenerate ratio per scale; `null` when every trial was
    /// degenerate.
    pub max_ratio: Vec<Option<f64>>,
    pub exponent: Option<f64>,
    /// Whether the exponent is held to the threshold.
    pub checked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    InvariantViolation,
    ConjectureViolation,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::InvariantViolation => 2,
            Status::ConjectureViolation => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conjecture {
    pub threshold: Option<f64>,
    /// Largest exponent over the checked series.
    pub slope: Option<f64>,
    /// Instance-level checks (such as `c ≥ c_min`).
    pub instances: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub git: String,
    pub scales: Vec<u64>,
    pub trials: u64,
    pub eps: f64,
    pub couplings: BTreeMap<u64, Vec<Coupling>>,
    pub series: Vec<SeriesSummary>,
    pub invariants: Vec<Check>,
    pub conjecture: Conjecture,
    pub status: Status,
}

/// Group rows by series and fit the growth exponent of the per-scale maxima.
pub fn summarize_series(rows: &[Row], scales: &[u64], unchecked: &[&str]) -> Vec<SeriesSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.ensemble.as_str()) {
            names.push(&r.ensemble);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let max_ratio: Vec<Option<f64>> = scales
                .iter()
                .map(|s| {
                    rows.iter()
                        .filter(|r| r.ensemble == name && r.r == *s && !r.degenerate)
                        .map(|r| r.ratio)
                        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
                })
                .collect();
            let pairs: Vec<(f64, f64)> =
                scales.iter().zip(&max_ratio).filter_map(|(s, m)| m.map(|m| (*s as f64, m))).collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            SeriesSummary {
                name: name.to_string(),
                scales: scales.to_vec(),
                max_ratio,
                exponent: growth_exponent(&xs, &ys),
                checked: !unchecked.iter().any(|u| name.starts_with(u)),
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[Row], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn to_json(summary: &Summary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

/// Log-log plot of the per-scale maxima of every series.
pub fn svg_plot(summary: &Summary) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const M: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let pts: Vec<(f64, f64)> = summary
        .series
        .iter()
        .flat_map(|s| s.scales.iter().zip(&s.max_ratio).filter_map(|(r, m)| m.filter(|m| *m > 0.0).map(|m| ((*r as f64).log2(), m.log2()))))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}: max ratio vs R (log2-log2)</text>"#, W / 2.0, summary.scenario);
    if pts.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x1 - x0 < 1.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1.0 {
        let c = (y0 + y1) / 2.0;
        y0 = c - 0.5;
        y1 = c + 0.5;
    }
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let _ = writeln!(out, r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - M, W - M, H - M);
    let _ = writeln!(out, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H - M);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">log2 R</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(out, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">log2 ratio</text>"#, H / 2.0, H / 2.0);
    for (lbl, x) in [(x0, px(x0)), (x1, px(x1))] {
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{lbl:.1}</text>"#, H - M + 16.0);
    }
    for (lbl, y) in [(y0, py(y0)), (y1, py(y1))] {
        let _ = writeln!(out, r#"<text x="{}" y="{y:.1}" text-anchor="end">{lbl:.2}</text>"#, M - 6.0);
    }
    for (i, s) in summary.series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let p: Vec<(f64, f64)> = s
            .scales
            .iter()
            .zip(&s.max_ratio)
            .filter_map(|(r, m)| m.filter(|m| *m > 0.0).map(|m| (px((*r as f64).log2()), py(m.log2()))))
            .collect();
        let line = p.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, r#"<polyline points="{line}" fill="none" stroke="{c}"/>"#);
        for (x, y) in &p {
            let _ = writeln!(out, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{c}"/>"#);
        }
        let slope = s.exponent.map_or("n/a".to_string(), |e| format!("{e:.3}"));
        let _ = writeln!(out, r#"<text x="{}" y="{}" fill="{c}">{} (slope {slope})</text>"#, W - M - 200.0, M + 16.0 * i as f64, s.name);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(series: &str, r: u64, ratio: f64, degenerate: bool) -> Row {
        let rep = RatioReport { ratio, degenerate, ..RatioReport::new(ratio, 1.0, r as f64) }.with("b", 2.0).with("a", 1.0);
        Row::from_report("s", r, 1, 0, series, &rep)
    }

    #[test]
    fn series_fit_and_params_order() {
        let rows = vec![row("x", 64, 1.0, false), row("x", 256, 4.0, false), row("x", 256, 9.0, true), row("y", 64, 2.0, true)];
        assert_eq!(rows[0].params, "a=1;b=2");
        let s = summarize_series(&rows, &[64, 256], &["y"]);
        assert_eq!(s[0].max_ratio, vec![Some(1.0), Some(4.0)]);
        assert!((s[0].exponent.unwrap() - 1.0).abs() < 1e-12);
        assert!(s[0].checked && !s[1].checked);
        assert_eq!(s[1].max_ratio, vec![None, None]);
        assert_eq!(s[1].exponent, None);
    }

    #[test]
    fn csv_has_fixed_header() {
        let mut buf = Vec::new();
        write_csv(&[row("x", 64, 1.5, false)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        assert!(lines.next().unwrap().starts_with("s,64,1,0,x,1.5,1.0,1.5,false,a=1;b=2,"));
    }
}

//! Experiment runner: configured scenarios across scales, with CSV, JSON
//! and SVG reports.
//!
//! Exit codes: 0 pass, 1 runtime error, 2 invariant violation, 3
//! conjecture-instance violation, 4 configuration error, 5 partial
//! `verify-all` run.

pub mod config;
pub mod report;
pub mod scenarios;
pub mod verify;

pub use config::ExperimentConfig;
pub use report::{Check, Row, SeriesSummary, Status, Summary};
pub use verify::{verify_all, CriterionResult, VerifyReport};

use crate::error::{Error, Result};
use rayon::prelude::*;
use report::Conjecture;
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Exit code of an error raised while running.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => 4,
        _ => 1,
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub summary: Summary,
}

/// Merge checks of the same name: a check passes when every instance does,
/// and keeps the detail of its first failure (or first instance).
fn merge(checks: Vec<Check>) -> Vec<Check> {
    let mut out: Vec<Check> = Vec::new();
    for c in checks {
        match out.iter_mut().find(|o| o.name == c.name) {
            Some(o) => {
                if o.pass && !c.pass {
                    o.pass = false;
                    o.detail = c.detail;
                }
            }
            None => out.push(c),
        }
    }
    out
}

/// Run every `(scale, trial)` of the configured scenario. Trials run on the
/// worker pool; rows come back in `(scale, trial, series)` order.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let jobs: Vec<(u64, u64)> = cfg.scales.iter().flat_map(|r| (0..cfg.trials).map(move |t| (*r, t))).collect();
    let outs = jobs
        .par_iter()
        .map(|&(r, t)| scenarios::run_trial(cfg, r, t))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut invariants = Vec::new();
    let mut instances = Vec::new();
    for ((r, t), out) in jobs.iter().zip(outs) {
        for (series, rep) in &out.reports {
            rows.push(Row::from_report(&cfg.scenario, *r, cfg.seed, *t, series, rep));
        }
        invariants.extend(out.invariants);
        instances.extend(out.instances);
    }
    let invariants = merge(invariants);
    let instances = merge(instances);
    let spec = scenarios::spec(cfg);
    let series = report::summarize_series(&rows, &cfg.scales, spec.unchecked);
    let slope = series.iter().filter(|s| s.checked).filter_map(|s| s.exponent).fold(None, |m: Option<f64>, e| {
        Some(m.map_or(e, |m| m.max(e)))
    });
    let slope_ok = match (spec.threshold, slope) {
        (Some(th), Some(s)) => s <= th,
        _ => true,
    };
    let conjecture =
        Conjecture { threshold: spec.threshold, slope, pass: slope_ok && instances.iter().all(|c| c.pass), instances };
    let status = if !invariants.iter().all(|c| c.pass) {
        Status::InvariantViolation
    } else if !conjecture.pass {
        Status::ConjectureViolation
    } else {
        Status::Pass
    };
    let couplings: BTreeMap<u64, _> = cfg.scales.iter().map(|r| (*r, cfg.couplings.resolve(*r as f64, cfg.eps))).collect();
    let summary = Summary {
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        git: report::GIT_DESCRIBE.to_string(),
        scales: cfg.scales.clone(),
        trials: cfg.trials,
        eps: cfg.eps,
        couplings,
        series,
        invariants,
        conjecture,
        status,
    };
    Ok(RunOutput { rows, summary })
}

/// Paths written by [`run_to_dir`].
#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: Option<PathBuf>,
}

/// [`run`], then write `<scenario>.csv`, `<scenario>.json` and, when
/// plotting is on, `<scenario>.svg` into the output directory.
pub fn run_to_dir(cfg: &ExperimentConfig) -> Result<(RunOutput, Written)> {
    let out = run(cfg)?;
    std::fs::create_dir_all(&cfg.out)?;
    let base = cfg.out.join(&cfg.scenario);
    let csv = base.with_extension("csv");
    report::write_csv(&out.rows, std::fs::File::create(&csv)?)?;
    let json = base.with_extension("json");
    std::fs::write(&json, report::to_json(&out.summary))?;
    let svg = if cfg.plot {
        let p = base.with_extension("svg");
        std::fs::write(&p, report::svg_plot(&out.summary))?;
        Some(p)
    } else {
        None
    };
    Ok((out, Written { csv, json, svg }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scenario: &str) -> ExperimentConfig {
        ExperimentConfig { scenario: scenario.into(), scales: vec![16, 64], trials: 2, ..Default::default() }
    }

    #[test]
    fn merged_checks_keep_first_failure() {
        let m = merge(vec![Check::new("a", true, "1"), Check::new("a", false, "2"), Check::new("a", false, "3"), Check::new("b", true, "x")]);
        assert_eq!(m.len(), 2);
        assert!(!m[0].pass && m[0].detail == "2");
    }

    #[test]
    fn broad_value_runs_and_passes() {
        let mut c = cfg("broad-value");
        c.couplings.k = Some(4);
        let out = run(&c).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert_eq!(out.summary.status, Status::Pass);
        assert!(out.summary.invariants.iter().any(|c| c.name == "broad_triangle"));
        assert!(out.rows.iter().all(|r| r.ratio <= 1.0 && r.git == report::GIT_DESCRIBE));
    }

    #[test]
    fn conjecture_threshold_sets_status() {
        let mut c = cfg("restriction2d");
        c.max_exponent = Some(-10.0);
        assert_eq!(run(&c).unwrap().summary.status, Status::ConjectureViolation);
        c.max_exponent = Some(10.0);
        assert_eq!(run(&c).unwrap().summary.status, Status::Pass);
    }

    #[test]
    fn empty_family_is_a_config_error() {
        let mut c = cfg("furstenberg");
        c.scales = vec![32];
        c.ensemble.kinds = vec!["bush".into()];
        c.incidence.count = Some(0);
        let e = run(&c).unwrap_err();
        assert_eq!(error_exit_code(&e), 4, "{e}");
        assert_eq!(error_exit_code(&Error::Io("x".into())), 1);
    }

    #[test]
    fn identical_across_worker_counts() {
        let c = cfg("restriction2d");
        let csv = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let out = pool.install(|| run(&c)).unwrap();
            let mut buf = Vec::new();
            report::write_csv(&out.rows, &mut buf).unwrap();
            (buf, report::to_json(&out.summary))
        };
        assert_eq!(csv(1), csv(3));
    }
}

//! `verify-all`: every acceptance criterion at desk scale, within a time
//! budget.

use super::config::ExperimentConfig;
use super::{run, RunOutput, Status};
use crate::broadnarrow::{broad_value, pigeonhole_select, verify_pigeonhole, BroadInstance, BroadMethod};
use crate::error::Result;
use crate::field::{eval_direct, extend, FreqDensity, SliceGrid, Surface};
use crate::geom::{hyperbolic_rescale, lift, nonisotropic_dilate, AffineMap3, Axis, P3};
use crate::util::keyed_rng;
use crate::Complex64;
use rand::Rng;
use serde::Serialize;
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub budget_minutes: f64,
    pub results: Vec<CriterionResult>,
    /// Criteria skipped because the budget ran out.
    pub skipped: Vec<u8>,
    pub partial: bool,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.partial || self.results.is_empty() {
            5
        } else if self.results.iter().all(|r| r.pass) {
            0
        } else {
            3
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let _ = writeln!(s, "C{:<2} {:<4} {:<28} {:>8.1}s  {}", r.id, if r.pass { "PASS" } else { "FAIL" }, r.name, r.seconds, r.detail);
        }
        for id in &self.skipped {
            let _ = writeln!(s, "C{id:<2} SKIP (budget exhausted)");
        }
        if self.partial {
            s.push_str("partial run: budget exhausted\n");
        }
        s
    }
}

type Criterion = (u8, &'static str, fn() -> Result<(bool, String)>);

pub const CRITERIA: [Criterion; 12] = [
    (1, "exact algebra", c1),
    (2, "extension oracle", c2),
    (3, "wave packets", c3),
    (4, "planar bilinear", c4),
    (5, "bilinear base case", c5),
    (6, "bilinear l2 decoupling", c6),
    (7, "dyadic linear decoupling", c7),
    (8, "refined bilinear", c8),
    (9, "broad norm", c9),
    (10, "pigeonholing", c10),
    (11, "incidence", c11),
    (12, "restriction p = 22/7", c12),
];

/// Run the criteria in order, skipping the rest once `budget_minutes` has
/// elapsed. A zero budget runs nothing.
pub fn verify_all(budget_minutes: f64) -> VerifyReport {
    let start = Instant::now();
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (id, name, f) in CRITERIA {
        if start.elapsed().as_secs_f64() >= budget_minutes * 60.0 {
            skipped.push(id);
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        results.push(CriterionResult { id, name: name.into(), pass, detail, seconds: t0.elapsed().as_secs_f64() });
    }
    let partial = !skipped.is_empty();
    VerifyReport { budget_minutes, results, skipped, partial }
}

fn scenario(name: &str, scales: &[u64], trials: u64, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<RunOutput> {
    let mut cfg = ExperimentConfig { scenario: name.into(), scales: scales.to_vec(), trials, plot: false, ..Default::default() };
    tweak(&mut cfg);
    run(&cfg)
}

fn describe(out: &RunOutput) -> String {
    let slopes: Vec<String> = out
        .summary
        .series
        .iter()
        .map(|s| format!("{}={}", s.name, s.exponent.map_or("n/a".into(), |e| format!("{e:.3}"))))
        .collect();
    let failed: Vec<&str> = out.summary.invariants.iter().chain(&out.summary.conjecture.instances).filter(|c| !c.pass).map(|c| c.detail.as_str()).collect();
    format!("slopes [{}]{}", slopes.join(", "), if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(" | ")) })
}

fn passed(out: &RunOutput) -> bool {
    out.summary.status == Status::Pass
}

fn c1() -> Result<(bool, String)> {
    let mut rng = keyed_rng(1, "verify/c1", 0, 0);
    let mut worst: f64 = 0.0;
    // relative to the size of the image point
    let on_h = |q: P3| (q[2] - q[0] * q[1]).abs() / (1.0 + q[0].abs() * q[1].abs() + q[2].abs());
    let round_trip = |m: &AffineMap3, x: P3| -> Result<f64> {
        let y = m.inverse()?.apply(m.apply(x));
        Ok((0..3).map(|i| (y[i] - x[i]).abs()).fold(0.0, f64::max))
    };
    for _ in 0..1000 {
        let x = lift([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let m = hyperbolic_rescale(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.05..1.0))?;
        let axis = if rng.gen::<bool>() { Axis::Horizontal } else { Axis::Vertical };
        let d = nonisotropic_dilate(axis, rng.gen_range(1.0..16.0))?;
        worst = worst.max(on_h(m.apply(x))).max(on_h(d.apply(x)));
        worst = worst.max(round_trip(&m, x)?).max(round_trip(&d, x)?);
    }
    Ok((worst <= 1e-12, format!("max residual {worst:.2e}")))
}

fn c2() -> Result<(bool, String)> {
    let mut rng = keyed_rng(1, "verify/c2", 0, 0);
    let f = FreqDensity::from_fn(33, Surface::Hyperbolic, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))?;
    let x3: Vec<f64> = (0..17).map(|k| -40.0 + 5.0 * k as f64).collect();
    let field = extend(&f, &SliceGrid::new([33, 33], x3))?;
    let (mut num, mut den) = (0.0, 0.0);
    for z in (0..17).step_by(1) {
        for s1 in (0..33).step_by(2) {
            for s2 in (0..33).step_by(2) {
                let x = field.point(z, s1, s2);
                let d = eval_direct(&f, x);
                num += (field.data[[z, s1, s2]] - d).norm_sqr();
                den += d.norm_sqr();
            }
        }
    }
    let rel = (num / den).sqrt();
    Ok((rel <= 1e-6, format!("relative L2 error {rel:.2e} on 17³ points")))
}

fn c3() -> Result<(bool, String)> {
    let out = scenario("wavepacket-verify", &[64, 256], 1, |_| {})?;
    Ok((passed(&out), out.summary.invariants.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ")))
}

fn c4() -> Result<(bool, String)> {
    let out = scenario("restriction2d", &[16, 64, 256], 50, |_| {})?;
    let max = out.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok((passed(&out) && max <= 10.0, format!("max ratio {max:.3}; {}", describe(&out))))
}

fn c5() -> Result<(bool, String)> {
    let out = scenario("bilinear-l2", &[256, 1024, 4096], 50, |c| c.decouple.delta_power = 0.25)?;
    Ok((passed(&out), describe(&out)))
}

fn c6() -> Result<(bool, String)> {
    let out = scenario("bilinear-l2", &[64, 256, 1024], 3, |_| {})?;
    Ok((passed(&out), describe(&out)))
}

fn c7() -> Result<(bool, String)> {
    let out = scenario("linear-dyadic", &[64, 256, 1024], 2, |_| {})?;
    let grows = out
        .summary
        .series
        .iter()
        .find(|s| s.name == "square_only/line_concentrated")
        .and_then(|s| s.exponent)
        .is_some_and(|e| e >= 0.1);
    Ok((passed(&out) && grows, describe(&out)))
}

fn c8() -> Result<(bool, String)> {
    let out = scenario("refined", &[64, 256, 1024], 2, |_| {})?;
    Ok((passed(&out), describe(&out)))
}

/// Largest threshold reached by `a` cells in distinct rows and columns,
/// by enumeration.
fn broad_by_enumeration(k: usize, a: usize, values: &[f64]) -> f64 {
    fn rec(k: usize, a: usize, values: &[f64], start: usize, rows: u64, cols: u64, min: f64, left: usize) -> f64 {
        if left == 0 {
            return min;
        }
        let mut best: f64 = 0.0;
        for c in start..k * k {
            let (i, j) = (c / k, c % k);
            if rows >> i & 1 == 0 && cols >> j & 1 == 0 {
                best = best.max(rec(k, a, values, c + 1, rows | 1 << i, cols | 1 << j, min.min(values[c]), left - 1));
            }
        }
        best
    }
    if a > k {
        return 0.0;
    }
    rec(k, a, values, 0, 0, 0, f64::INFINITY, a)
}

fn c9() -> Result<(bool, String)> {
    let mut rng = keyed_rng(1, "verify/c9", 0, 0);
    let mut mismatches = 0;
    for (k, count) in [(4usize, 100), (8, 20)] {
        for _ in 0..count {
            let a = rng.gen_range(2..=3);
            let values: Vec<f64> = (0..k * k).map(|_| rng.gen::<f64>()).collect();
            let got = broad_value(&BroadInstance::new(k, a, values.clone())?, BroadMethod::Exact).value;
            if got != broad_by_enumeration(k, a, &values) {
                mismatches += 1;
            }
        }
    }
    let bounds = scenario("broad-value", &[64], 100, |c| c.couplings.k = Some(4))?;
    let mut ok = mismatches == 0 && passed(&bounds);
    let mut detail = format!("{mismatches} enumeration mismatches; {}", describe(&bounds));
    for k in [8, 16] {
        let bn = scenario("broad-decompose", &[64], 1, |c| c.couplings.k = Some(k))?;
        ok &= passed(&bn);
        let worst = bn.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let _ = write!(detail, "; K = {k}: constant {worst:.3}");
    }
    Ok((ok, detail))
}

fn c10() -> Result<(bool, String)> {
    let mut rng = keyed_rng(1, "verify/c10", 0, 0);
    for t in 0..1000 {
        let nq = rng.gen_range(1..30);
        let nl = rng.gen_range(1..8);
        let table: Vec<Vec<f64>> = (0..nq).map(|_| (0..nl).map(|_| rng.gen_range(0.01..10.0)).collect()).collect();
        let sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<f64>()).collect();
        let lo = sums.iter().cloned().fold(f64::INFINITY, f64::min);
        let totals: Vec<f64> = sums.iter().map(|s| s.min(2.0 * lo)).collect();
        let p = pigeonhole_select(&totals, &table, 1.0)?;
        if let Err(e) = verify_pigeonhole(&totals, &table, 1.0, &p) {
            return Ok((false, format!("table {t}: {e}")));
        }
    }
    Ok((true, "1000 tables".into()))
}

fn c11() -> Result<(bool, String)> {
    let two = scenario("twoends", &[32], 1, |_| {})?;
    let furst = scenario("furstenberg", &[32, 128], 1, |_| {})?;
    let prune = scenario("prune", &[32], 1, |_| {})?;
    let cmin = furst.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok((
        passed(&two) && passed(&furst) && passed(&prune),
        format!("min c {cmin:.3}; prune {}", describe(&prune)),
    ))
}

fn c12() -> Result<(bool, String)> {
    let plain = scenario("restriction", &[64, 256, 1024], 1, |_| {})?;
    let broad = scenario("restriction", &[64, 256, 1024], 1, |c| {
        c.restriction.broad = Some([2, 8]);
        c.ensemble.kinds = vec!["focusing".into(), "random_phase".into(), "bush".into()];
    })?;
    Ok((passed(&plain) && passed(&broad), format!("{}; broad {}", describe(&plain), describe(&broad))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_budget_is_an_empty_partial_run() {
        let rep = verify_all(0.0);
        assert!(rep.results.is_empty() && rep.partial);
        assert_eq!(rep.skipped.len(), 12);
        assert_ne!(rep.exit_code(), 0);
        assert!(rep.table().contains("C12 SKIP"));
    }

    #[test]
    fn enumeration_on_a_small_case() {
        // diagonal 3, off-diagonal 5 at (0,1) and (1,0)
        let v = [3.0, 5.0, 5.0, 3.0];
        assert_eq!(broad_by_enumeration(2, 2, &v), 5.0);
        assert_eq!(broad_by_enumeration(2, 1, &v), 5.0);
        assert_eq!(broad_by_enumeration(2, 3, &v), 0.0);
    }

    #[test]
    fn cheap_criteria_pass() {
        for f in [c1, c2, c10] {
            let (ok, detail) = f().unwrap();
            assert!(ok, "{detail}");
        }
    }
}

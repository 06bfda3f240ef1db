//! Scenario registry: one trial of a named experiment at one scale.

use super::config::ExperimentConfig;
use super::report::Check;
use crate::broadnarrow::{broad_narrow_at, broad_value, BnParams, BroadInstance, BroadMethod};
use crate::decouple::{
    bilinear_l2_ratio, bilinear_restriction_2d, bush_density, caps_in, classify_narrow_broad, dirichlet_quadruples,
    lattice_for, linear_dyadic_ratio, random_transverse_pair, refined_ratio, sample, square_function_ratio,
    Density2, EnsembleKind, NbLabel, NbParams, RatioReport, RefinedInput, SquareFnMode,
};
use crate::error::{Error, Result};
use crate::field::{FreqDensity, Region, Surface};
use crate::geom::{Patch, Square};
use crate::incidence::{
    furstenberg_ratio, prune_multiplicity, two_ends_check, LineFamily, Raster, Shading, TwoEndsParams,
};
use crate::restriction::{
    broad_restriction_ratio_with, restriction_lattice, restriction_ratio_with, BallQuadrature,
};
use crate::util::{bump, keyed_rng};
use crate::wavepacket::{decompose, PacketId, PacketParams, MIN_Q};
use crate::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Everything one trial produces.
#[derive(Debug, Default)]
pub struct TrialOut {
    /// `(series, report)` in a fixed order.
    pub reports: Vec<(String, RatioReport)>,
    pub invariants: Vec<Check>,
    /// Instance-level conjecture checks.
    pub instances: Vec<Check>,
}

impl TrialOut {
    fn push(&mut self, series: impl Into<String>, rep: RatioReport) {
        let series = series.into();
        self.invariants.push(Check::new(
            "finite_ratios",
            rep.lhs.is_finite() && rep.rhs.is_finite() && rep.lhs >= 0.0 && rep.rhs >= 0.0,
            format!("{series}: lhs {} rhs {}", rep.lhs, rep.rhs),
        ));
        self.reports.push((series, rep));
    }
}

/// Growth-exponent threshold and the series prefixes exempt from it.
pub struct ScenarioSpec {
    pub threshold: Option<f64>,
    pub unchecked: &'static [&'static str],
}

pub fn spec(cfg: &ExperimentConfig) -> ScenarioSpec {
    let (threshold, unchecked): (Option<f64>, &'static [&'static str]) = match cfg.scenario.as_str() {
        "bilinear-l2" if cfg.decouple.delta_power > 0.0 => (Some(0.1), &[]),
        "bilinear-l2" | "refined" | "squarefn" => (Some(0.15), &[]),
        "linear-dyadic" => (Some(0.15), &["square_only"]),
        "restriction2d" => (Some(0.1), &[]),
        "restriction" if cfg.restriction.broad.is_some() => (Some(0.25), &[]),
        "restriction" => (Some(0.2), &[]),
        _ => (None, &[]),
    };
    ScenarioSpec { threshold: cfg.max_exponent.or(threshold), unchecked }
}

fn rng_for(cfg: &ExperimentConfig, series: &str, r: u64, trial: u64) -> ChaCha8Rng {
    keyed_rng(cfg.seed, &format!("{}/{series}", cfg.scenario), r, trial)
}

pub fn run_trial(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    match cfg.scenario.as_str() {
        "bilinear-l2" => bilinear(cfg, r, trial),
        "refined" => refined(cfg, r, trial),
        "linear-dyadic" => linear(cfg, r, trial),
        "restriction2d" => planar(cfg, r, trial),
        "squarefn" => squarefn(cfg, r, trial),
        "broad-value" => broad_values(cfg, r, trial),
        "broad-decompose" => broad_decompose(cfg, r, trial),
        "restriction" => restriction(cfg, r, trial),
        "twoends" | "furstenberg" | "prune" => incidence(cfg, r, trial),
        "wavepacket-verify" => wavepacket(cfg, r, trial),
        "none" => Ok(TrialOut::default()),
        other => Err(Error::Config(format!("unknown scenario {other:?}"))),
    }
}

/// Pieces at `∓(1/2, 1/2)` of side `R^{-delta_power}`, rounded to an even
/// number of caps so they stay aligned; power 0 gives side 1/2.
pub fn bilinear_taus(r: f64, delta_power: f64) -> Result<(Square, Square)> {
    let s = r.sqrt();
    let side = if delta_power == 0.0 {
        0.5
    } else {
        let k = (2.0 * (r.powf(0.5 - delta_power) / 2.0).round()).max(2.0);
        (k / s).min(0.5)
    };
    Ok((Square::new([-0.5, -0.5], side)?, Square::new([0.5, 0.5], side)?))
}

fn bilinear(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let rf = r as f64;
    let (t1, t2) = bilinear_taus(rf, cfg.decouple.delta_power)?;
    let n = lattice_for(rf);
    let mut out = TrialOut::default();
    for kind in cfg.kinds(&EnsembleKind::ALL)? {
        let mut rng = rng_for(cfg, kind.name(), r, trial);
        let f1 = sample(kind, rf, n, &Patch::Square(t1), &mut rng)?;
        let f2 = sample(kind, rf, n, &Patch::Square(t2), &mut rng)?;
        let rep = bilinear_l2_ratio(&f1, &f2, &t1, &t2, rf, cfg.band()?)?.with("tau_side", t1.side);
        out.push(kind.name(), rep);
    }
    Ok(out)
}

fn refined(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let rf = r as f64;
    let s = rf.sqrt();
    let n = 2 * MIN_Q * s as usize;
    let t1 = Square::new([-0.5, -0.5], 0.5)?;
    let t2 = Square::new([0.5, 0.5], 0.5)?;
    let x = Region::Balls { centers: (-1..=1).map(|k| [0.0, 0.0, 2.0 * k as f64 * s]).collect(), radius: s };
    let mut out = TrialOut::default();
    for mode in cfg.names(&["bush", "sparse"], &["bush", "sparse"])? {
        let mut rng = rng_for(cfg, &mode, r, trial);
        let count = if mode == "bush" { s as usize } else { 1 };
        let mut side = |tau: Square| -> Result<_> {
            let caps = caps_in(rf, &Patch::Square(tau))?;
            let chosen: Vec<Square> = caps.choose_multiple(&mut rng, count).cloned().collect();
            let f = bush_density(n, Surface::Hyperbolic, &chosen, [0.0; 3])?;
            let d = decompose(&f, rf, PacketParams::default())?;
            let ids = chosen
                .iter()
                .map(|c| {
                    let idx = [((c.center[0] + 1.0) / c.side) as usize, ((c.center[1] + 1.0) / c.side) as usize];
                    d.find_cap(idx).map(|cap| PacketId { cap, v: [0, 0] }).ok_or_else(|| {
                        Error::Precondition(format!("cap {idx:?} missing from the decomposition"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((d, ids))
        };
        let (d1, i1) = side(t1)?;
        let (d2, i2) = side(t2)?;
        let rep = refined_ratio(
            RefinedInput { decomp: &d1, packets: &i1, tau: t1 },
            RefinedInput { decomp: &d2, packets: &i2, tau: t2 },
            &x,
            cfg.band()?,
            cfg.grid.spacing,
        )?;
        out.push(mode, rep);
    }
    Ok(out)
}

/// `(E(N m) / E(m))^{1/4} / N^{1/2}` for `N` caps of `m` collinear samples.
pub fn dirichlet_prediction(caps: u64, per_cap: u64) -> f64 {
    (dirichlet_quadruples(caps * per_cap) as f64 / dirichlet_quadruples(per_cap) as f64).powf(0.25) / (caps as f64).sqrt()
}

fn linear(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let rf = r as f64;
    let n = lattice_for(rf);
    let target = Patch::Square(Square::new([0.5, 0.5], 1.0)?);
    let kinds = [EnsembleKind::LineConcentrated, EnsembleKind::RandomPhase, EnsembleKind::Focusing];
    let mut out = TrialOut::default();
    for kind in cfg.kinds(&kinds)? {
        let mut rng = rng_for(cfg, kind.name(), r, trial);
        let f = sample(kind, rf, n, &target, &mut rng)?;
        let rep = linear_dyadic_ratio(&f, r)?;
        if kind == EnsembleKind::LineConcentrated {
            let caps = rf.sqrt() as u64;
            let samples = f.nonzeros().len() as u64;
            if caps <= 64 && samples % caps == 0 {
                let pred = dirichlet_prediction(caps, samples / caps);
                let got = rep.square_only.ratio;
                out.invariants.push(Check::new(
                    "dirichlet_prediction",
                    (got - pred).abs() <= 0.2 * pred,
                    format!("R = {r}: square-only {got:.4} vs predicted {pred:.4}"),
                ));
            }
        }
        out.push(format!("dyadic/{kind}"), rep.dyadic);
        out.push(format!("square_only/{kind}"), rep.square_only);
    }
    Ok(out)
}

fn planar(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let delta = 1.0 / r as f64;
    let n = 4 * r as usize;
    let mut rng = rng_for(cfg, "transverse", r, trial);
    let (c1, c2) = random_transverse_pair(&mut rng, cfg.decouple.min_sin)?;
    let mut phase = |_: [f64; 2]| Complex64::from_polar(1.0, rng.gen::<f64>() * 2.0 * PI);
    let f1 = Density2::on_neighborhood(n, &c1, delta, &mut phase)?;
    let f2 = Density2::on_neighborhood(n, &c2, delta, &mut phase)?;
    let mut out = TrialOut::default();
    out.push("transverse", bilinear_restriction_2d(&f1, &f2, [&c1, &c2], delta, cfg.decouple.min_sin)?);
    Ok(out)
}

fn squarefn(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let rf = r as f64;
    let a1 = Square::new([-0.375, -0.375], 0.25)?;
    let a2 = Square::new([0.375, 0.375], 0.25)?;
    let q = Region::Ball { center: [0.0; 3], radius: rf.sqrt() };
    let n = 4 * lattice_for(rf);
    let k2 = cfg.couplings.get("K2", rf, cfg.eps);
    let mut out = TrialOut::default();
    if cfg.decouple.squarefn_mode == "planes" {
        let mut rng = rng_for(cfg, "planes", r, trial);
        let mut phase = |_: f64, _: f64| Complex64::from_polar(1.0, rng.gen::<f64>() * 2.0 * PI);
        let f1 = FreqDensity::from_fn_on(n, Surface::Plane { slope: [0.0, -0.75] }, &Patch::Square(a1), &mut phase)?;
        let f2 = FreqDensity::from_fn_on(n, Surface::Plane { slope: [0.75, 0.0] }, &Patch::Square(a2), &mut phase)?;
        let mode = SquareFnMode::Planes { delta: 1.0 / rf.sqrt() };
        let rep = square_function_ratio(&f1, &f2, [&a1, &a2], mode, &q, cfg.grid.spacing)?;
        out.push("forward/planes", rep.forward);
        out.push("reverse/planes", rep.reverse);
        return Ok(out);
    }
    let mode = SquareFnMode::Caps { r_scale: rf, k2: k2 as f64, c_pre: 1.0 };
    for kind in cfg.kinds(&[EnsembleKind::RandomPhase, EnsembleKind::Focusing])? {
        let mut rng = rng_for(cfg, kind.name(), r, trial);
        let f1 = sample(kind, rf, n, &Patch::Square(a1), &mut rng)?;
        let f2 = sample(kind, rf, n, &Patch::Square(a2), &mut rng)?;
        let rep = square_function_ratio(&f1, &f2, [&a1, &a2], mode, &q, cfg.grid.spacing)?;
        let (mut fwd, rev) = (rep.forward, rep.reverse);
        if cfg.decouple.classify {
            let k1 = cfg.couplings.get("K1", rf, cfg.eps);
            let nb = classify_narrow_broad(&f1, &f2, [&a1, &a2], &q, &NbParams::new(rf, k1, k2 as f64))?;
            let label = match nb.label {
                NbLabel::Narrow => 0.0,
                NbLabel::Broad => 1.0,
                NbLabel::Unlabeled => -1.0,
            };
            fwd = fwd.with("nb_label", label);
        }
        out.push(format!("forward/{kind}"), fwd);
        out.push(format!("reverse/{kind}"), rev);
    }
    Ok(out)
}

fn broad_values(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let k = cfg.couplings.get("K", r as f64, cfg.eps);
    let a = cfg.broad.a;
    let mut rng = rng_for(cfg, "random", r, trial);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Complex64> {
        (0..k * k).map(|_| Complex64::from_polar((rng.gen::<f64>() * 8.0 - 4.0).exp2(), rng.gen::<f64>() * 2.0 * PI)).collect()
    };
    let (f1, f2) = (draw(&mut rng), draw(&mut rng));
    let mods = |v: &[Complex64]| v.iter().map(|z| z.norm()).collect::<Vec<f64>>();
    let sum: Vec<Complex64> = f1.iter().zip(&f2).map(|(x, y)| x + y).collect();
    let br = |v: Vec<f64>, a: usize| -> Result<f64> { Ok(broad_value(&BroadInstance::new(k, a, v)?, BroadMethod::Exact).value) };
    let inst = BroadInstance::new(k, a, mods(&sum))?;
    let exact = broad_value(&inst, BroadMethod::Exact);
    let greedy = broad_value(&inst, BroadMethod::Greedy);
    let mut out = TrialOut::default();
    out.invariants.push(Check::new(
        "greedy_below_exact",
        greedy.value <= exact.value,
        format!("greedy {} exact {}", greedy.value, exact.value),
    ));
    out.invariants.push(Check::new(
        "witness_is_broad",
        exact.value == 0.0 || exact.witness.is_broad(a),
        format!("{:?}", exact.witness),
    ));
    if a >= 2 {
        let split = br(mods(&f1), a / 2)? + br(mods(&f2), a - a / 2)?;
        out.invariants.push(Check::new(
            "broad_triangle",
            exact.value <= split * (1.0 + 1e-12),
            format!("{} vs {split}", exact.value),
        ));
        let m = mods(&sum);
        let mut gm: f64 = 0.0;
        for p in 0..k * k {
            for q in 0..k * k {
                if p / k != q / k && p % k != q % k {
                    gm = gm.max((m[p] * m[q]).sqrt());
                }
            }
        }
        out.invariants.push(Check::new(
            "broad_bilinear",
            exact.value <= gm * (1.0 + 1e-12),
            format!("{} vs {gm}", exact.value),
        ));
    }
    out.push(
        "greedy/exact",
        RatioReport::new(greedy.value, exact.value, r as f64).with("k", k as f64).with("a", a as f64),
    );
    Ok(out)
}

/// The `9³` grid of `[-R/2, R/2]³`.
pub fn cube_points(r: f64) -> Vec<[f64; 3]> {
    let c = |i: usize| -r / 2.0 + r * i as f64 / 8.0;
    (0..9).flat_map(|i| (0..9).flat_map(move |j| (0..9).map(move |l| [c(i), c(j), c(l)]))).collect()
}

fn broad_decompose(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let rf = r as f64;
    let k = cfg.couplings.get("K", rf, cfg.eps);
    let n = lattice_for(rf).max(2 * k);
    let params = BnParams { k, eps: cfg.eps, c_check: cfg.broad.c_check };
    let whole = Patch::Square(Square::new([0.0, 0.0], 2.0)?);
    let pts = cube_points(rf);
    let mut out = TrialOut::default();
    for kind in cfg.kinds(&[EnsembleKind::RandomPhase, EnsembleKind::Focusing, EnsembleKind::Bush])? {
        let mut rng = rng_for(cfg, kind.name(), r, trial);
        let f = sample(kind, rf, n, &whole, &mut rng)?;
        let terms = broad_narrow_at(&f, params, &pts)?;
        let worst = terms.iter().max_by(|a, b| a.constant.total_cmp(&b.constant)).expect("nonempty grid");
        out.invariants.push(Check::new(
            "broad_narrow_constant",
            worst.constant <= params.c_check,
            format!("{kind}: constant {} at K = {k}", worst.constant),
        ));
        let share = |d: u8| terms.iter().filter(|t| t.dominant == d).count() as f64 / terms.len() as f64;
        let rep = RatioReport::new(worst.ef, worst.single + worst.strip + worst.broad, rf)
            .with("k", k as f64)
            .with("a", params.broadness() as f64)
            .with("single_share", share(1))
            .with("strip_share", share(2))
            .with("broad_share", share(3));
        out.push(kind.name(), rep);
    }
    Ok(out)
}

fn restriction(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let rf = r as f64;
    let n = restriction_lattice(rf);
    let mut quad = BallQuadrature::graded(rf);
    quad.oversample = cfg.grid.oversample;
    let target = Patch::Square(Square::new([0.0, 0.0], 2.0)?);
    let p = cfg.restriction.p;
    let mut out = TrialOut::default();
    for kind in cfg.kinds(&EnsembleKind::ALL)? {
        let mut rng = rng_for(cfg, kind.name(), r, trial);
        let f = sample(kind, rf, n, &target, &mut rng)?;
        match cfg.restriction.broad {
            Some([a, k]) => out.push(format!("broad/{kind}"), broad_restriction_ratio_with(&f, rf, a, k, p, &quad)?),
            None => out.push(format!("restriction/{kind}"), restriction_ratio_with(&f, rf, p, &quad)?),
        }
    }
    Ok(out)
}

/// Generator at `δ` with a size picked from `δ` unless `count` is given.
pub fn family(kind: &str, delta: f64, count: Option<usize>, rng: &mut ChaCha8Rng) -> Result<LineFamily> {
    let inv2 = (1.0 / (delta * delta)).round() as usize;
    match kind {
        "bush" => LineFamily::bush(delta, count.unwrap_or(inv2 / 4)),
        "random" => LineFamily::random(delta, count.unwrap_or(inv2 / 8), rng),
        "parallel" => {
            let m = match count {
                Some(c) => ((c as f64).sqrt() as usize).saturating_sub(1) / 2,
                None => (1.0 / (8.0 * delta)) as usize,
            };
            if count == Some(0) {
                return LineFamily::new(Vec::new(), delta);
            }
            LineFamily::parallel(delta, m)
        }
        other => Err(Error::Config(format!("unknown generator {other:?}"))),
    }
}

fn incidence(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let delta = 1.0 / r as f64;
    let spec = &cfg.incidence;
    let te = TwoEndsParams { eps1: spec.eps1, eps2: spec.eps2, c_y: spec.c_y };
    let mut out = TrialOut::default();
    for gen in cfg.names(&["bush", "parallel", "random"], &["bush", "parallel", "random"])? {
        let mut rng = rng_for(cfg, &gen, r, trial);
        let fam = family(&gen, delta, spec.count, &mut rng)?;
        if cfg.scenario == "prune" {
            prune(&mut out, &gen, &fam, r)?;
            continue;
        }
        for shading in &spec.shadings {
            let y = if shading == "full" { Shading::full(&fam) } else { Shading::random(&fam, 0.5, &mut rng) };
            let series = format!("{gen}/{shading}");
            if cfg.scenario == "twoends" {
                let rep = two_ends_check(&fam, &y, te)?;
                let bound = te.c_y * delta.powf(te.eps2);
                let worst = rep.worst.as_ref().map_or(0.0, |w| w.fraction);
                out.invariants.push(Check::new(
                    "two_ends_consistent",
                    rep.pass == rep.per_line.iter().all(|b| *b) && rep.pass == (worst <= bound),
                    format!("{series}: worst {worst} bound {bound}"),
                ));
                out.push(series, RatioReport::new(worst, bound, r as f64).with("lambda", rep.lambda));
            } else {
                let f = furstenberg_ratio(&fam, &y, cfg.eps, te, spec.c_min)?;
                out.instances.push(Check::new(
                    "furstenberg_c",
                    f.pass,
                    format!("{series} at δ = {delta}: c = {:.4} (c_min {})", f.c, spec.c_min),
                ));
                let rhs = delta.powf(cfg.eps) * f.lambda.powf(f.lambda_exponent) * f.sum;
                out.push(series, RatioReport::new(f.union, rhs, r as f64).with("lambda", f.lambda).with("lines", fam.len() as f64));
            }
        }
    }
    Ok(out)
}

fn prune(out: &mut TrialOut, gen: &str, fam: &LineFamily, r: u64) -> Result<()> {
    let y = Shading::full(fam);
    let mut mus = vec![1.0, 2.0, 4.0, 16.0];
    mus.push(fam.len().max(1) as f64);
    let reps = mus.iter().map(|mu| prune_multiplicity(fam, &y, *mu)).collect::<Result<Vec<_>>>()?;
    let monotone = reps.windows(2).all(|w| {
        w[1].removed_fraction <= w[0].removed_fraction && w[0].kept.iter().all(|v| w[1].kept.binary_search(v).is_ok())
    });
    out.invariants.push(Check::new("prune_monotone", monotone, format!("{gen}: removed {:?}", reps.iter().map(|p| p.removed_fraction).collect::<Vec<_>>())));
    out.invariants.push(Check::new(
        "prune_all_at_max",
        reps.last().is_some_and(|p| p.removed_fraction == 0.0),
        format!("{gen}: μ = {} keeps everything", fam.len()),
    ));
    if gen == "bush" && fam.len() > 16 {
        let raster = Raster::new(fam.delta);
        let origin = raster.voxel_of([0.0; 3]);
        let core_removed = reps[0].kept.binary_search(&origin).is_err();
        out.invariants.push(Check::new("bush_core_removed", core_removed, format!("origin voxel {origin}")));
    }
    for (mu, p) in mus.iter().zip(&reps) {
        let removed = p.removed_fraction * p.union_voxels as f64;
        out.push(format!("{gen}/mu{mu}"), RatioReport::new(removed, p.union_voxels as f64, r as f64).with("mu", *mu));
    }
    Ok(())
}

fn smooth_cap_bump(n: usize, th: Square) -> Result<FreqDensity> {
    FreqDensity::from_fn(n, Surface::Hyperbolic, |x, y| {
        let u = (x - th.center[0]) / (0.5 * th.side);
        let v = (y - th.center[1]) / (0.5 * th.side);
        Complex64::new(bump(u) * bump(v), 0.0)
    })
}

fn wavepacket(cfg: &ExperimentConfig, r: u64, trial: u64) -> Result<TrialOut> {
    let rf = r as f64;
    let s = rf.sqrt() as usize;
    let n = 2 * MIN_Q * s;
    let mut rng = rng_for(cfg, "random_phase", r, trial);
    let whole = Patch::Square(Square::new([0.0, 0.0], 2.0)?);
    let f = sample(EnsembleKind::RandomPhase, rf, n, &whole, &mut rng)?;
    let d = decompose(&f, rf, PacketParams::default())?;
    let g = d.reconstruct()?;
    let err: f64 = g.data.indexed_iter().map(|((a, b), v)| (v - f.get(a, b)).norm_sqr()).sum();
    let residual = (err * f.h() * f.h() / f.l2_sq()).sqrt();
    let sep = d.direction_separation();
    let mut out = TrialOut::default();
    out.invariants.push(Check::new("reconstruction", residual <= 1e-6, format!("R = {r}: residual {residual:.3e}")));
    out.invariants.push(Check::new(
        "direction_separation",
        sep >= 0.5 / rf.sqrt(),
        format!("R = {r}: separation {sep} vs {}", 0.5 / rf.sqrt()),
    ));
    out.push("residual", RatioReport::new(residual, 1e-6, rf));

    let caps = caps_in(rf, &whole)?;
    let th = *caps.choose(&mut rng).expect("caps cover the square");
    let b = smooth_cap_bump(n, th)?;
    let db = decompose(&b, rf, PacketParams::default())?;
    let idx = [((th.center[0] + 1.0) / th.side) as usize, ((th.center[1] + 1.0) / th.side) as usize];
    let cap = db.find_cap(idx).ok_or_else(|| Error::Precondition(format!("cap {idx:?} missing")))?;
    let id = PacketId { cap, v: [0, 0] };
    for x3 in [0.0, rf / 2.0] {
        let (peak, tail) = db.tail_profile(id, x3, 4.0, 16, 64)?;
        out.invariants.push(Check::new(
            "packet_tail",
            tail <= rf.powi(-3) * peak,
            format!("R = {r}, x3 = {x3}: tail {tail:.3e} vs peak {peak:.3e}"),
        ));
        out.push(format!("tail/x3={x3}"), RatioReport::new(tail, rf.powi(-3) * peak, rf));
    }
    Ok(out)
}

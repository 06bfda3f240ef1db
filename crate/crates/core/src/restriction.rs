//! Restriction and broad-restriction ratios over the ball `B_R` centred at
//! the origin.
//!
//! `Ef` is evaluated slice by slice on the torus of period `L = πn`, which
//! must be at least `2R` so that `B_R` does not wrap. Horizontal samples sit
//! at spacing `L/(oversample·n)`; heights use a graded midpoint rule that is
//! fine near `x₃ = 0` and coarse far out.

use crate::broadnarrow::{broad_value, BroadInstance, BroadMethod, CkPieces, EXACT_MAX_K};
use crate::decouple::RatioReport;
use crate::error::{ensure, Error, Result};
use crate::field::fft::SliceEvaluator;
use crate::field::FreqDensity;
use crate::util::{csum, Compensated};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Quadrature for `∫_{B_R}`: horizontal oversampling and `(x₃, weight)`
/// nodes covering `[-R, R]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallQuadrature {
    pub oversample: usize,
    pub nodes: Vec<(f64, f64)>,
}

impl BallQuadrature {
    /// Cells of width `clamp(|x₃|/4, 1/2, R/32)` from the origin outward,
    /// mirrored, with midpoint nodes.
    pub fn graded(r: f64) -> Self {
        Self::graded_with(r, 0.5, 0.25, (r / 32.0).max(0.5))
    }

    pub fn graded_with(r: f64, fine: f64, growth: f64, coarse: f64) -> Self {
        let mut half = Vec::new();
        let mut z = 0.0;
        while z < r {
            let w = (growth * z).clamp(fine, coarse).min(r - z);
            half.push((z + w / 2.0, w));
            z += w;
        }
        let mut nodes: Vec<(f64, f64)> = half.iter().rev().map(|(z, w)| (-z, *w)).collect();
        nodes.extend(half);
        BallQuadrature { oversample: 1, nodes }
    }

    /// The given heights with explicit weights, e.g. for oracle comparisons.
    pub fn from_nodes(nodes: Vec<(f64, f64)>) -> Self {
        BallQuadrature { oversample: 1, nodes }
    }
}

/// Smallest lattice whose torus holds `B_R` and that refines both the
/// `R^{-1/2}`-cap tiling and `C_8`.
pub fn restriction_lattice(r: f64) -> usize {
    let step = (2 * (r.sqrt() - 1e-9).ceil().max(1.0) as usize).max(8);
    let step = step.div_ceil(8) * 8;
    let need = (2.0 * r / PI).ceil() as usize;
    need.div_ceil(step).max(1) * step
}

fn check(f: &FreqDensity, r: f64, p: f64) -> Result<()> {
    ensure(p > 2.0 && p <= 6.0, || Error::InvalidParameter(format!("p = {p} outside (2, 6]")))?;
    ensure(r >= 1.0, || Error::InvalidParameter(format!("scale {r}")))?;
    ensure(PI * f.n as f64 >= 2.0 * r, || {
        Error::GridTooCoarse(format!("torus period {} below the diameter of B_R = {}", PI * f.n as f64, 2.0 * r))
    })
}

/// In-ball torus indices of one slice and the area element.
struct Disk {
    idx: Vec<usize>,
    area: f64,
}

fn disk(m: usize, d: f64, r: f64, z: f64) -> Disk {
    let rho2 = r * r - z * z;
    let pos = |t: usize| if t <= m / 2 { t as f64 * d } else { (t as f64 - m as f64) * d };
    let mut idx = Vec::new();
    if rho2 >= 0.0 {
        for a in 0..m {
            let x = pos(a);
            if x * x > rho2 {
                continue;
            }
            for b in 0..m {
                let y = pos(b);
                if x * x + y * y <= rho2 {
                    idx.push(a * m + b);
                }
            }
        }
    }
    Disk { idx, area: d * d }
}

/// `|G|` on the in-ball points of every slice, one evaluator per density.
fn slice_moduli<'a>(evs: &[SliceEvaluator<'a>], z: f64, disk: &Disk) -> Vec<Vec<f64>> {
    evs.par_iter()
        .map_init(
            || (evs[0].new_buffer(), evs[0].fft.scratch()),
            |(buf, s), ev| {
                ev.eval(z, buf, s);
                disk.idx.iter().map(|&i| buf[i].norm()).collect()
            },
        )
        .collect()
}

/// `(lhs, sup |Ef|, quadrature volume of B_R)` for `∫_{B_R} |Ef|^p`.
fn ball_lp(f: &FreqDensity, r: f64, p: f64, quad: &BallQuadrature) -> (f64, f64, f64) {
    let m = quad.oversample.max(1) * f.n;
    let ev = SliceEvaluator::new(f, [m, m]);
    let d = ev.spacing()[0];
    let evs = [ev];
    let (mut lhs, mut vol) = (Compensated::new(), Compensated::new());
    let mut sup = 0.0f64;
    for &(z, w) in &quad.nodes {
        let dk = disk(m, d, r, z);
        let vals = slice_moduli(&evs, z, &dk).pop().unwrap_or_default();
        sup = vals.iter().cloned().fold(sup, f64::max);
        lhs.add(w * dk.area * csum(vals.iter().map(|v| v.powf(p))));
        vol.add(w * dk.area * dk.idx.len() as f64);
    }
    (lhs.value(), sup, vol.value())
}

/// `∫_{B_R}|Ef|^p / ‖f‖_p^p` with the default graded quadrature.
pub fn restriction_ratio(f: &FreqDensity, r: f64, p: f64) -> Result<RatioReport> {
    restriction_ratio_with(f, r, p, &BallQuadrature::graded(r))
}

/// [`restriction_ratio`] on a given quadrature. Params: `p`, `sup` (largest
/// sampled `|Ef|`) and `volume` (quadrature volume of `B_R`).
pub fn restriction_ratio_with(f: &FreqDensity, r: f64, p: f64, quad: &BallQuadrature) -> Result<RatioReport> {
    check(f, r, p)?;
    let (lhs, sup, vol) = if f.is_zero() { (0.0, 0.0, 0.0) } else { ball_lp(f, r, p, quad) };
    Ok(RatioReport::new(lhs, f.lp_p(p), r).with("p", p).with("sup", sup).with("volume", vol))
}

/// `sup_θ |θ|^{-1/2}‖f 1_θ‖₂` over the `R^{-1/2}`-squares anchored at `(-1,-1)`.
pub fn sup_cap_avg_l2(f: &FreqDensity, r: f64) -> f64 {
    let s = r.sqrt();
    let h = f.h();
    let mut mass: BTreeMap<[i64; 2], f64> = BTreeMap::new();
    for (g, v) in f.nonzeros() {
        let key = [((f.coord(g[0]) + 1.0) * s).floor() as i64, ((f.coord(g[1]) + 1.0) * s).floor() as i64];
        *mass.entry(key).or_default() += v.norm_sqr();
    }
    mass.values().map(|m| (h * h * m * s * s).sqrt()).fold(0.0, f64::max)
}

/// `∫_{B_R}|Br_A Ef|^p / (‖f‖₂² · sup_θ‖f_θ‖^{p-2}_{L²_avg(θ)})` with `F^τ`
/// the sharp restrictions of `f` to the cells of `C_K`.
pub fn broad_restriction_ratio(f: &FreqDensity, r: f64, a: usize, k: usize, p: f64) -> Result<RatioReport> {
    broad_restriction_ratio_with(f, r, a, k, p, &BallQuadrature::graded(r))
}

/// [`broad_restriction_ratio`] on a given quadrature. Params: `p`, `a`, `k`,
/// `max_tau_lhs` (the same integral with `Br_A` replaced by `max_τ|Ef_τ|`)
/// and `gap` (largest exact minus greedy value seen, when `K > 8`).
pub fn broad_restriction_ratio_with(
    f: &FreqDensity,
    r: f64,
    a: usize,
    k: usize,
    p: f64,
    quad: &BallQuadrature,
) -> Result<RatioReport> {
    check(f, r, p)?;
    ensure(a >= 2, || Error::InvalidParameter(format!("broadness A = {a} must be at least 2")))?;
    BroadInstance::new(k, a, vec![0.0; k * k])?;
    let rhs = f.l2_sq() * sup_cap_avg_l2(f, r).powf(p - 2.0);
    let report = |lhs: f64, max_tau: f64, gap: f64| {
        RatioReport::new(lhs, rhs, r)
            .with("p", p)
            .with("a", a as f64)
            .with("k", k as f64)
            .with("max_tau_lhs", max_tau)
            .with("gap", gap)
    };
    if f.is_zero() {
        return Ok(report(0.0, 0.0, 0.0));
    }
    let pieces = CkPieces::new(f, k)?;
    let live: Vec<usize> = (0..k * k).filter(|&i| !pieces.cells[i].is_zero()).collect();
    let m = quad.oversample.max(1) * f.n;
    let evs: Vec<SliceEvaluator> = live.iter().map(|&i| SliceEvaluator::new(&pieces.cells[i], [m, m])).collect();
    let d = evs[0].spacing()[0];
    let method = if k <= EXACT_MAX_K { BroadMethod::Exact } else { BroadMethod::Greedy };

    let (mut lhs, mut max_tau) = (Compensated::new(), Compensated::new());
    let mut gap = 0.0f64;
    for &(z, w) in &quad.nodes {
        let dk = disk(m, d, r, z);
        if dk.idx.is_empty() {
            continue;
        }
        let moduli = slice_moduli(&evs, z, &dk);
        let per_point: Vec<(f64, f64, f64)> = (0..dk.idx.len())
            .into_par_iter()
            .map(|j| {
                let mut values = vec![0.0; k * k];
                for (slot, &cell) in live.iter().enumerate() {
                    values[cell] = moduli[slot][j];
                }
                let top = values.iter().cloned().fold(0.0, f64::max);
                let inst = BroadInstance::new(k, a, values).expect("validated shape");
                let br = broad_value(&inst, method).value;
                let g = if method == BroadMethod::Greedy && j % 4096 == 0 {
                    broad_value(&inst, BroadMethod::Exact).value - br
                } else {
                    0.0
                };
                (br.powf(p), top.powf(p), g)
            })
            .collect();
        lhs.add(w * dk.area * csum(per_point.iter().map(|t| t.0)));
        max_tau.add(w * dk.area * csum(per_point.iter().map(|t| t.1)));
        gap = per_point.iter().map(|t| t.2).fold(gap, f64::max);
    }
    Ok(report(lhs.value(), max_tau.value(), gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decouple::{sample, EnsembleKind};
    use crate::field::{eval_direct, extend, SliceGrid, Surface};
    use crate::geom::{Patch, Square};
    use crate::util::keyed_rng;
    use num_complex::Complex64;
    use proptest::prelude::*;

    const P: f64 = 22.0 / 7.0;
    const ONE: Complex64 = Complex64::new(1.0, 0.0);

    fn ones(n: usize) -> FreqDensity {
        FreqDensity::from_fn(n, Surface::Hyperbolic, |_, _| ONE).unwrap()
    }

    #[test]
    fn lattice_holds_the_ball() {
        for (r, n) in [(64.0, 48), (256.0, 192), (1024.0, 704)] {
            let got = restriction_lattice(r);
            assert_eq!(got, n);
            assert!(PI * got as f64 >= 2.0 * r);
            assert_eq!(got % (2 * r.sqrt() as usize), 0);
            assert_eq!(got % 8, 0);
        }
    }

    #[test]
    fn graded_nodes_cover_the_interval() {
        for r in [16.0, 64.0, 1024.0] {
            let q = BallQuadrature::graded(r);
            let total: f64 = q.nodes.iter().map(|n| n.1).sum();
            assert!((total - 2.0 * r).abs() < 1e-9 * r);
            assert!(q.nodes.windows(2).all(|w| w[0].0 < w[1].0));
            assert!(q.nodes.iter().all(|(z, _)| z.abs() < r));
        }
        assert!(BallQuadrature::graded(1024.0).nodes.len() < 200);
    }

    #[test]
    fn zero_density_gives_zero() {
        let f = FreqDensity::zeros(48, [0, 0], [0, 0], Surface::Hyperbolic).unwrap();
        let rep = restriction_ratio(&f, 64.0, P).unwrap();
        assert_eq!((rep.lhs, rep.ratio), (0.0, 0.0));
        let rep = broad_restriction_ratio(&f, 64.0, 2, 8, P).unwrap();
        assert_eq!((rep.lhs, rep.ratio), (0.0, 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = ones(48);
        assert!(restriction_ratio(&f, 64.0, 2.0).is_err());
        assert!(restriction_ratio(&f, 64.0, 6.5).is_err());
        assert!(matches!(restriction_ratio(&ones(16), 64.0, P), Err(Error::GridTooCoarse(_))));
        assert!(broad_restriction_ratio(&f, 64.0, 1, 8, P).is_err());
        assert!(broad_restriction_ratio(&f, 64.0, 2, 6, P).is_err());
    }

    #[test]
    fn flat_density_matches_direct_quadrature() {
        let (r, n) = (64.0, 48);
        let f = ones(n);
        let quad = BallQuadrature::from_nodes(vec![(-37.0, 2.0), (0.25, 0.5), (11.0, 1.5), (63.0, 1.0)]);
        let rep = restriction_ratio_with(&f, r, P, &quad).unwrap();
        let d = PI;
        let mut oracle = 0.0;
        for &(z, w) in &quad.nodes {
            for a in -(n as i64) / 2..=(n as i64) / 2 {
                for b in -(n as i64) / 2..=(n as i64) / 2 {
                    let (x, y) = (a as f64 * d, b as f64 * d);
                    if x * x + y * y + z * z <= r * r {
                        oracle += w * d * d * eval_direct(&f, [x, y, z]).norm().powf(P);
                    }
                }
            }
        }
        assert!((rep.lhs - oracle).abs() <= 1e-4 * oracle, "{} vs {oracle}", rep.lhs);
        assert!((rep.rhs - 4.0).abs() < 1e-12);
    }

    #[test]
    fn p_monotonicity_after_normalisation() {
        let (r, n) = (64.0, 48);
        let mut rng = keyed_rng(4, "restr", 64, 0);
        let f = sample(EnsembleKind::RandomPhase, r, n, &Patch::Square(Square::new([0.0, 0.0], 2.0).unwrap()), &mut rng)
            .unwrap();
        let quad = BallQuadrature::graded(r);
        let ps = [2.5, 3.0, 22.0 / 7.0, 4.0, 6.0];
        let reps: Vec<RatioReport> = ps.iter().map(|&p| restriction_ratio_with(&f, r, p, &quad).unwrap()).collect();
        let sup = reps[0].params["sup"];
        let vol = reps[0].params["volume"];
        let normalised: Vec<f64> = reps.iter().zip(&ps).map(|(rep, p)| rep.lhs / sup.powf(*p)).collect();
        let averaged: Vec<f64> = reps.iter().zip(&ps).map(|(rep, p)| (rep.lhs / vol).powf(1.0 / p) / sup).collect();
        for w in normalised.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        for w in averaged.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
    }

    #[test]
    fn single_cell_has_no_broad_part() {
        let (r, n) = (64.0, 48);
        let tau = Patch::Square(Square::new([0.125, -0.375], 0.25).unwrap());
        let f = FreqDensity::from_fn_on(n, Surface::Hyperbolic, &tau, |_, _| ONE).unwrap();
        let rep = broad_restriction_ratio(&f, r, 2, 8, P).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.params["max_tau_lhs"] > 0.0);
    }

    #[test]
    fn two_cells_broad_is_pointwise_min() {
        let (r, n) = (64.0, 48);
        let t1 = Patch::Square(Square::new([-0.625, -0.625], 0.25).unwrap());
        let t2 = Patch::Square(Square::new([0.625, 0.375], 0.25).unwrap());
        let f1 = FreqDensity::from_fn_on(n, Surface::Hyperbolic, &t1, |_, _| ONE).unwrap();
        let f2 = FreqDensity::from_fn_on(n, Surface::Hyperbolic, &t2, |x, y| Complex64::from_polar(1.0, 3.0 * x - y))
            .unwrap();
        let f = f1.add(&f2).unwrap();
        let quad = BallQuadrature::from_nodes(vec![(-20.0, 4.0), (0.0, 1.0), (3.0, 1.0), (50.0, 3.0)]);
        let rep = broad_restriction_ratio_with(&f, r, 2, 8, P, &quad).unwrap();

        let grid = SliceGrid { m: [n, n], x3: quad.nodes.iter().map(|t| t.0).collect(), w3: quad.nodes.iter().map(|t| t.1).collect() };
        let e1 = extend(&f1, &grid).unwrap();
        let e2 = extend(&f2, &grid).unwrap();
        let (mut min_sum, mut bilinear) = (0.0, 0.0);
        for ((z, s1, s2), v1) in e1.data.indexed_iter() {
            let x = e1.point(z, s1, s2);
            if x.iter().map(|c| c * c).sum::<f64>() <= r * r {
                let (a, b) = (v1.norm(), e2.data[[z, s1, s2]].norm());
                let wt = e1.w3[z] * e1.dx[0] * e1.dx[1];
                min_sum += wt * a.min(b).powf(P);
                bilinear += wt * (a * b).powf(P / 2.0);
            }
        }
        assert!((rep.lhs - min_sum).abs() <= 1e-9 * min_sum, "{} vs {min_sum}", rep.lhs);
        assert!(rep.lhs <= bilinear * (1.0 + 1e-12));
        assert!(rep.lhs <= rep.params["max_tau_lhs"]);
    }

    #[test]
    fn cap_average_sup_matches_per_cap_scan() {
        let r = 64.0;
        let mut rng = keyed_rng(8, "restr", 64, 1);
        let f = sample(EnsembleKind::RandomPhase, r, 48, &Patch::Square(Square::new([0.5, 0.0], 1.0).unwrap()), &mut rng)
            .unwrap()
            .scaled(Complex64::new(0.5, 0.0));
        let side = 1.0 / 8.0;
        let mut best = 0.0f64;
        for i in 0..16 {
            for j in 0..16 {
                let th = Square::from_corner([-1.0 + i as f64 * side, -1.0 + j as f64 * side], side).unwrap();
                best = best.max(f.cap_avg_l2(&th).unwrap());
            }
        }
        assert!((sup_cap_avg_l2(&f, r) - best).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn ratios_are_scale_invariant(c in 0.01f64..50.0, phase in 0.0f64..6.3, seed in 0u64..100) {
            let (r, n) = (16.0, 16);
            let mut rng = keyed_rng(seed, "restr-h", 16, 0);
            let f = sample(EnsembleKind::RandomPhase, r, n, &Patch::Square(Square::new([0.0, 0.0], 2.0).unwrap()), &mut rng).unwrap();
            let g = f.scaled(Complex64::from_polar(c, phase));
            let a = restriction_ratio(&f, r, P).unwrap();
            let b = restriction_ratio(&g, r, P).unwrap();
            prop_assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio);
            let a = broad_restriction_ratio(&f, r, 2, 4, P).unwrap();
            let b = broad_restriction_ratio(&g, r, 2, 4, P).unwrap();
            prop_assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio);
        }
    }
}

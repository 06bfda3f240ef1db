//! Bilinear `ℓ²(L⁴)` decoupling and its refined, wave-packet form.

use super::{product_integral, split_by, RatioReport};
use crate::error::{ensure, Error, Result};
use crate::field::{extend_block, BlockGrid, FreqDensity, PeriodicBox, Region};
use crate::geom::{is_transverse, Band, Square, P3};
use crate::util::csum;
use crate::wavepacket::{tube_ball_multiplicity, PacketId, Tube, WavePacketDecomp};
use rayon::prelude::*;

/// Periodized box over `x₃ ∈ [-R, R]`, sampled finely enough for every
/// product of the given densities.
pub fn box_for(n: usize, r: f64, fs: &[&FreqDensity]) -> PeriodicBox {
    let spread = fs
        .iter()
        .map(|f| {
            let (lo, hi) = f.phi_range();
            hi - lo
        })
        .fold(0.0f64, f64::max);
    PeriodicBox::new(n, r, 2.0 * spread)
}

/// Sharp restrictions of `f` to the `side`-squares tiling `tau` from its
/// lower corner; empty pieces are dropped.
pub fn cap_pieces(f: &FreqDensity, tau: &Square, side: f64) -> Result<Vec<FreqDensity>> {
    ensure(side > 0.0 && side <= tau.side * (1.0 + 1e-12), || {
        Error::InvalidParameter(format!("cap side {side} for a square of side {}", tau.side))
    })?;
    let lo = tau.lo();
    let k = ((tau.side / side) - 1e-9).ceil() as i64;
    let pieces = split_by(f, |p| {
        tau.contains(p).then(|| {
            let i = (((p[0] - lo[0]) / side).floor() as i64).min(k - 1);
            let j = (((p[1] - lo[1]) / side).floor() as i64).min(k - 1);
            (i, j)
        })
    })?;
    Ok(pieces.into_iter().map(|(_, d)| d).collect())
}

fn check_support(f: &FreqDensity, tau: &Square, which: usize) -> Result<()> {
    for (g, _) in f.nonzeros() {
        let p = [f.coord(g[0]), f.coord(g[1])];
        ensure(tau.contains(p), || Error::Precondition(format!("f{which} has a sample at {p:?} outside its square")))?;
    }
    Ok(())
}

/// `∫|Ef₁Ef₂|² / ∏_j Σ_θ ‖Ef_θ‖²_{L⁴}` over the periodized box, with `θ`
/// the `R^{-1/2}`-caps of `τ_j`.
pub fn bilinear_l2_ratio(
    f1: &FreqDensity,
    f2: &FreqDensity,
    tau1: &Square,
    tau2: &Square,
    r: f64,
    band: Band,
) -> Result<RatioReport> {
    ensure(is_transverse(tau1, tau2, band)?, || {
        Error::Precondition(format!("squares at {:?} and {:?} are not transverse", tau1.center, tau2.center))
    })?;
    ensure(f1.n == f2.n, || Error::GridMismatch(format!("lattices {} and {}", f1.n, f2.n)))?;
    check_support(f1, tau1, 1)?;
    check_support(f2, tau2, 2)?;
    let bx = box_for(f1.n, r, &[f1, f2]);
    let lhs = bx.bilinear(f1, f2)?;
    let side = r.sqrt().recip();
    let mut rhs = 1.0;
    for (f, tau) in [(f1, tau1), (f2, tau2)] {
        let pieces = cap_pieces(f, tau, side.min(tau.side))?;
        let norms = pieces.par_iter().map(|p| bx.l4_sq(p)).collect::<Result<Vec<f64>>>()?;
        rhs *= csum(norms);
    }
    Ok(RatioReport::new(lhs, rhs, r).with("delta", tau1.side.max(tau2.side)))
}

/// One side of a refined-decoupling instance: the packets `𝕋_j` of a
/// decomposition whose parent lives in `tau`.
#[derive(Debug, Clone, Copy)]
pub struct RefinedInput<'a> {
    pub decomp: &'a WavePacketDecomp,
    pub packets: &'a [PacketId],
    pub tau: Square,
}

fn balls_of(x: &Region, r: f64) -> Result<Vec<P3>> {
    let rho = r.sqrt();
    let (centers, radius) = match x {
        Region::Empty => return Ok(Vec::new()),
        Region::Ball { center, radius } => (vec![*center], *radius),
        Region::Balls { centers, radius } => (centers.clone(), *radius),
        _ => return Err(Error::InvalidParameter("refined decoupling takes a union of balls".into())),
    };
    ensure((radius - rho).abs() <= 1e-9 * rho, || {
        Error::Precondition(format!("balls of radius {radius}, expected R^(1/2) = {rho}"))
    })?;
    x.check_disjoint()?;
    Ok(centers)
}

/// `∫_X|Ef₁Ef₂|² / ((M₁M₂)^{1/2} ∏_j (Σ_T ‖Ef_T‖⁴₄)^{1/2})` with
/// `f_j = Σ_{T∈𝕋_j} f_T` and `M_j` the largest number of tubes of `𝕋_j`
/// meeting one ball of `X`. The `X` integral is a Riemann sum of the given
/// spacing over each ball.
pub fn refined_ratio(a: RefinedInput, b: RefinedInput, x: &Region, band: Band, spacing: f64) -> Result<RatioReport> {
    let r = a.decomp.r;
    ensure(b.decomp.r == r && b.decomp.n == a.decomp.n, || {
        Error::GridMismatch("decompositions at different scales or lattices".into())
    })?;
    ensure(is_transverse(&a.tau, &b.tau, band)?, || Error::Precondition("parent squares are not transverse".into()))?;
    let centers = balls_of(x, r)?;
    let rho = r.sqrt();

    let mut fields = Vec::with_capacity(2);
    let mut tubes: Vec<Vec<Tube>> = Vec::with_capacity(2);
    let mut l4: Vec<f64> = Vec::with_capacity(2);
    for side in [&a, &b] {
        let d = side.decomp;
        for id in side.packets {
            ensure(id.cap < d.cap_count(), || Error::InvalidParameter(format!("packet {id:?} out of range")))?;
            // the smooth cap partition reaches one cap beyond the parent
            let cap = d.cap_square(id.cap);
            let reach = side.tau.dilate(1.0 + 2.0 * cap.side / side.tau.side);
            ensure(cap.is_inside(&reach), || {
                Error::Precondition(format!("packet cap {:?} outside its parent square", d.cap_index(id.cap)))
            })?;
        }
        let packets = side.packets.par_iter().map(|id| d.packet(*id)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&FreqDensity> = packets.iter().collect();
        let bx = box_for(d.n, r, &refs);
        let fourth = packets.par_iter().map(|p| bx.l4_fourth(p)).collect::<Result<Vec<f64>>>()?;
        l4.push(csum(fourth));
        fields.push(FreqDensity::sum(&packets)?);
        tubes.push(side.packets.iter().map(|id| d.tube(*id)).collect());
    }

    let mut lhs = 0.0;
    let mut m = [0usize; 2];
    for c in &centers {
        for j in 0..2 {
            m[j] = m[j].max(tube_ball_multiplicity(&tubes[j], *c, rho)?);
        }
        if let (Some(f1), Some(f2)) = (&fields[0], &fields[1]) {
            let grid = BlockGrid::covering(*c, rho, spacing)?;
            let e1 = extend_block(f1, &grid)?;
            let e2 = extend_block(f2, &grid)?;
            lhs += product_integral(&e1, &e2, &Region::Ball { center: *c, radius: rho })?;
        }
    }
    let rhs = ((m[0] * m[1]) as f64).sqrt() * l4[0].sqrt() * l4[1].sqrt();
    Ok(RatioReport::new(lhs, rhs, r)
        .with("m1", m[0] as f64)
        .with("m2", m[1] as f64)
        .with("packets1", a.packets.len() as f64)
        .with("packets2", b.packets.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decouple::{bush_density, caps_in, lattice_for, sample, EnsembleKind};
    use crate::field::Surface;
    use crate::geom::Patch;
    use crate::util::keyed_rng;
    use crate::wavepacket::{decompose, PacketParams};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn taus() -> (Square, Square) {
        (Square::new([-0.5, -0.5], 0.5).unwrap(), Square::new([0.5, 0.5], 0.5).unwrap())
    }

    fn pair(kind: EnsembleKind, r: f64, seed: u64) -> (FreqDensity, FreqDensity) {
        let (t1, t2) = taus();
        let n = lattice_for(r);
        let mut rng = keyed_rng(seed, "test", r as u64, 0);
        (
            sample(kind, r, n, &Patch::Square(t1), &mut rng).unwrap(),
            sample(kind, r, n, &Patch::Square(t2), &mut rng).unwrap(),
        )
    }

    #[test]
    fn single_caps_obey_cauchy_schwarz() {
        for seed in 0..4 {
            let (f1, f2) = pair(EnsembleKind::SingleCap, 64.0, seed);
            let (t1, t2) = taus();
            let rep = bilinear_l2_ratio(&f1, &f2, &t1, &t2, 64.0, Band::default()).unwrap();
            assert!(!rep.degenerate);
            assert!(rep.ratio <= 1.0 + 1e-12, "{}", rep.ratio);
        }
    }

    #[test]
    fn zero_side_is_degenerate() {
        let (f1, _) = pair(EnsembleKind::RandomPhase, 16.0, 1);
        let (t1, t2) = taus();
        let z = FreqDensity::zeros(f1.n, [0, 0], [0, 0], Surface::Hyperbolic).unwrap();
        let rep = bilinear_l2_ratio(&f1, &z, &t1, &t2, 16.0, Band::default()).unwrap();
        assert!(rep.degenerate && rep.lhs == 0.0 && rep.rhs == 0.0);
    }

    #[test]
    fn preconditions_enforced() {
        let (f1, f2) = pair(EnsembleKind::RandomPhase, 16.0, 2);
        let (t1, t2) = taus();
        let near = Square::new([-0.25, -0.5], 0.5).unwrap();
        assert!(matches!(
            bilinear_l2_ratio(&f1, &f2, &t1, &near, 16.0, Band::default()),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(bilinear_l2_ratio(&f2, &f1, &t1, &t2, 16.0, Band::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn cap_pieces_partition_the_density() {
        let (f1, _) = pair(EnsembleKind::RandomPhase, 64.0, 3);
        let (t1, _) = taus();
        let pieces = cap_pieces(&f1, &t1, 0.125).unwrap();
        assert_eq!(pieces.len(), 16);
        let total: f64 = pieces.iter().map(|p| p.l2_sq()).sum();
        assert!((total - f1.l2_sq()).abs() < 1e-12 * total);
        assert!(pieces.iter().all(|p| p.nonzeros().len() == 4));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn ratio_is_homogeneous(seed in 0u64..1000, c1 in 0.1f64..10.0, c2 in 0.1f64..10.0, ph in 0.0f64..6.28) {
            let (f1, f2) = pair(EnsembleKind::RandomPhase, 16.0, seed);
            let (t1, t2) = taus();
            let base = bilinear_l2_ratio(&f1, &f2, &t1, &t2, 16.0, Band::default()).unwrap();
            let g1 = f1.scaled(Complex64::from_polar(c1, ph));
            let g2 = f2.scaled(Complex64::new(-c2, 0.0));
            let other = bilinear_l2_ratio(&g1, &g2, &t1, &t2, 16.0, Band::default()).unwrap();
            prop_assert!((base.ratio - other.ratio).abs() <= 1e-10 * base.ratio);
        }

        #[test]
        fn ratio_is_modulation_invariant(seed in 0u64..1000, a in -40.0f64..40.0, b in -40.0f64..40.0) {
            let (f1, f2) = pair(EnsembleKind::RandomPhase, 16.0, seed);
            let (t1, t2) = taus();
            let base = bilinear_l2_ratio(&f1, &f2, &t1, &t2, 16.0, Band::default()).unwrap();
            let other = bilinear_l2_ratio(&f1.modulate(a, b), &f2.modulate(a, b), &t1, &t2, 16.0, Band::default()).unwrap();
            prop_assert!((base.ratio - other.ratio).abs() <= 1e-10 * base.ratio);
        }
    }

    #[test]
    fn doubling_tau_costs_at_most_k4() {
        let r = 256.0;
        let n = lattice_for(r);
        let small = (Square::new([-0.5, -0.5], 0.25).unwrap(), Square::new([0.5, 0.5], 0.25).unwrap());
        let big = (small.0.dilate(2.0), small.1.dilate(2.0));
        let max_over = |t: &(Square, Square)| {
            (0..3u64)
                .map(|s| {
                    let mut rng = keyed_rng(s, "mono", 256, 0);
                    let f1 = sample(EnsembleKind::RandomPhase, r, n, &Patch::Square(t.0), &mut rng).unwrap();
                    let f2 = sample(EnsembleKind::RandomPhase, r, n, &Patch::Square(t.1), &mut rng).unwrap();
                    bilinear_l2_ratio(&f1, &f2, &t.0, &t.1, r, Band::default()).unwrap().ratio
                })
                .fold(0.0f64, f64::max)
        };
        assert!(max_over(&big) <= 16.0 * max_over(&small));
    }

    fn refined_setup(r: f64, caps1: usize, caps2: usize) -> (WavePacketDecomp, Vec<PacketId>, WavePacketDecomp, Vec<PacketId>) {
        let n = 2 * r.sqrt() as usize * 16;
        let (t1, t2) = taus();
        let mk = |t: Square, k: usize| {
            let caps = caps_in(r, &Patch::Square(t)).unwrap();
            let f = bush_density(n, Surface::Hyperbolic, &caps[..k], [0.0; 3]).unwrap();
            let d = decompose(&f, r, PacketParams::default()).unwrap();
            let ids: Vec<PacketId> = caps[..k]
                .iter()
                .map(|c| {
                    let idx = [((c.center[0] + 1.0) / c.side) as usize, ((c.center[1] + 1.0) / c.side) as usize];
                    PacketId { cap: d.find_cap(idx).unwrap(), v: [0, 0] }
                })
                .collect();
            (d, ids)
        };
        let (d1, i1) = mk(t1, caps1);
        let (d2, i2) = mk(t2, caps2);
        (d1, i1, d2, i2)
    }

    #[test]
    fn refined_single_tubes() {
        let r = 16.0;
        let (d1, i1, d2, i2) = refined_setup(r, 1, 1);
        let (t1, t2) = taus();
        let x = Region::Ball { center: [0.0; 3], radius: 4.0 };
        let rep = refined_ratio(
            RefinedInput { decomp: &d1, packets: &i1, tau: t1 },
            RefinedInput { decomp: &d2, packets: &i2, tau: t2 },
            &x,
            Band::default(),
            1.0,
        )
        .unwrap();
        assert_eq!((rep.params["m1"], rep.params["m2"]), (1.0, 1.0));
        assert!(rep.ratio > 0.0 && rep.ratio <= 10.0, "{}", rep.ratio);

        let empty = refined_ratio(
            RefinedInput { decomp: &d1, packets: &i1, tau: t1 },
            RefinedInput { decomp: &d2, packets: &i2, tau: t2 },
            &Region::Empty,
            Band::default(),
            1.0,
        )
        .unwrap();
        assert_eq!(empty.lhs, 0.0);

        let overlap = Region::Balls { centers: vec![[0.0; 3], [1.0, 0.0, 0.0]], radius: 4.0 };
        assert!(refined_ratio(
            RefinedInput { decomp: &d1, packets: &i1, tau: t1 },
            RefinedInput { decomp: &d2, packets: &i2, tau: t2 },
            &overlap,
            Band::default(),
            1.0,
        )
        .is_err());
    }

    #[test]
    fn refined_bush_counts_multiplicity() {
        let r = 16.0;
        let (d1, i1, d2, i2) = refined_setup(r, 4, 3);
        let (t1, t2) = taus();
        let rep = refined_ratio(
            RefinedInput { decomp: &d1, packets: &i1, tau: t1 },
            RefinedInput { decomp: &d2, packets: &i2, tau: t2 },
            &Region::Ball { center: [0.0; 3], radius: 4.0 },
            Band::default(),
            1.0,
        )
        .unwrap();
        assert_eq!((rep.params["m1"], rep.params["m2"]), (4.0, 3.0));
        assert!(rep.ratio > 0.0 && rep.ratio.is_finite());
    }
}

//! Bilinear restriction in the plane for densities on thin neighborhoods of
//! transverse curves.
//!
//! A density `F` on the lattice of spacing `h = 2/n` defines the periodic
//! function `f(x) = Σ h² F_a e^{i x·ξ_a}` of period `L = πn`, so
//! `∫_{T²}|f₁f₂|² = L² Σ_k |Σ_{a+b=k} c₁_a c₂_b|²` exactly (Plancherel).

use super::RatioReport;
use crate::error::{ensure, Error, Result};
use crate::geom::P2;
use crate::util::csum;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Curve2 {
    Segment { a: P2, b: P2 },
    /// Arc of a circle between two angles (radians).
    Arc { center: P2, radius: f64, angles: [f64; 2] },
}

impl Curve2 {
    /// Point at parameter `t ∈ [0, 1]`.
    pub fn point(&self, t: f64) -> P2 {
        match *self {
            Curve2::Segment { a, b } => [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            Curve2::Arc { center, radius, angles } => {
                let th = angles[0] + t * (angles[1] - angles[0]);
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
        }
    }

    /// Unit normal at parameter `t`.
    pub fn normal(&self, t: f64) -> P2 {
        match *self {
            Curve2::Segment { a, b } => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let l = d[0].hypot(d[1]);
                [-d[1] / l, d[0] / l]
            }
            Curve2::Arc { angles, .. } => {
                let th = angles[0] + t * (angles[1] - angles[0]);
                [th.cos(), th.sin()]
            }
        }
    }

    pub fn distance(&self, p: P2) -> f64 {
        match *self {
            Curve2::Segment { a, b } => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
                let q = self.point(t);
                (p[0] - q[0]).hypot(p[1] - q[1])
            }
            Curve2::Arc { center, radius, angles } => {
                let (lo, hi) = (angles[0].min(angles[1]), angles[0].max(angles[1]));
                let th = (p[1] - center[1]).atan2(p[0] - center[0]);
                let wrapped = (lo..=hi).contains(&th) || (lo..=hi).contains(&(th + 2.0 * std::f64::consts::PI));
                if wrapped {
                    ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).abs()
                } else {
                    let e0 = self.point(0.0);
                    let e1 = self.point(1.0);
                    (p[0] - e0[0]).hypot(p[1] - e0[1]).min((p[0] - e1[0]).hypot(p[1] - e1[1]))
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Curve2::Segment { a, b } => a != b,
            Curve2::Arc { radius, angles, .. } => radius > 0.0 && angles[0] != angles[1],
        };
        ensure(ok, || Error::Degenerate(format!("curve {self:?}")))
    }
}

/// Smallest `|sin|` of the angle between normals of `c1` and `c2`, probed at
/// 65 parameters on each curve.
pub fn min_normal_sin(c1: &Curve2, c2: &Curve2) -> f64 {
    const PROBES: usize = 65;
    let ts: Vec<f64> = (0..PROBES).map(|k| k as f64 / (PROBES - 1) as f64).collect();
    ts.iter()
        .flat_map(|&t| ts.iter().map(move |&u| (t, u)))
        .map(|(t, u)| {
            let (a, b) = (c1.normal(t), c2.normal(u));
            (a[0] * b[1] - a[1] * b[0]).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_curve<R: Rng>(rng: &mut R) -> Curve2 {
    let c = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
    let th = rng.gen_range(0.0..2.0 * PI);
    let len = rng.gen_range(0.2..0.6);
    if rng.gen::<bool>() {
        let d = [0.5 * len * th.cos(), 0.5 * len * th.sin()];
        Curve2::Segment { a: [c[0] - d[0], c[1] - d[1]], b: [c[0] + d[0], c[1] + d[1]] }
    } else {
        let radius = rng.gen_range(0.3..0.8);
        let span = (len / radius).min(0.6);
        let center = [c[0] - radius * th.cos(), c[1] - radius * th.sin()];
        Curve2::Arc { center, radius, angles: [th - span / 2.0, th + span / 2.0] }
    }
}

/// A random pair of segments or arcs inside `[-0.95, 0.95]²` whose normals
/// are `min_sin`-transverse, by rejection.
pub fn random_transverse_pair<R: Rng>(rng: &mut R, min_sin: f64) -> Result<(Curve2, Curve2)> {
    ensure((0.0..1.0).contains(&min_sin), || Error::InvalidParameter(format!("min_sin {min_sin}")))?;
    let inside = |c: &Curve2| (0..=16).all(|k| c.point(k as f64 / 16.0).iter().all(|x| x.abs() <= 0.95));
    for _ in 0..10_000 {
        let (a, b) = (random_curve(rng), random_curve(rng));
        if inside(&a) && inside(&b) && min_normal_sin(&a, &b) >= min_sin {
            return Ok((a, b));
        }
    }
    Err(Error::Precondition(format!("no transverse pair found for min_sin {min_sin}")))
}

/// Sparse density on the midpoint lattice of `[-1,1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density2 {
    pub n: usize,
    pub points: Vec<([usize; 2], Complex64)>,
}

impl Density2 {
    pub fn h(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.h()
    }

    pub fn point(&self, g: [usize; 2]) -> P2 {
        [self.coord(g[0]), self.coord(g[1])]
    }

    /// Samples within `delta` of `curve`, valued by `f`.
    pub fn on_neighborhood(n: usize, curve: &Curve2, delta: f64, mut f: impl FnMut(P2) -> Complex64) -> Result<Density2> {
        curve.validate()?;
        ensure(delta > 0.0 && n > 0, || Error::InvalidParameter(format!("delta {delta}, lattice {n}")))?;
        let mut d = Density2 { n, points: Vec::new() };
        for i in 0..n {
            for j in 0..n {
                let p = d.point([i, j]);
                if curve.distance(p) <= delta {
                    d.points.push(([i, j], f(p)));
                }
            }
        }
        Ok(d)
    }

    pub fn l2_sq(&self) -> f64 {
        csum(self.points.iter().map(|(_, v)| v.norm_sqr()))
    }
}

/// `Σ_k |(c₁ * c₂)(k)|²` for sparse coefficient lists.
fn conv_energy(a: &[([usize; 2], Complex64)], b: &[([usize; 2], Complex64)]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let bbox = |p: &[([usize; 2], Complex64)]| {
        let lo = [0, 1].map(|i| p.iter().map(|(g, _)| g[i]).min().unwrap());
        let hi = [0, 1].map(|i| p.iter().map(|(g, _)| g[i]).max().unwrap());
        (lo, hi)
    };
    let (alo, ahi) = bbox(a);
    let (blo, bhi) = bbox(b);
    let mut acc = Array2::<Complex64>::zeros((ahi[0] - alo[0] + bhi[0] - blo[0] + 1, ahi[1] - alo[1] + bhi[1] - blo[1] + 1));
    for (ga, va) in a {
        for (gb, vb) in b {
            acc[[ga[0] - alo[0] + gb[0] - blo[0], ga[1] - alo[1] + gb[1] - blo[1]]] += va * vb;
        }
    }
    csum(acc.iter().map(|v| v.norm_sqr()))
}

fn squares_of(f: &Density2, delta: f64) -> Vec<Vec<([usize; 2], Complex64)>> {
    let mut groups: BTreeMap<[i64; 2], Vec<([usize; 2], Complex64)>> = BTreeMap::new();
    for (g, v) in &f.points {
        let p = f.point(*g);
        let key = [((p[0] + 1.0) / delta).floor() as i64, ((p[1] + 1.0) / delta).floor() as i64];
        groups.entry(key).or_default().push((*g, *v));
    }
    groups.into_values().collect()
}

/// `∫|f₁f₂|² / Σ_{s₁,s₂} ∫|P_{s₁}f₁ P_{s₂}f₂|²` on the torus, with `s` the
/// aligned `Δ`-squares. The curve normals must satisfy
/// `|n₁(t) × n₂(u)| ≥ min_sin` for all parameters.
pub fn bilinear_restriction_2d(
    f1: &Density2,
    f2: &Density2,
    curves: [&Curve2; 2],
    delta: f64,
    min_sin: f64,
) -> Result<RatioReport> {
    ensure(f1.n == f2.n, || Error::GridMismatch(format!("lattices {} and {}", f1.n, f2.n)))?;
    ensure(delta > 0.0, || Error::InvalidParameter(format!("delta {delta}")))?;
    for c in curves {
        c.validate()?;
    }
    let worst = min_normal_sin(curves[0], curves[1]);
    ensure(worst >= min_sin, || {
        Error::Precondition(format!("curve normals not transverse: min |sin| = {worst:.3} < {min_sin}"))
    })?;
    for (j, (f, c)) in [(f1, curves[0]), (f2, curves[1])].into_iter().enumerate() {
        for (g, _) in &f.points {
            let p = f.point(*g);
            ensure(c.distance(p) <= delta * (1.0 + 1e-12), || {
                Error::Precondition(format!("F{} has a sample at {p:?} outside the {delta}-neighborhood", j + 1))
            })?;
        }
    }

    let h2 = f1.h() * f1.h();
    let l = std::f64::consts::PI * f1.n as f64;
    let scale = l * l * h2 * h2 * h2 * h2;
    let lhs = scale * conv_energy(&f1.points, &f2.points);
    let s1 = squares_of(f1, delta);
    let s2 = squares_of(f2, delta);
    let per: Vec<f64> = s1.par_iter().map(|a| csum(s2.iter().map(|b| conv_energy(a, b)))).collect();
    let rhs = scale * csum(per);
    Ok(RatioReport::new(lhs, rhs, 1.0 / delta)
        .with("delta", delta)
        .with("squares1", s1.len() as f64)
        .with("squares2", s2.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::keyed_rng;
    use rand::Rng;

    fn brute_torus(f1: &Density2, f2: &Density2, m: usize) -> f64 {
        // Riemann sum over one period on an m x m grid; exact when m exceeds
        // the frequency span of |f₁f₂|²
        let l = std::f64::consts::PI * f1.n as f64;
        let h2 = f1.h() * f1.h();
        let eval = |f: &Density2, x: P2| -> Complex64 {
            f.points.iter().map(|(g, v)| {
                let p = f.point(*g);
                v * Complex64::from_polar(h2, x[0] * p[0] + x[1] * p[1])
            }).sum()
        };
        let d = l / m as f64;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = [i as f64 * d, j as f64 * d];
                acc += (eval(f1, x) * eval(f2, x)).norm_sqr();
            }
        }
        acc * d * d
    }

    fn random_on(n: usize, c: &Curve2, delta: f64, seed: u64) -> Density2 {
        let mut rng = keyed_rng(seed, "planar", n as u64, 0);
        Density2::on_neighborhood(n, c, delta, |_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).unwrap()
    }

    #[test]
    fn plancherel_matches_riemann_sum() {
        let c1 = Curve2::Segment { a: [-0.6, -0.2], b: [-0.1, -0.2] };
        let c2 = Curve2::Segment { a: [0.3, 0.1], b: [0.3, 0.6] };
        let f1 = random_on(16, &c1, 0.15, 1);
        let f2 = random_on(16, &c2, 0.15, 2);
        let rep = bilinear_restriction_2d(&f1, &f2, [&c1, &c2], 0.15, 0.5).unwrap();
        let brute = brute_torus(&f1, &f2, 32);
        assert!((rep.lhs - brute).abs() < 1e-9 * brute, "{} vs {brute}", rep.lhs);
    }

    #[test]
    fn one_square_each_is_exact() {
        let c1 = Curve2::Segment { a: [-0.5, 0.0], b: [-0.45, 0.0] };
        let c2 = Curve2::Segment { a: [0.5, -0.03], b: [0.5, 0.0] };
        let f1 = Density2 { n: 64, points: vec![([16, 32], Complex64::new(1.0, 0.5)), ([17, 32], Complex64::new(-0.3, 0.0))] };
        let f2 = Density2 { n: 64, points: vec![([48, 31], Complex64::new(0.2, 1.0))] };
        let rep = bilinear_restriction_2d(&f1, &f2, [&c1, &c2], 0.125, 0.5).unwrap();
        assert_eq!((rep.params["squares1"], rep.params["squares2"]), (1.0, 1.0));
        assert!((rep.ratio - 1.0).abs() < 1e-14);
    }

    #[test]
    fn transverse_segments_bounded() {
        let c1 = Curve2::Segment { a: [-0.8, -0.5], b: [0.2, -0.5] };
        let c2 = Curve2::Segment { a: [0.5, -0.2], b: [0.5, 0.8] };
        let delta = 1.0 / 64.0;
        let n = 256;
        let f1 = random_on(n, &c1, delta, 3);
        let f2 = random_on(n, &c2, delta, 4);
        let rep = bilinear_restriction_2d(&f1, &f2, [&c1, &c2], delta, 0.5).unwrap();
        assert!(rep.ratio > 0.1 && rep.ratio <= 10.0, "{}", rep.ratio);
    }

    #[test]
    fn parallel_normals_rejected() {
        let c1 = Curve2::Segment { a: [-0.8, -0.5], b: [0.2, -0.5] };
        let c2 = Curve2::Segment { a: [-0.8, 0.5], b: [0.2, 0.45] };
        let f = random_on(32, &c1, 0.1, 1);
        let g = random_on(32, &c2, 0.1, 2);
        assert!(matches!(bilinear_restriction_2d(&f, &g, [&c1, &c2], 0.1, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn random_pairs_are_transverse_and_inside() {
        let mut rng = keyed_rng(9, "pair", 0, 0);
        for _ in 0..50 {
            let (a, b) = random_transverse_pair(&mut rng, 0.5).unwrap();
            assert!(min_normal_sin(&a, &b) >= 0.5);
            for c in [a, b] {
                assert!(c.point(0.5).iter().all(|x| x.abs() <= 0.95));
            }
        }
        assert!(random_transverse_pair(&mut rng, 1.0).is_err());
    }

    #[test]
    fn arc_distance() {
        let c = Curve2::Arc { center: [0.0, 0.0], radius: 0.5, angles: [0.0, 1.0] };
        assert!(c.distance([0.6 * 0.5f64.cos(), 0.6 * 0.5f64.sin()]) - 0.1 < 1e-12);
        assert!((c.distance([0.5, -0.2]) - 0.2).abs() < 1e-12);
        assert!((c.normal(0.0)[0] - 1.0).abs() < 1e-15);
    }
}

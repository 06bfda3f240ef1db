//! Direction-separated line families in `R³` with shadings by `δ`-balls:
//! two-ends scans, union volumes by rasterization, the Furstenberg-type
//! ratio and multiplicity pruning.
//!
//! A ball lying inside `N_δ(ℓ)` has its center on `ℓ`, so a shading is
//! stored as centers on the line. Along a line, the cross-section of a
//! union of such balls at parameter `t` is a disk of radius
//! `sqrt(δ² - d(t)²)` with `d(t)` the distance to the nearest center, which
//! makes per-line volumes exact one-dimensional integrals.

use crate::error::{ensure, Error, Result};
use crate::geom::P3;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: P3) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(p: P3, t: f64, v: P3) -> P3 {
    [p[0] + t * v[0], p[1] + t * v[1], p[2] + t * v[2]]
}

/// A line `{p + t v}` with `v` a unit vector and `p` the point closest to
/// the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Line {
    pub point: P3,
    pub dir: P3,
}

impl Line {
    pub fn new(through: P3, dir: P3) -> Result<Self> {
        let n = norm(dir);
        ensure(n > 0.0 && n.is_finite(), || Error::Degenerate("zero line direction".into()))?;
        let v = [dir[0] / n, dir[1] / n, dir[2] / n];
        let t = dot(through, v);
        Ok(Line { point: axpy(through, -t, v), dir: v })
    }

    pub fn at(&self, t: f64) -> P3 {
        axpy(self.point, t, self.dir)
    }

    /// Parameter of the orthogonal projection of `x`.
    pub fn param(&self, x: P3) -> f64 {
        dot([x[0] - self.point[0], x[1] - self.point[1], x[2] - self.point[2]], self.dir)
    }

    pub fn distance(&self, x: P3) -> f64 {
        let q = self.at(self.param(x));
        norm([x[0] - q[0], x[1] - q[1], x[2] - q[2]])
    }

    /// Distance from the origin.
    pub fn offset(&self) -> f64 {
        norm(self.point)
    }

    /// `|N_δ(ℓ) ∩ B³(0,1)|`: cross-sections are lenses of a `δ`-disk and the
    /// ball's disk of radius `sqrt(1 - t²)` at distance `offset`.
    pub fn neighborhood_volume(&self, delta: f64) -> f64 {
        let d0 = self.offset();
        let steps = 4096;
        // midpoint rule in t = sin(u) to tame the square-root endpoints
        let du = PI / steps as f64;
        (0..steps)
            .map(|k| {
                let u = -PI / 2.0 + (k as f64 + 0.5) * du;
                let t = u.sin();
                lens_area(delta, (1.0 - t * t).max(0.0).sqrt(), d0) * u.cos() * du
            })
            .sum()
    }

    fn rotated(&self, m: &[[f64; 3]; 3]) -> Line {
        let ap = |x: P3| -> P3 { [dot(m[0], x), dot(m[1], x), dot(m[2], x)] };
        Line { point: ap(self.point), dir: ap(self.dir) }
    }
}

/// Area of the intersection of disks of radii `r1`, `r2` at distance `d`.
pub fn lens_area(r1: f64, r2: f64, d: f64) -> f64 {
    if r1 <= 0.0 || r2 <= 0.0 {
        return 0.0;
    }
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0).sqrt();
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k
}

/// Distance between directions, identifying `v` with `-v`.
pub fn direction_distance(u: P3, v: P3) -> f64 {
    let a = norm([u[0] - v[0], u[1] - v[1], u[2] - v[2]]);
    let b = norm([u[0] + v[0], u[1] + v[1], u[2] + v[2]]);
    a.min(b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFamily {
    pub lines: Vec<Line>,
    pub delta: f64,
}

impl LineFamily {
    pub fn new(lines: Vec<Line>, delta: f64) -> Result<Self> {
        ensure(delta > 0.0 && delta < 1.0, || Error::InvalidParameter(format!("δ = {delta}")))?;
        let fam = LineFamily { lines, delta };
        fam.validate()?;
        Ok(fam)
    }

    /// Directions pairwise at least `δ` apart.
    pub fn validate(&self) -> Result<()> {
        let bad = (0..self.lines.len()).into_par_iter().find_any(|&i| {
            let u = self.lines[i].dir;
            self.lines[i + 1..].iter().any(|l| direction_distance(u, l.dir) < self.delta * (1.0 - 1e-12))
        });
        match bad {
            Some(i) => Err(Error::Precondition(format!("line {i} is not δ-separated in direction"))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Largest number of directions in a `δ`-ball centred at a direction.
    pub fn max_directions_per_ball(&self) -> usize {
        (0..self.lines.len())
            .into_par_iter()
            .map(|i| {
                let u = self.lines[i].dir;
                self.lines.iter().filter(|l| direction_distance(u, l.dir) <= self.delta).count()
            })
            .max()
            .unwrap_or(0)
    }

    /// Apply a rotation (an orthogonal matrix) to every line.
    pub fn rotated(&self, m: &[[f64; 3]; 3]) -> LineFamily {
        LineFamily { lines: self.lines.iter().map(|l| l.rotated(m)).collect(), delta: self.delta }
    }

    /// `⌈count⌉` directions in rings around the north pole with angular
    /// spacing slightly above `δ`, truncated to `count`.
    pub fn ring_directions(delta: f64, count: usize) -> Vec<P3> {
        let step = 1.1 * delta;
        let mut out = vec![[0.0, 0.0, 1.0]];
        let mut ring = 1;
        while out.len() < count {
            let phi = ring as f64 * step;
            ensure_cap(phi);
            let m = ((2.0 * PI * phi.sin()) / step).floor() as usize;
            for k in 0..m {
                let a = 2.0 * PI * k as f64 / m as f64 + 0.5 * ring as f64;
                out.push([phi.sin() * a.cos(), phi.sin() * a.sin(), phi.cos()]);
            }
            ring += 1;
        }
        out.truncate(count);
        out
    }

    /// Lines through the origin in `count` separated directions.
    pub fn bush(delta: f64, count: usize) -> Result<Self> {
        let lines = Self::ring_directions(delta, count).into_iter().map(|v| Line::new([0.0; 3], v)).collect::<Result<_>>()?;
        LineFamily::new(lines, delta)
    }

    /// Lines meeting the stem segment `{(s, 0, 0): |s| ≤ 1/2}` at evenly
    /// spaced points, one separated direction each.
    pub fn brush(delta: f64, count: usize) -> Result<Self> {
        let dirs = Self::ring_directions(delta, count);
        let n = dirs.len().max(1);
        let lines = dirs
            .into_iter()
            .enumerate()
            .map(|(k, v)| {
                let s = if n == 1 { 0.0 } else { -0.5 + k as f64 / (n - 1) as f64 };
                Line::new([s, 0.0, 0.0], v)
            })
            .collect::<Result<_>>()?;
        LineFamily::new(lines, delta)
    }

    /// A `(2m+1)²` grid of nearly vertical lines: base point `(i, j)·4δ`,
    /// tilt `(i, j)·1.1δ`, so tubes stay disjoint inside the unit ball.
    pub fn parallel(delta: f64, m: usize) -> Result<Self> {
        let s = 4.0 * delta;
        let tilt = 1.1 * delta;
        let mi = m as i64;
        let mut lines = Vec::new();
        for i in -mi..=mi {
            for j in -mi..=mi {
                lines.push(Line::new([i as f64 * s, j as f64 * s, 0.0], [i as f64 * tilt, j as f64 * tilt, 1.0])?);
            }
        }
        LineFamily::new(lines, delta)
    }

    /// Random directions in the cap of polar angle `≤ π/3` (rejection
    /// sampled for separation) through random points of `B(0, 1/2)`.
    pub fn random<R: Rng>(delta: f64, count: usize, rng: &mut R) -> Result<Self> {
        let mut lines: Vec<Line> = Vec::with_capacity(count);
        let mut tries = 0usize;
        while lines.len() < count {
            tries += 1;
            ensure(tries < 200 * count + 1000, || {
                Error::InvalidParameter(format!("cannot place {count} separated directions at δ = {delta}"))
            })?;
            let z: f64 = rng.gen_range(0.5..1.0);
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            let v = [r * a.cos(), r * a.sin(), z];
            if lines.iter().any(|l| direction_distance(l.dir, v) < delta) {
                continue;
            }
            let p = loop {
                let q: P3 = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
                if norm(q) <= 0.5 {
                    break q;
                }
            };
            lines.push(Line::new(p, v)?);
        }
        LineFamily::new(lines, delta)
    }
}

fn ensure_cap(phi: f64) {
    assert!(phi < PI / 2.0, "direction rings reached the equator; request fewer lines");
}

/// Per-line ball centers, as sorted parameters along the line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shading {
    pub params: Vec<Vec<f64>>,
}

impl Shading {
    /// Centers `t` on each line with `|ℓ(t)| ≤ 1 - δ`, spaced by `δ`.
    pub fn full(fam: &LineFamily) -> Shading {
        let d = fam.delta;
        let params = fam
            .lines
            .iter()
            .map(|l| {
                let r = 1.0 - d;
                let d0 = l.offset();
                if d0 > r {
                    return Vec::new();
                }
                let half = (r * r - d0 * d0).sqrt();
                let k = (half / d).floor() as i64;
                (-k..=k).map(|i| i as f64 * d).collect()
            })
            .collect();
        Shading { params }
    }

    /// Keep each ball of the full shading independently with probability `p`.
    pub fn random<R: Rng>(fam: &LineFamily, p: f64, rng: &mut R) -> Shading {
        let full = Shading::full(fam);
        Shading { params: full.params.into_iter().map(|ts| ts.into_iter().filter(|_| rng.gen_bool(p)).collect()).collect() }
    }

    /// Keep the balls with `|t| ≥ (1 - fraction)·t_max`: the two ends.
    pub fn ends(fam: &LineFamily, fraction: f64) -> Shading {
        let full = Shading::full(fam);
        let params = full
            .params
            .into_iter()
            .map(|ts| {
                let tmax = ts.iter().fold(0.0f64, |a, t| a.max(t.abs()));
                ts.into_iter().filter(|t| t.abs() >= (1.0 - fraction) * tmax - 1e-12).collect()
            })
            .collect();
        Shading { params }
    }

    /// Balls in a single window `t ∈ [a, a + len]` of every line.
    pub fn window(fam: &LineFamily, a: f64, len: f64) -> Shading {
        let full = Shading::full(fam);
        Shading { params: full.params.into_iter().map(|ts| ts.into_iter().filter(|t| *t >= a && *t <= a + len).collect()).collect() }
    }

    /// Shading from explicit centers, which must lie on their line and
    /// inside `B(0, 1 - δ)`.
    pub fn from_centers(fam: &LineFamily, centers: &[Vec<P3>]) -> Result<Shading> {
        ensure(centers.len() == fam.len(), || Error::InvalidParameter("one center list per line".into()))?;
        let mut params = Vec::with_capacity(centers.len());
        for (i, (l, cs)) in fam.lines.iter().zip(centers).enumerate() {
            let mut ts = Vec::with_capacity(cs.len());
            for c in cs {
                ensure(l.distance(*c) <= 1e-9, || Error::Precondition(format!("center {c:?} is off line {i}")))?;
                ensure(norm(*c) <= 1.0 - fam.delta + 1e-9, || {
                    Error::Precondition(format!("ball at {c:?} leaves the unit ball"))
                })?;
                ts.push(l.param(*c));
            }
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.dedup();
            params.push(ts);
        }
        Ok(Shading { params })
    }

    pub fn centers(&self, fam: &LineFamily, i: usize) -> Vec<P3> {
        self.params[i].iter().map(|t| fam.lines[i].at(*t)).collect()
    }

    pub fn ball_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }
}

/// `|Y(ℓ) ∩ {a ≤ t ≤ b}|` for balls of radius `delta` centred at sorted
/// parameters `ts`.
pub fn slab_volume(ts: &[f64], delta: f64, a: f64, b: f64) -> f64 {
    if ts.is_empty() || b <= a {
        return 0.0;
    }
    // antiderivative of π(δ² - u²)
    let prim = |u: f64| PI * (delta * delta * u - u * u * u / 3.0);
    let mut total = 0.0;
    for (k, &c) in ts.iter().enumerate() {
        // Voronoi cell of c intersected with its ball and the slab
        let lo = if k == 0 { f64::NEG_INFINITY } else { 0.5 * (ts[k - 1] + c) };
        let hi = if k + 1 == ts.len() { f64::INFINITY } else { 0.5 * (c + ts[k + 1]) };
        let l = lo.max(c - delta).max(a);
        let h = hi.min(c + delta).min(b);
        if h > l {
            total += prim(h - c) - prim(l - c);
        }
    }
    total
}

/// `|Y(ℓ)|` exactly.
pub fn line_volume(ts: &[f64], delta: f64) -> f64 {
    slab_volume(ts, delta, f64::NEG_INFINITY, f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoEndsParams {
    pub eps1: f64,
    pub eps2: f64,
    pub c_y: f64,
}

impl Default for TwoEndsParams {
    fn default() -> Self {
        TwoEndsParams { eps1: 0.5, eps2: 0.25, c_y: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstSegment {
    pub line: usize,
    pub start: f64,
    /// `|Y(ℓ) ∩ J| / |Y(ℓ)|`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoEndsReport {
    pub pass: bool,
    pub lambda: f64,
    pub worst: Option<WorstSegment>,
    /// Lines with empty shading (vacuous pass).
    pub empty_lines: Vec<usize>,
    /// Per-line pass flags.
    pub per_line: Vec<bool>,
}

/// Segment starts scanned on one line: `δ/2` steps covering every
/// segment that meets the shading.
pub fn segment_starts(ts: &[f64], delta: f64, len: f64) -> Vec<f64> {
    if ts.is_empty() {
        return Vec::new();
    }
    let a0 = ts[0] - delta - len;
    let a1 = ts[ts.len() - 1] + delta;
    let steps = ((a1 - a0) / (delta / 2.0)).ceil() as usize;
    (0..=steps).map(|k| a0 + k as f64 * delta / 2.0).collect()
}

/// Scan all `δ x δ^{ε₁}` segments at `δ/2` steps against
/// `|Y(ℓ) ∩ J| ≤ C_Y δ^{ε₂} |Y(ℓ)|`, and report `λ = min_ℓ |Y(ℓ)| / |N_δ(ℓ) ∩ B³|`.
pub fn two_ends_check(fam: &LineFamily, y: &Shading, p: TwoEndsParams) -> Result<TwoEndsReport> {
    ensure(0.0 < p.eps2 && p.eps2 < p.eps1 && p.eps1 < 1.0, || {
        Error::InvalidParameter(format!("need 0 < ε₂ < ε₁ < 1, got ε₁ = {}, ε₂ = {}", p.eps1, p.eps2))
    })?;
    ensure(y.params.len() == fam.len(), || Error::InvalidParameter("shading and family sizes differ".into()))?;
    let d = fam.delta;
    let len = d.powf(p.eps1);
    let bound = p.c_y * d.powf(p.eps2);
    let per: Vec<(f64, Option<WorstSegment>, f64)> = (0..fam.len())
        .into_par_iter()
        .map(|i| {
            let ts = &y.params[i];
            let vol = line_volume(ts, d);
            let lam = vol / fam.lines[i].neighborhood_volume(d);
            if ts.is_empty() {
                return (0.0, None, lam);
            }
            let mut worst = WorstSegment { line: i, start: 0.0, fraction: -1.0 };
            for a in segment_starts(ts, d, len) {
                let frac = slab_volume(ts, d, a, a + len) / vol;
                if frac > worst.fraction {
                    worst = WorstSegment { line: i, start: a, fraction: frac };
                }
            }
            (worst.fraction, Some(worst), lam)
        })
        .collect();
    let per_line: Vec<bool> = per.iter().map(|(f, _, _)| *f <= bound).collect();
    let worst = per
        .iter()
        .filter_map(|(_, w, _)| w.clone())
        .fold(None, |acc: Option<WorstSegment>, w| match acc {
            Some(a) if a.fraction >= w.fraction => Some(a),
            _ => Some(w),
        });
    let lambda = per.iter().map(|(_, _, l)| *l).fold(f64::INFINITY, f64::min);
    let empty_lines: Vec<usize> = (0..fam.len()).filter(|i| y.params[*i].is_empty()).collect();
    Ok(TwoEndsReport {
        pass: per_line.iter().all(|b| *b),
        lambda: if fam.is_empty() { 0.0 } else { lambda },
        worst,
        empty_lines,
        per_line,
    })
}

/// Voxel grid of `[-1,1]³` with spacing `δ/2`; a voxel belongs to a ball
/// when its center does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Raster {
    pub delta: f64,
    pub step: f64,
    pub side: usize,
}

impl Raster {
    pub fn new(delta: f64) -> Self {
        let step = delta / 2.0;
        Raster { delta, step, side: (2.0 / step).round() as usize }
    }

    pub fn voxel_volume(&self) -> f64 {
        self.step.powi(3)
    }

    pub fn center(&self, idx: usize) -> P3 {
        let s = self.side;
        let (i, j, k) = (idx / (s * s), (idx / s) % s, idx % s);
        let c = |a: usize| -1.0 + (a as f64 + 0.5) * self.step;
        [c(i), c(j), c(k)]
    }

    /// Index of the voxel containing `p`, clamped to the grid.
    pub fn voxel_of(&self, p: P3) -> u32 {
        let s = self.side as i64;
        let a = |x: f64| (((x + 1.0) / self.step).floor() as i64).clamp(0, s - 1);
        ((a(p[0]) * s + a(p[1])) * s + a(p[2])) as u32
    }

    /// Sorted distinct voxels covered by the balls of one line.
    pub fn line_voxels(&self, line: &Line, ts: &[f64]) -> Vec<u32> {
        let s = self.side as i64;
        let r2 = self.delta * self.delta;
        let mut out = Vec::with_capacity(ts.len() * 40);
        for &t in ts {
            let c = line.at(t);
            let range = |x: f64| -> (i64, i64) {
                let lo = (((x - self.delta + 1.0) / self.step) - 0.5).ceil() as i64;
                let hi = (((x + self.delta + 1.0) / self.step) - 0.5).floor() as i64;
                (lo.max(0), hi.min(s - 1))
            };
            let (i0, i1) = range(c[0]);
            let (j0, j1) = range(c[1]);
            let (k0, k1) = range(c[2]);
            for i in i0..=i1 {
                let x = -1.0 + (i as f64 + 0.5) * self.step - c[0];
                for j in j0..=j1 {
                    let y = -1.0 + (j as f64 + 0.5) * self.step - c[1];
                    for k in k0..=k1 {
                        let z = -1.0 + (k as f64 + 0.5) * self.step - c[2];
                        if x * x + y * y + z * z <= r2 {
                            out.push(((i * s + j) * s + k) as u32);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn per_line(&self, fam: &LineFamily, y: &Shading) -> Vec<Vec<u32>> {
        (0..fam.len()).into_par_iter().map(|i| self.line_voxels(&fam.lines[i], &y.params[i])).collect()
    }

    /// Line multiplicity `#L(x)` of every voxel.
    pub fn multiplicity(&self, fam: &LineFamily, y: &Shading) -> Vec<u16> {
        let mut m = vec![0u16; self.side.pow(3)];
        for vox in self.per_line(fam, y) {
            for v in vox {
                m[v as usize] = m[v as usize].saturating_add(1);
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnionVolume {
    pub union: f64,
    /// Rasterized `Σ_ℓ |Y(ℓ)|`.
    pub sum: f64,
    /// Exact `Σ_ℓ |Y(ℓ)|`.
    pub sum_exact: f64,
}

/// `|∪ Y(ℓ)|` and `Σ |Y(ℓ)|` on the `δ/2` raster.
pub fn union_volume(fam: &LineFamily, y: &Shading) -> Result<UnionVolume> {
    ensure(y.params.len() == fam.len(), || Error::InvalidParameter("shading and family sizes differ".into()))?;
    let r = Raster::new(fam.delta);
    let per = r.per_line(fam, y);
    let mut bits = vec![0u64; r.side.pow(3).div_ceil(64)];
    let mut count = 0usize;
    for vox in &per {
        count += vox.len();
        for v in vox {
            bits[*v as usize / 64] |= 1 << (v % 64);
        }
    }
    let union: u64 = bits.iter().map(|b| b.count_ones() as u64).sum();
    let sum_exact = y.params.iter().map(|ts| line_volume(ts, fam.delta)).sum();
    Ok(UnionVolume { union: union as f64 * r.voxel_volume(), sum: count as f64 * r.voxel_volume(), sum_exact })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FurstenbergReport {
    pub c: f64,
    pub pass: bool,
    pub union: f64,
    pub sum: f64,
    pub lambda: f64,
    pub eps: f64,
    /// `(n - 1)/2` with `n = 3`.
    pub lambda_exponent: f64,
}

/// `c = |∪Y| / (δ^ε λ^{(n-1)/2} Σ|Y(ℓ)|)` with `n = 3`, both volumes on the
/// raster. Refuses shadings that are not two-ended.
pub fn furstenberg_ratio(fam: &LineFamily, y: &Shading, eps: f64, te: TwoEndsParams, c_min: f64) -> Result<FurstenbergReport> {
    ensure(!fam.is_empty(), || Error::InvalidParameter("empty line family".into()))?;
    let two = two_ends_check(fam, y, te)?;
    ensure(two.pass, || {
        Error::Precondition(format!("shading is not two-ended (worst segment {:?})", two.worst))
    })?;
    ensure(two.lambda > 0.0, || Error::Precondition("some line has an empty shading".into()))?;
    let u = union_volume(fam, y)?;
    let n = 3.0;
    let exponent = (n - 1.0) / 2.0;
    let c = u.union / (fam.delta.powf(eps) * two.lambda.powf(exponent) * u.sum);
    Ok(FurstenbergReport { c, pass: c >= c_min, union: u.union, sum: u.sum, lambda: two.lambda, eps, lambda_exponent: exponent })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneReport {
    pub mu: f64,
    /// Voxel indices of `E_μ`.
    #[serde(skip)]
    pub kept: Vec<u32>,
    pub union_voxels: usize,
    pub removed_fraction: f64,
}

/// `E_μ` = voxels of `∪Y` with line multiplicity `≤ μ`.
pub fn prune_multiplicity(fam: &LineFamily, y: &Shading, mu: f64) -> Result<PruneReport> {
    ensure(mu > 0.0, || Error::InvalidParameter(format!("μ = {mu}")))?;
    let r = Raster::new(fam.delta);
    let m = r.multiplicity(fam, y);
    let mut union = 0usize;
    let mut kept = Vec::new();
    for (i, c) in m.iter().enumerate() {
        if *c > 0 {
            union += 1;
            if (*c as f64) <= mu {
                kept.push(i as u32);
            }
        }
    }
    let removed = if union == 0 { 0.0 } else { (union - kept.len()) as f64 / union as f64 };
    Ok(PruneReport { mu, kept, union_voxels: union, removed_fraction: removed })
}

/// `μ = δ^{-2ε₁} m λ^{-3/4} δ^{-1/2}`.
pub fn kakeya_mu(delta: f64, eps1: f64, m: usize, lambda: f64) -> f64 {
    delta.powf(-2.0 * eps1) * m as f64 * lambda.powf(-0.75) * delta.powf(-0.5)
}

/// Text format: a `delta <δ>` header, then one record per line:
/// `px py pz dx dy dz ; c1x c1y c1z ; c2x c2y c2z ...`.
pub fn write_family(fam: &LineFamily, y: &Shading) -> String {
    let mut s = format!("delta {}\n", fam.delta);
    for (i, l) in fam.lines.iter().enumerate() {
        let _ = write!(s, "{} {} {} {} {} {}", l.point[0], l.point[1], l.point[2], l.dir[0], l.dir[1], l.dir[2]);
        for c in y.centers(fam, i) {
            let _ = write!(s, " ; {} {} {}", c[0], c[1], c[2]);
        }
        s.push('\n');
    }
    s
}

pub fn read_family(text: &str) -> Result<(LineFamily, Shading)> {
    let mut lines_iter = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let head = lines_iter.next().ok_or_else(|| Error::Format("empty family file".into()))?;
    let delta: f64 = head
        .strip_prefix("delta")
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("bad header {head:?}")))?;
    let nums = |s: &str, want: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = s.split_whitespace().map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{e} in {s:?}")))?;
        ensure(v.len() == want, || Error::Format(format!("expected {want} numbers in {s:?}")))?;
        Ok(v)
    };
    let mut lines = Vec::new();
    let mut centers = Vec::new();
    for rec in lines_iter {
        let mut parts = rec.split(';');
        let l = nums(parts.next().unwrap(), 6)?;
        lines.push(Line::new([l[0], l[1], l[2]], [l[3], l[4], l[5]])?);
        centers.push(parts.map(|p| nums(p, 3).map(|c| [c[0], c[1], c[2]])).collect::<Result<Vec<P3>>>()?);
    }
    let fam = LineFamily::new(lines, delta)?;
    let y = Shading::from_centers(&fam, &centers)?;
    Ok((fam, y))
}

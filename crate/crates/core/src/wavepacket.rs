//! Scale-`R` wave packets.
//!
//! The frequency square is tiled by caps `θ` of side `R^{-1/2}`; `f_θ = f φ_θ`
//! uses the smooth partition of unity of [`AxisPartition`], supported in `2θ`.
//! Each `f_θ` is split further by convolving with the taps
//! `κ_v[j] = w_j / V · e^{-2πi j v / V}`, `|j| ≤ b`, whose spatial transforms
//! are translates of one Kaiser-windowed kernel by `c_v = vL/V` and sum to
//! one exactly when `V > b`. A lattice with `q` samples per cap side and
//! `b = q/2` keeps `supp f_{θ,v}` inside `3θ`.

use crate::error::{ensure, Error, Result};
use crate::field::{eval_direct, AxisPartition, FreqDensity, Region, Surface};
use crate::geom::{Square, P2, P3};
use crate::util::{bessel_i0, csum, dyadic_exponent, Compensated};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

/// Minimum lattice samples per cap side.
pub const MIN_Q: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketParams {
    /// Kaiser shape parameter of the spatial taps.
    pub alpha: f64,
    /// Tube radius is `radius_const · R^{1/2 + eps0}`.
    pub radius_const: f64,
    pub eps0: f64,
}

impl Default for PacketParams {
    fn default() -> Self {
        PacketParams { alpha: 22.0, radius_const: 10.0, eps0: 0.0 }
    }
}

/// `T = {x : |x̄ - c_v + x₃∇Φ(c_θ)| ≤ radius, |x₃| ≤ length/2}`, optionally on
/// a horizontal torus of the given period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub theta_index: [usize; 2],
    pub v_index: [usize; 2],
    pub c_theta: P2,
    pub c_v: P2,
    /// `(1, ∇Φ(c_θ))`.
    pub direction: P3,
    pub radius: f64,
    pub length: f64,
    pub period: Option<f64>,
}

impl Tube {
    /// Free-standing tube in `R³` with axis through `(c_v, 0)` and horizontal
    /// drift `-grad` per unit `x₃`; `c_θ` is the hyperbolic cap centre with
    /// that gradient.
    pub fn new(c_v: P2, grad: P2, radius: f64, length: f64) -> Result<Tube> {
        ensure(radius > 0.0 && length > 0.0, || {
            Error::InvalidParameter(format!("tube radius {radius}, length {length}"))
        })?;
        Ok(Tube {
            theta_index: [0, 0],
            v_index: [0, 0],
            c_theta: [grad[1], grad[0]],
            c_v,
            direction: [1.0, grad[0], grad[1]],
            radius,
            length,
            period: None,
        })
    }

    pub fn grad(&self) -> P2 {
        [self.direction[1], self.direction[2]]
    }

    pub fn axis(&self, x3: f64) -> P2 {
        let g = self.grad();
        [self.c_v[0] - x3 * g[0], self.c_v[1] - x3 * g[1]]
    }

    pub fn x3_range(&self) -> [f64; 2] {
        [-self.length / 2.0, self.length / 2.0]
    }

    /// Horizontal offset of `x` from the axis at height `x₃`.
    pub fn offset(&self, x: P3) -> P2 {
        let a = self.axis(x[2]);
        let mut d = [x[0] - a[0], x[1] - a[1]];
        if let Some(p) = self.period {
            for v in d.iter_mut() {
                *v -= p * (*v / p).round();
            }
        }
        d
    }

    pub fn axis_distance(&self, x: P3) -> f64 {
        let d = self.offset(x);
        d[0].hypot(d[1])
    }

    pub fn contains(&self, x: P3) -> bool {
        let [lo, hi] = self.x3_range();
        x[2] >= lo && x[2] <= hi && self.axis_distance(x) <= self.radius
    }

    /// Whether the closed ball meets the tube. In each plane `x₃ = t` the
    /// ball is a disc, so this is a convex one-dimensional minimization of
    /// `|c̄ - axis(t)| - √(ρ² - (t - c₃)²)` per periodic image.
    pub fn intersects_ball(&self, c: P3, rho: f64) -> bool {
        self.intersects_ball_within(c, rho, self.x3_range())
    }

    /// As [`Tube::intersects_ball`] for the part of the tube over `x3`.
    pub fn intersects_ball_within(&self, c: P3, rho: f64, x3: [f64; 2]) -> bool {
        let [lo, hi] = self.x3_range();
        let t0 = (c[2] - rho).max(lo).max(x3[0]);
        let t1 = (c[2] + rho).min(hi).min(x3[1]);
        if t0 > t1 {
            return false;
        }
        // nearest image of the centre, then its neighbours
        let a = self.axis(c[2]);
        let d = self.offset(c);
        let base = [a[0] + d[0], a[1] + d[1]];
        let images: Vec<P2> = match self.period {
            None => vec![base],
            Some(p) => (-1..=1)
                .flat_map(|i| (-1..=1).map(move |j| [base[0] + i as f64 * p, base[1] + j as f64 * p]))
                .collect(),
        };
        let tol = 1e-12 * (1.0 + self.radius + rho);
        images.iter().any(|cb| {
            let g = |t: f64| {
                let a = self.axis(t);
                (cb[0] - a[0]).hypot(cb[1] - a[1]) - (rho * rho - (t - c[2]).powi(2)).max(0.0).sqrt()
            };
            golden_min(g, t0, t1) <= self.radius + tol
        })
    }
}

fn golden_min(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = g(a).min(g(b));
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..200 {
        if b - a < 1e-13 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if g1 <= g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - r * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + r * (b - a);
            g2 = g(x2);
        }
    }
    best = best.min(g1).min(g2);
    best
}

/// Number of tubes meeting the ball `B(center, radius)`.
pub fn tube_ball_multiplicity(tubes: &[Tube], center: P3, radius: f64) -> Result<usize> {
    ensure(radius > 0.0, || Error::InvalidParameter(format!("ball radius {radius}")))?;
    Ok(tubes.iter().filter(|t| t.intersects_ball(center, radius)).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PacketId {
    pub cap: usize,
    pub v: [usize; 2],
}

#[derive(Debug, Clone)]
struct Cap {
    index: [usize; 2],
    square: Square,
    piece: FreqDensity,
}

/// Lazy wave packet decomposition: the cap pieces `f_θ` are stored and
/// packets `f_{θ,v}` are generated on demand.
#[derive(Debug, Clone)]
pub struct WavePacketDecomp {
    pub r: f64,
    pub params: PacketParams,
    /// Samples per cap side.
    pub q: usize,
    /// Tap half-width.
    pub b: usize,
    /// Packet translates per axis.
    pub vcount: usize,
    pub n: usize,
    pub surface: Surface,
    pub parent_l2: f64,
    caps: Vec<Cap>,
    taps: Vec<f64>,
}

/// Decompose `f` at scale `R`. The lattice must carry an even number
/// `q ≥ 16` of samples per `R^{-1/2}`-cap side.
pub fn decompose(f: &FreqDensity, r: f64, params: PacketParams) -> Result<WavePacketDecomp> {
    let s = r.sqrt().round() as usize;
    ensure(r >= 1.0 && ((s * s) as f64 - r).abs() < 1e-9, || {
        Error::InvalidParameter(format!("scale {r} is not a perfect square"))
    })?;
    ensure(f.thickness.is_none(), || Error::InvalidParameter("wave packets take densities without thickness".into()))?;
    let caps_per_axis = 2 * s;
    ensure(f.n % caps_per_axis == 0, || {
        Error::Precondition(format!("lattice {} does not refine the {caps_per_axis}-cap tiling", f.n))
    })?;
    let q = f.n / caps_per_axis;
    ensure(q >= MIN_Q && q % 2 == 0, || {
        Error::Precondition(format!("under-resolved: {q} samples per cap side, need an even number >= {MIN_Q}"))
    })?;
    let b = q / 2;
    let vcount = b + 1;
    let i0a = bessel_i0(params.alpha);
    let taps: Vec<f64> = (-(b as i64)..=b as i64)
        .map(|j| {
            let t = j as f64 / (b + 1) as f64;
            bessel_i0(params.alpha * (1.0 - t * t).max(0.0).sqrt()) / i0a
        })
        .collect();

    let side = 1.0 / s as f64;
    let part = AxisPartition { side, count: caps_per_axis };
    let h = f.h();
    // per-axis weight tables over the doubled cap
    let tables: Vec<(usize, Vec<f64>)> = (0..caps_per_axis)
        .map(|k| {
            let lo = (k * q).saturating_sub(q / 2);
            let hi = ((k + 1) * q + q / 2).min(f.n);
            let w: Vec<f64> = (lo..hi).map(|i| part.weight(k, -1.0 + (i as f64 + 0.5) * h)).collect();
            (lo, w)
        })
        .collect();

    let idx: Vec<[usize; 2]> = (0..caps_per_axis).flat_map(|a| (0..caps_per_axis).map(move |c| [a, c])).collect();
    let caps: Vec<Cap> = idx
        .par_iter()
        .map(|&[k0, k1]| -> Result<Option<Cap>> {
            let (lo0, w0) = &tables[k0];
            let (lo1, w1) = &tables[k1];
            let mut piece = FreqDensity::zeros(f.n, [*lo0, *lo1], [w0.len(), w1.len()], f.surface)?;
            for ((a, c), v) in piece.data.indexed_iter_mut() {
                let wt = w0[a] * w1[c];
                if wt != 0.0 {
                    *v = f.get(lo0 + a, lo1 + c) * wt;
                }
            }
            piece.shrink();
            if piece.is_zero() {
                return Ok(None);
            }
            let square = Square::new(
                [-1.0 + (k0 as f64 + 0.5) * side, -1.0 + (k1 as f64 + 0.5) * side],
                side,
            )?;
            Ok(Some(Cap { index: [k0, k1], square, piece }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    Ok(WavePacketDecomp {
        r,
        params,
        q,
        b,
        vcount,
        n: f.n,
        surface: f.surface,
        parent_l2: f.l2_sq(),
        caps,
        taps,
    })
}

impl WavePacketDecomp {
    /// Torus period `L = πn`.
    pub fn period(&self) -> f64 {
        PI * self.n as f64
    }

    pub fn radius(&self) -> f64 {
        self.params.radius_const * self.r.powf(0.5 + self.params.eps0)
    }

    pub fn cap_count(&self) -> usize {
        self.caps.len()
    }

    pub fn cap_square(&self, cap: usize) -> Square {
        self.caps[cap].square
    }

    pub fn cap_index(&self, cap: usize) -> [usize; 2] {
        self.caps[cap].index
    }

    /// `f_θ` of a stored cap.
    pub fn cap_piece(&self, cap: usize) -> &FreqDensity {
        &self.caps[cap].piece
    }

    pub fn find_cap(&self, index: [usize; 2]) -> Option<usize> {
        self.caps.iter().position(|c| c.index == index)
    }

    pub fn packet_ids(&self) -> impl Iterator<Item = PacketId> + '_ {
        let v = self.vcount;
        (0..self.caps.len()).flat_map(move |cap| (0..v * v).map(move |k| PacketId { cap, v: [k / v, k % v] }))
    }

    pub fn len(&self) -> usize {
        self.caps.len() * self.vcount * self.vcount
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }

    /// Centre `c_v` in `(-L/2, L/2]` per axis.
    pub fn center(&self, v: [usize; 2]) -> P2 {
        let l = self.period();
        let c = |k: usize| {
            let k = k as f64;
            let vc = self.vcount as f64;
            let k = if k > vc / 2.0 { k - vc } else { k };
            k * l / vc
        };
        [c(v[0]), c(v[1])]
    }

    pub fn tube(&self, id: PacketId) -> Tube {
        let cap = &self.caps[id.cap];
        let g = self.surface.grad(cap.square.center[0], cap.square.center[1]);
        Tube {
            theta_index: cap.index,
            v_index: id.v,
            c_theta: cap.square.center,
            c_v: self.center(id.v),
            direction: [1.0, g[0], g[1]],
            radius: self.radius(),
            length: self.r,
            period: Some(self.period()),
        }
    }

    pub fn tubes(&self) -> Vec<Tube> {
        self.packet_ids().map(|id| self.tube(id)).collect()
    }

    fn kernel(&self, v: usize) -> Vec<Complex64> {
        let b = self.b as i64;
        let vc = self.vcount as f64;
        (-b..=b)
            .zip(&self.taps)
            .map(|(j, w)| Complex64::from_polar(w / vc, -2.0 * PI * (j * v as i64) as f64 / vc))
            .collect()
    }

    /// The packet `f_{θ,v}`.
    pub fn packet(&self, id: PacketId) -> Result<FreqDensity> {
        let cap = &self.caps[id.cap];
        let t = conv_axis(&cap.piece.data, &self.kernel(id.v[0]), 0);
        let t = conv_axis(&t, &self.kernel(id.v[1]), 1);
        self.clip(&cap.piece, t)
    }

    fn clip(&self, piece: &FreqDensity, ext: Array2<Complex64>) -> Result<FreqDensity> {
        let b = self.b as i64;
        let o = [piece.origin[0] as i64 - b, piece.origin[1] as i64 - b];
        let (e0, e1) = ext.dim();
        let lo = [o[0].max(0) as usize, o[1].max(0) as usize];
        let hi = [((o[0] + e0 as i64).min(self.n as i64)) as usize, ((o[1] + e1 as i64).min(self.n as i64)) as usize];
        let mut out = FreqDensity::zeros(self.n, lo, [hi[0] - lo[0], hi[1] - lo[1]], self.surface)?;
        for ((a, c), v) in out.data.indexed_iter_mut() {
            *v = ext[[((lo[0] + a) as i64 - o[0]) as usize, ((lo[1] + c) as i64 - o[1]) as usize]];
        }
        Ok(out)
    }

    /// All packets of one cap, in `v` order.
    pub fn cap_packets(&self, cap: usize) -> Result<Vec<(PacketId, FreqDensity)>> {
        let piece = &self.caps[cap].piece;
        let kernels: Vec<Vec<Complex64>> = (0..self.vcount).map(|v| self.kernel(v)).collect();
        let mut out = Vec::with_capacity(self.vcount * self.vcount);
        for (v0, k0) in kernels.iter().enumerate() {
            let t0 = conv_axis(&piece.data, k0, 0);
            for (v1, k1) in kernels.iter().enumerate() {
                let t = conv_axis(&t0, k1, 1);
                out.push((PacketId { cap, v: [v0, v1] }, self.clip(piece, t)?));
            }
        }
        Ok(out)
    }

    /// `Σ_T f_T`, summed packet by packet.
    pub fn reconstruct(&self) -> Result<FreqDensity> {
        let per_cap: Vec<FreqDensity> = (0..self.caps.len())
            .into_par_iter()
            .map(|c| -> Result<FreqDensity> {
                let packets = self.cap_packets(c)?;
                let mut acc = packets[0].1.clone();
                for (_, p) in &packets[1..] {
                    acc.data.zip_mut_with(&p.data, |a, b| *a += *b);
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut data = Array2::<Complex64>::zeros((self.n, self.n));
        for p in &per_cap {
            for ((a, c), v) in p.data.indexed_iter() {
                data[[p.origin[0] + a, p.origin[1] + c]] += *v;
            }
        }
        let mut out = FreqDensity::zeros(self.n, [0, 0], [self.n, self.n], self.surface)?;
        out.data = data;
        Ok(out)
    }

    /// `‖f_T‖₂²` for every packet.
    pub fn packet_masses(&self) -> Result<Vec<(PacketId, f64)>> {
        let per_cap: Vec<Vec<(PacketId, f64)>> = (0..self.caps.len())
            .into_par_iter()
            .map(|c| Ok(self.cap_packets(c)?.into_iter().map(|(id, p)| (id, p.l2_sq())).collect()))
            .collect::<Result<_>>()?;
        Ok(per_cap.into_iter().flatten().collect())
    }

    /// `Σ_T ‖f_T‖₂² / ‖f‖₂²`.
    pub fn l2_bookkeeping(&self) -> Result<f64> {
        let m = self.packet_masses()?;
        Ok(csum(m.iter().map(|(_, v)| *v)) / self.parent_l2)
    }

    /// Minimum pairwise distance between the directions `V(θ)` of the caps.
    pub fn direction_separation(&self) -> f64 {
        let dirs: Vec<P2> = self.caps.iter().map(|c| self.surface.grad(c.square.center[0], c.square.center[1])).collect();
        let mut best = f64::INFINITY;
        for (i, a) in dirs.iter().enumerate() {
            for d in &dirs[i + 1..] {
                best = best.min((a[0] - d[0]).hypot(a[1] - d[1]));
            }
        }
        best
    }

    /// Maximum number of tubes of one direction covering a point, sampled on
    /// a grid of `samples²` points over one period cell of the centres.
    pub fn max_overlap(&self, samples: usize) -> usize {
        let cell = self.period() / self.vcount as f64;
        let rad = self.radius();
        let l = self.period();
        let mut best = 0;
        for i in 0..samples {
            for j in 0..samples {
                let x = [(i as f64 + 0.5) * cell / samples as f64, (j as f64 + 0.5) * cell / samples as f64];
                let mut count = 0;
                for v0 in 0..self.vcount {
                    for v1 in 0..self.vcount {
                        let c = self.center([v0, v1]);
                        let mut d = [x[0] - c[0], x[1] - c[1]];
                        for t in d.iter_mut() {
                            *t -= l * (*t / l).round();
                        }
                        if d[0].hypot(d[1]) <= rad {
                            count += 1;
                        }
                    }
                }
                best = best.max(count);
            }
        }
        best
    }

    /// Peak of `|Ef_T|` on a disc of half the tube radius around the axis at
    /// height `x3`, and the maximum of `|Ef_T|` along `rays` horizontal rays at
    /// distances from `factor · radius` out to half the period.
    pub fn tail_profile(&self, id: PacketId, x3: f64, factor: f64, rays: usize, samples: usize) -> Result<(f64, f64)> {
        let p = self.packet(id)?;
        let tube = self.tube(id);
        let a = tube.axis(x3);
        let rad = tube.radius;
        let half = self.period() / 2.0;
        ensure(factor * rad < half, || {
            Error::Precondition(format!("{factor} radii exceed half the torus period {half}"))
        })?;
        let mut peak: f64 = 0.0;
        let k = 8;
        for i in -k..=k {
            for j in -k..=k {
                let d = [i as f64 * rad / (2.0 * k as f64), j as f64 * rad / (2.0 * k as f64)];
                if d[0].hypot(d[1]) <= rad / 2.0 {
                    peak = peak.max(eval_direct(&p, [a[0] + d[0], a[1] + d[1], x3]).norm());
                }
            }
        }
        let pts: Vec<P3> = (0..rays)
            .flat_map(|r| {
                let ang = 2.0 * PI * r as f64 / rays as f64;
                (0..samples).map(move |s| {
                    let d = factor * rad + (half - factor * rad) * s as f64 / (samples.max(2) - 1) as f64;
                    [a[0] + d * ang.cos(), a[1] + d * ang.sin(), x3]
                })
            })
            .collect();
        let tail = pts.par_iter().map(|x| eval_direct(&p, *x).norm()).reduce(|| 0.0, f64::max);
        Ok((peak, tail))
    }
}

/// Full linear convolution of `data` with `kern` (length `2b+1`) along one
/// axis; the output is longer by `2b` on that axis and starts `b` earlier.
fn conv_axis(data: &Array2<Complex64>, kern: &[Complex64], axis: usize) -> Array2<Complex64> {
    let (d0, d1) = data.dim();
    let ext = kern.len() - 1;
    let mut out = if axis == 0 { Array2::zeros((d0 + ext, d1)) } else { Array2::zeros((d0, d1 + ext)) };
    for ((a, c), v) in data.indexed_iter() {
        if v.re == 0.0 && v.im == 0.0 {
            continue;
        }
        for (j, k) in kern.iter().enumerate() {
            if axis == 0 {
                out[[a + j, c]] += v * k;
            } else {
                out[[a, c + j]] += v * k;
            }
        }
    }
    out
}

/// Segment `J` of a tube: an `x₃`-interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSegment {
    pub tube: usize,
    pub id: usize,
    pub x3: [f64; 2],
    /// `|J ∩ X| / |T|`.
    pub lambda: f64,
}

/// Segmenting and shading of one tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeShading {
    pub tube: usize,
    pub segments: Vec<TubeSegment>,
    /// Segments meeting `X`, grouped by dyadic class exponent of `λ`.
    pub classes: BTreeMap<i32, Vec<usize>>,
    /// Selected class exponent (`λ = 2^k`).
    pub lambda_class: Option<i32>,
    /// `#𝒥_λ(T)` for the selected class and its dyadic class exponent.
    pub count: usize,
    pub beta_class: Option<i32>,
}

impl TubeShading {
    /// `Y(T)`: segments of the selected class.
    pub fn shading(&self) -> Vec<&TubeSegment> {
        match self.lambda_class.and_then(|k| self.classes.get(&k)) {
            None => Vec::new(),
            Some(ids) => ids.iter().map(|&i| &self.segments[i]).collect(),
        }
    }

    pub fn in_shading(&self, x3: f64) -> bool {
        self.shading().iter().any(|s| x3 >= s.x3[0] && x3 < s.x3[1])
    }
}

/// Deterministic sampling of a tube segment: `along` midpoints in `x₃` times
/// the points of a `(2·across+1)²` grid that fall in the cross-section disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSampling {
    pub along: usize,
    pub across: usize,
}

impl Default for SegmentSampling {
    fn default() -> Self {
        SegmentSampling { along: 16, across: 6 }
    }
}

impl SegmentSampling {
    /// Sample points of `[t0, t1]` on a tube, in a fixed order.
    pub fn points(&self, tube: &Tube, t0: f64, t1: f64) -> Vec<P3> {
        let k = self.across as i64;
        let mut disc = Vec::new();
        for i in -k..=k {
            for j in -k..=k {
                let u = [i as f64 / k.max(1) as f64, j as f64 / k.max(1) as f64];
                if u[0].hypot(u[1]) <= 1.0 {
                    disc.push([u[0] * tube.radius, u[1] * tube.radius]);
                }
            }
        }
        let mut pts = Vec::with_capacity(self.along * disc.len());
        for s in 0..self.along {
            let t = t0 + (t1 - t0) * (s as f64 + 0.5) / self.along as f64;
            let a = tube.axis(t);
            for d in &disc {
                pts.push([a[0] + d[0], a[1] + d[1], t]);
            }
        }
        pts
    }
}

fn ball_union(x: &Region) -> Result<(&[P3], f64)> {
    match x {
        Region::Balls { centers, radius } => Ok((centers.as_slice(), *radius)),
        Region::Empty => Ok((&[], 1.0)),
        _ => Err(Error::InvalidParameter("shading needs a union of balls".into())),
    }
}

fn in_balls(x: P3, centers: &[P3], radius: f64, period: Option<f64>) -> bool {
    centers.iter().any(|c| {
        let mut d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
        if let Some(p) = period {
            for v in d.iter_mut().take(2) {
                *v -= p * (*v / p).round();
            }
        }
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= radius * radius
    })
}

/// Split each tube into segments of length `r^{1-ε²}`, measure `|J ∩ X|`,
/// bucket segments by `λ = |J ∩ X| / |T|` into dyadic classes clamped to
/// `[r^{-1/2}, r^{-ε²}]`, and select per tube the class `lambda_class` if
/// given, else the most populated one (ties to the smaller `λ`).
pub fn segment_and_shade(
    tubes: &[Tube],
    x: &Region,
    r: f64,
    eps: f64,
    lambda_class: Option<i32>,
    sampling: SegmentSampling,
) -> Result<Vec<TubeShading>> {
    ensure(r > 1.0 && eps > 0.0 && eps < 1.0, || Error::InvalidParameter(format!("r = {r}, ε = {eps}")))?;
    ensure(sampling.along > 0 && sampling.across > 0, || Error::InvalidParameter("empty sampling".into()))?;
    let (centers, radius) = ball_union(x)?;
    let seg_len = r.powf(1.0 - eps * eps);
    let lo_class = dyadic_exponent(r.powf(-0.5));
    let hi_class = dyadic_exponent(r.powf(-eps * eps));
    tubes
        .par_iter()
        .enumerate()
        .map(|(ti, tube)| {
            let [z0, z1] = tube.x3_range();
            let count = ((z1 - z0) / seg_len - 1e-9).ceil().max(1.0) as usize;
            let mut segments = Vec::with_capacity(count);
            let mut classes: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
            for id in 0..count {
                let t0 = z0 + id as f64 * seg_len;
                let t1 = (t0 + seg_len).min(z1);
                let pts = sampling.points(tube, t0, t1);
                let hits = pts.iter().filter(|p| in_balls(**p, centers, radius, tube.period)).count();
                let lambda = hits as f64 / pts.len() as f64 * (t1 - t0) / tube.length;
                if hits > 0 {
                    let k = dyadic_exponent(lambda).clamp(lo_class, hi_class);
                    classes.entry(k).or_default().push(id);
                }
                segments.push(TubeSegment { tube: ti, id, x3: [t0, t1], lambda });
            }
            let sel = match lambda_class {
                Some(k) => Some(k),
                None => classes.iter().max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0))).map(|(k, _)| *k),
            };
            let count = sel.and_then(|k| classes.get(&k)).map_or(0, |v| v.len());
            Ok(TubeShading {
                tube: ti,
                segments,
                classes,
                lambda_class: sel,
                count,
                beta_class: (count > 0).then(|| dyadic_exponent(count as f64)),
            })
        })
        .collect()
}

/// Measured constant of the shaded `L²` estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Check {
    pub lhs: f64,
    /// `max_T #{balls of X meeting Y(T)} / R^{1/2}`.
    pub lambda: f64,
    pub f_l2: f64,
    pub constant: f64,
}

/// `∫_X |Σ_T Ef_T 1_{Y(T)}|² / ((λR)‖f‖₂²)` for the given packets with
/// shadings from [`segment_and_shade`] (`shadings[i]` belongs to `ids[i]`).
/// The integral is a Riemann sum over a cubic grid of spacing `step`.
pub fn lemma_l2_check(
    decomp: &WavePacketDecomp,
    ids: &[PacketId],
    shadings: &[TubeShading],
    x: &Region,
    step: f64,
) -> Result<L2Check> {
    ensure(ids.len() == shadings.len(), || Error::InvalidParameter("one shading per packet".into()))?;
    ensure(step > 0.0, || Error::InvalidParameter(format!("grid step {step}")))?;
    let (centers, radius) = ball_union(x)?;
    let tubes: Vec<Tube> = ids.iter().map(|id| decomp.tube(*id)).collect();
    let packets: Vec<FreqDensity> = ids.iter().map(|id| decomp.packet(*id)).collect::<Result<_>>()?;
    let f = FreqDensity::sum(packets.iter())?;
    let f_l2 = f.as_ref().map_or(0.0, |f| f.l2_sq());

    // grid points inside X, each counted once
    let mut pts: Vec<P3> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let k = (radius / step).ceil() as i64;
    for c in centers {
        let base = [(c[0] / step).round() as i64, (c[1] / step).round() as i64, (c[2] / step).round() as i64];
        for i in -k..=k {
            for j in -k..=k {
                for l in -k..=k {
                    let g = [base[0] + i, base[1] + j, base[2] + l];
                    let p = [g[0] as f64 * step, g[1] as f64 * step, g[2] as f64 * step];
                    if in_balls(p, std::slice::from_ref(c), radius, None) && seen.insert(g) {
                        pts.push(p);
                    }
                }
            }
        }
    }
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|p| {
            let mut s = Complex64::new(0.0, 0.0);
            for ((t, sh), pk) in tubes.iter().zip(shadings).zip(&packets) {
                if t.contains(*p) && sh.in_shading(p[2]) {
                    s += eval_direct(pk, *p);
                }
            }
            s.norm_sqr()
        })
        .collect();
    let mut acc = Compensated::new();
    vals.iter().for_each(|v| acc.add(*v));
    let lhs = acc.value() * step.powi(3);

    let sqrt_r = decomp.r.sqrt();
    let mut lambda: f64 = 0.0;
    for (t, sh) in tubes.iter().zip(shadings) {
        let segs = sh.shading();
        let met = centers
            .iter()
            .filter(|c| {
                segs.iter().any(|s| t.intersects_ball_within(**c, radius, s.x3))
            })
            .count();
        lambda = lambda.max(met as f64 / sqrt_r);
    }
    let denom = lambda * decomp.r * f_l2;
    Ok(L2Check { lhs, lambda, f_l2, constant: if denom > 0.0 { lhs / denom } else { 0.0 } })
}

#[derive(Serialize)]
struct TubeRow {
    theta_i: usize,
    theta_j: usize,
    v_i: usize,
    v_j: usize,
    c_theta_x: f64,
    c_theta_y: f64,
    c_v_x: f64,
    c_v_y: f64,
    dir_0: f64,
    dir_1: f64,
    dir_2: f64,
    radius: f64,
    length: f64,
}

/// CSV export of a tube list.
pub fn write_tubes_csv<W: Write>(tubes: &[Tube], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for t in tubes {
        wr.serialize(TubeRow {
            theta_i: t.theta_index[0],
            theta_j: t.theta_index[1],
            v_i: t.v_index[0],
            v_j: t.v_index[1],
            c_theta_x: t.c_theta[0],
            c_theta_y: t.c_theta[1],
            c_v_x: t.c_v[0],
            c_v_y: t.c_v[1],
            dir_0: t.direction[0],
            dir_1: t.direction[1],
            dir_2: t.direction[2],
            radius: t.radius,
            length: t.length,
        })
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::bump;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_density(n: usize, seed: u64) -> FreqDensity {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FreqDensity::from_fn(n, Surface::Hyperbolic, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).unwrap()
    }

    fn smooth_cap_bump(n: usize, th: Square, width: f64) -> FreqDensity {
        FreqDensity::from_fn(n, Surface::Hyperbolic, |x, y| {
            let u = (x - th.center[0]) / (width * th.side);
            let v = (y - th.center[1]) / (width * th.side);
            Complex64::new(bump(u) * bump(v), 0.0)
        })
        .unwrap()
    }

    #[test]
    fn reconstruction_support_and_bookkeeping() {
        let r = 16.0;
        let f = random_density(2 * MIN_Q * 4, 1);
        let d = decompose(&f, r, PacketParams::default()).unwrap();
        assert_eq!((d.q, d.b, d.vcount, d.cap_count()), (16, 8, 9, 64));
        let g = d.reconstruct().unwrap();
        let err: f64 = g.data.indexed_iter().map(|((a, b), v)| (v - f.get(a, b)).norm_sqr()).sum();
        assert!((err * f.h() * f.h() / f.l2_sq()).sqrt() < 1e-12);
        for (id, p) in d.cap_packets(27).unwrap().iter().step_by(7) {
            let big = Square::new(d.cap_square(id.cap).center, 3.0 * d.cap_square(id.cap).side).unwrap();
            for (g, _) in p.nonzeros() {
                assert!(big.contains([p.coord(g[0]), p.coord(g[1])]));
            }
        }
        let c = d.l2_bookkeeping().unwrap();
        assert!(c > 0.0 && c <= 4.0, "{c}");
        assert!((d.direction_separation() - 0.25).abs() < 1e-12);
        assert_eq!(d.max_overlap(40), 4);
    }

    #[test]
    fn under_resolved_rejected() {
        let f = random_density(64, 2);
        assert!(matches!(decompose(&f, 16.0, PacketParams::default()), Err(Error::Precondition(_))));
        assert!(decompose(&f, 10.0, PacketParams::default()).is_err());
    }

    #[test]
    fn centred_bump_packet_dominates_and_decays() {
        let r = 64.0;
        let n = 2 * MIN_Q * 8;
        let th = Square::new([0.3125, -0.4375], 0.125).unwrap();
        let f = smooth_cap_bump(n, th, 0.5);
        let d = decompose(&f, r, PacketParams::default()).unwrap();
        let m = d.packet_masses().unwrap();
        let total: f64 = m.iter().map(|x| x.1).sum();
        let best = m.iter().cloned().fold(m[0], |a, b| if b.1 > a.1 { b } else { a });
        assert_eq!(d.cap_square(best.0.cap), th);
        assert_eq!(best.0.v, [0, 0]);
        // frozen from the measured share 0.391
        assert!(best.1 / total > 0.38);
        for x3 in [0.0, r / 2.0] {
            let (peak, tail) = d.tail_profile(best.0, x3, 4.0, 16, 64).unwrap();
            assert!(tail <= r.powi(-3) * peak, "x3 {x3}: {tail} vs {peak}");
        }
    }

    #[test]
    fn tube_through_centre_and_bush() {
        let t = Tube::new([0.0, 0.0], [0.3, -0.2], 2.0, 100.0).unwrap();
        assert_eq!(tube_ball_multiplicity(&[t.clone()], [0.0, 0.0, 0.0], 1.0).unwrap(), 1);
        let p = [5.0, -3.0, 10.0];
        let bush: Vec<Tube> = (0..12)
            .map(|k| {
                let a = k as f64 * 0.5;
                let g = [a.cos(), a.sin()];
                Tube::new([p[0] + p[2] * g[0], p[1] + p[2] * g[1]], g, 1.0, 100.0).unwrap()
            })
            .collect();
        assert_eq!(tube_ball_multiplicity(&bush, p, 1.0).unwrap(), 12);
        assert_eq!(tube_ball_multiplicity(&bush, [60.0, 60.0, 0.0], 1.0).unwrap(), 0);
        assert!(tube_ball_multiplicity(&bush, p, 0.0).is_err());
    }

    #[test]
    fn multiplicity_matches_rasterization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (c, rho) = ([0.5, -0.3, 1.0], 5.0);
        let tubes: Vec<Tube> = (0..100)
            .map(|_| {
                let cv = [rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0)];
                let g = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                Tube::new(cv, g, 3.0, 100.0).unwrap()
            })
            .collect();
        // discard near-tangent tubes the voxel grid cannot resolve
        let clear: Vec<Tube> = tubes
            .into_iter()
            .filter(|t| {
                let g = |z: f64| {
                    let a = t.axis(z);
                    (c[0] - a[0]).hypot(c[1] - a[1]) - (rho * rho - (z - c[2]).powi(2)).max(0.0).sqrt()
                };
                (golden_min(g, c[2] - rho, c[2] + rho) - t.radius).abs() > 0.2
            })
            .collect();
        assert!(clear.len() > 80);
        let step = 0.1;
        let k = (rho / step) as i64;
        let mut hit = vec![false; clear.len()];
        for i in -k..=k {
            for j in -k..=k {
                for l in -k..=k {
                    let x = [c[0] + i as f64 * step, c[1] + j as f64 * step, c[2] + l as f64 * step];
                    if (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2) > rho * rho {
                        continue;
                    }
                    for (h, t) in hit.iter_mut().zip(&clear) {
                        if !*h && t.contains(x) {
                            *h = true;
                        }
                    }
                }
            }
        }
        let oracle = hit.iter().filter(|h| **h).count();
        assert!(oracle > 0);
        assert_eq!(tube_ball_multiplicity(&clear, c, rho).unwrap(), oracle);
    }

    #[test]
    fn periodic_tube_sees_wrapped_ball() {
        let mut t = Tube::new([0.0, 0.0], [0.0, 0.0], 1.0, 10.0).unwrap();
        t.period = Some(100.0);
        assert!(t.intersects_ball([99.5, 0.0, 0.0], 1.0));
        assert!(!t.intersects_ball([50.0, 0.0, 0.0], 1.0));
    }

    fn vertical_tube() -> Tube {
        Tube::new([0.0, 0.0], [0.0, 0.0], 1.0, 64.0).unwrap()
    }

    #[test]
    fn covering_set_puts_every_segment_on_top() {
        let centers: Vec<P3> = (0..18).map(|k| [0.0, 0.0, -34.0 + 4.0 * k as f64]).collect();
        let x = Region::Balls { centers, radius: 8.0 };
        let s = segment_and_shade(&[vertical_tube()], &x, 64.0, 0.5, None, SegmentSampling::default()).unwrap();
        let top = dyadic_exponent(64f64.powf(-0.25));
        assert_eq!(s[0].segments.len(), 3);
        assert_eq!(s[0].classes.keys().cloned().collect::<Vec<_>>(), vec![top]);
        assert_eq!((s[0].lambda_class, s[0].count, s[0].beta_class), (Some(top), 3, Some(dyadic_exponent(3.0))));
    }

    #[test]
    fn single_segment_and_empty_set() {
        let x = Region::Balls { centers: vec![[0.0, 0.0, -20.0]], radius: 8.0 };
        let s = segment_and_shade(&[vertical_tube()], &x, 64.0, 0.5, None, SegmentSampling::default()).unwrap();
        assert_eq!((s[0].count, s[0].beta_class), (1, Some(0)));
        assert!(s[0].in_shading(-20.0) && !s[0].in_shading(0.0));
        let e = segment_and_shade(&[vertical_tube()], &Region::Empty, 64.0, 0.5, None, SegmentSampling::default()).unwrap();
        assert!(e[0].shading().is_empty() && e[0].beta_class.is_none());
    }

    #[test]
    fn random_shading_matches_direct_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (r, eps) = (256.0, 0.5);
        let radius = 16.0;
        let centers: Vec<P3> = (0..40)
            .map(|_| [rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0), rng.gen_range(-128.0..128.0)])
            .collect();
        let tubes: Vec<Tube> = (0..25)
            .map(|_| {
                let cv = [rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)];
                let g = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
                Tube::new(cv, g, 6.0, r).unwrap()
            })
            .collect();
        let x = Region::Balls { centers: centers.clone(), radius };
        let sampling = SegmentSampling { along: 10, across: 4 };
        let got = segment_and_shade(&tubes, &x, r, eps, None, sampling).unwrap();

        let seg = r.powf(1.0 - eps * eps);
        let class_of = |lam: f64| {
            let v = lam.max(r.powf(-0.5)).min(r.powf(-eps * eps));
            let mut k = 0i32;
            while v > 2f64.powi(k) {
                k += 1;
            }
            while v <= 2f64.powi(k - 1) {
                k -= 1;
            }
            k
        };
        let mut expect: BTreeMap<i32, usize> = BTreeMap::new();
        for t in &tubes {
            let mut z = -r / 2.0;
            while z < r / 2.0 - 1e-9 {
                let z1 = (z + seg).min(r / 2.0);
                let pts = sampling.points(t, z, z1);
                let inside = pts
                    .iter()
                    .filter(|p| centers.iter().any(|c| (0..3).map(|i| (p[i] - c[i]).powi(2)).sum::<f64>() <= radius * radius))
                    .count();
                if inside > 0 {
                    *expect.entry(class_of(inside as f64 / pts.len() as f64 * (z1 - z) / r)).or_default() += 1;
                }
                z = z1;
            }
        }
        let mut found: BTreeMap<i32, usize> = BTreeMap::new();
        for s in &got {
            for (k, ids) in &s.classes {
                *found.entry(*k).or_default() += ids.len();
            }
        }
        assert!(expect.values().sum::<usize>() > 5);
        assert_eq!(found, expect);
    }

    #[test]
    fn shaded_l2_constant_is_finite() {
        let r = 16.0;
        let th = Square::new([0.125, 0.125], 0.25).unwrap();
        let f = smooth_cap_bump(2 * MIN_Q * 4, th, 0.5);
        let d = decompose(&f, r, PacketParams::default()).unwrap();
        let cap = d.find_cap([4, 4]).unwrap();
        let ids: Vec<PacketId> = (0..3).map(|k| PacketId { cap, v: [k, 0] }).collect();
        let tubes: Vec<Tube> = ids.iter().map(|id| d.tube(*id)).collect();
        let x = Region::Balls { centers: vec![[0.0, 0.0, 0.0], [d.center([1, 0])[0], 0.0, 4.0]], radius: 4.0 };
        let sh = segment_and_shade(&tubes, &x, r, 0.5, None, SegmentSampling::default()).unwrap();
        let c = lemma_l2_check(&d, &ids, &sh, &x, 1.0).unwrap();
        assert!(c.lhs > 0.0 && c.lambda > 0.0 && c.constant.is_finite(), "{c:?}");
        let none = segment_and_shade(&tubes, &Region::Empty, r, 0.5, None, SegmentSampling::default()).unwrap();
        assert_eq!(lemma_l2_check(&d, &ids, &none, &x, 1.0).unwrap().lhs, 0.0);
    }

    #[test]
    fn tube_csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_tubes_csv(&[vertical_tube(), vertical_tube()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta_i,theta_j,v_i,v_j"));
        assert_eq!(text.lines().count(), 3);
    }
}

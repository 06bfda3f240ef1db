use super::density::FreqDensity;
use super::fft::SliceEvaluator;
use crate::error::{ensure, Error, Result};
use crate::geom::P3;
use crate::util::Compensated;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples of `Ef` on `nz` horizontal slices of an `m1 x m2` grid.
/// Index `[z, s1, s2]` sits at `(x0 + s·dx, x3[z])`; slice `z` carries the
/// quadrature weight `w3[z]`. `period` is set when the grid is a full torus.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    pub data: Array3<Complex64>,
    pub x0: [f64; 2],
    pub dx: [f64; 2],
    pub x3: Vec<f64>,
    pub w3: Vec<f64>,
    pub period: Option<[f64; 2]>,
    pub scale: f64,
}

impl SpatialField {
    pub fn dims(&self) -> [usize; 3] {
        let d = self.data.dim();
        [d.0, d.1, d.2]
    }

    pub fn point(&self, z: usize, s1: usize, s2: usize) -> P3 {
        [self.x0[0] + s1 as f64 * self.dx[0], self.x0[1] + s2 as f64 * self.dx[1], self.x3[z]]
    }

    /// Volume element of sample `(z, ·, ·)`.
    pub fn cell(&self, z: usize) -> f64 {
        self.dx[0] * self.dx[1] * self.w3[z]
    }

    pub fn same_grid(&self, other: &SpatialField) -> bool {
        self.dims() == other.dims() && self.x0 == other.x0 && self.dx == other.dx && self.x3 == other.x3
    }

    /// Pointwise map into a new field on the same grid.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> SpatialField {
        let mut out = self.clone();
        out.data.mapv_inplace(f);
        out
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &SpatialField, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<SpatialField> {
        ensure(self.same_grid(other), || Error::GridMismatch("fields sampled on different grids".into()))?;
        let mut out = self.clone();
        out.data.zip_mut_with(&other.data, |a, b| *a = f(*a, *b));
        Ok(out)
    }

    /// Displacement `x - c`, using the torus metric on periodic axes.
    pub fn displacement(&self, x: P3, c: P3) -> P3 {
        let mut d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
        if let Some(p) = self.period {
            for i in 0..2 {
                d[i] -= p[i] * (d[i] / p[i]).round();
            }
        }
        d
    }

    /// Bounding box `(lo, hi)` of the sample points.
    pub fn bounds(&self) -> (P3, P3) {
        let [_, m1, m2] = self.dims();
        let z0 = self.x3.iter().cloned().fold(f64::INFINITY, f64::min);
        let z1 = self.x3.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (
            [self.x0[0], self.x0[1], z0],
            [self.x0[0] + (m1.max(1) - 1) as f64 * self.dx[0], self.x0[1] + (m2.max(1) - 1) as f64 * self.dx[1], z1],
        )
    }
}

/// Output grid of [`extend`]: the torus sampled at `m` points per axis,
/// recentred at the origin, and a list of slice heights with weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub m: [usize; 2],
    pub x3: Vec<f64>,
    pub w3: Vec<f64>,
}

impl SliceGrid {
    pub fn new(m: [usize; 2], x3: Vec<f64>) -> Self {
        let w = vec![1.0; x3.len()];
        SliceGrid { m, x3, w3: w }
    }

    /// Midpoint rule on `[-half, half]` with spacing at most `hz`.
    pub fn midpoint(m: [usize; 2], half: f64, hz: f64) -> Self {
        let q = ZNodes::midpoint(half, hz);
        SliceGrid { m, x3: q.nodes, w3: q.weights }
    }
}

/// Midpoint nodes and weights on `[-half, half]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZNodes {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub half: f64,
}

impl ZNodes {
    pub fn midpoint(half: f64, hz: f64) -> ZNodes {
        let n = ((2.0 * half / hz).ceil() as usize).max(1);
        let step = 2.0 * half / n as f64;
        ZNodes {
            nodes: (0..n).map(|k| -half + (k as f64 + 0.5) * step).collect(),
            weights: vec![step; n],
            half,
        }
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half / self.nodes.len() as f64
    }

    /// `Σ_z w_z e^{i z t}`; real because the nodes are symmetric.
    pub fn kernel(&self, t: f64) -> f64 {
        let n = self.nodes.len() as f64;
        let hz = self.step();
        let s = (hz * t / 2.0).sin();
        if s.abs() < 1e-12 {
            // t on the aliasing lattice 2πk/hz: every term has phase ±1
            let k = (hz * t / (2.0 * std::f64::consts::PI)).round() as i64;
            let sign = if (k * (n as i64 - 1)).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            return sign * n * hz;
        }
        hz * (n * hz * t / 2.0).sin() / s
    }
}

/// Evaluate `Ef` on the recentred torus grid: index `s` sits at
/// `x = (s - ⌊m/2⌋)·L/m`. Fails when `m` is below the window size, where
/// the modulus would be under-sampled.
pub fn extend(f: &FreqDensity, grid: &SliceGrid) -> Result<SpatialField> {
    let [w1, w2] = f.shape();
    ensure(grid.m[0] >= w1.max(1) && grid.m[1] >= w2.max(1), || {
        Error::GridTooCoarse(format!("torus grid {:?} below density window {:?}", grid.m, [w1, w2]))
    })?;
    ensure(grid.x3.len() == grid.w3.len(), || Error::InvalidParameter("x3 weights length".into()))?;
    let ev = SliceEvaluator::new(f, grid.m);
    let [m1, m2] = grid.m;
    let c = [(m1 / 2) as i64, (m2 / 2) as i64];
    let mut carrier = vec![Complex64::new(0.0, 0.0); m1 * m2];
    for s1 in 0..m1 {
        for s2 in 0..m2 {
            carrier[s1 * m2 + s2] = ev.carrier(s1 as i64 - c[0], s2 as i64 - c[1]);
        }
    }
    let slices: Vec<Vec<Complex64>> = grid
        .x3
        .par_iter()
        .map_init(
            || (ev.new_buffer(), ev.fft.scratch()),
            |(buf, scr), &z| {
                ev.eval(z, buf, scr);
                let tk = f.thickness.map(|t| t.transform(z)).unwrap_or(1.0);
                let mut out = vec![Complex64::new(0.0, 0.0); m1 * m2];
                for s1 in 0..m1 {
                    let t1 = (s1 as i64 - c[0]).rem_euclid(m1 as i64) as usize;
                    for s2 in 0..m2 {
                        let t2 = (s2 as i64 - c[1]).rem_euclid(m2 as i64) as usize;
                        out[s1 * m2 + s2] = buf[t1 * m2 + t2] * carrier[s1 * m2 + s2] * tk;
                    }
                }
                out
            },
        )
        .collect();
    let mut data = Array3::zeros((grid.x3.len(), m1, m2));
    for (z, sl) in slices.into_iter().enumerate() {
        for s1 in 0..m1 {
            for s2 in 0..m2 {
                data[[z, s1, s2]] = sl[s1 * m2 + s2];
            }
        }
    }
    let d = ev.spacing();
    let l = ev.period();
    Ok(SpatialField {
        data,
        x0: [-(c[0] as f64) * d[0], -(c[1] as f64) * d[1]],
        dx: d,
        x3: grid.x3.clone(),
        w3: grid.w3.clone(),
        period: Some([l, l]),
        scale: grid.x3.iter().fold(0.0f64, |a, z| a.max(z.abs())),
    })
}

/// A non-periodic sample box: `m` points per axis from `x0` with spacing
/// `dx`, on slices `x3` with weights `w3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub x0: [f64; 2],
    pub dx: [f64; 2],
    pub m: [usize; 2],
    pub x3: Vec<f64>,
    pub w3: Vec<f64>,
}

impl BlockGrid {
    /// Cell-centred cube grid of spacing at most `spacing` covering
    /// `B(center, radius)`.
    pub fn covering(center: P3, radius: f64, spacing: f64) -> Result<BlockGrid> {
        ensure(radius > 0.0 && spacing > 0.0, || {
            Error::InvalidParameter(format!("block radius {radius}, spacing {spacing}"))
        })?;
        let k = ((2.0 * radius / spacing).ceil() as usize).max(1);
        let d = 2.0 * radius / k as f64;
        let z = ZNodes::midpoint(radius, d);
        Ok(BlockGrid {
            x0: [center[0] - radius + d / 2.0, center[1] - radius + d / 2.0],
            dx: [d, d],
            m: [k, k],
            x3: z.nodes.iter().map(|t| t + center[2]).collect(),
            w3: z.weights,
        })
    }
}

/// Evaluate `Ef` on a [`BlockGrid`] by separable partial sums, costing
/// `O(w₁w₂m₂ + w₁m₁m₂)` per slice for a `w₁ x w₂` window.
pub fn extend_block(f: &FreqDensity, grid: &BlockGrid) -> Result<SpatialField> {
    ensure(grid.x3.len() == grid.w3.len(), || Error::InvalidParameter("x3 weights length".into()))?;
    let [w1, w2] = f.shape();
    let [m1, m2] = grid.m;
    let e = |w: usize, m: usize, axis: usize, origin: usize| {
        Array2::from_shape_fn((w, m), |(a, s)| {
            let xi = f.coord(origin + a);
            Complex64::from_polar(1.0, (grid.x0[axis] + s as f64 * grid.dx[axis]) * xi)
        })
    };
    let e1 = e(w1, m1, 0, f.origin[0]);
    let e2 = e(w2, m2, 1, f.origin[1]);
    let phi = Array2::from_shape_fn((w1, w2), |(a, b)| f.phi_at(a, b));
    let h2 = f.h() * f.h();
    let slices: Vec<Array2<Complex64>> = grid
        .x3
        .par_iter()
        .map(|&z| {
            let tk = f.thickness.map(|t| t.transform(z)).unwrap_or(1.0);
            let mut g = f.data.clone();
            g.zip_mut_with(&phi, |v, p| *v *= Complex64::from_polar(h2 * tk, z * p));
            e1.t().dot(&g.dot(&e2))
        })
        .collect();
    let mut data = Array3::zeros((grid.x3.len(), m1, m2));
    for (z, sl) in slices.into_iter().enumerate() {
        data.index_axis_mut(ndarray::Axis(0), z).assign(&sl);
    }
    Ok(SpatialField {
        data,
        x0: grid.x0,
        dx: grid.dx,
        x3: grid.x3.clone(),
        w3: grid.w3.clone(),
        period: None,
        scale: grid.x3.iter().fold(0.0f64, |a, z| a.max(z.abs())),
    })
}

/// Direct Riemann-sum evaluation of `Ef` at one point; `O(window)` work.
pub fn eval_direct(f: &FreqDensity, x: P3) -> Complex64 {
    let h = f.h();
    let mut re = Compensated::new();
    let mut im = Compensated::new();
    for ((a, b), v) in f.data.indexed_iter() {
        if v.norm_sqr() == 0.0 {
            continue;
        }
        let [xi, eta] = f.point(a, b);
        let ph = x[0] * xi + x[1] * eta + x[2] * f.surface.phi(xi, eta);
        let t = v * Complex64::new(ph.cos(), ph.sin());
        re.add(t.re);
        im.add(t.im);
    }
    let tk = f.thickness.map(|t| t.transform(x[2])).unwrap_or(1.0);
    Complex64::new(re.value(), im.value()) * (h * h * tk)
}

/// Integration region for spatial norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Every sample of the field.
    All,
    Empty,
    Ball { center: P3, radius: f64 },
    /// Union of balls of a common radius.
    Balls { centers: Vec<P3>, radius: f64 },
    /// The weight `w_{B_R}(x) = (1 + |x - c|/R)^{-100}` over all samples.
    Weight { center: P3, radius: f64 },
}

impl Region {
    /// Membership weight of a displacement-aware point.
    pub fn weight(&self, field: &SpatialField, x: P3) -> f64 {
        let dist = |c: &P3| {
            let d = field.displacement(x, *c);
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        };
        match self {
            Region::All => 1.0,
            Region::Empty => 0.0,
            Region::Ball { center, radius } => (dist(center) <= *radius) as u8 as f64,
            Region::Balls { centers, radius } => centers.iter().any(|c| dist(c) <= *radius) as u8 as f64,
            Region::Weight { center, radius } => (1.0 + dist(center) / radius).powi(-100),
        }
    }

    /// Balls in a refined-decoupling region must be pairwise disjoint.
    pub fn check_disjoint(&self) -> Result<()> {
        if let Region::Balls { centers, radius } = self {
            for (i, a) in centers.iter().enumerate() {
                for b in &centers[i + 1..] {
                    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                    ensure(d >= 2.0 * radius, || Error::Precondition(format!("balls at {a:?} and {b:?} overlap")))?;
                }
            }
        }
        Ok(())
    }

    fn check_inside(&self, field: &SpatialField) -> Result<()> {
        let (lo, hi) = field.bounds();
        let check = |c: &P3, r: f64| -> Result<()> {
            let half_slice = field.w3.iter().cloned().fold(0.0f64, f64::max) / 2.0;
            let slack = [field.dx[0], field.dx[1], half_slice];
            for i in 0..3 {
                let periodic = i < 2 && field.period.is_some();
                let ok = if periodic {
                    2.0 * r <= field.period.unwrap()[i] + 1e-9
                } else {
                    c[i] - r >= lo[i] - slack[i] - 1e-9 && c[i] + r <= hi[i] + slack[i] + 1e-9
                };
                ensure(ok, || Error::RegionOutOfBox(format!("ball at {c:?} radius {r}")))?;
            }
            Ok(())
        };
        match self {
            Region::Ball { center, radius } => check(center, *radius),
            Region::Balls { centers, radius } => centers.iter().try_for_each(|c| check(c, *radius)),
            _ => Ok(()),
        }
    }
}

/// Riemann-sum `L^p` norm over a region (weighted for [`Region::Weight`]).
pub fn lp_norm(field: &SpatialField, p: f64, region: &Region) -> Result<f64> {
    Ok(lp_integral(field, p, region)?.powf(1.0 / p))
}

/// `Σ |F|^p · weight · cell`, the `p`-th power of [`lp_norm`].
pub fn lp_integral(field: &SpatialField, p: f64, region: &Region) -> Result<f64> {
    ensure(p >= 1.0 && p.is_finite(), || Error::InvalidParameter(format!("exponent p = {p}")))?;
    region.check_inside(field)?;
    if matches!(region, Region::Empty) {
        return Ok(0.0);
    }
    let [nz, m1, m2] = field.dims();
    let per_slice: Vec<f64> = (0..nz)
        .into_par_iter()
        .map(|z| {
            let mut acc = Compensated::new();
            for s1 in 0..m1 {
                for s2 in 0..m2 {
                    let w = region.weight(field, field.point(z, s1, s2));
                    if w > 0.0 {
                        acc.add(field.data[[z, s1, s2]].norm().powf(p) * w);
                    }
                }
            }
            acc.value() * field.cell(z)
        })
        .collect();
    let mut acc = Compensated::new();
    per_slice.into_iter().for_each(|v| acc.add(v));
    Ok(acc.value())
}

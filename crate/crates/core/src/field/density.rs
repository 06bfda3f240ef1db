use crate::error::{ensure, Error, Result};
use crate::geom::{Patch, Square, P2};
use crate::util::{bump, csum};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// The graph surface carrying the density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Surface {
    /// `Φ(ξ,η) = ξη`.
    #[default]
    Hyperbolic,
    /// `Φ(ξ,η) = ξ² + η²`, comparison mode.
    Elliptic,
    /// `Φ(ξ,η) = aξ + bη` with `slope = [a, b]`.
    Plane { slope: [f64; 2] },
}

impl Surface {
    #[inline]
    pub fn phi(&self, xi: f64, eta: f64) -> f64 {
        match self {
            Surface::Hyperbolic => xi * eta,
            Surface::Elliptic => xi * xi + eta * eta,
            Surface::Plane { slope } => slope[0] * xi + slope[1] * eta,
        }
    }

    #[inline]
    pub fn grad(&self, xi: f64, eta: f64) -> P2 {
        match self {
            Surface::Hyperbolic => [eta, xi],
            Surface::Elliptic => [2.0 * xi, 2.0 * eta],
            Surface::Plane { slope } => *slope,
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            Surface::Hyperbolic => 0,
            Surface::Elliptic => 1,
            Surface::Plane { .. } => 2,
        }
    }

    /// Inverse of [`Surface::id`]; planes take their slope from `slope`.
    pub fn from_id(id: u8, slope: [f64; 2]) -> Result<Self> {
        match id {
            0 => Ok(Surface::Hyperbolic),
            1 => Ok(Surface::Elliptic),
            2 => Ok(Surface::Plane { slope }),
            _ => Err(Error::Format(format!("unknown surface id {id}"))),
        }
    }
}

/// Vertical thickening of the surface: a raised-cosine profile of full
/// width `width` in the third frequency coordinate. It acts on `Ef` as the
/// multiplier [`Thickness::transform`] in `x₃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thickness {
    pub width: f64,
}

impl Thickness {
    /// Profile id stored in the binary container.
    pub const RAISED_COSINE: u8 = 1;

    /// `∫ ρ(γ) e^{iγ x₃} dγ` for `ρ(γ) = (1 + cos(2πγ/w))/w` on `|γ| ≤ w/2`.
    pub fn transform(&self, x3: f64) -> f64 {
        let u = x3 * self.width / 2.0;
        if u.abs() < 1e-8 {
            return 1.0;
        }
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        if (u.abs() - std::f64::consts::PI).abs() < 1e-9 {
            return 0.5;
        }
        (u.sin() / u) * pi2 / (pi2 - u * u)
    }
}

/// How [`FreqDensity::restrict`] localizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictMode {
    /// Multiply by the indicator of the region.
    Sharp,
    /// Multiply by the partition-of-unity bump attached to the region as a
    /// cell of the aligned tiling of `[-1,1]²`; support inside the doubled cell.
    Smooth,
}

/// One-dimensional smooth partition of unity over `count` cells of width
/// `side` tiling `[-1, -1 + count·side]`. Edge cells absorb the tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPartition {
    pub side: f64,
    pub count: usize,
}

impl AxisPartition {
    /// Weight of cell `k` at coordinate `x`.
    pub fn weight(&self, k: usize, x: f64) -> f64 {
        let u = (x + 1.0) / self.side - 0.5;
        let j0 = u.floor();
        let b0 = bump(u - j0);
        let b1 = bump(u - j0 - 1.0);
        let norm = b0 + b1;
        let cell = |j: f64| -> usize {
            if j <= 0.0 {
                0
            } else if j >= (self.count - 1) as f64 {
                self.count - 1
            } else {
                j as usize
            }
        };
        let mut w = 0.0;
        if cell(j0) == k {
            w += b0;
        }
        if cell(j0 + 1.0) == k {
            w += b1;
        }
        w / norm
    }

    /// The aligned partition having `[lo, lo + side)` as a cell, with its index.
    pub fn aligned(lo: f64, side: f64) -> Result<(AxisPartition, usize)> {
        let count = (2.0 / side).round();
        ensure(count >= 1.0 && (count * side - 2.0).abs() < 1e-9, || {
            Error::InvalidParameter(format!("side {side} does not tile [-1,1]"))
        })?;
        let k = ((lo + 1.0) / side).round();
        ensure((k * side - (lo + 1.0)).abs() < 1e-9 && k >= 0.0 && k < count, || {
            Error::InvalidParameter(format!("cell at {lo} not aligned to the {side}-tiling"))
        })?;
        Ok((AxisPartition { side, count: count as usize }, k as usize))
    }
}

/// Complex density sampled on the midpoint lattice of `[-1,1]²` with `n`
/// cells per axis (`h = 2/n`, `ξ_i = -1 + (i + 1/2)h`). Only a rectangular
/// window of the lattice starting at `origin` is stored; samples outside it
/// are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqDensity {
    pub n: usize,
    pub origin: [usize; 2],
    pub data: Array2<Complex64>,
    pub surface: Surface,
    pub thickness: Option<Thickness>,
}

impl FreqDensity {
    pub fn zeros(n: usize, origin: [usize; 2], shape: [usize; 2], surface: Surface) -> Result<Self> {
        ensure(n > 0, || Error::InvalidParameter("lattice size 0".into()))?;
        ensure(origin[0] + shape[0] <= n && origin[1] + shape[1] <= n, || {
            Error::InvalidParameter(format!("window {origin:?}+{shape:?} exceeds lattice {n}"))
        })?;
        Ok(FreqDensity {
            n,
            origin,
            data: Array2::zeros((shape[0], shape[1])),
            surface,
            thickness: None,
        })
    }

    /// Full-lattice density sampled from `f(ξ, η)`.
    pub fn from_fn(n: usize, surface: Surface, f: impl FnMut(f64, f64) -> Complex64) -> Result<Self> {
        Self::from_fn_window(n, surface, [0, 0], [n, n], f)
    }

    /// Window `[lo, hi)` of lattice indices sampled from `f(ξ, η)`.
    pub fn from_fn_window(
        n: usize,
        surface: Surface,
        lo: [usize; 2],
        hi: [usize; 2],
        mut f: impl FnMut(f64, f64) -> Complex64,
    ) -> Result<Self> {
        ensure(lo[0] <= hi[0] && lo[1] <= hi[1], || Error::InvalidParameter("empty window".into()))?;
        let mut d = Self::zeros(n, lo, [hi[0] - lo[0], hi[1] - lo[1]], surface)?;
        let h = d.h();
        for ((a, b), v) in d.data.indexed_iter_mut() {
            let xi = -1.0 + ((lo[0] + a) as f64 + 0.5) * h;
            let eta = -1.0 + ((lo[1] + b) as f64 + 0.5) * h;
            *v = f(xi, eta);
        }
        Ok(d)
    }

    /// Window covering the lattice points of a patch, sampled from `f`;
    /// points of the window outside the patch are zero.
    pub fn from_fn_on(n: usize, surface: Surface, patch: &Patch, mut f: impl FnMut(f64, f64) -> Complex64) -> Result<Self> {
        let (lo, hi) = index_bbox(n, patch);
        let mut d = Self::from_fn_window(n, surface, lo, hi, |x, y| if patch.contains([x, y]) { f(x, y) } else { Complex64::new(0.0, 0.0) })?;
        d.shrink();
        Ok(d)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn shape(&self) -> [usize; 2] {
        let s = self.data.dim();
        [s.0, s.1]
    }

    /// Lattice coordinate of global index `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.h()
    }

    /// `(ξ, η)` of local window index `(a, b)`.
    #[inline]
    pub fn point(&self, a: usize, b: usize) -> P2 {
        [self.coord(self.origin[0] + a), self.coord(self.origin[1] + b)]
    }

    #[inline]
    pub fn phi_at(&self, a: usize, b: usize) -> f64 {
        let [x, y] = self.point(a, b);
        self.surface.phi(x, y)
    }

    /// Global sample (zero outside the window).
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let [s0, s1] = self.shape();
        if i >= self.origin[0] && j >= self.origin[1] && i < self.origin[0] + s0 && j < self.origin[1] + s1 {
            self.data[[i - self.origin[0], j - self.origin[1]]]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Nonzero samples as `(global index, value)` in row-major order.
    pub fn nonzeros(&self) -> Vec<([usize; 2], Complex64)> {
        self.data
            .indexed_iter()
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|((a, b), v)| ([self.origin[0] + a, self.origin[1] + b], *v))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.norm_sqr() == 0.0)
    }

    /// `‖f‖₂² = h² Σ |f|²`.
    pub fn l2_sq(&self) -> f64 {
        let h = self.h();
        h * h * csum(self.data.iter().map(|v| v.norm_sqr()))
    }

    /// `‖f‖_p^p = h² Σ |f|^p`.
    pub fn lp_p(&self, p: f64) -> f64 {
        let h = self.h();
        h * h * csum(self.data.iter().map(|v| v.norm().powf(p)))
    }

    pub fn scaled(&self, c: Complex64) -> FreqDensity {
        let mut out = self.clone();
        out.data.mapv_inplace(|v| v * c);
        out
    }

    /// Sum of two densities on the same lattice; the window is the union.
    pub fn add(&self, other: &FreqDensity) -> Result<FreqDensity> {
        ensure(self.n == other.n && self.surface == other.surface, || {
            Error::GridMismatch("densities on different lattices or surfaces".into())
        })?;
        let lo = [self.origin[0].min(other.origin[0]), self.origin[1].min(other.origin[1])];
        let (s, o) = (self.shape(), other.shape());
        let hi = [
            (self.origin[0] + s[0]).max(other.origin[0] + o[0]),
            (self.origin[1] + s[1]).max(other.origin[1] + o[1]),
        ];
        let mut out = FreqDensity::zeros(self.n, lo, [hi[0] - lo[0], hi[1] - lo[1]], self.surface)?;
        out.thickness = self.thickness;
        for src in [self, other] {
            for ((a, b), v) in src.data.indexed_iter() {
                out.data[[src.origin[0] + a - lo[0], src.origin[1] + b - lo[1]]] += *v;
            }
        }
        Ok(out)
    }

    /// Sum of many densities on a common lattice.
    pub fn sum<'a, I: IntoIterator<Item = &'a FreqDensity>>(parts: I) -> Result<Option<FreqDensity>> {
        let mut acc: Option<FreqDensity> = None;
        for p in parts {
            acc = Some(match acc {
                None => p.clone(),
                Some(a) => a.add(p)?,
            });
        }
        Ok(acc)
    }

    /// Shrink the window to the bounding box of the nonzero samples.
    pub fn shrink(&mut self) {
        let nz = self.nonzeros();
        if nz.is_empty() {
            self.data = Array2::zeros((0, 0));
            return;
        }
        let mut lo = [usize::MAX; 2];
        let mut hi = [0usize; 2];
        for (g, _) in &nz {
            for i in 0..2 {
                lo[i] = lo[i].min(g[i]);
                hi[i] = hi[i].max(g[i] + 1);
            }
        }
        if lo == self.origin && hi[0] - lo[0] == self.shape()[0] && hi[1] - lo[1] == self.shape()[1] {
            return;
        }
        let mut data = Array2::zeros((hi[0] - lo[0], hi[1] - lo[1]));
        for (g, v) in nz {
            data[[g[0] - lo[0], g[1] - lo[1]]] = v;
        }
        self.origin = lo;
        self.data = data;
    }

    /// Multiply by `e^{i(aξ + bη)}`.
    pub fn modulate(&self, a: f64, b: f64) -> FreqDensity {
        let mut out = self.clone();
        for ((i, j), v) in out.data.indexed_iter_mut() {
            let [x, y] = self.point(i, j);
            *v *= Complex64::from_polar(1.0, a * x + b * y);
        }
        out
    }

    /// `h ≤ 1/(2√R)`: at least two samples per `R^{-1/2}`-cap side.
    pub fn resolves(&self, r: f64) -> bool {
        self.h() <= 0.5 / r.sqrt() + 1e-15
    }

    /// Localize to a region (see [`RestrictMode`]). A region missing the
    /// window yields the zero density.
    pub fn restrict(&self, region: &Patch, mode: RestrictMode) -> Result<FreqDensity> {
        match mode {
            RestrictMode::Sharp => {
                let mut out = self.clone();
                for ((a, b), v) in out.data.indexed_iter_mut() {
                    if !region.contains(self.point(a, b)) {
                        *v = Complex64::new(0.0, 0.0);
                    }
                }
                out.shrink();
                Ok(out)
            }
            RestrictMode::Smooth => {
                let (px, py) = smooth_partition_of(region)?;
                let mut out = self.clone();
                for ((a, b), v) in out.data.indexed_iter_mut() {
                    let [x, y] = self.point(a, b);
                    let w = px.0.weight(px.1, x) * py.0.weight(py.1, y);
                    *v *= w;
                }
                out.shrink();
                Ok(out)
            }
        }
    }

    /// `|θ|^{-1/2} ‖f 1_θ‖₂`.
    pub fn cap_avg_l2(&self, theta: &Square) -> Result<f64> {
        theta.validate()?;
        let h = self.h();
        let s = csum(
            self.data
                .indexed_iter()
                .filter(|((a, b), _)| theta.contains(self.point(*a, *b)))
                .map(|(_, v)| v.norm_sqr()),
        );
        Ok((h * h * s / theta.area()).sqrt())
    }

    /// Lattice index range `[lo, hi)` of points inside a patch's bounding box.
    pub fn index_bbox(&self, patch: &Patch) -> ([usize; 2], [usize; 2]) {
        index_bbox(self.n, patch)
    }

    /// Range of `Φ` over the stored window.
    pub fn phi_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ((a, b), v) in self.data.indexed_iter() {
            if v.norm_sqr() > 0.0 {
                let p = self.phi_at(a, b);
                lo = lo.min(p);
                hi = hi.max(p);
            }
        }
        if lo > hi {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }
}

/// Global index range `[lo, hi)` whose lattice points may lie in the patch.
pub fn index_bbox(n: usize, patch: &Patch) -> ([usize; 2], [usize; 2]) {
    let (plo, phi) = patch.bbox();
    let h = 2.0 / n as f64;
    let mut lo = [0usize; 2];
    let mut hi = [0usize; 2];
    for i in 0..2 {
        let a = ((plo[i] + 1.0) / h - 0.5).ceil().max(0.0);
        let b = ((phi[i] + 1.0) / h - 0.5).ceil().min(n as f64);
        lo[i] = a as usize;
        hi[i] = (b as usize).max(lo[i]);
    }
    (lo, hi)
}

fn smooth_partition_of(region: &Patch) -> Result<((AxisPartition, usize), (AxisPartition, usize))> {
    match region {
        Patch::Square(s) => {
            let lo = s.lo();
            Ok((AxisPartition::aligned(lo[0], s.side)?, AxisPartition::aligned(lo[1], s.side)?))
        }
        Patch::Dyadic(d) => {
            let (lo, s) = (d.lo(), d.sides());
            Ok((AxisPartition::aligned(lo[0], s[0])?, AxisPartition::aligned(lo[1], s[1])?))
        }
        Patch::Rect(_) => Err(Error::InvalidParameter("smooth restriction needs an axis-parallel tiling cell".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::partition;

    fn one(_: f64, _: f64) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn axis_partition_sums_to_one() {
        let p = AxisPartition { side: 0.25, count: 8 };
        for k in 0..=400 {
            let x = -1.0 + 2.0 * k as f64 / 400.0;
            let s: f64 = (0..8).map(|c| p.weight(c, x)).sum();
            assert!((s - 1.0).abs() < 1e-14, "x={x} s={s}");
        }
        // support of an interior cell stays inside the doubled cell
        assert_eq!(p.weight(3, -1.0 + 0.25 * 2.49), 0.0);
        assert!(p.weight(3, -1.0 + 0.25 * 2.51) > 0.0);
    }

    #[test]
    fn sharp_is_idempotent_and_quarter_mass() {
        let f = FreqDensity::from_fn(16, Surface::Hyperbolic, one).unwrap();
        let q: Patch = Square::new([0.5, 0.5], 1.0).unwrap().into();
        let g = f.restrict(&q, RestrictMode::Sharp).unwrap();
        let gg = g.restrict(&q, RestrictMode::Sharp).unwrap();
        assert_eq!(g, gg);
        assert!((g.l2_sq() / f.l2_sq() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn smooth_partition_reconstructs() {
        let f = FreqDensity::from_fn(32, Surface::Hyperbolic, |x, y| Complex64::new(x.sin(), y * y)).unwrap();
        let tau = Square::new([0.0, 0.0], 2.0).unwrap();
        let parts: Vec<FreqDensity> = partition(&tau, 0.5)
            .unwrap()
            .iter()
            .map(|t| f.restrict(&Patch::Square(*t), RestrictMode::Smooth).unwrap())
            .collect();
        let s = FreqDensity::sum(parts.iter()).unwrap().unwrap();
        for i in 0..32 {
            for j in 0..32 {
                assert!((s.get(i, j) - f.get(i, j)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn cap_average() {
        let f = FreqDensity::from_fn(16, Surface::Hyperbolic, one).unwrap();
        let th = Square::new([0.25, 0.25], 0.5).unwrap();
        assert!((f.cap_avg_l2(&th).unwrap() - 1.0).abs() < 1e-14);
        let z = f.scaled(Complex64::new(0.0, 0.0));
        assert_eq!(z.cap_avg_l2(&th).unwrap(), 0.0);
    }

    #[test]
    fn empty_restriction_is_zero() {
        let f = FreqDensity::from_fn_window(16, Surface::Hyperbolic, [0, 0], [4, 4], one).unwrap();
        let far: Patch = Square::new([0.75, 0.75], 0.25).unwrap().into();
        assert!(f.restrict(&far, RestrictMode::Sharp).unwrap().is_zero());
    }

    #[test]
    fn thickness_transform() {
        let t = Thickness { width: 0.01 };
        assert_eq!(t.transform(0.0), 1.0);
        assert!(t.transform(100.0) < 1.0 && t.transform(100.0) > 0.0);
        let at_pi = t.transform(2.0 * std::f64::consts::PI / 0.01);
        assert!((at_pi - 0.5).abs() < 1e-6);
    }
}

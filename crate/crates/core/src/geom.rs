//! Frequency-plane and 3-space geometry: squares, oriented rectangles,
//! dyadic covers, transversality predicates and the affine symmetries of
//! the hyperbolic paraboloid `H = {(ξ, η, ξη)}`.

use crate::error::{ensure, Error, Result};
use serde::{Deserialize, Serialize};

/// A point `(ξ, η)` of the frequency plane.
pub type P2 = [f64; 2];
/// A point or vector of frequency 3-space `(ξ, η, γ)`.
pub type P3 = [f64; 3];

/// Closed numeric interpretation of "comparable to 1".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band { lo: 0.25, hi: 4.0 }
    }
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        ensure(lo > 0.0 && lo <= hi && hi.is_finite(), || {
            Error::InvalidParameter(format!("band [{lo}, {hi}]"))
        })?;
        Ok(Band { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// The band `[lo / k, hi * k]`.
    pub fn widen(&self, k: f64) -> Band {
        Band { lo: self.lo / k, hi: self.hi * k }
    }
}

/// Axis-parallel square. Membership is half-open: `[c - s/2, c + s/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub center: P2,
    pub side: f64,
}

impl Square {
    pub fn new(center: P2, side: f64) -> Result<Self> {
        let sq = Square { center, side };
        sq.validate()?;
        Ok(sq)
    }

    /// Square with lower-left corner `lo`.
    pub fn from_corner(lo: P2, side: f64) -> Result<Self> {
        Square::new([lo[0] + side / 2.0, lo[1] + side / 2.0], side)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.side > 0.0 && self.side.is_finite(), || {
            Error::Degenerate(format!("square side {}", self.side))
        })?;
        let h = self.side / 2.0;
        let inside = self.center.iter().all(|c| c - h >= -2.0 - 1e-12 && c + h <= 2.0 + 1e-12);
        ensure(inside, || Error::Degenerate(format!("square {:?} leaves [-2,2]^2", self)))
    }

    pub fn lo(&self) -> P2 {
        [self.center[0] - self.side / 2.0, self.center[1] - self.side / 2.0]
    }

    pub fn hi(&self) -> P2 {
        [self.center[0] + self.side / 2.0, self.center[1] + self.side / 2.0]
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn contains(&self, p: P2) -> bool {
        let (lo, hi) = (self.lo(), self.hi());
        p[0] >= lo[0] && p[0] < hi[0] && p[1] >= lo[1] && p[1] < hi[1]
    }

    /// Concentric square with side multiplied by `k`.
    pub fn dilate(&self, k: f64) -> Square {
        Square { center: self.center, side: self.side * k }
    }

    pub fn is_inside(&self, other: &Square) -> bool {
        let (a, b) = (self.lo(), self.hi());
        let (c, d) = (other.lo(), other.hi());
        let eps = 1e-12;
        a[0] >= c[0] - eps && a[1] >= c[1] - eps && b[0] <= d[0] + eps && b[1] <= d[1] + eps
    }
}

/// Oriented rectangle with half-lengths `(short, long)` and the unit
/// direction of the long side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneRect {
    pub center: P2,
    pub half: [f64; 2],
    pub axis: P2,
}

impl PlaneRect {
    pub fn new(center: P2, half: [f64; 2], axis: P2) -> Result<Self> {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
        ensure(norm > 0.0, || Error::Degenerate("zero rectangle axis".into()))?;
        ensure(half[0] > 0.0 && half[0] <= half[1], || {
            Error::Degenerate(format!("rectangle half-lengths {:?}", half))
        })?;
        let r = PlaneRect { center, half, axis: [axis[0] / norm, axis[1] / norm] };
        let inside = r.corners().iter().all(|c| c[0].abs() <= 2.0 + 1e-12 && c[1].abs() <= 2.0 + 1e-12);
        ensure(inside, || Error::Degenerate("rectangle corners leave [-2,2]^2".into()))?;
        Ok(r)
    }

    fn perp(&self) -> P2 {
        [-self.axis[1], self.axis[0]]
    }

    /// Coordinates of `p - center` in the (long, short) frame.
    pub fn local(&self, p: P2) -> [f64; 2] {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let n = self.perp();
        [d[0] * self.axis[0] + d[1] * self.axis[1], d[0] * n[0] + d[1] * n[1]]
    }

    /// Half-open membership in the rotated frame.
    pub fn contains(&self, p: P2) -> bool {
        let [u, v] = self.local(p);
        u >= -self.half[1] && u < self.half[1] && v >= -self.half[0] && v < self.half[0]
    }

    pub fn corners(&self) -> [P2; 4] {
        let n = self.perp();
        let mut out = [[0.0; 2]; 4];
        for (k, (su, sv)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].iter().enumerate() {
            for i in 0..2 {
                out[k][i] = self.center[i] + su * self.half[1] * self.axis[i] + sv * self.half[0] * n[i];
            }
        }
        out
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half[0] * self.half[1]
    }

    /// Absolute slope of the long central line (infinite when vertical).
    pub fn long_axis_slope(&self) -> f64 {
        if self.axis[0] == 0.0 {
            f64::INFINITY
        } else {
            (self.axis[1] / self.axis[0]).abs()
        }
    }
}

/// Dyadic rectangle `[-1 + p0 2^a, -1 + (p0+1) 2^a) x [-1 + p1 2^b, ...)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicRect {
    pub log_side: [i32; 2],
    pub pos: [i64; 2],
}

impl DyadicRect {
    pub fn sides(&self) -> [f64; 2] {
        [2f64.powi(self.log_side[0]), 2f64.powi(self.log_side[1])]
    }

    pub fn lo(&self) -> P2 {
        let s = self.sides();
        [-1.0 + self.pos[0] as f64 * s[0], -1.0 + self.pos[1] as f64 * s[1]]
    }

    pub fn center(&self) -> P2 {
        let (lo, s) = (self.lo(), self.sides());
        [lo[0] + s[0] / 2.0, lo[1] + s[1] / 2.0]
    }

    pub fn area(&self) -> f64 {
        let s = self.sides();
        s[0] * s[1]
    }

    pub fn contains(&self, p: P2) -> bool {
        let (lo, s) = (self.lo(), self.sides());
        p[0] >= lo[0] && p[0] < lo[0] + s[0] && p[1] >= lo[1] && p[1] < lo[1] + s[1]
    }

    /// The tile of shape `log_side` containing `p` (half-open convention).
    pub fn containing(log_side: [i32; 2], p: P2) -> DyadicRect {
        let pos = [0, 1].map(|i| ((p[i] + 1.0) / 2f64.powi(log_side[i])).floor() as i64);
        DyadicRect { log_side, pos }
    }
}

/// Any frequency-plane region used to localize a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Patch {
    Square(Square),
    Rect(PlaneRect),
    Dyadic(DyadicRect),
}

impl Patch {
    pub fn contains(&self, p: P2) -> bool {
        match self {
            Patch::Square(s) => s.contains(p),
            Patch::Rect(r) => r.contains(p),
            Patch::Dyadic(d) => d.contains(p),
        }
    }

    pub fn center(&self) -> P2 {
        match self {
            Patch::Square(s) => s.center,
            Patch::Rect(r) => r.center,
            Patch::Dyadic(d) => d.center(),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Patch::Square(s) => s.area(),
            Patch::Rect(r) => r.area(),
            Patch::Dyadic(d) => d.area(),
        }
    }

    /// Axis-parallel bounding box `(lo, hi)`.
    pub fn bbox(&self) -> (P2, P2) {
        match self {
            Patch::Square(s) => (s.lo(), s.hi()),
            Patch::Dyadic(d) => {
                let (lo, s) = (d.lo(), d.sides());
                (lo, [lo[0] + s[0], lo[1] + s[1]])
            }
            Patch::Rect(r) => {
                let c = r.corners();
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for p in c.iter() {
                    for i in 0..2 {
                        lo[i] = lo[i].min(p[i]);
                        hi[i] = hi[i].max(p[i]);
                    }
                }
                (lo, hi)
            }
        }
    }
}

impl From<Square> for Patch {
    fn from(s: Square) -> Self {
        Patch::Square(s)
    }
}

impl From<PlaneRect> for Patch {
    fn from(r: PlaneRect) -> Self {
        Patch::Rect(r)
    }
}

impl From<DyadicRect> for Patch {
    fn from(d: DyadicRect) -> Self {
        Patch::Dyadic(d)
    }
}

/// Both center-coordinate gaps lie in `band`.
pub fn is_transverse(t1: &Square, t2: &Square, band: Band) -> Result<bool> {
    t1.validate()?;
    t2.validate()?;
    let dx = (t1.center[0] - t2.center[0]).abs();
    let dy = (t1.center[1] - t2.center[1]).abs();
    Ok(band.contains(dx) && band.contains(dy))
}

/// The line joining the centers has absolute slope in `band`. A vertical
/// joining line (or coincident centers) is reported as not in general
/// position.
pub fn is_general_position(p1: &Patch, p2: &Patch, band: Band) -> bool {
    let (a, b) = (p1.center(), p2.center());
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    if dx == 0.0 {
        return false;
    }
    band.contains((dy / dx).abs())
}

/// A single thin rectangle is in general position when its long axis is.
pub fn rect_in_general_position(r: &PlaneRect, band: Band) -> bool {
    band.contains(r.long_axis_slope())
}

/// Cover of `tau` by `ceil(side/delta)^2` axis-parallel `delta`-squares.
/// When `delta` does not divide the side, the last row and column are
/// shifted back inside `tau`, so boundary overlap is at most 4-fold.
pub fn partition(tau: &Square, delta: f64) -> Result<Vec<Square>> {
    tau.validate()?;
    ensure(delta > 0.0, || Error::InvalidParameter(format!("partition scale {delta}")))?;
    ensure(delta <= tau.side * (1.0 + 1e-12), || {
        Error::InvalidParameter(format!("partition scale {delta} exceeds side {}", tau.side))
    })?;
    let k = ((tau.side / delta) - 1e-9).ceil().max(1.0) as usize;
    let lo = tau.lo();
    let hi = tau.hi();
    let starts = |i: usize, axis: usize| -> f64 { (lo[axis] + i as f64 * delta).min(hi[axis] - delta) };
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            out.push(Square {
                center: [starts(i, 0) + delta / 2.0, starts(j, 1) + delta / 2.0],
                side: delta,
            });
        }
    }
    Ok(out)
}

/// Admissible dyadic shapes `(a, b)` with `R^{-1} <= 2^a, 2^b <= 2` and
/// `2^{a+b} = R^{-1}`, ordered by `a`.
pub fn dyadic_shapes(r: u64) -> Result<Vec<[i32; 2]>> {
    ensure(r >= 4 && r.is_power_of_two(), || {
        Error::InvalidParameter(format!("dyadic cover needs R a power of 2, R >= 4; got {r}"))
    })?;
    let k = r.trailing_zeros() as i32;
    Ok((-k..=1).filter_map(|a| {
        let b = -k - a;
        (b >= -k && b <= 1).then_some([a, b])
    })
    .collect())
}

/// All dyadic rectangles of area `R^{-1}` with admissible sides tiling
/// `[-1,1]^2`, one tiling per shape class.
pub fn dyadic_cover(r: u64) -> Result<Vec<DyadicRect>> {
    let mut out = Vec::new();
    for shape in dyadic_shapes(r)? {
        let n0 = (2.0 / 2f64.powi(shape[0])).round() as i64;
        let n1 = (2.0 / 2f64.powi(shape[1])).round() as i64;
        for p0 in 0..n0 {
            for p1 in 0..n1 {
                out.push(DyadicRect { log_side: shape, pos: [p0, p1] });
            }
        }
    }
    Ok(out)
}

/// Affine map `x -> M x + t` of frequency 3-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap3 {
    pub m: [[f64; 3]; 3],
    pub t: P3,
}

impl AffineMap3 {
    pub fn identity() -> Self {
        AffineMap3 { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], t: [0.0; 3] }
    }

    pub fn apply(&self, x: P3) -> P3 {
        let mut y = self.t;
        for (i, yi) in y.iter_mut().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                *yi += self.m[i][j] * xj;
            }
        }
        y
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineMap3) -> AffineMap3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        AffineMap3 { m, t: self.apply(other.t) }
    }

    pub fn inverse(&self) -> Result<AffineMap3> {
        let d = self.det();
        ensure(d.abs() > 1e-300 && d.is_finite(), || Error::Degenerate("singular affine map".into()))?;
        let m = &self.m;
        let mut inv = [[0.0; 3]; 3];
        for (i, row) in inv.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                let (c, e) = ((i + 1) % 3, (i + 2) % 3);
                *v = (m[a][c] * m[b][e] - m[a][e] * m[b][c]) / d;
            }
        }
        let mut t = [0.0; 3];
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = -(0..3).map(|k| inv[i][k] * self.t[k]).sum::<f64>();
        }
        Ok(AffineMap3 { m: inv, t })
    }
}

/// `(ξ,η,γ) -> ((ξ-c1)/d, (η-c2)/d, (γ - c1 η - c2 ξ + c1 c2)/d^2)`.
pub fn hyperbolic_rescale(c1: f64, c2: f64, d: f64) -> Result<AffineMap3> {
    ensure(d > 0.0 && d.is_finite(), || Error::InvalidParameter(format!("rescale factor d = {d}")))?;
    let d2 = d * d;
    Ok(AffineMap3 {
        m: [[1.0 / d, 0.0, 0.0], [0.0, 1.0 / d, 0.0], [-c2 / d2, -c1 / d2, 1.0 / d2]],
        t: [-c1 / d, -c2 / d, c1 * c2 / d2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Horizontal: `(ξ, 2Kη, 2Kγ)`; vertical: `(2Kξ, η, 2Kγ)`.
pub fn nonisotropic_dilate(axis: Axis, k: f64) -> Result<AffineMap3> {
    ensure(k >= 1.0 && k.is_finite(), || Error::InvalidParameter(format!("dilation factor K = {k}")))?;
    let s = 2.0 * k;
    let m = match axis {
        Axis::Horizontal => [[1.0, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]],
        Axis::Vertical => [[s, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, s]],
    };
    Ok(AffineMap3 { m, t: [0.0; 3] })
}

/// Normal `(η, ξ, -1)` of the tangent plane of H over `p`.
pub fn normal(p: P2) -> P3 {
    [p[1], p[0], -1.0]
}

/// Lift of `p` to H.
pub fn lift(p: P2) -> P3 {
    [p[0], p[1], p[0] * p[1]]
}

/// Direction `(ξ2-ξ1, η1-η2, η1ξ2-η2ξ1)` of the intersection line of the
/// tangent planes of H over `p1` and `p2`.
pub fn tangent_intersection_direction(p1: P2, p2: P2) -> Result<P3> {
    ensure(p1 != p2, || Error::Degenerate("coincident tangency points".into()))?;
    let ([x1, y1], [x2, y2]) = (p1, p2);
    Ok([x2 - x1, y1 - y2, y1 * x2 - y2 * x1])
}

/// Unit long-side direction of the rectangles covering a transverse pair
/// centered at `c1`, `c2`: `(ξ2-ξ1, η1-η2)`, whose slope is minus the slope
/// of the line joining the centers.
pub fn canonical_axis(c1: P2, c2: P2) -> Result<P2> {
    let v = [c2[0] - c1[0], c1[1] - c2[1]];
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    ensure(n > 0.0, || Error::Degenerate("coincident centers".into()))?;
    Ok([v[0] / n, v[1] / n])
}

/// Cover `tau` by rectangles of half-lengths `half` oriented along `axis`:
/// the rotated tiling anchored at the center of `tau`, keeping the tiles
/// whose closure meets `tau`.
pub fn rect_cover(tau: &Square, half: [f64; 2], axis: P2) -> Result<Vec<PlaneRect>> {
    tau.validate()?;
    let probe = PlaneRect::new(tau.center, half, axis)?;
    let a = probe.axis;
    let n = [-a[1], a[0]];
    let reach = tau.side * std::f64::consts::FRAC_1_SQRT_2;
    let ku = (reach / (2.0 * half[1])).ceil() as i64 + 1;
    let kv = (reach / (2.0 * half[0])).ceil() as i64 + 1;
    let mut out = Vec::new();
    for i in -ku..=ku {
        for j in -kv..=kv {
            let u = i as f64 * 2.0 * half[1];
            let v = j as f64 * 2.0 * half[0];
            let c = [tau.center[0] + u * a[0] + v * n[0], tau.center[1] + u * a[1] + v * n[1]];
            let r = PlaneRect { center: c, half, axis: a };
            if rect_meets_square(&r, tau) {
                out.push(r);
            }
        }
    }
    Ok(out)
}

/// Separating-axis test between a rotated rectangle and a square.
fn rect_meets_square(r: &PlaneRect, s: &Square) -> bool {
    let sc = [
        s.lo(),
        [s.hi()[0], s.lo()[1]],
        s.hi(),
        [s.lo()[0], s.hi()[1]],
    ];
    let rc = r.corners();
    let axes: [P2; 4] = [[1.0, 0.0], [0.0, 1.0], r.axis, [-r.axis[1], r.axis[0]]];
    axes.iter().all(|ax| {
        let proj = |ps: &[P2; 4]| {
            let v: Vec<f64> = ps.iter().map(|p| p[0] * ax[0] + p[1] * ax[1]).collect();
            (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        };
        let (a0, a1) = proj(&sc);
        let (b0, b1) = proj(&rc);
        a1 > b0 + 1e-14 && b1 > a0 + 1e-14
    })
}

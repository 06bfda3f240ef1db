//! Reverse square functions over `R^{1/2}`-balls, the `g`-functions built
//! from almost-adjacent pairs, and the narrow/broad labelling of a pair of
//! squares.

use super::{product_integral, real_product_integral, split_by, RatioReport};
use crate::error::{ensure, Error, Result};
use crate::field::{extend_block, BlockGrid, FreqDensity, Region, SpatialField, Surface};
use crate::geom::{canonical_axis, is_general_position, partition, rect_cover, Band, Patch, PlaneRect, Square, P2, P3};
use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Smallest `|sin|` of the angle between two planes treated as transverse.
pub const MIN_PLANE_SIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SquareFnMode {
    /// Densities on two planes; the pieces are strips of width `2Δ` along
    /// the common line.
    Planes { delta: f64 },
    /// Densities on H over `r`-squares; the pieces are `(r/K₂, r)`
    /// rectangles along the tangent-plane intersection direction. Requires
    /// `d·R^{1/2}·r·K₂ ≥ c_pre` with `d` the centre distance.
    Caps { r_scale: f64, k2: f64, c_pre: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareFnReport {
    /// `∫_Q|f_{α₁}f_{α₂}|² / ∫_Q Σ|f_{ω₁}|² Σ|f_{ω₂}|²`.
    pub forward: RatioReport,
    /// The reciprocal direction.
    pub reverse: RatioReport,
    pub pieces: [usize; 2],
}

fn ball_of(q: &Region) -> Result<(P3, f64)> {
    match q {
        Region::Ball { center, radius } => Ok((*center, *radius)),
        _ => Err(Error::InvalidParameter("square-function estimates take a single ball Q".into())),
    }
}

/// `|F|²` summed over pieces, as a real field on `grid`.
fn square_sum(pieces: &[FreqDensity], grid: &BlockGrid) -> Result<SpatialField> {
    let fields = pieces.par_iter().map(|p| extend_block(p, grid)).collect::<Result<Vec<_>>>()?;
    let mut acc = zero_field(grid);
    for f in &fields {
        acc.data.zip_mut_with(&f.data, |a, b| a.re += b.norm_sqr());
    }
    Ok(acc)
}

fn zero_field(grid: &BlockGrid) -> SpatialField {
    SpatialField {
        data: Array3::zeros((grid.x3.len(), grid.m[0], grid.m[1])),
        x0: grid.x0,
        dx: grid.dx,
        x3: grid.x3.clone(),
        w3: grid.w3.clone(),
        period: None,
        scale: grid.x3.iter().fold(0.0f64, |a, z| a.max(z.abs())),
    }
}

fn restrict_square(f: &FreqDensity, a: &Square) -> Result<FreqDensity> {
    let mut parts = split_by(f, |p| a.contains(p).then_some(()))?;
    match parts.pop() {
        Some((_, d)) => Ok(d),
        None => super::from_points(f, &[]),
    }
}

/// Pieces of `f` in the tiles of `rects`; each sample goes to the first
/// tile containing it.
fn rect_pieces(f: &FreqDensity, rects: &[PlaneRect]) -> Result<Vec<FreqDensity>> {
    Ok(split_by(f, |p| rects.iter().position(|r| r.contains(p)))?.into_iter().map(|(_, d)| d).collect())
}

fn caps_precondition(a1: &Square, a2: &Square, r_scale: f64, k2: f64, c_pre: f64, band: Band) -> Result<()> {
    ensure(a1.side == a2.side, || Error::InvalidParameter("squares of different sides".into()))?;
    ensure(is_general_position(&Patch::Square(*a1), &Patch::Square(*a2), band), || {
        Error::Precondition(format!("squares at {:?} and {:?} not in general position", a1.center, a2.center))
    })?;
    let d = (a1.center[0] - a2.center[0]).hypot(a1.center[1] - a2.center[1]);
    let v = d * r_scale.sqrt() * a1.side * k2;
    ensure(v >= c_pre, || Error::Precondition(format!("d·R^(1/2)·r·K2 = {v:.3} below {c_pre}")))
}

fn plane_axis(f1: &FreqDensity, f2: &FreqDensity) -> Result<P2> {
    let (Surface::Plane { slope: g1 }, Surface::Plane { slope: g2 }) = (f1.surface, f2.surface) else {
        return Err(Error::InvalidParameter("planes mode takes plane-surface densities".into()));
    };
    let n1 = [-g1[0], -g1[1], 1.0];
    let n2 = [-g2[0], -g2[1], 1.0];
    let c = [n1[1] * n2[2] - n1[2] * n2[1], n1[2] * n2[0] - n1[0] * n2[2], n1[0] * n2[1] - n1[1] * n2[0]];
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let s = norm(c) / (norm(n1) * norm(n2));
    ensure(s >= MIN_PLANE_SIN, || Error::Precondition(format!("planes at angle with |sin| = {s:.3}")))?;
    let a = [g2[1] - g1[1], g1[0] - g2[0]];
    let l = a[0].hypot(a[1]);
    ensure(l > 0.0, || Error::Degenerate("common line is vertical".into()))?;
    Ok([a[0] / l, a[1] / l])
}

/// Both directions of the reverse square function estimate on the ball `Q`,
/// sampled with the given spacing.
pub fn square_function_ratio(
    f1: &FreqDensity,
    f2: &FreqDensity,
    alphas: [&Square; 2],
    mode: SquareFnMode,
    q: &Region,
    spacing: f64,
) -> Result<SquareFnReport> {
    let (center, radius) = ball_of(q)?;
    let (axis, half) = match mode {
        SquareFnMode::Planes { delta } => {
            ensure(delta > 0.0, || Error::InvalidParameter(format!("delta {delta}")))?;
            let long = alphas[0].side.max(alphas[1].side) * 2.0;
            (plane_axis(f1, f2)?, [delta, long])
        }
        SquareFnMode::Caps { r_scale, k2, c_pre } => {
            caps_precondition(alphas[0], alphas[1], r_scale, k2, c_pre, Band::default())?;
            let r = alphas[0].side;
            (canonical_axis(alphas[0].center, alphas[1].center)?, [r / (2.0 * k2), r / 2.0])
        }
    };
    let grid = BlockGrid::covering(center, radius, spacing)?;
    let mut whole = Vec::with_capacity(2);
    let mut squares = Vec::with_capacity(2);
    let mut counts = [0usize; 2];
    for (j, (f, a)) in [(f1, alphas[0]), (f2, alphas[1])].into_iter().enumerate() {
        let fa = restrict_square(f, a)?;
        let rects = rect_cover(a, half, axis)?;
        let pieces = rect_pieces(&fa, &rects)?;
        counts[j] = pieces.len();
        squares.push(square_sum(&pieces, &grid)?);
        whole.push(extend_block(&fa, &grid)?);
    }
    let lhs = product_integral(&whole[0], &whole[1], q)?;
    let rhs = real_product_integral(&squares[0], &squares[1], q)?;
    let r = match mode {
        SquareFnMode::Caps { r_scale, .. } => r_scale,
        SquareFnMode::Planes { delta } => delta.recip(),
    };
    Ok(SquareFnReport {
        forward: RatioReport::new(lhs, rhs, r).with("pieces1", counts[0] as f64).with("pieces2", counts[1] as f64),
        reverse: RatioReport::new(rhs, lhs, r),
        pieces: counts,
    })
}

/// Fields of the `s`-pieces of `f` in `ω`, in order along the axis; empty
/// pieces are `None`.
fn s_fields(f: &FreqDensity, omega: &PlaneRect, k1: usize, grid: &BlockGrid) -> Result<Vec<Option<SpatialField>>> {
    let l = omega.half[1];
    let pieces = split_by(f, |p| {
        omega.contains(p).then(|| (((omega.local(p)[0] + l) / (2.0 * l / k1 as f64)).floor() as usize).min(k1 - 1))
    })?;
    let mut out: Vec<Option<SpatialField>> = vec![None; k1];
    let fields = pieces.par_iter().map(|(k, d)| Ok((*k, extend_block(d, grid)?))).collect::<Result<Vec<_>>>()?;
    for (k, fld) in fields {
        out[k] = Some(fld);
    }
    Ok(out)
}

/// `g² = Σ_k |F_{s_k} F_{s_{k+2}}|`, the almost-adjacent pair sum.
fn g_squared(s: &[Option<SpatialField>], grid: &BlockGrid) -> SpatialField {
    let mut acc = zero_field(grid);
    for k in 0..s.len().saturating_sub(2) {
        if let (Some(a), Some(b)) = (&s[k], &s[k + 2]) {
            ndarray::Zip::from(&mut acc.data).and(&a.data).and(&b.data).for_each(|g, x, y| g.re += (x * y).norm());
        }
    }
    acc
}

/// `g_ω = (Σ_k |f_{s_k} f_{s_{k+2}}|)^{1/2}` on `grid`, where `s_0, …,
/// s_{K₁-1}` cut `ω` along its long axis.
pub fn g_function(f: &FreqDensity, omega: &PlaneRect, k1: usize, grid: &BlockGrid) -> Result<SpatialField> {
    ensure(k1 >= 3, || Error::InvalidParameter(format!("K1 = {k1} leaves no non-adjacent pairs")))?;
    let mut g = g_squared(&s_fields(f, omega, k1, grid)?, grid);
    g.data.mapv_inplace(|v| Complex64::new(v.re.sqrt(), 0.0));
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NbLabel {
    Narrow,
    Broad,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NbParams {
    pub r_scale: f64,
    pub k1: usize,
    pub k2: f64,
    pub c_pre: f64,
    /// The broad term carries the factor `K₁^{broad_power}`.
    pub broad_power: f64,
    pub spacing: f64,
    pub band: Band,
}

impl NbParams {
    pub fn new(r_scale: f64, k1: usize, k2: f64) -> Self {
        NbParams { r_scale, k1, k2, c_pre: 1.0, broad_power: 2.0, spacing: 1.0, band: Band::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NbReport {
    pub label: NbLabel,
    /// `∫_Q Σ_β|f_{β₁}|² Σ_β|f_{β₂}|²` over `r/K₁`-squares `β`.
    pub narrow: Option<f64>,
    /// `K₁^p Σ_{ω₁,ω₂} ∫_Q |g_{ω₁} g_{ω₂}|²`.
    pub broad: Option<f64>,
    /// `∫_Q |f_{α₁} f_{α₂}|²`.
    pub bilinear: Option<f64>,
}

/// Evaluate both terms of the narrow/broad maximum for `(α₁, α₂)` on `Q`
/// and label the pair by the larger one. Pairs violating the general
/// position or separation requirement are left unlabeled.
pub fn classify_narrow_broad(
    f1: &FreqDensity,
    f2: &FreqDensity,
    alphas: [&Square; 2],
    q: &Region,
    params: &NbParams,
) -> Result<NbReport> {
    ensure(params.k1 >= 3, || Error::InvalidParameter(format!("K1 = {} leaves no non-adjacent pairs", params.k1)))?;
    if caps_precondition(alphas[0], alphas[1], params.r_scale, params.k2, params.c_pre, params.band).is_err() {
        return Ok(NbReport { label: NbLabel::Unlabeled, narrow: None, broad: None, bilinear: None });
    }
    let (center, radius) = ball_of(q)?;
    let grid = BlockGrid::covering(center, radius, params.spacing)?;
    let r = alphas[0].side;
    let axis = canonical_axis(alphas[0].center, alphas[1].center)?;
    let half = [r / (2.0 * params.k2), r / 2.0];

    let mut whole = Vec::with_capacity(2);
    let mut narrow_fields = Vec::with_capacity(2);
    let mut broad_fields = Vec::with_capacity(2);
    for (f, a) in [(f1, alphas[0]), (f2, alphas[1])] {
        let fa = restrict_square(f, a)?;
        let betas = partition(a, r / params.k1 as f64)?;
        let pieces: Vec<FreqDensity> =
            split_by(&fa, |p| betas.iter().position(|b| b.contains(p)))?.into_iter().map(|(_, d)| d).collect();
        narrow_fields.push(square_sum(&pieces, &grid)?);

        let mut g = zero_field(&grid);
        for omega in rect_cover(a, half, axis)? {
            let s = s_fields(&fa, &omega, params.k1, &grid)?;
            let gw = g_squared(&s, &grid);
            g.data.zip_mut_with(&gw.data, |x, y| x.re += y.re);
        }
        broad_fields.push(g);
        whole.push(extend_block(&fa, &grid)?);
    }
    let narrow = real_product_integral(&narrow_fields[0], &narrow_fields[1], q)?;
    let broad = (params.k1 as f64).powf(params.broad_power)
        * real_product_integral(&broad_fields[0], &broad_fields[1], q)?;
    let bilinear = product_integral(&whole[0], &whole[1], q)?;
    let label = if narrow >= broad { NbLabel::Narrow } else { NbLabel::Broad };
    Ok(NbReport { label, narrow: Some(narrow), broad: Some(broad), bilinear: Some(bilinear) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::keyed_rng;
    use rand::Rng;

    const R: f64 = 256.0;
    const N: usize = 256;

    fn alphas() -> (Square, Square) {
        (Square::new([-0.375, -0.375], 0.25).unwrap(), Square::new([0.375, 0.375], 0.25).unwrap())
    }

    fn random_on(a: &Square, surface: Surface, seed: u64) -> FreqDensity {
        let mut rng = keyed_rng(seed, "sq", 0, 0);
        FreqDensity::from_fn_on(N, surface, &Patch::Square(*a), |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
        .unwrap()
    }

    fn ball() -> Region {
        Region::Ball { center: [0.0; 3], radius: R.sqrt() }
    }

    fn caps() -> SquareFnMode {
        SquareFnMode::Caps { r_scale: R, k2: 4.0, c_pre: 1.0 }
    }

    #[test]
    fn single_piece_gives_unit_ratios() {
        let (a1, a2) = alphas();
        let mut f1 = FreqDensity::zeros(N, [80, 80], [1, 1], Surface::Hyperbolic).unwrap();
        f1.data[[0, 0]] = Complex64::new(1.0, 2.0);
        let mut f2 = FreqDensity::zeros(N, [176, 176], [1, 2], Surface::Hyperbolic).unwrap();
        f2.data[[0, 0]] = Complex64::new(0.5, 0.0);
        f2.data[[0, 1]] = Complex64::new(0.0, -0.5);
        let rep = square_function_ratio(&f1, &f2, [&a1, &a2], caps(), &ball(), 1.0).unwrap();
        assert_eq!(rep.pieces, [1, 1]);
        assert!((rep.forward.ratio - 1.0).abs() < 1e-12 && (rep.reverse.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_caps_recouple() {
        let (a1, a2) = alphas();
        for seed in 0..2 {
            let f1 = random_on(&a1, Surface::Hyperbolic, 2 * seed);
            let f2 = random_on(&a2, Surface::Hyperbolic, 2 * seed + 1);
            let rep = square_function_ratio(&f1, &f2, [&a1, &a2], caps(), &ball(), 1.0).unwrap();
            assert!(rep.forward.ratio <= 10.0 && rep.reverse.ratio <= 10.0, "{:?}", (rep.forward.ratio, rep.reverse.ratio));
        }
    }

    #[test]
    fn random_planes_recouple() {
        let (a1, a2) = alphas();
        let f1 = random_on(&a1, Surface::Plane { slope: [0.0, -0.75] }, 7);
        let f2 = random_on(&a2, Surface::Plane { slope: [0.75, 0.0] }, 8);
        let mode = SquareFnMode::Planes { delta: 1.0 / 32.0 };
        let rep = square_function_ratio(&f1, &f2, [&a1, &a2], mode, &ball(), 1.0).unwrap();
        assert!(rep.pieces[0] > 4);
        assert!(rep.forward.ratio <= 10.0 && rep.reverse.ratio <= 10.0, "{:?}", (rep.forward.ratio, rep.reverse.ratio));
    }

    #[test]
    fn invalid_regimes_rejected() {
        let a1 = Square::new([-0.05, -0.05], 0.05).unwrap();
        let a2 = Square::new([0.05, 0.05], 0.05).unwrap();
        let f1 = random_on(&a1, Surface::Hyperbolic, 1);
        let f2 = random_on(&a2, Surface::Hyperbolic, 2);
        let mode = SquareFnMode::Caps { r_scale: R, k2: 1.0, c_pre: 1.0 };
        assert!(matches!(
            square_function_ratio(&f1, &f2, [&a1, &a2], mode, &ball(), 1.0),
            Err(Error::Precondition(_))
        ));
        let parallel = [Surface::Plane { slope: [0.1, 0.2] }, Surface::Plane { slope: [0.1, 0.25] }];
        let (b1, b2) = alphas();
        let g1 = random_on(&b1, parallel[0], 1);
        let g2 = random_on(&b2, parallel[1], 2);
        assert!(square_function_ratio(&g1, &g2, [&b1, &b2], SquareFnMode::Planes { delta: 0.05 }, &ball(), 1.0).is_err());
        let nb = classify_narrow_broad(&f1, &f2, [&a1, &a2], &ball(), &NbParams::new(R, 4, 1.0)).unwrap();
        assert_eq!(nb.label, NbLabel::Unlabeled);
        assert!(nb.narrow.is_none());
    }

    fn omega_and_grid() -> (PlaneRect, BlockGrid) {
        let (a1, a2) = alphas();
        let axis = canonical_axis(a1.center, a2.center).unwrap();
        let omega = PlaneRect::new(a1.center, [0.25 / 8.0, 0.125], axis).unwrap();
        (omega, BlockGrid::covering([0.0; 3], 6.0, 1.5).unwrap())
    }

    fn sample_at(omega: &PlaneRect, k1: usize, k: usize) -> [usize; 2] {
        let l = omega.half[1];
        let u = -l + (2 * k + 1) as f64 * l / k1 as f64;
        let p = [omega.center[0] + u * omega.axis[0], omega.center[1] + u * omega.axis[1]];
        [0, 1].map(|i| ((p[i] + 1.0) / (2.0 / N as f64)).floor() as usize)
    }

    #[test]
    fn g_function_cases() {
        let (omega, grid) = omega_and_grid();
        assert!(g_function(&FreqDensity::zeros(N, [0, 0], [0, 0], Surface::Hyperbolic).unwrap(), &omega, 2, &grid).is_err());

        let one = sample_at(&omega, 4, 1);
        let mut f = FreqDensity::zeros(N, one, [1, 1], Surface::Hyperbolic).unwrap();
        f.data[[0, 0]] = Complex64::new(1.0, 0.0);
        assert!(g_function(&f, &omega, 4, &grid).unwrap().data.iter().all(|v| v.norm() == 0.0));

        let (p, q) = (sample_at(&omega, 4, 0), sample_at(&omega, 4, 2));
        let pts = vec![(p, Complex64::new(1.0, 0.5)), (q, Complex64::new(-0.25, 1.0))];
        let f = super::super::from_points(&f, &pts).unwrap();
        let g = g_function(&f, &omega, 4, &grid).unwrap();
        let single = |g: [usize; 2], v: Complex64| super::super::from_points(&f, &[(g, v)]).unwrap();
        let ep = extend_block(&single(p, pts[0].1), &grid).unwrap();
        let eq = extend_block(&single(q, pts[1].1), &grid).unwrap();
        for ((a, b), c) in g.data.iter().zip(ep.data.iter()).zip(eq.data.iter()) {
            assert!((a.re - (b * c).norm().sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn g_function_matches_pair_sum() {
        let (omega, grid) = omega_and_grid();
        let k1 = 5;
        let mut rng = keyed_rng(11, "g", 0, 0);
        let f = FreqDensity::from_fn_on(N, Surface::Hyperbolic, &Patch::Rect(omega), |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>())
        })
        .unwrap();
        let g = g_function(&f, &omega, k1, &grid).unwrap();
        // oracle: direct sums per piece, pairs (k, k+2)
        let l = omega.half[1];
        let piece = |k: usize| {
            let pts: Vec<_> = f
                .nonzeros()
                .into_iter()
                .filter(|(g, _)| {
                    let u = omega.local([f.coord(g[0]), f.coord(g[1])])[0];
                    ((((u + l) * k1 as f64) / (2.0 * l)).floor() as usize).min(k1 - 1) == k
                })
                .collect();
            pts
        };
        let pieces: Vec<_> = (0..k1).map(piece).collect();
        let h2 = f.h() * f.h();
        for (z, s1, s2) in [(0, 0, 0), (3, 4, 5), (7, 7, 2)] {
            let x = g.point(z, s1, s2);
            let e = |pts: &Vec<([usize; 2], Complex64)>| -> Complex64 {
                pts.iter()
                    .map(|(gg, v)| {
                        let (a, b) = (f.coord(gg[0]), f.coord(gg[1]));
                        v * Complex64::from_polar(h2, x[0] * a + x[1] * b + x[2] * a * b)
                    })
                    .sum()
            };
            let want: f64 = (0..k1 - 2).map(|k| (e(&pieces[k]) * e(&pieces[k + 2])).norm()).sum();
            assert!((g.data[[z, s1, s2]].re.powi(2) - want).abs() < 1e-10 * want.max(1e-300));
        }
    }

    #[test]
    fn narrow_and_broad_examples() {
        let (a1, a2) = alphas();
        let params = NbParams::new(R, 4, 4.0);
        // one sample each: a single β per side
        let mut f1 = FreqDensity::zeros(N, [80, 80], [1, 1], Surface::Hyperbolic).unwrap();
        f1.data[[0, 0]] = Complex64::new(1.0, 0.0);
        let mut f2 = FreqDensity::zeros(N, [176, 176], [1, 1], Surface::Hyperbolic).unwrap();
        f2.data[[0, 0]] = Complex64::new(0.0, 1.0);
        let rep = classify_narrow_broad(&f1, &f2, [&a1, &a2], &ball(), &params).unwrap();
        assert_eq!(rep.label, NbLabel::Narrow);
        assert!((rep.narrow.unwrap() - rep.bilinear.unwrap()).abs() < 1e-12 * rep.bilinear.unwrap());

        // two almost-adjacent s-pieces per side inside one ω
        let axis = canonical_axis(a1.center, a2.center).unwrap();
        let pair_density = |a: &Square| {
            let covers = rect_cover(a, [0.25 / 8.0, 0.125], axis).unwrap();
            let omega = covers.iter().min_by(|x, y| {
                let d = |r: &PlaneRect| (r.center[0] - a.center[0]).hypot(r.center[1] - a.center[1]);
                d(x).partial_cmp(&d(y)).unwrap()
            })
            .unwrap();
            let pts = vec![
                (sample_at(omega, 4, 0), Complex64::new(1.0, 0.0)),
                (sample_at(omega, 4, 2), Complex64::new(1.0, 0.0)),
            ];
            super::super::from_points(&f1, &pts).unwrap()
        };
        let rep = classify_narrow_broad(&pair_density(&a1), &pair_density(&a2), [&a1, &a2], &ball(), &params).unwrap();
        assert_eq!(rep.label, NbLabel::Broad, "{rep:?}");
    }
}

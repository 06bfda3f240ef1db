//! Linear decoupling into dyadic rectangles, against the square-only
//! decoupling that fails for H.

use super::bilinear::box_for;
use super::{split_by, RatioReport};
use crate::error::{ensure, Error, Result};
use crate::field::{FreqDensity, PeriodicBox};
use crate::geom::{dyadic_shapes, DyadicRect, P2};
use crate::util::csum;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearReport {
    /// `‖Ef‖₄ / (Σ_{ω} ‖Ef_ω‖₄²)^{1/2}` over every admissible dyadic `ω`.
    pub dyadic: RatioReport,
    /// The same with `ω` ranging over the `R^{-1/2}`-squares only.
    pub square_only: RatioReport,
}

/// Number of additive quadruples `a + b = c + d` in `{0, …, m-1}`.
pub fn dirichlet_quadruples(m: u64) -> u64 {
    (2 * m * m * m + m) / 3
}

fn l2_of_l4<K: Sync>(bx: &PeriodicBox, pieces: Vec<(K, FreqDensity)>) -> Result<f64> {
    let v = pieces.par_iter().map(|(_, p)| bx.l4_sq(p)).collect::<Result<Vec<f64>>>()?;
    Ok(csum(v))
}

fn inside(p: P2) -> bool {
    p.iter().all(|x| (-1.0..1.0).contains(x))
}

/// Dyadic and square-only linear decoupling ratios of `f` at scale `R`.
pub fn linear_dyadic_ratio(f: &FreqDensity, r: u64) -> Result<LinearReport> {
    let shapes = dyadic_shapes(r)?;
    let rf = r as f64;
    ensure(f.resolves(rf), || Error::GridTooCoarse(format!("lattice {} does not resolve R = {r}", f.n)))?;
    let bx = box_for(f.n, rf, &[f]);
    let lhs = bx.l4_fourth(f)?.powf(0.25);

    let mut dyadic = 0.0;
    for shape in &shapes {
        let pieces = split_by(f, |p| inside(p).then(|| DyadicRect::containing(*shape, p).pos))?;
        dyadic += l2_of_l4(&bx, pieces)?;
    }
    let s = rf.sqrt();
    let squares = split_by(f, |p| inside(p).then(|| [((p[0] + 1.0) * s).floor() as i64, ((p[1] + 1.0) * s).floor() as i64]))?;
    let square_only = l2_of_l4(&bx, squares)?;

    Ok(LinearReport {
        dyadic: RatioReport::new(lhs, dyadic.sqrt(), rf).with("shapes", shapes.len() as f64),
        square_only: RatioReport::new(lhs, square_only.sqrt(), rf),
    })
}

//! Decoupling ratio estimators, their square-function ingredients, and the
//! input ensembles used to probe them.
//!
//! Every estimator returns a [`RatioReport`]. A decoupling constant is
//! estimated by the maximum ratio over an ensemble, and its growth in `R`
//! by [`crate::util::growth_exponent`].

mod bilinear;
mod ensemble;
mod linear;
mod planar;
mod square;

pub use bilinear::{bilinear_l2_ratio, box_for, cap_pieces, refined_ratio, RefinedInput};
pub use ensemble::{bush_density, caps_in, generate, lattice_for, sample, Ensemble, EnsembleKind};
pub use linear::{dirichlet_quadruples, linear_dyadic_ratio, LinearReport};
pub use planar::{bilinear_restriction_2d, min_normal_sin, random_transverse_pair, Curve2, Density2};
pub use square::{
    classify_narrow_broad, g_function, square_function_ratio, NbLabel, NbParams, NbReport, SquareFnMode,
    SquareFnReport,
};

use crate::error::Result;
use crate::field::{lp_integral, FreqDensity, Region, SpatialField};
use crate::geom::P2;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;

/// `ratio = lhs / rhs`. A zero right-hand side marks the report degenerate
/// and sets `ratio = 0`; degenerate reports are skipped by [`max_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub r: f64,
    pub degenerate: bool,
    pub params: BTreeMap<String, f64>,
    pub ensemble: Option<String>,
    pub seed: Option<u64>,
}

impl RatioReport {
    pub fn new(lhs: f64, rhs: f64, r: f64) -> Self {
        let degenerate = !(rhs > 0.0);
        RatioReport {
            lhs,
            rhs,
            ratio: if degenerate { 0.0 } else { lhs / rhs },
            r,
            degenerate,
            params: BTreeMap::new(),
            ensemble: None,
            seed: None,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn tagged(mut self, ensemble: &str, seed: u64) -> Self {
        self.ensemble = Some(ensemble.to_string());
        self.seed = Some(seed);
        self
    }
}

/// Largest non-degenerate ratio, if any.
pub fn max_ratio<'a, I: IntoIterator<Item = &'a RatioReport>>(reports: I) -> Option<f64> {
    reports.into_iter().filter(|r| !r.degenerate).map(|r| r.ratio).fold(None, |m, x| Some(m.map_or(x, |m: f64| m.max(x))))
}

/// Split `f` into pieces by a key of the sample position. Samples whose key
/// is `None` are dropped. Pieces come back in key order with tight windows.
pub(crate) fn split_by<K: Ord>(f: &FreqDensity, key: impl Fn(P2) -> Option<K>) -> Result<Vec<(K, FreqDensity)>> {
    let mut groups: BTreeMap<K, Vec<([usize; 2], Complex64)>> = BTreeMap::new();
    for (g, v) in f.nonzeros() {
        let p = [f.coord(g[0]), f.coord(g[1])];
        if let Some(k) = key(p) {
            groups.entry(k).or_default().push((g, v));
        }
    }
    groups.into_iter().map(|(k, pts)| Ok((k, from_points(f, &pts)?))).collect()
}

/// A density on the lattice of `like` holding exactly `pts`.
pub(crate) fn from_points(like: &FreqDensity, pts: &[([usize; 2], Complex64)]) -> Result<FreqDensity> {
    let mut lo = [usize::MAX; 2];
    let mut hi = [0usize; 2];
    for (g, _) in pts {
        for i in 0..2 {
            lo[i] = lo[i].min(g[i]);
            hi[i] = hi[i].max(g[i] + 1);
        }
    }
    if pts.is_empty() {
        lo = [0, 0];
        hi = [0, 0];
    }
    let mut out = FreqDensity::zeros(like.n, lo, [hi[0] - lo[0], hi[1] - lo[1]], like.surface)?;
    out.thickness = like.thickness;
    for (g, v) in pts {
        out.data[[g[0] - lo[0], g[1] - lo[1]]] = *v;
    }
    Ok(out)
}

/// `∫_region |A|^2 |B|^2` for two fields on the same grid.
pub(crate) fn product_integral(a: &SpatialField, b: &SpatialField, region: &Region) -> Result<f64> {
    let prod = a.zip_with(b, |x, y| Complex64::new((x * y).norm_sqr(), 0.0))?;
    lp_integral(&prod, 1.0, region)
}

/// `∫_region A·B` for two nonnegative real fields.
pub(crate) fn real_product_integral(a: &SpatialField, b: &SpatialField, region: &Region) -> Result<f64> {
    let prod = a.zip_with(b, |x, y| Complex64::new(x.re * y.re, 0.0))?;
    lp_integral(&prod, 1.0, region)
}

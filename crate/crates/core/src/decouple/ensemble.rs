//! Input ensembles: extremizer candidates for the ratio estimators.

use super::from_points;
use crate::error::{ensure, Error, Result};
use crate::field::{FreqDensity, Surface};
use crate::geom::{Patch, Square, P3};
use crate::util::keyed_rng;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Unit-modulus i.i.d. phases on every lattice sample.
    RandomPhase,
    /// All ones: constructive interference at the origin.
    Focusing,
    /// Ones on one lattice row or column.
    LineConcentrated,
    /// A random half of the caps, focused at a common point with `x₃ = 0`
    /// and `|x̄| ≤ R/2`, so their tubes form a bush.
    Bush,
    /// Random phases on one `R^{-1/2}`-cap.
    SingleCap,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 5] = [
        EnsembleKind::RandomPhase,
        EnsembleKind::Focusing,
        EnsembleKind::LineConcentrated,
        EnsembleKind::Bush,
        EnsembleKind::SingleCap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EnsembleKind::RandomPhase => "random_phase",
            EnsembleKind::Focusing => "focusing",
            EnsembleKind::LineConcentrated => "line_concentrated",
            EnsembleKind::Bush => "bush",
            EnsembleKind::SingleCap => "single_cap",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnsembleKind::ALL
            .into_iter()
            .find(|k| k.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown ensemble '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub kind: EnsembleKind,
    pub seed: u64,
    pub count: usize,
}

/// Lattice size with spacing `h ≤ R^{-1/2}/2`: two samples per cap side.
pub fn lattice_for(r: f64) -> usize {
    4 * (r.sqrt() - 1e-9).ceil().max(1.0) as usize
}

/// The `R^{-1/2}`-caps of the grid anchored at `(-1,-1)` whose centres lie
/// in `target`.
pub fn caps_in(r: f64, target: &Patch) -> Result<Vec<Square>> {
    ensure(r >= 1.0, || Error::InvalidParameter(format!("scale {r}")))?;
    let side = r.sqrt().recip();
    let count = (2.0 / side - 1e-9).ceil() as usize;
    let mut out = Vec::new();
    for i in 0..count {
        for j in 0..count {
            let c = [-1.0 + (i as f64 + 0.5) * side, -1.0 + (j as f64 + 0.5) * side];
            if target.contains(c) {
                out.push(Square::new(c, side)?);
            }
        }
    }
    Ok(out)
}

/// `e^{-i x*·(ξ, η, Φ)}` on the union of `caps`: every cap's field peaks at
/// `x*`.
pub fn bush_density(n: usize, surface: Surface, caps: &[Square], x_star: P3) -> Result<FreqDensity> {
    ensure(!caps.is_empty(), || Error::InvalidParameter("bush needs at least one cap".into()))?;
    let parts = caps
        .iter()
        .map(|c| {
            FreqDensity::from_fn_on(n, surface, &Patch::Square(*c), |x, y| {
                Complex64::from_polar(1.0, -(x_star[0] * x + x_star[1] * y + x_star[2] * surface.phi(x, y)))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pts = Vec::new();
    for p in &parts {
        pts.extend(p.nonzeros());
    }
    pts.sort_by_key(|(g, _)| *g);
    pts.dedup_by_key(|(g, _)| *g);
    from_points(&parts[0], &pts)
}

fn phase(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.gen::<f64>() * 2.0 * PI)
}

/// One draw of `kind` on the lattice `n`, supported in `target`.
pub fn sample(kind: EnsembleKind, r: f64, n: usize, target: &Patch, rng: &mut ChaCha8Rng) -> Result<FreqDensity> {
    let surface = Surface::Hyperbolic;
    let f = match kind {
        EnsembleKind::RandomPhase => FreqDensity::from_fn_on(n, surface, target, |_, _| phase(rng))?,
        EnsembleKind::Focusing => FreqDensity::from_fn_on(n, surface, target, |_, _| Complex64::new(1.0, 0.0))?,
        EnsembleKind::LineConcentrated => {
            let base = FreqDensity::from_fn_on(n, surface, target, |_, _| Complex64::new(1.0, 0.0))?;
            let nz = base.nonzeros();
            ensure(!nz.is_empty(), || Error::InvalidParameter("target holds no lattice sample".into()))?;
            let axis = rng.gen_range(0..2);
            let mut lines: Vec<usize> = nz.iter().map(|(g, _)| g[axis]).collect();
            lines.sort_unstable();
            lines.dedup();
            let pick = *lines.choose(rng).expect("nonempty");
            let pts: Vec<_> = nz.into_iter().filter(|(g, _)| g[axis] == pick).collect();
            from_points(&base, &pts)?
        }
        EnsembleKind::Bush => {
            let caps = caps_in(r, target)?;
            ensure(!caps.is_empty(), || Error::InvalidParameter("target holds no cap centre".into()))?;
            let mut chosen: Vec<Square> = caps.iter().filter(|_| rng.gen::<bool>()).cloned().collect();
            if chosen.is_empty() {
                chosen.push(*caps.choose(rng).expect("nonempty"));
            }
            // uniform in the horizontal disc of radius R/2, inside B_R
            let rho = 0.5 * r * rng.gen::<f64>().sqrt();
            let ang = rng.gen::<f64>() * 2.0 * PI;
            let x_star = [rho * ang.cos(), rho * ang.sin(), 0.0];
            bush_density(n, surface, &chosen, x_star)?
        }
        EnsembleKind::SingleCap => {
            let caps = caps_in(r, target)?;
            let cap = *caps.choose(rng).ok_or_else(|| Error::InvalidParameter("target holds no cap centre".into()))?;
            FreqDensity::from_fn_on(n, surface, &Patch::Square(cap), |_, _| phase(rng))?
        }
    };
    Ok(f)
}

/// `count` draws; trial `t` uses the stream keyed by `(seed, kind, R, t)`.
pub fn generate(ensemble: &Ensemble, r: f64, n: usize, target: &Patch) -> Result<Vec<FreqDensity>> {
    (0..ensemble.count)
        .map(|t| {
            let mut rng = keyed_rng(ensemble.seed, ensemble.kind.name(), r as u64, t as u64);
            sample(ensemble.kind, r, n, target, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::eval_direct;

    fn tau() -> Patch {
        Patch::Square(Square::new([0.5, 0.5], 0.5).unwrap())
    }

    #[test]
    fn focusing_peaks_at_origin() {
        let n = lattice_for(256.0);
        let theta = Patch::Square(Square::new([0.53125, 0.53125], 1.0 / 16.0).unwrap());
        let e = Ensemble { kind: EnsembleKind::Focusing, seed: 1, count: 1 };
        let f = &generate(&e, 256.0, n, &theta).unwrap()[0];
        let cells = f.nonzeros().len();
        assert_eq!(cells, 4);
        let h = f.h();
        let peak = eval_direct(f, [0.0, 0.0, 0.0]).norm();
        assert!((peak - cells as f64 * h * h).abs() < 1e-14);
        for x in [[3.0, 0.0, 0.0], [0.0, -5.0, 2.0], [1.0, 1.0, 40.0]] {
            assert!(eval_direct(f, x).norm() <= peak + 1e-14);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        for kind in EnsembleKind::ALL {
            let e = Ensemble { kind, seed: 42, count: 3 };
            let a = generate(&e, 64.0, 32, &tau()).unwrap();
            let b = generate(&e, 64.0, 32, &tau()).unwrap();
            assert_eq!(a, b, "{kind}");
            let c = generate(&Ensemble { seed: 43, ..e }, 64.0, 32, &tau()).unwrap();
            if kind != EnsembleKind::Focusing {
                assert_ne!(a, c, "{kind}");
            }
        }
    }

    #[test]
    fn supports_stay_in_target() {
        let t = tau();
        for kind in EnsembleKind::ALL {
            let e = Ensemble { kind, seed: 5, count: 4 };
            for f in generate(&e, 64.0, 32, &t).unwrap() {
                assert!(!f.is_zero());
                for (g, _) in f.nonzeros() {
                    assert!(t.contains([f.coord(g[0]), f.coord(g[1])]), "{kind}");
                }
            }
        }
    }

    #[test]
    fn line_and_bush_shapes() {
        let e = Ensemble { kind: EnsembleKind::LineConcentrated, seed: 9, count: 5 };
        for f in generate(&e, 64.0, 32, &tau()).unwrap() {
            let nz = f.nonzeros();
            let row = nz.iter().all(|(g, _)| g[1] == nz[0].0[1]);
            let col = nz.iter().all(|(g, _)| g[0] == nz[0].0[0]);
            assert!(row ^ col);
            assert_eq!(nz.len(), 8);
        }
        let caps = caps_in(64.0, &tau()).unwrap();
        assert_eq!(caps.len(), 16);
        let x = [7.0, -3.0, 11.0];
        let f = bush_density(32, Surface::Hyperbolic, &caps[..3], x).unwrap();
        assert_eq!(f.nonzeros().len(), 12);
        let h = f.h();
        assert!((eval_direct(&f, x).norm() - 12.0 * h * h).abs() < 1e-12);
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in EnsembleKind::ALL {
            assert_eq!(k.name().parse::<EnsembleKind>().unwrap(), k);
        }
        assert!("line-concentrated".parse::<EnsembleKind>().is_ok());
        assert!("knapp".parse::<EnsembleKind>().is_err());
    }
}

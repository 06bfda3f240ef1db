//! Dyadic-rectangle against square-only linear decoupling. Inputs on a
//! line of H defeat the square-only version.

use hypdec::decouple::{lattice_for, linear_dyadic_ratio, sample, EnsembleKind};
use hypdec::geom::{Patch, Square};
use hypdec::util::keyed_rng;

fn main() -> hypdec::Result<()> {
    let target = Patch::Square(Square::new([0.5, 0.5], 1.0)?);
    println!("{:>6} {:<18} {:>8} {:>12}", "R", "input", "dyadic", "square-only");
    for r in [64u64, 256, 1024] {
        for kind in [EnsembleKind::LineConcentrated, EnsembleKind::RandomPhase] {
            let mut rng = keyed_rng(1, kind.name(), r, 0);
            let f = sample(kind, r as f64, lattice_for(r as f64), &target, &mut rng)?;
            let rep = linear_dyadic_ratio(&f, r)?;
            println!("{r:>6} {:<18} {:>8.4} {:>12.4}", kind.name(), rep.dyadic.ratio, rep.square_only.ratio);
        }
    }
    Ok(())
}

//! Reverse square function estimate on a ball of radius R^{1/2}, with the
//! squares cut into thin rectangles along the tangent-plane direction.

use hypdec::decouple::{lattice_for, sample, square_function_ratio, EnsembleKind, SquareFnMode};
use hypdec::field::Region;
use hypdec::geom::{Patch, Square};
use hypdec::util::keyed_rng;

fn main() -> hypdec::Result<()> {
    let a1 = Square::new([-0.375, -0.375], 0.25)?;
    let a2 = Square::new([0.375, 0.375], 0.25)?;
    for r in [64.0f64, 256.0] {
        let n = 4 * lattice_for(r);
        let q = Region::Ball { center: [0.0; 3], radius: r.sqrt() };
        let mode = SquareFnMode::Caps { r_scale: r, k2: 4.0, c_pre: 1.0 };
        let mut rng = keyed_rng(1, "example/squarefn", r as u64, 0);
        let f1 = sample(EnsembleKind::RandomPhase, r, n, &Patch::Square(a1), &mut rng)?;
        let f2 = sample(EnsembleKind::RandomPhase, r, n, &Patch::Square(a2), &mut rng)?;
        let rep = square_function_ratio(&f1, &f2, [&a1, &a2], mode, &q, 1.0)?;
        println!(
            "R = {r:>4}: forward {:.4}, reverse {:.4}, pieces {:?}",
            rep.forward.ratio, rep.reverse.ratio, rep.pieces
        );
    }
    Ok(())
}

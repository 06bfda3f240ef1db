//! Restriction and broad restriction ratios at p = 22/7.

use hypdec::decouple::{sample, EnsembleKind};
use hypdec::geom::{Patch, Square};
use hypdec::restriction::{broad_restriction_ratio, restriction_lattice, restriction_ratio};
use hypdec::util::keyed_rng;

fn main() -> hypdec::Result<()> {
    let p = 22.0 / 7.0;
    let r = 64.0;
    let whole = Patch::Square(Square::new([0.0, 0.0], 2.0)?);
    for kind in EnsembleKind::ALL {
        let mut rng = keyed_rng(1, kind.name(), 64, 0);
        let f = sample(kind, r, restriction_lattice(r), &whole, &mut rng)?;
        let plain = restriction_ratio(&f, r, p)?;
        let broad = broad_restriction_ratio(&f, r, 2, 8, p)?;
        println!("{:<18} restriction {:>10.4}  broad (A = 2, K = 8) {:>10.4}", kind.name(), plain.ratio, broad.ratio);
    }
    Ok(())
}

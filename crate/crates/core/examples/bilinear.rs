//! Bilinear l2 decoupling ratios for each input ensemble.

use hypdec::decouple::{bilinear_l2_ratio, lattice_for, sample, EnsembleKind};
use hypdec::geom::{Band, Patch, Square};
use hypdec::util::keyed_rng;

fn main() -> hypdec::Result<()> {
    let t1 = Square::new([-0.5, -0.5], 0.5)?;
    let t2 = Square::new([0.5, 0.5], 0.5)?;
    let band = Band::new(0.25, 4.0)?;
    for r in [64.0, 256.0] {
        let n = lattice_for(r);
        for kind in EnsembleKind::ALL {
            let mut rng = keyed_rng(1, kind.name(), r as u64, 0);
            let f1 = sample(kind, r, n, &Patch::Square(t1), &mut rng)?;
            let f2 = sample(kind, r, n, &Patch::Square(t2), &mut rng)?;
            let rep = bilinear_l2_ratio(&f1, &f2, &t1, &t2, r, band)?;
            println!("R = {r:>4}  {:<18} ratio {:.4}", kind.name(), rep.ratio);
        }
    }
    Ok(())
}

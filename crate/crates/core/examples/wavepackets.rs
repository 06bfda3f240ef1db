//! Wave packet decomposition of a random-phase density at R = 64.

use hypdec::decouple::{sample, EnsembleKind};
use hypdec::geom::{Patch, Square};
use hypdec::util::keyed_rng;
use hypdec::wavepacket::{decompose, PacketId, PacketParams, MIN_Q};

fn main() -> hypdec::Result<()> {
    let r = 64.0;
    let n = 2 * MIN_Q * 8;
    let mut rng = keyed_rng(1, "example/wavepackets", 64, 0);
    let whole = Patch::Square(Square::new([0.0, 0.0], 2.0)?);
    let f = sample(EnsembleKind::RandomPhase, r, n, &whole, &mut rng)?;
    let d = decompose(&f, r, PacketParams::default())?;
    println!("{} caps, {} packets, tube radius {:.1}", d.cap_count(), d.len(), d.radius());
    println!("packet mass / parent mass = {:.6}", d.l2_bookkeeping()?);
    println!("direction separation {:.4} (R^-1/2 / 2 = {:.4})", d.direction_separation(), 0.5 / r.sqrt());

    let rec = d.reconstruct()?;
    let err: f64 = rec.data.indexed_iter().map(|((a, b), v)| (v - f.get(a + rec.origin[0], b + rec.origin[1])).norm_sqr()).sum();
    println!("reconstruction residual {:.2e}", (err * f.h() * f.h() / f.l2_sq()).sqrt());

    let id = PacketId { cap: 0, v: [0, 0] };
    let t = d.tube(id);
    println!("tube of {id:?}: axis at x3 = 0 is {:?}, direction {:?}", t.axis(0.0), t.grad());
    let (peak, tail) = d.tail_profile(id, 0.0, 4.0, 8, 16)?;
    println!("|Ef_T| peak {peak:.3e}, beyond 4 radii {tail:.3e}");
    Ok(())
}

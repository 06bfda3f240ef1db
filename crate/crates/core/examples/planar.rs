//! Bilinear restriction in the plane for a random transverse pair of curves.

use hypdec::decouple::{bilinear_restriction_2d, min_normal_sin, random_transverse_pair, Density2};
use hypdec::util::keyed_rng;
use hypdec::Complex64;
use rand::Rng;
use std::f64::consts::PI;

fn main() -> hypdec::Result<()> {
    for inv_delta in [16usize, 64, 256] {
        let delta = 1.0 / inv_delta as f64;
        let mut rng = keyed_rng(1, "example/planar", inv_delta as u64, 0);
        let (c1, c2) = random_transverse_pair(&mut rng, 0.5)?;
        let mut phase = |_: [f64; 2]| Complex64::from_polar(1.0, rng.gen::<f64>() * 2.0 * PI);
        let f1 = Density2::on_neighborhood(4 * inv_delta, &c1, delta, &mut phase)?;
        let f2 = Density2::on_neighborhood(4 * inv_delta, &c2, delta, &mut phase)?;
        let rep = bilinear_restriction_2d(&f1, &f2, [&c1, &c2], delta, 0.5)?;
        println!("Δ = 1/{inv_delta:<4} min |n1 x n2| = {:.3}  ratio {:.4}", min_normal_sin(&c1, &c2), rep.ratio);
    }
    Ok(())
}

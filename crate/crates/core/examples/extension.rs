//! Evaluate `Ef` slice by slice and compare one point with the direct sum.

use hypdec::field::{eval_direct, extend, io, FreqDensity, SliceGrid, Surface};
use hypdec::Complex64;

fn main() -> hypdec::Result<()> {
    // a Gaussian bump centred at (0.3, -0.2)
    let f = FreqDensity::from_fn(64, Surface::Hyperbolic, |xi, eta| {
        let d2 = (xi - 0.3).powi(2) + (eta + 0.2).powi(2);
        Complex64::new((-d2 / 0.05).exp(), 0.0)
    })?;
    let x3: Vec<f64> = (-4..=4).map(|k| 10.0 * k as f64).collect();
    let field = extend(&f, &SliceGrid::new([64, 64], x3))?;
    let [nz, n1, n2] = field.dims();
    println!("field of {nz} slices x {n1} x {n2} samples");

    let x = field.point(5, 30, 34);
    let fast = field.data[[5, 30, 34]];
    let slow = eval_direct(&f, x);
    println!("Ef({x:?}) = {fast:.6} (slice FFT) vs {slow:.6} (direct)");

    let peak = field.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    println!("max |Ef| on the grid: {peak:.4}");

    let mut buf = Vec::new();
    io::write_density(&f, &mut buf)?;
    let back = io::read_density(buf.as_slice())?;
    // samples are stored as f32 pairs
    let dev = back.data.iter().zip(f.data.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("HYPD round trip: {} bytes, max deviation {dev:.1e}", buf.len());
    Ok(())
}

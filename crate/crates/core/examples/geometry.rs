//! Frequency-plane geometry: rescaling H, transversality and dyadic covers.

use hypdec::geom::{
    dyadic_cover, dyadic_shapes, hyperbolic_rescale, is_transverse, lift, partition, tangent_intersection_direction,
    Band, Square,
};

fn main() -> hypdec::Result<()> {
    let m = hyperbolic_rescale(0.25, -0.5, 0.5)?;
    let y = m.apply(lift([0.3, -0.4]));
    println!("rescaled point {y:?}, on H: {:.1e}", y[2] - y[0] * y[1]);

    let band = Band::new(0.25, 4.0)?;
    let t1 = Square::new([-0.5, -0.5], 0.5)?;
    for c in [[0.5, 0.5], [0.5, -0.5], [0.0, 0.5]] {
        let t2 = Square::new(c, 0.5)?;
        println!("{:?} vs {c:?}: transverse {}", t1.center, is_transverse(&t1, &t2, band)?);
    }
    println!("common line direction: {:?}", tangent_intersection_direction([-0.5, -0.5], [0.5, 0.5])?);
    println!("1/8-partition of a 1/2-square: {} squares", partition(&t1, 0.125)?.len());
    println!("R = 64: {} dyadic shapes, {} rectangles", dyadic_shapes(64)?.len(), dyadic_cover(64)?.len());
    Ok(())
}

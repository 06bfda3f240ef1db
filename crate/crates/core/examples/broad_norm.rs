//! The broad norm of a random instance, the pointwise broad-narrow terms and
//! the pigeonholing selection.

use hypdec::broadnarrow::{broad_narrow_at, broad_value, pigeonhole_select, BnParams, BroadInstance, BroadMethod};
use hypdec::decouple::{lattice_for, sample, EnsembleKind};
use hypdec::geom::{Patch, Square};
use hypdec::util::keyed_rng;
use rand::Rng;

fn main() -> hypdec::Result<()> {
    let mut rng = keyed_rng(1, "example/broad", 0, 0);
    let k = 8;
    let values: Vec<f64> = (0..k * k).map(|_| rng.gen::<f64>()).collect();
    let inst = BroadInstance::new(k, 3, values)?;
    let exact = broad_value(&inst, BroadMethod::Exact);
    let greedy = broad_value(&inst, BroadMethod::Greedy);
    println!("Br_3: exact {:.4} with {:?}, greedy {:.4}", exact.value, exact.witness, greedy.value);

    let r = 64.0;
    let whole = Patch::Square(Square::new([0.0, 0.0], 2.0)?);
    let f = sample(EnsembleKind::Focusing, r, lattice_for(r), &whole, &mut rng)?;
    let pts = [[0.0, 0.0, 0.0], [10.0, -5.0, 20.0], [30.0, 30.0, -30.0]];
    for (x, t) in pts.iter().zip(broad_narrow_at(&f, BnParams::new(8, 0.1), &pts)?) {
        println!("x = {x:?}: |Ef| {:.3e}, dominant term {}, constant {:.4}", t.ef, t.dominant, t.constant);
    }

    let table: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.gen_range(0.1..10.0)).collect()).collect();
    let sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let lo = sums.iter().cloned().fold(f64::INFINITY, f64::min);
    let totals: Vec<f64> = sums.iter().map(|s| s.min(2.0 * lo)).collect();
    let p = pigeonhole_select(&totals, &table, 1.0)?;
    println!("pigeonhole: λ = {}, L' = {:.3}, kept {} of 20", p.lambda, p.l_prime, p.selected.len());
    Ok(())
}

//! Line families with shadings: two-ends scan, union volume ratio,
//! multiplicity pruning and the text format.

use hypdec::incidence::{
    furstenberg_ratio, prune_multiplicity, read_family, two_ends_check, write_family, LineFamily, Shading,
    TwoEndsParams,
};
use hypdec::util::keyed_rng;

fn main() -> hypdec::Result<()> {
    let delta = 1.0 / 32.0;
    let te = TwoEndsParams::default();
    let mut rng = keyed_rng(1, "example/incidence", 32, 0);
    let families = [
        ("bush", LineFamily::bush(delta, 256)?),
        ("parallel", LineFamily::parallel(delta, 4)?),
        ("random", LineFamily::random(delta, 128, &mut rng)?),
    ];
    for (name, fam) in &families {
        let y = Shading::full(fam);
        let two = two_ends_check(fam, &y, te)?;
        let f = furstenberg_ratio(fam, &y, 0.1, te, 1e-2)?;
        let pruned = prune_multiplicity(fam, &y, 2.0)?;
        println!(
            "{name:<8} {:>4} lines: two-ends {}, λ {:.3}, c {:.3}, μ = 2 removes {:.1}%",
            fam.len(),
            two.pass,
            two.lambda,
            f.c,
            100.0 * pruned.removed_fraction
        );
    }
    let one_end = Shading::window(&families[0].1, 0.2, 0.3);
    println!("a single window is two-ended: {}", two_ends_check(&families[0].1, &one_end, te)?.pass);

    let text = write_family(&families[1].1, &Shading::ends(&families[1].1, 0.2));
    let (fam, y) = read_family(&text)?;
    println!("text round trip: {} lines, {} balls", fam.len(), y.ball_count());
    Ok(())
}

//! Configure and run an experiment, then print its JSON summary.

use hypdec::runner::{report, run, ExperimentConfig};

fn main() -> hypdec::Result<()> {
    let cfg = ExperimentConfig::from_toml(
        r#"
        scenario = "restriction2d"
        scales = [16, 64, 256]
        trials = 4
        seed = 7
        "#,
    )?;
    let out = run(&cfg)?;
    println!("{} rows", out.rows.len());
    println!("{}", report::to_json(&out.summary));
    Ok(())
}

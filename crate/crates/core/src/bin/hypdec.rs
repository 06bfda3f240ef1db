use clap::{Args, Parser, Subcommand};
use hypdec::runner::config::{parse_band, parse_scales};
use hypdec::runner::{error_exit_code, run_to_dir, verify_all, ExperimentConfig};
use hypdec::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hypdec", version, about = "Decoupling and restriction experiments on the hyperbolic paraboloid")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated powers of two.
    #[arg(long, global = true)]
    scales: Option<String>,
    /// Transversality band LO:HI.
    #[arg(long, global = true)]
    band: Option<String>,
    #[arg(long, global = true)]
    trials: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Decoupling estimators.
    Decouple {
        #[command(subcommand)]
        which: DecoupleCmd,
    },
    /// Broad norm.
    Broad {
        #[command(subcommand)]
        which: BroadCmd,
    },
    /// Restriction ratio on the ball `B_R`.
    Restriction {
        #[arg(long)]
        p: Option<f64>,
        /// Comma-separated ensemble names.
        #[arg(long)]
        ensemble: Option<String>,
        /// `A,K`: measure the broad restriction ratio.
        #[arg(long)]
        broad: Option<String>,
    },
    /// Tube incidence experiments.
    Incidence {
        #[command(subcommand)]
        which: IncidenceCmd,
    },
    /// Wave-packet checks.
    Wavepacket {
        #[command(subcommand)]
        which: WavepacketCmd,
    },
    /// Every acceptance criterion within a time budget.
    VerifyAll {
        /// Minutes.
        #[arg(long, default_value_t = 30.0)]
        budget: f64,
    },
}

#[derive(Subcommand)]
enum DecoupleCmd {
    Bilinear,
    Refined,
    LinearDyadic,
    Restriction2d,
    Squarefn,
}

#[derive(Subcommand)]
enum BroadCmd {
    Value,
    Decompose,
}

#[derive(Subcommand)]
enum IncidenceCmd {
    Twoends,
    Furstenberg,
    Prune,
}

#[derive(Subcommand)]
enum WavepacketCmd {
    Verify,
}

fn scenario(cmd: &Command) -> &'static str {
    match cmd {
        Command::Decouple { which } => match which {
            DecoupleCmd::Bilinear => "bilinear-l2",
            DecoupleCmd::Refined => "refined",
            DecoupleCmd::LinearDyadic => "linear-dyadic",
            DecoupleCmd::Restriction2d => "restriction2d",
            DecoupleCmd::Squarefn => "squarefn",
        },
        Command::Broad { which } => match which {
            BroadCmd::Value => "broad-value",
            BroadCmd::Decompose => "broad-decompose",
        },
        Command::Restriction { .. } => "restriction",
        Command::Incidence { which } => match which {
            IncidenceCmd::Twoends => "twoends",
            IncidenceCmd::Furstenberg => "furstenberg",
            IncidenceCmd::Prune => "prune",
        },
        Command::Wavepacket { .. } => "wavepacket-verify",
        Command::VerifyAll { .. } => "none",
    }
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.scenario = scenario(&cli.command).to_string();
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(s) = &g.scales {
        cfg.scales = parse_scales(s)?;
    }
    if let Some(b) = &g.band {
        cfg.band = parse_band(b)?;
    }
    if let Some(t) = g.trials {
        cfg.trials = t;
    }
    if let Command::Restriction { p, ensemble, broad } = &cli.command {
        if let Some(p) = p {
            cfg.restriction.p = *p;
        }
        if let Some(e) = ensemble {
            cfg.ensemble.kinds = e.split(',').map(|s| s.trim().to_string()).collect();
        }
        if let Some(b) = broad {
            let v = parse_scales(b).map_err(|_| Error::Config(format!("--broad {b:?} is not A,K")))?;
            match v.as_slice() {
                [a, k] => cfg.restriction.broad = Some([*a as usize, *k as usize]),
                _ => return Err(Error::Config(format!("--broad {b:?} is not A,K"))),
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threads() -> Result<()> {
    if let Ok(v) = std::env::var("HYPDEC_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::Config(format!("HYPDEC_THREADS={v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    let code = match execute(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn execute(cli: &Cli) -> Result<i32> {
    threads()?;
    if let Command::VerifyAll { budget } = cli.command {
        let rep = verify_all(budget);
        print!("{}", rep.table());
        return Ok(rep.exit_code());
    }
    let cfg = config(cli)?;
    let (out, written) = run_to_dir(&cfg)?;
    let s = &out.summary;
    for series in &s.series {
        let slope = series.exponent.map_or("n/a".to_string(), |e| format!("{e:.4}"));
        println!("{:<32} slope {slope}", series.name);
    }
    for c in s.invariants.iter().chain(&s.conjecture.instances).filter(|c| !c.pass) {
        println!("FAILED {}: {}", c.name, c.detail);
    }
    println!("status {:?}; wrote {}", s.status, written.csv.display());
    Ok(s.status.exit_code())
}

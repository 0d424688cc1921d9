use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rvdecay::config::ExperimentConfig;
use rvdecay::runner::{execute, write_artifacts, Command};
use rvdecay::Error;

#[derive(Parser)]
#[command(name = "rvdecay", version, about = "Decay-rate preservation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the experiment selected by `kind`, plus its criteria report
    Run(Common),
    /// Deterministic trajectories and ratio series
    Ode(Common),
    /// Euler-Maruyama ensemble
    Sde(Common),
    /// Criterion report for the configured forcing and/or noise
    Criteria(Common),
    /// Sample the configured forcing/noise builders
    Construct(Common),
    /// Criteria coherence table over a (beta, gamma) grid
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides `out` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Config { .. } => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_RUNTIME),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Sub::Run(a) => (Command::Run, a),
        Sub::Ode(a) => (Command::Ode, a),
        Sub::Sde(a) => (Command::Sde, a),
        Sub::Criteria(a) => (Command::Criteria, a),
        Sub::Construct(a) => (Command::Construct, a),
        Sub::Sweep(a) => (Command::Sweep, a),
    };

    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }

    let (cfg, bytes) = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            return exit_for(&e);
        }
    };
    let Some(out_dir) = args.out.clone().or_else(|| cfg.out.clone()) else {
        eprintln!("error: no output directory (use --out or set `out` in the config)");
        return ExitCode::from(EXIT_CONFIG);
    };

    let outcome = match execute(cmd, &cfg, &bytes, args.seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    if let Err(e) = write_artifacts(&out_dir, &outcome.artifacts) {
        eprintln!("error writing {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    for (unit, msg) in &outcome.failures {
        eprintln!("failed: {unit}: {msg}");
    }
    println!(
        "{}: {} files written to {}",
        cmd.name(),
        outcome.artifacts.len(),
        out_dir.display()
    );
    if outcome.all_failed() {
        ExitCode::from(EXIT_RUNTIME)
    } else {
        ExitCode::SUCCESS
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use granular_kinetics::cli::config::{parse_config_str, CommandKind};
use granular_kinetics::cli::runner;
use granular_kinetics::error::{Error, Result};

/// Discrete-state kinetic traffic simulator.
#[derive(Parser)]
#[command(name = "granular-kinetics", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a density grid and write the long-time flux, speed, and
    /// variance curves per road condition.
    Diagram(CommonArgs),
    /// Integrate a road scenario and write the trajectory.
    Simulate(CommonArgs),
    /// Run the verification suites and write their reports.
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; 0 keeps the default pool.
    #[arg(long)]
    jobs: Option<usize>,
    /// Base seed for every randomized suite.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(cli: &Cli) -> Result<()> {
    let (kind, args) = match &cli.command {
        Command::Diagram(a) => (CommandKind::Diagram, a),
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Verify(a) => (CommandKind::Verify, a),
    };
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_config_str(&text, &args.config.display().to_string())?;
    if cfg.command != kind {
        return Err(Error::ConfigValue {
            key: "command".to_string(),
            detail: format!(
                "config requests `{}` but the `{kind}` subcommand was invoked",
                cfg.command
            ),
        });
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.display().to_string();
    }
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| Error::invalid("thread pool", e.to_string()))?;
    }
    runner::run(&cfg, &text)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GK_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subboot::bench::commands::{execute, Verb};
use subboot::bench::config::{ExperimentConfig, Format};

#[derive(Parser)]
#[command(name = "subboot", version, about = "Budget-aware subsampled bootstrap experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit time coefficients from pilot runs.
    Calibrate(Common),
    /// Choose (n, R, B) for each method under the budget.
    Tune(Common),
    /// Compare predicted and Monte-Carlo MSE over a grid.
    VerifyMse(Common),
    /// Tuned against original hyperparameters at equal budget.
    Compare(Common),
    /// Run a single engine.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Override the root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: csv, markdown or json.
    #[arg(long)]
    format: Option<String>,
    /// Worker threads (defaults to the config value).
    #[arg(long)]
    workers: Option<usize>,
    /// Use the literal SB/SDB replicate formula instead of the budget-saturating one.
    #[arg(long)]
    paper_literal: bool,
}

fn run(verb: Verb, args: Common) -> subboot::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.paper_literal {
        cfg.tune.paper_literal = true;
    }
    if let Some(f) = &args.format {
        cfg.output.format = Format::parse(f)?;
    }
    cfg.validate()?;
    let workers = args.workers.unwrap_or(cfg.engine.workers).max(1);
    let report = execute(verb, &cfg, workers)?;
    match args.out.as_ref().or(cfg.output.path.as_ref()) {
        Some(path) => {
            report.write(path, cfg.output.format)?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{}", report.render(cfg.output.format)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (verb, args) = match cli.verb {
        Command::Calibrate(a) => (Verb::Calibrate, a),
        Command::Tune(a) => (Verb::Tune, a),
        Command::VerifyMse(a) => (Verb::VerifyMse, a),
        Command::Compare(a) => (Verb::Compare, a),
        Command::Run(a) => (Verb::Run, a),
    };
    match run(verb, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

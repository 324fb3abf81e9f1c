use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphscore_cli::{CliError, Overrides, RunConfig, Runner, Stage};

#[derive(Parser)]
#[command(name = "graphscore", version, about = "Graph features stacked into credit-scoring models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic networks, attributes and labels.
    Synth(CommonArgs),
    /// Draw samples and build the five feature families.
    Features(CommonArgs),
    /// Two-stage feature selection for every feature set.
    Select(CommonArgs),
    /// Tune hyper-parameters and cross-validate the eight feature sets.
    Train(CommonArgs),
    /// Attribute the full model's predictions to its features.
    Explain(CommonArgs),
    /// Write the relative-improvement tables and treemap data.
    Report(CommonArgs),
    /// Run every stage, skipping those already up to date.
    Run(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run even when upstream output is stale or the stage is up to date.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    let (stage, args) = match command {
        Command::Synth(a) => (Some(Stage::Synth), a),
        Command::Features(a) => (Some(Stage::Features), a),
        Command::Select(a) => (Some(Stage::Select), a),
        Command::Train(a) => (Some(Stage::Train), a),
        Command::Explain(a) => (Some(Stage::Explain), a),
        Command::Report(a) => (Some(Stage::Report), a),
        Command::Run(a) => (None, a),
    };
    let overrides = Overrides {
        seed: args.seed,
        jobs: args.jobs,
        out: args.out,
    };
    let cfg = RunConfig::load(args.config.as_deref(), std::env::vars(), &overrides)?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))?;
    }
    let runner = Runner::new(&cfg, args.force)?;
    match stage {
        Some(s) => runner.run(s),
        None => {
            for (s, status) in runner.run_pipeline()? {
                log::info!("{}: {status:?}", s.name());
            }
            Ok(())
        }
    }
}

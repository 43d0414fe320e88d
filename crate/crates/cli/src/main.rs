//! `reclink`: generate, split, train, tune, link and evaluate from one
//! config file.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, GoldPart};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "reclink", version, about = "Temporal record linking for shift logs")]
struct Cli {
    /// Worker threads; 0 uses one per core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus.
    GenSynth {
        /// Generator spec (TOML); defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory for records.jsonl and chains.jsonl.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split chains chronologically into train/dev/test.
    Split(ConfigArgs),
    /// Train the pair scorer.
    Train(ConfigArgs),
    /// Pick the pair and link thresholds on the dev split.
    Tune(ConfigArgs),
    /// Link records into chains.
    Link {
        #[command(flatten)]
        args: ConfigArgs,
        /// Records to link; defaults to the test split of the configured corpus.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Score with gold adjacency instead of the checkpoint.
        #[arg(long)]
        oracle: bool,
    },
    /// Score predicted chains against gold.
    Evaluate {
        #[command(flatten)]
        args: ConfigArgs,
        /// Predicted chains; defaults to paths.predictions.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Gold split part to score against.
        #[arg(long, value_enum, default_value_t = GoldPart::Test)]
        part: GoldPart,
    },
}

fn load(args: &ConfigArgs) -> Result<config::LoadedConfig, CliError> {
    config::load(&args.config, &args.overrides, args.seed)
}

fn run(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let ctx = Context::new(cli.jobs);
    match cli.command {
        Command::GenSynth { spec, out, seed } => commands::gen_synth(&ctx, spec.as_deref(), &out, seed),
        Command::Split(args) => commands::split(&ctx, &load(&args)?),
        Command::Train(args) => commands::train(&ctx, &load(&args)?),
        Command::Tune(args) => commands::tune_command(&ctx, &load(&args)?),
        Command::Link { args, input, oracle } => commands::link_command(&ctx, &load(&args)?, input.as_deref(), oracle),
        Command::Evaluate {
            args,
            predictions,
            part,
        } => commands::evaluate_command(&ctx, &load(&args)?, predictions.as_deref(), part),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

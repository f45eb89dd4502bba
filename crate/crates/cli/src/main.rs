use clap::{Parser, Subcommand};
use smallnet_cli::commands;
use smallnet_cli::config::RunConfig;
use smallnet_cli::error::{validation, CliError};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "smallnet",
    about = "Synthetic closed-loop EEG-BCI pipeline: data generation, training, task ranking, race simulation",
    version
)]
struct Cli {
    /// Master seed; every stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (file or directory, depending on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled feature dataset from the synthetic pilot.
    GenData {
        /// Apply this correction matrix while streaming features.
        #[arg(long)]
        correction: Option<PathBuf>,
    },
    /// Fit ICA on a calibration recording and save the correction matrix.
    FitIca,
    /// Train one model on a dataset and save it.
    Train {
        /// Input dataset (SNB1).
        #[arg(long)]
        data: PathBuf,
        /// Embed this correction matrix in the model file.
        #[arg(long)]
        correction: Option<PathBuf>,
    },
    /// Chronological cross-validation with seed averaging.
    Cv {
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate all 8-choose-4 task combinations and write the ranking.
    RankTasks {
        #[arg(long)]
        correction: Option<PathBuf>,
    },
    /// Run one simulated race.
    Race {
        /// Trained model (required for the network decoder).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Decoder: network, oracle, or all-wrong.
        #[arg(long, default_value = "network")]
        decoder: String,
    },
    /// Run the full session protocol (videos, warm-up, adaptive loop).
    Session,
    /// Summarize a session report (accuracy vs race time).
    Report {
        /// report.csv produced by `session`.
        #[arg(long, name = "in")]
        input: PathBuf,
    },
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_deref()).map_err(validation)?;
    match &cli.command {
        Command::GenData { correction } => {
            commands::gen_data(&config, cli.seed, &cli.out, correction)
        }
        Command::FitIca => commands::fit_ica_cmd(&config, cli.seed, &cli.out),
        Command::Train { data, correction } => {
            commands::train_cmd(&config, cli.seed, data, &cli.out, correction)
        }
        Command::Cv { data } => commands::cv_cmd(&config, cli.seed, data, &cli.out),
        Command::RankTasks { correction } => {
            commands::rank_tasks_cmd(&config, cli.seed, &cli.out, correction)
        }
        Command::Race { model, decoder } => {
            commands::race_cmd(&config, cli.seed, model, decoder, &cli.out)
        }
        Command::Session => commands::session_cmd(&config, cli.seed, &cli.out),
        Command::Report { input } => commands::report_cmd(input),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // Bad flags are validation errors: exit 1.
            eprint!("{e}");
            std::process::exit(1);
        }
        Err(e) => e.exit(), // --help / --version
    };

    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {:#}", e.message());
        std::process::exit(e.exit_code());
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orthodepth_cli::commands::{self, RunOptions};
use orthodepth_cli::{CliError, ExperimentConfig, Layout, Preset};
use orthodepth_core::Task;

/// Spelling-transparency experiments with a character-level transformer.
#[derive(Debug, Parser)]
#[command(name = "orthodepth", version)]
struct Cli {
    /// JSON experiment config; values override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "orthodepth-out")]
    out: PathBuf,
    /// Default hyperparameters and corpus.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write train/test bundles and the per-orthography summary.
    BuildData,
    /// Train one model and save a checkpoint.
    Train,
    /// Score a checkpoint on a JSON-lines test file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to `<out>/bundles/test.jsonl`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run every episode and aggregate the scores.
    Run {
        /// Build datasets and reports without training.
        #[arg(long)]
        dry_run: bool,
        /// Replace missing lexicon files with synthetic data (dry run only).
        #[arg(long, requires = "dry_run")]
        stand_in_missing: bool,
    },
    /// Repeat the episode protocol for several training-set sizes.
    LearningCurve {
        /// Comma-separated sizes; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Greedy prediction for one word.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        orthography: String,
        #[arg(long)]
        task: Task,
        word: String,
        /// Exit with status 4 unless the prediction equals this.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Gradient, parameter-count and causality self-checks.
    Verify {
        /// Randomized finite-difference cases per operation and precision.
        #[arg(long, default_value_t = 10)]
        cases: usize,
    },
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let layout = Layout::new(&cli.out);
    let config = || ExperimentConfig::resolve(cli.config.as_deref(), cli.preset, cli.seed);
    match cli.command {
        Command::BuildData => commands::build_data(&config()?, &layout),
        Command::Train => commands::train(&config()?, &layout),
        Command::Evaluate { checkpoint, data } => {
            let data = data.unwrap_or_else(|| layout.bundles().join("test.jsonl"));
            commands::evaluate(&checkpoint, &data, config()?.seed, &layout)
        }
        Command::Run {
            dry_run,
            stand_in_missing,
        } => commands::run(
            &config()?,
            &layout,
            RunOptions {
                dry_run,
                stand_in_missing,
            },
        ),
        Command::LearningCurve { sizes, dry_run } => {
            let config = config()?;
            let sizes = sizes.unwrap_or_else(|| config.learning_curve_sizes.clone());
            commands::learning_curve(&config, &sizes, &layout, dry_run)
        }
        Command::Predict {
            checkpoint,
            orthography,
            task,
            word,
            expect,
        } => commands::predict_word(&checkpoint, &orthography, task, &word, expect.as_deref()),
        Command::Verify { cases } => commands::verify(cases, cli.seed.unwrap_or(0)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

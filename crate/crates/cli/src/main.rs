//! `bsent`: command-line front end for the Bengali sentiment pipeline.
//!
//! Exit codes: 0 success, 1 validation error (bad arguments, bad data,
//! bad configuration), 2 runtime failure.

mod commands;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "bsent",
    version,
    about = "Bengali sentiment classification pipeline: ingestion, annotation merging, training, evaluation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by config-driven commands.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file (flat key = value lines, include support).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set seed=7 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed; overrides the config file value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty output directory and loading
    /// checkpoints whose content digest does not match.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a labeled corpus; optionally derive the 2-class variant and
    /// a stratified train/valid/test split.
    Ingest {
        /// Input corpus TSV (id, topic, text, label).
        #[arg(long)]
        input: PathBuf,
        /// Task arity of the input corpus (2 or 3).
        #[arg(long)]
        arity: u8,
        /// Also write the neutral-free 2-class derivation (3-class input only).
        #[arg(long)]
        derive_two_class: bool,
        /// Also write seeded stratified train/valid/test splits.
        #[arg(long)]
        split: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Corpus statistics: longest sentence, average length, total words,
    /// non-Bengali words.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        arity: u8,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        /// Reference values to compare against, e.g.
        /// --expect longest=128,average=45,total=312569,non_bengali=0
        #[arg(long)]
        expect: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Merge three annotator labels per comment into a labeled corpus,
    /// filtering noisy comments first.
    MergeAnnotations {
        /// Raw comments TSV (id, topic, text).
        #[arg(long)]
        comments: PathBuf,
        /// Annotations TSV (comment_id, label_a, label_b, label_c).
        #[arg(long)]
        annotations: PathBuf,
        /// Keep noisy comments instead of filtering them.
        #[arg(long)]
        no_noise_filter: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train one classifier described by the configuration.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a trained checkpoint on a test corpus.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test corpus TSV; its arity must match the checkpoint.
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run the backends x heads x tasks experiment matrix.
    Matrix {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Classify category-tagged comments and report per-category sentiment
    /// percentages (needs a 3-class checkpoint).
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comments TSV (category, text).
        #[arg(long)]
        comments: PathBuf,
        /// Declared category set; defaults to politics,sports,religion.
        #[arg(long)]
        categories: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Predict the sentiment of one text.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        #[arg(long)]
        force: bool,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Ingest {
            input,
            arity,
            derive_two_class,
            split,
            seed,
            out,
            force,
        } => commands::ingest(&input, arity, derive_two_class, split, seed, &out, force),
        Command::Stats {
            input,
            arity,
            format,
            expect,
            out,
            force,
        } => commands::stats(&input, arity, format, expect.as_deref(), out.as_deref(), force),
        Command::MergeAnnotations {
            comments,
            annotations,
            no_noise_filter,
            out,
            force,
        } => commands::merge_annotations(&comments, &annotations, !no_noise_filter, &out, force),
        Command::Train { config } => commands::train(&config),
        Command::Evaluate {
            checkpoint,
            test,
            format,
            out,
            force,
        } => commands::evaluate(&checkpoint, &test, format, out.as_deref(), force),
        Command::Matrix { config, format } => commands::matrix(&config, format),
        Command::Analyze {
            checkpoint,
            comments,
            categories,
            format,
            out,
            force,
        } => commands::analyze(
            &checkpoint,
            &comments,
            categories.as_deref(),
            format,
            out.as_deref(),
            force,
        ),
        Command::Predict {
            checkpoint,
            text,
            format,
            force,
        } => commands::predict(&checkpoint, &text, format, force),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_validation() { 1 } else { 2 });
        }
    }
}

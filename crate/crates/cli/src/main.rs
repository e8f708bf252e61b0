//! `transfer-rank`: rank candidate models from extracted features, evaluate
//! rankings against ground truth, and inspect feature stores.

mod eval;
mod inspect;
mod load;
mod rank;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use transferability::ScoreKind;

#[derive(Parser)]
#[command(name = "transfer-rank", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every feature directory and rank the models.
    Rank {
        #[arg(long, value_enum)]
        task: Task,
        /// Comma-separated subset of energy, cls, reg, logme, lmr.
        /// Defaults to energy,cls (classification) or energy,cls,reg (detection).
        #[arg(long, value_delimiter = ',')]
        scores: Option<Vec<String>>,
        /// One feature store or map bundle per candidate model.
        #[arg(long, num_args = 1.., required = true)]
        features: Vec<PathBuf>,
        /// Fit the regression score on 70% of samples and score the rest.
        #[arg(long)]
        holdout: bool,
        /// Report path; a JSON copy is written to `<out>.json`.
        /// Prints the report to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare rank reports against a ground-truth accuracy table.
    Eval {
        /// CSV with header `model_id,<dataset ids>` and one row per model.
        #[arg(long)]
        gt: PathBuf,
        /// `dataset_id=path` of a rank report.
        #[arg(long = "report", required = true)]
        reports: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a summary of a feature store and validate it.
    Inspect { dir: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Classification,
    Detection,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Detection => "detection",
        }
    }

    pub fn default_scores(self) -> Vec<ScoreKind> {
        match self {
            Task::Classification => vec![ScoreKind::Energy, ScoreKind::Cls],
            Task::Detection => vec![ScoreKind::Energy, ScoreKind::Cls, ScoreKind::Reg],
        }
    }
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    /// Unreadable or invalid input (exit 2).
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    /// Inconsistent options (exit 3).
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rank {
            task,
            scores,
            features,
            holdout,
            out,
        } => rank::run(task, scores, &features, holdout, out.as_deref()),
        Command::Eval {
            gt,
            reports,
            k,
            out,
        } => eval::run(&gt, &reports, &k, out.as_deref()),
        Command::Inspect { dir } => inspect::run(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

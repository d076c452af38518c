//! `blockrec` — fit a community model over co-purchases, recommend from it,
//! sweep an offline evaluation, or re-score ratings from comment text.

mod bundle;
mod config;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blockrec::comments::CommentBlend;
use blockrec::error::Error;

use config::ConfigOverrides;
use ops::UserSpec;

#[derive(Parser)]
#[command(name = "blockrec", version, about = "community-aware hybrid recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a dataset, pick K, and persist the fitted model bundle.
    Fit {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Directory the model bundle is written into.
        #[arg(long, default_value = "model")]
        out: PathBuf,
    },
    /// Rank unseen items for one user from a fitted bundle.
    Recommend {
        /// Directory holding a bundle written by `fit`.
        #[arg(long, default_value = "model")]
        model: PathBuf,
        /// Existing user id from the training data.
        #[arg(long, conflicts_with = "new_user")]
        user: Option<u32>,
        /// Attributes for an unseen user, as "age,gender,occupation".
        #[arg(long)]
        new_user: Option<String>,
        /// How many items to return.
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Sweep train proportions and compare against a plain similarity baseline.
    Evaluate {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Where the metrics table is written.
        #[arg(long, default_value = "report.csv")]
        report: PathBuf,
        /// Directory for SVG charts (skipped when absent).
        #[arg(long)]
        plots: Option<PathBuf>,
        /// Evaluate a single train proportion instead of the configured sweep.
        #[arg(long)]
        p_star: Option<f64>,
    },
    /// Blend comment-derived scores into explicit ratings and print the table.
    ImproveRatings {
        /// Ratings file (tab-separated user, item, rating, timestamp).
        #[arg(long)]
        ratings: PathBuf,
        /// Score-labeled comments used to train the classifier.
        #[arg(long)]
        labeled: PathBuf,
        /// Comments attached to (user, item) pairs.
        #[arg(long)]
        comments: PathBuf,
        /// Weight on the explicit rating.
        #[arg(long, default_value_t = 0.5)]
        eta1: f64,
        /// Weight on the comment-derived rating.
        #[arg(long, default_value_t = 0.5)]
        eta2: f64,
        /// Stopword list applied during classification.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fit { overrides, out } => {
            let config = config::resolve(&overrides)?;
            ops::cmd_fit(&config, &out)
        }
        Command::Recommend { model, user, new_user, n } => {
            let spec = match (user, new_user) {
                (Some(id), None) => UserSpec::Existing(id),
                (None, Some(s)) => ops::parse_new_user(&s)?,
                _ => {
                    return Err(Error::validation(
                        "pass exactly one of --user or --new-user",
                    ))
                }
            };
            ops::cmd_recommend(&model, spec, n)
        }
        Command::Evaluate { overrides, report, plots, p_star } => {
            let config = config::resolve(&overrides)?;
            ops::cmd_evaluate(&config, &report, plots.as_deref(), p_star)
        }
        Command::ImproveRatings { ratings, labeled, comments, eta1, eta2, stopwords, out } => {
            let blend = CommentBlend::new(eta1, eta2)?;
            ops::cmd_improve(
                &ratings,
                &labeled,
                &comments,
                &blend,
                stopwords.as_deref(),
                out.as_deref(),
            )
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("blockrec: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

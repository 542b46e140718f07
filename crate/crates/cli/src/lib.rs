//! Command-line pipeline for crowd evaluation of saliency methods: one
//! subcommand per stage, each reading and writing documented files in the
//! output directory, plus the annotation HTTP service.

pub mod artifacts;
pub mod commands;
pub mod server;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saleval::analytics::Removal;
use saleval::saliency::Method;

#[derive(Debug, Parser)]
#[command(
    name = "saleval",
    version,
    about = "Crowd evaluation of saliency explanations for text classifiers"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RemovalArg {
    Pad,
    Delete,
}

impl From<RemovalArg> for Removal {
    fn from(r: RemovalArg) -> Self {
        match r {
            RemovalArg::Pad => Removal::Pad,
            RemovalArg::Delete => Removal::Delete,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build (or read) the corpus and train the classifier.
    Train,
    /// Select evaluation samples and compute explanations.
    Explain {
        /// Method to compute (repeatable); defaults to the configured list.
        #[arg(long = "method")]
        methods: Vec<Method>,
        /// Integrated-gradient steps, overriding the configuration.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Pairwise top-k overlap between methods.
    Overlap {
        /// Defaults to the largest configured k.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Build masked-word tasks for every (sample, method, k).
    GenTasks,
    /// Build the batch assignment plan.
    Plan,
    /// Run the annotation HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        #[arg(long, env = "SALEVAL_ADMIN_TOKEN")]
        admin_token: String,
    },
    /// Run the whole protocol with simulated workers and write a report.
    Simulate,
    /// Majority-vote the exported annotations over the task grid.
    Aggregate,
    /// Weights, method scores, and ranks.
    Score,
    /// Flip detection and histogram.
    Flips,
    /// Sufficiency and comprehensiveness per method and k.
    Suffcomp {
        #[arg(long, value_enum, default_value = "pad")]
        removal: RemovalArg,
    },
    /// Sample tasks for an expert audit, or score expert labels against the crowd.
    Audit {
        /// Number of tasks to sample when no expert labels are given.
        #[arg(long, default_value_t = 100)]
        sample: usize,
        /// JSON lines of `{"task_id": ..., "label": ...}`.
        #[arg(long)]
        experts: Option<PathBuf>,
    },
    /// Export annotations from the service's store.
    Export {
        #[arg(long)]
        accepted_only: bool,
        /// Run the quality filter before exporting.
        #[arg(long)]
        apply_quality: bool,
    },
    /// Bundle every available table into the report directory.
    Report,
}

/// A command-line misuse detected after parsing (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exit code for an error returned by [`run`]: 1 for usage, 2 for data.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        1
    } else {
        2
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    commands::dispatch(&cli.common, cli.command)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_map_to_exit_1() {
        assert_eq!(exit_code(&UsageError("bad".into()).into()), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("data")), 2);
    }

    #[test]
    fn global_flags_parse_after_the_subcommand() {
        let cli = Cli::try_parse_from([
            "saleval", "explain", "--method", "lime", "--method", "random", "--seed", "3",
        ])
        .unwrap();
        assert_eq!(cli.common.seed, Some(3));
        match cli.command {
            Command::Explain { methods, steps } => {
                assert_eq!(methods, [Method::Lime, Method::Random]);
                assert_eq!(steps, None);
            }
            other => panic!("{other:?}"),
        }
    }
}

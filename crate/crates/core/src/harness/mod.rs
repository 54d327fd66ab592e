//! Experiment orchestration: configuration, seeded trials, summaries,
//! output files and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod output;
pub mod run;
pub mod summary;

use std::path::PathBuf;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use config::{ExperimentConfig, Preset};
pub use output::{
    emit_outputs, read_episodes, read_manifest, read_summary_csv, read_trial_rewards, summarize_dir, write_manifest, Manifest,
    SummaryRow,
};
pub use run::{run_episode, run_experiment, run_trial, EpisodeRecord, Execution, ExperimentResult, TrialFailure, TrialStreams};
pub use summary::{detect_collapse, RunSummary};

use crate::agent::AgentError;
use crate::envs::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trial {trial}, episode {episode}: {source}")]
    Agent {
        trial: usize,
        episode: usize,
        #[source]
        source: AgentError,
    },
    #[error("trial {trial}, episode {episode}: {source}")]
    Env {
        trial: usize,
        episode: usize,
        #[source]
        source: EnvError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {detail}")]
    Parse { what: String, detail: String },
    #[error("checkpoint refused: {0}")]
    Checkpoint(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, detail: impl ToString) -> Self {
        HarnessError::Parse {
            what: what.into(),
            detail: detail.to_string(),
        }
    }
}

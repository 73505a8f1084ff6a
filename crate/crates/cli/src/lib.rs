//! The `moralframe` pipeline: label a corpus with the few-shot prompt, serve
//! the annotation study, resolve and score the judgments, and run the framing
//! analyses. Each stage is a function here; `main.rs` only parses flags.

pub mod config;
pub mod serve;
pub mod stages;

use thiserror::Error;

pub use config::{BackendKind, ModelConfig, StudyConfig};
pub use stages::{
    adjudicate, aggregate, analyze, label, load_inputs, run_all, Artifact, LabelSummary, Manifest, RunSummary,
    StudyInputs,
};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_STAGE: u8 = 3;
pub const EXIT_PENDING: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{} item(s) need adjudication: {}", .0.len(), .0.join(", "))]
    PendingAdjudication(Vec<String>),
}

impl CliError {
    pub fn stage(stage: &'static str, message: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Stage { .. } => EXIT_STAGE,
            CliError::PendingAdjudication(_) => EXIT_PENDING,
        }
    }
}

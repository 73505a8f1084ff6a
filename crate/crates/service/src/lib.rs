//! Annotation service: onboarding, gated practice, k-redundant batch
//! scheduling, judgment and survey capture, and the JSONL study export.
//!
//! State lives in memory and is rebuilt from an append-only event journal on
//! start-up. See [`http`] for the `/v1` API.

pub mod content;
pub mod engine;
pub mod http;
pub mod journal;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use content::{ContentPack, PracticeItem, WorkedExample};
pub use engine::{
    AnnotatorState, Clock, CreateStudy, FrameView, ManualClock, Phase, PracticeFeedback, PracticeOutcome, Progress,
    Service, ServiceError, State, StudyCreated, StudyStatus, Submission, SurveyAck, SystemClock, TaskView,
};
pub use journal::{Event, Journal, JournalEntry};

/// `serve` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    pub journal: PathBuf,
    #[serde(default)]
    pub content_pack: Option<PathBuf>,
    #[serde(default)]
    pub ui_dir: Option<PathBuf>,
}

fn default_bind() -> SocketAddr {
    "127.0.0.1:8080".parse().expect("valid address")
}

impl ServeConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, String> {
        let mut config: ServeConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut config.journal);
        if let Some(p) = config.content_pack.as_mut() {
            fix(p);
        }
        if let Some(p) = config.ui_dir.as_mut() {
            fix(p);
        }
        Ok(config)
    }
}

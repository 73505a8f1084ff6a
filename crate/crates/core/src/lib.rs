//! Core of the morality-frame annotation platform.
//!
//! * [`model`]: foundations, entity roles, frames, corpus items, judgments, surveys.
//! * [`prompt`]: few-shot prompt rendering and completion parsing.
//! * [`labels`]: the labeled-frames artifact produced by the LLM stage.
//! * [`aggregate`]: majority-vote resolution and accuracy / macro-F1 metrics.
//! * [`agreement`]: Krippendorff's alpha for nominal ratings.
//! * [`analysis`]: correlation matrices, entity-role tallies, survey summaries.
//! * [`export`]: the study export bundle exchanged between stages.

pub mod aggregate;
pub mod agreement;
pub mod analysis;
pub mod export;
pub mod labels;
pub mod model;
pub mod prompt;

pub use model::*;

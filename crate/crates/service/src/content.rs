//! The onboarding content pack: task instructions, worked examples with
//! explanations, and gated practice items with reference answers.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use moralframe_core::{validate_frame_text, MoralFoundation, MoralityFrame};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EXAMPLE_COUNT: usize = 8;
pub const PRACTICE_COUNT: usize = 2;

const DEFAULT_PACK: &str = include_str!("../assets/content_pack.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkedExample {
    pub text: String,
    pub frame: MoralityFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeItem {
    pub id: String,
    pub text: String,
    /// Frame presented for judgment.
    pub shown: MoralityFrame,
    /// Reference frame the judgment is scored against.
    pub answer: MoralityFrame,
    /// Feedback shown with the reference answer.
    pub explanation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PackLine {
    Instructions { text: String },
    Example(WorkedExample),
    Practice(PracticeItem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentPack {
    pub instructions: String,
    pub examples: Vec<WorkedExample>,
    pub practice: Vec<PracticeItem>,
}

#[derive(Debug, Error)]
pub enum ContentError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid content pack: {0}")]
    Invalid(String),
}

impl ContentPack {
    pub fn default_pack() -> Self {
        Self::read(DEFAULT_PACK.as_bytes()).expect("bundled content pack is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ContentError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Parses and validates a pack; role spans are resolved against the
    /// example texts.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, ContentError> {
        let mut instructions = Vec::new();
        let mut examples = Vec::new();
        let mut practice = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(|source| ContentError::Json { line: n + 1, source })? {
                PackLine::Instructions { text } => instructions.push(text),
                PackLine::Example(e) => examples.push(e),
                PackLine::Practice(p) => practice.push(p),
            }
        }
        let mut pack = ContentPack {
            instructions: instructions.join("\n\n"),
            examples,
            practice,
        };
        pack.check()?;
        Ok(pack)
    }

    fn check(&mut self) -> Result<(), ContentError> {
        let invalid = |m: String| Err(ContentError::Invalid(m));
        if self.instructions.trim().is_empty() {
            return invalid("no instructions".into());
        }
        if self.examples.len() != EXAMPLE_COUNT {
            return invalid(format!("expected {EXAMPLE_COUNT} worked examples, found {}", self.examples.len()));
        }
        if self.practice.len() != PRACTICE_COUNT {
            return invalid(format!("expected {PRACTICE_COUNT} practice items, found {}", self.practice.len()));
        }
        let covered: BTreeSet<MoralFoundation> = self.examples.iter().map(|e| e.frame.foundation).collect();
        if covered.len() != MoralFoundation::ALL.len() {
            return invalid("worked examples must cover every foundation label and none".into());
        }
        for e in &mut self.examples {
            if e.frame.foundation_explanation.trim().is_empty() {
                return invalid(format!("example {:?} lacks an explanation", e.text));
            }
            e.frame = validate_frame_text(&e.frame, &e.text).map_err(|err| ContentError::Invalid(err.to_string()))?;
        }
        let mut ids = BTreeSet::new();
        for p in &mut self.practice {
            if !ids.insert(p.id.clone()) {
                return invalid(format!("duplicate practice id {}", p.id));
            }
            p.shown = validate_frame_text(&p.shown, &p.text).map_err(|err| ContentError::Invalid(err.to_string()))?;
            p.answer = validate_frame_text(&p.answer, &p.text).map_err(|err| ContentError::Invalid(err.to_string()))?;
        }
        Ok(())
    }

    pub fn practice_item(&self, id: &str) -> Option<&PracticeItem> {
        self.practice.iter().find(|p| p.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_pack_is_complete_and_anchored() {
        let pack = ContentPack::default_pack();
        assert_eq!(pack.examples.len(), 8);
        assert_eq!(pack.practice.len(), 2);
        assert!(pack.examples.iter().all(|e| e.frame.is_anchored()));
    }

    #[test]
    fn short_pack_is_rejected() {
        let first_lines: String = DEFAULT_PACK.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(ContentPack::read(first_lines.as_bytes()), Err(ContentError::Invalid(_))));
    }
}

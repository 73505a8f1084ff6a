//! Append-only event journal. One JSON line per event; every append is
//! flushed and synced before the event is applied to in-memory state.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use moralframe_core::export::{AssignmentRecord, BatchRecord, StudyHeader};
use moralframe_core::labels::LabelRecord;
use moralframe_core::{Judgment, SurveyResponse, TextItem};
use serde::{Deserialize, Serialize};

use crate::engine::PracticeOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    StudyCreated {
        header: StudyHeader,
        items: Vec<TextItem>,
        frames: Vec<LabelRecord>,
        batches: Vec<BatchRecord>,
    },
    AnnotatorsAssigned {
        study_id: String,
        assignments: Vec<AssignmentRecord>,
        /// annotator id -> opaque access token
        #[serde(default)]
        tokens: BTreeMap<String, String>,
    },
    OnboardingCompleted {
        annotator_id: String,
    },
    PracticeRecorded {
        outcome: PracticeOutcome,
    },
    TaskViewed {
        annotator_id: String,
        item_id: String,
    },
    JudgmentRecorded {
        judgment: Judgment,
    },
    SurveyRecorded {
        survey: SurveyResponse,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub event: Event,
}

#[derive(Debug)]
enum Sink {
    File { file: File, path: PathBuf },
    Memory(Vec<JournalEntry>),
}

#[derive(Debug)]
pub struct Journal {
    sink: Sink,
}

impl Journal {
    pub fn in_memory() -> Self {
        Journal {
            sink: Sink::Memory(Vec::new()),
        }
    }

    /// Opens `path` for appending and returns the entries already in it.
    pub fn open(path: &Path) -> std::io::Result<(Self, Vec<JournalEntry>)> {
        let entries = if path.exists() {
            read_entries(BufReader::new(File::open(path)?))?
        } else {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            Journal {
                sink: Sink::File {
                    file,
                    path: path.to_path_buf(),
                },
            },
            entries,
        ))
    }

    pub fn append(&mut self, entry: &JournalEntry) -> std::io::Result<()> {
        match &mut self.sink {
            Sink::File { file, .. } => {
                let mut line = serde_json::to_vec(entry)?;
                line.push(b'\n');
                file.write_all(&line)?;
                file.sync_data()
            }
            Sink::Memory(entries) => {
                entries.push(entry.clone());
                Ok(())
            }
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.sink {
            Sink::File { path, .. } => Some(path),
            Sink::Memory(_) => None,
        }
    }

    /// Entries of an in-memory journal; empty for file journals.
    pub fn memory_entries(&self) -> &[JournalEntry] {
        match &self.sink {
            Sink::Memory(entries) => entries,
            Sink::File { .. } => &[],
        }
    }
}

pub fn read_entries<R: BufRead>(reader: R) -> std::io::Result<Vec<JournalEntry>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: JournalEntry = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("journal line {}: {e}", n + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}

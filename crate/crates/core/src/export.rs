//! Study export bundle: a JSONL file whose first line is the study header,
//! followed by items, LLM frames, the batch schedule, per-annotator
//! assignments, judgments and survey responses.
//!
//! Every line is `{"kind": ..., "data": ...}`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::LabelRecord;
use crate::model::{Judgment, MoralityFrame, SurveyResponse, TextItem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyHeader {
    pub study_id: String,
    pub redundancy_k: usize,
    pub batch_size: usize,
    pub ablation: bool,
    pub seed: u64,
    /// Items left out of the schedule because the LLM stage failed on them.
    #[serde(default)]
    pub excluded_items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch_id: String,
    pub item_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub annotator_id: String,
    pub batch_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum ExportRecord {
    Study(StudyHeader),
    Item(TextItem),
    Frame(LabelRecord),
    Batch(BatchRecord),
    Assignment(AssignmentRecord),
    Judgment(Judgment),
    Survey(SurveyResponse),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyExport {
    pub header: StudyHeader,
    pub items: Vec<TextItem>,
    pub frames: Vec<LabelRecord>,
    pub batches: Vec<BatchRecord>,
    pub assignments: Vec<AssignmentRecord>,
    pub judgments: Vec<Judgment>,
    pub surveys: Vec<SurveyResponse>,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("export has no study header")]
    MissingHeader,
    #[error("export has more than one study header")]
    DuplicateHeader,
    #[error("inconsistent export: {0}")]
    Inconsistent(String),
}

impl StudyExport {
    pub fn read<R: BufRead>(reader: R) -> Result<Self, ExportError> {
        let mut header = None;
        let mut export = StudyExport {
            header: StudyHeader {
                study_id: String::new(),
                redundancy_k: 0,
                batch_size: 0,
                ablation: false,
                seed: 0,
                excluded_items: Vec::new(),
            },
            items: Vec::new(),
            frames: Vec::new(),
            batches: Vec::new(),
            assignments: Vec::new(),
            judgments: Vec::new(),
            surveys: Vec::new(),
        };
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ExportRecord =
                serde_json::from_str(&line).map_err(|source| ExportError::Json { line: n + 1, source })?;
            match record {
                ExportRecord::Study(h) => {
                    if header.replace(h).is_some() {
                        return Err(ExportError::DuplicateHeader);
                    }
                }
                ExportRecord::Item(item) => export.items.push(item),
                ExportRecord::Frame(frame) => export.frames.push(frame),
                ExportRecord::Batch(batch) => export.batches.push(batch),
                ExportRecord::Assignment(a) => export.assignments.push(a),
                ExportRecord::Judgment(j) => export.judgments.push(j),
                ExportRecord::Survey(s) => export.surveys.push(s),
            }
        }
        export.header = header.ok_or(ExportError::MissingHeader)?;
        export.check()?;
        Ok(export)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        let mut line = |record: ExportRecord| -> std::io::Result<()> {
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")
        };
        line(ExportRecord::Study(self.header.clone()))?;
        for item in &self.items {
            line(ExportRecord::Item(item.clone()))?;
        }
        for frame in &self.frames {
            line(ExportRecord::Frame(frame.clone()))?;
        }
        for batch in &self.batches {
            line(ExportRecord::Batch(batch.clone()))?;
        }
        for a in &self.assignments {
            line(ExportRecord::Assignment(a.clone()))?;
        }
        for j in &self.judgments {
            line(ExportRecord::Judgment(j.clone()))?;
        }
        for s in &self.surveys {
            line(ExportRecord::Survey(s.clone()))?;
        }
        Ok(())
    }

    /// Cross-references: every scheduled item exists and has a usable frame,
    /// and every judgment refers to a scheduled item.
    pub fn check(&self) -> Result<(), ExportError> {
        let items: BTreeSet<&str> = self.items.iter().map(|i| i.id.as_str()).collect();
        let frames = self.llm_frames();
        let scheduled = self.scheduled_items();
        for id in &scheduled {
            if !items.contains(id.as_str()) {
                return Err(ExportError::Inconsistent(format!("scheduled item {id} is not in the corpus")));
            }
            if !frames.contains_key(id) {
                return Err(ExportError::Inconsistent(format!("scheduled item {id} has no LLM frame")));
            }
        }
        for j in &self.judgments {
            if !scheduled.contains(&j.item_id) {
                return Err(ExportError::Inconsistent(format!(
                    "judgment for unscheduled item {}",
                    j.item_id
                )));
            }
        }
        Ok(())
    }

    /// Usable LLM frames by item id.
    pub fn llm_frames(&self) -> BTreeMap<String, MoralityFrame> {
        self.frames
            .iter()
            .filter_map(|r| r.usable_frame().map(|f| (r.item_id.clone(), f.clone())))
            .collect()
    }

    pub fn scheduled_items(&self) -> BTreeSet<String> {
        self.batches
            .iter()
            .flat_map(|b| b.item_ids.iter().cloned())
            .collect()
    }

    /// LLM frames restricted to scheduled items.
    pub fn scheduled_frames(&self) -> BTreeMap<String, MoralityFrame> {
        let scheduled = self.scheduled_items();
        self.llm_frames()
            .into_iter()
            .filter(|(id, _)| scheduled.contains(id))
            .collect()
    }

    pub fn annotators(&self) -> BTreeSet<String> {
        self.judgments.iter().map(|j| j.annotator_id.clone()).collect()
    }
}

/// A manually decided gold frame for an item that majority vote left open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjudication {
    pub item_id: String,
    pub frame: MoralityFrame,
}

pub fn read_adjudications<R: BufRead>(reader: R) -> std::io::Result<BTreeMap<String, MoralityFrame>> {
    let mut out = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let a: Adjudication = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        // later lines win
        out.insert(a.item_id, a.frame);
    }
    Ok(out)
}

pub fn write_adjudications<W: Write>(mut writer: W, decisions: &BTreeMap<String, MoralityFrame>) -> std::io::Result<()> {
    for (item_id, frame) in decisions {
        serde_json::to_writer(
            &mut writer,
            &Adjudication {
                item_id: item_id.clone(),
                frame: frame.clone(),
            },
        )?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MoralFoundation, Stance};

    fn sample() -> StudyExport {
        let item = TextItem::new("t1", "Vaccines work").with_stance(Stance::ProVax);
        StudyExport {
            header: StudyHeader {
                study_id: "s".into(),
                redundancy_k: 1,
                batch_size: 50,
                ablation: false,
                seed: 9,
                excluded_items: vec![],
            },
            items: vec![item],
            frames: vec![LabelRecord::ok("t1", MoralityFrame::new(MoralFoundation::CareHarm, vec![]))],
            batches: vec![BatchRecord {
                batch_id: "b0".into(),
                item_ids: vec!["t1".into()],
            }],
            assignments: vec![AssignmentRecord {
                annotator_id: "a".into(),
                batch_id: "b0".into(),
            }],
            judgments: vec![Judgment::agree("t1", "a")],
            surveys: vec![],
        }
    }

    #[test]
    fn bundle_roundtrip() {
        let export = sample();
        let mut buf = Vec::new();
        export.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"kind\":\"study\",\"data\":{\"study_id\":\"s\",\"redundancy_k\":1"));
        assert_eq!(StudyExport::read(buf.as_slice()).unwrap(), export);
    }

    #[test]
    fn inconsistent_bundles_are_rejected() {
        let mut export = sample();
        export.judgments.push(Judgment::agree("ghost", "a"));
        let mut buf = Vec::new();
        export.write(&mut buf).unwrap();
        assert!(matches!(StudyExport::read(buf.as_slice()), Err(ExportError::Inconsistent(_))));

        let no_header = "{\"kind\":\"item\",\"data\":{\"id\":\"x\",\"text\":\"y\"}}\n";
        assert!(matches!(StudyExport::read(no_header.as_bytes()), Err(ExportError::MissingHeader)));
    }
}

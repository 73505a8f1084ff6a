//! The labeled-frames artifact: one line per corpus item with the frame the
//! LLM stage produced, or an explicit failure.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::model::MoralityFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub item_id: String,
    pub status: LabelStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<MoralityFrame>,
    /// Completions requested for this item, resamples included.
    #[serde(default = "one")]
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

fn one() -> u32 {
    1
}

impl LabelRecord {
    pub fn ok(item_id: impl Into<String>, frame: MoralityFrame) -> Self {
        LabelRecord {
            item_id: item_id.into(),
            status: LabelStatus::Ok,
            frame: Some(frame),
            attempts: 1,
            error: None,
            fingerprint: None,
        }
    }

    pub fn failed(item_id: impl Into<String>, error: impl Into<String>) -> Self {
        LabelRecord {
            item_id: item_id.into(),
            status: LabelStatus::Failed,
            frame: None,
            attempts: 0,
            error: Some(error.into()),
            fingerprint: None,
        }
    }

    pub fn usable_frame(&self) -> Option<&MoralityFrame> {
        match self.status {
            LabelStatus::Ok => self.frame.as_ref(),
            LabelStatus::Failed => None,
        }
    }
}

pub fn read_label_records<R: BufRead>(reader: R) -> std::io::Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_label_records<W: Write>(mut writer: W, records: &[LabelRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

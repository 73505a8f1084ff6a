//! Study state and the commands that change it.
//!
//! Every command validates against the current [`State`], appends one event
//! to the journal and then folds it into the state. [`State::apply`] is the
//! only mutation path, so replaying a journal rebuilds the same state.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use moralframe_core::export::{AssignmentRecord, BatchRecord, StudyExport, StudyHeader};
use moralframe_core::labels::LabelRecord;
use moralframe_core::{
    validate_frame_text, FrameError, Judgment, JudgmentError, MoralityFrame, SurveyError, SurveyResponse, TextItem,
    Verdict,
};
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{ContentPack, PracticeItem, WorkedExample};
use crate::journal::{Event, Journal, JournalEntry};

pub const DEFAULT_REDUNDANCY_K: usize = 3;
pub const DEFAULT_BATCH_SIZE: usize = 50;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<DateTime<Utc>>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock { now: Mutex::new(start) }
    }

    pub fn advance_ms(&self, ms: i64) {
        *self.now.lock() += chrono::Duration::milliseconds(ms);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Onboarding,
    Practice,
    Main,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeOutcome {
    pub item_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    /// Frame the annotator endorsed: the shown one on agree, the correction
    /// on disagree.
    pub submitted: MoralityFrame,
    pub correct: bool,
    pub feedback_shown: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("study {0} already exists")]
    StudyExists(String),
    #[error("annotator {0} is already registered")]
    AnnotatorExists(String),
    #[error("study {0} already has annotators assigned")]
    AlreadyAssigned(String),
    #[error("items without an LLM frame or failed status: {}", .0.join(", "))]
    MissingFrames(Vec<String>),
    #[error("redundancy {needed} needs at least {needed} annotators, got {available}")]
    InsufficientAnnotators { needed: usize, available: usize },
    #[error("onboarding and both practice items must be completed first")]
    PracticeRequired,
    #[error("expected a submission for {expected}, got {got}")]
    OutOfOrderSubmission { expected: String, got: String },
    #[error("{annotator_id} already judged {item_id}")]
    DuplicateJudgment { annotator_id: String, item_id: String },
    #[error("incomplete correction: {0}")]
    IncompleteCorrection(String),
    #[error("invalid correction: {0}")]
    InvalidCorrection(String),
    #[error("annotator {0} has no items left")]
    StudyComplete(String),
    #[error("annotator {0} has not finished all assigned items")]
    StudyIncomplete(String),
    #[error("{field} = {value} is outside 1..=5")]
    ScoreOutOfRange { field: String, value: u8 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing or invalid annotator token")]
    InvalidToken,
    #[error("storage: {0}")]
    Storage(String),
}

impl ServiceError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownStudy(_) => "UnknownStudy",
            ServiceError::UnknownAnnotator(_) => "UnknownAnnotator",
            ServiceError::StudyExists(_) => "StudyExists",
            ServiceError::AnnotatorExists(_) => "AnnotatorExists",
            ServiceError::AlreadyAssigned(_) => "AlreadyAssigned",
            ServiceError::MissingFrames(_) => "MissingFrames",
            ServiceError::InsufficientAnnotators { .. } => "InsufficientAnnotators",
            ServiceError::PracticeRequired => "PracticeRequired",
            ServiceError::OutOfOrderSubmission { .. } => "OutOfOrderSubmission",
            ServiceError::DuplicateJudgment { .. } => "DuplicateJudgment",
            ServiceError::IncompleteCorrection(_) => "IncompleteCorrection",
            ServiceError::InvalidCorrection(_) => "InvalidCorrection",
            ServiceError::StudyComplete(_) => "StudyComplete",
            ServiceError::StudyIncomplete(_) => "StudyIncomplete",
            ServiceError::ScoreOutOfRange { .. } => "ScoreOutOfRange",
            ServiceError::InvalidRequest(_) => "InvalidRequest",
            ServiceError::InvalidToken => "InvalidToken",
            ServiceError::Storage(_) => "Storage",
        }
    }
}

impl From<JudgmentError> for ServiceError {
    fn from(e: JudgmentError) -> Self {
        match e {
            JudgmentError::IncompleteCorrection(m) => ServiceError::IncompleteCorrection(m),
            other => ServiceError::InvalidRequest(other.to_string()),
        }
    }
}

impl From<FrameError> for ServiceError {
    fn from(e: FrameError) -> Self {
        ServiceError::InvalidCorrection(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub header: StudyHeader,
    pub items: Vec<TextItem>,
    pub frames: Vec<LabelRecord>,
    pub batches: Vec<BatchRecord>,
    pub assignments: Vec<AssignmentRecord>,
    pub judgments: Vec<Judgment>,
    /// Latest response per annotator.
    pub surveys: BTreeMap<String, SurveyResponse>,
}

impl StudyState {
    fn item(&self, id: &str) -> Option<&TextItem> {
        self.items.iter().find(|i| i.id == id)
    }

    fn frame(&self, id: &str) -> Option<&MoralityFrame> {
        self.frames.iter().find(|r| r.item_id == id).and_then(LabelRecord::usable_frame)
    }

    fn batch(&self, id: &str) -> Option<&BatchRecord> {
        self.batches.iter().find(|b| b.batch_id == id)
    }

    /// Judgment count per scheduled item.
    pub fn coverage(&self) -> BTreeMap<String, usize> {
        let mut out: BTreeMap<String, usize> =
            self.batches.iter().flat_map(|b| b.item_ids.iter().map(|id| (id.clone(), 0))).collect();
        for j in &self.judgments {
            *out.entry(j.item_id.clone()).or_default() += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorState {
    pub annotator_id: String,
    pub study_id: String,
    pub batch_ids: Vec<String>,
    /// Items of all assigned batches, in batch order.
    pub item_ids: Vec<String>,
    pub onboarded: bool,
    pub practice: Vec<PracticeOutcome>,
    /// Index of the next unjudged item.
    pub cursor: usize,
    /// First view of the cursor item.
    pub viewed: Option<(String, DateTime<Utc>)>,
    pub judged: BTreeSet<String>,
    /// Opaque credential for the HTTP API; never exported.
    #[serde(default)]
    pub token: String,
}

impl AnnotatorState {
    pub fn phase(&self, practice_total: usize) -> Phase {
        if !self.onboarded {
            Phase::Onboarding
        } else if self.practice.len() < practice_total {
            Phase::Practice
        } else if self.cursor < self.item_ids.len() {
            Phase::Main
        } else {
            Phase::Done
        }
    }

    pub fn current_item(&self) -> Option<&str> {
        self.item_ids.get(self.cursor).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub studies: BTreeMap<String, StudyState>,
    pub annotators: BTreeMap<String, AnnotatorState>,
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("journal entry {seq}: {message}")]
pub struct ReplayError {
    pub seq: u64,
    pub message: String,
}

impl State {
    /// Folds one event into the state. Events are validated before they are
    /// journaled, so an error here means the journal was edited or truncated.
    pub fn apply(&mut self, entry: &JournalEntry) -> Result<(), ReplayError> {
        let fail = |message: String| ReplayError { seq: entry.seq, message };
        if entry.seq != self.last_seq + 1 {
            return Err(fail(format!("expected sequence {}", self.last_seq + 1)));
        }
        match &entry.event {
            Event::StudyCreated {
                header,
                items,
                frames,
                batches,
            } => {
                self.studies.insert(
                    header.study_id.clone(),
                    StudyState {
                        header: header.clone(),
                        items: items.clone(),
                        frames: frames.clone(),
                        batches: batches.clone(),
                        assignments: Vec::new(),
                        judgments: Vec::new(),
                        surveys: BTreeMap::new(),
                    },
                );
            }
            Event::AnnotatorsAssigned {
                study_id,
                assignments,
                tokens,
            } => {
                let study = self
                    .studies
                    .get_mut(study_id)
                    .ok_or_else(|| fail(format!("unknown study {study_id}")))?;
                for a in assignments {
                    let batch = study
                        .batches
                        .iter()
                        .find(|b| b.batch_id == a.batch_id)
                        .ok_or_else(|| fail(format!("unknown batch {}", a.batch_id)))?;
                    let annotator = self.annotators.entry(a.annotator_id.clone()).or_insert_with(|| AnnotatorState {
                        annotator_id: a.annotator_id.clone(),
                        study_id: study_id.clone(),
                        batch_ids: Vec::new(),
                        item_ids: Vec::new(),
                        onboarded: false,
                        practice: Vec::new(),
                        cursor: 0,
                        viewed: None,
                        judged: BTreeSet::new(),
                        token: tokens.get(&a.annotator_id).cloned().unwrap_or_default(),
                    });
                    annotator.batch_ids.push(batch.batch_id.clone());
                    annotator.item_ids.extend(batch.item_ids.iter().cloned());
                }
                study.assignments.extend(assignments.iter().cloned());
            }
            Event::OnboardingCompleted { annotator_id } => {
                self.annotator_mut(annotator_id).map_err(|m| fail(m))?.onboarded = true;
            }
            Event::PracticeRecorded { outcome } => {
                self.annotator_mut(&outcome.annotator_id)
                    .map_err(|m| fail(m))?
                    .practice
                    .push(outcome.clone());
            }
            Event::TaskViewed { annotator_id, item_id } => {
                self.annotator_mut(annotator_id).map_err(|m| fail(m))?.viewed = Some((item_id.clone(), entry.at));
            }
            Event::JudgmentRecorded { judgment } => {
                let annotator = self.annotator_mut(&judgment.annotator_id).map_err(|m| fail(m))?;
                if annotator.current_item() != Some(judgment.item_id.as_str()) {
                    return Err(fail(format!("judgment for {} is out of order", judgment.item_id)));
                }
                annotator.cursor += 1;
                annotator.viewed = None;
                annotator.judged.insert(judgment.item_id.clone());
                let study_id = annotator.study_id.clone();
                self.studies
                    .get_mut(&study_id)
                    .ok_or_else(|| fail(format!("unknown study {study_id}")))?
                    .judgments
                    .push(judgment.clone());
            }
            Event::SurveyRecorded { survey } => {
                let study_id = self
                    .annotators
                    .get(&survey.annotator_id)
                    .ok_or_else(|| fail(format!("unknown annotator {}", survey.annotator_id)))?
                    .study_id
                    .clone();
                self.studies
                    .get_mut(&study_id)
                    .ok_or_else(|| fail(format!("unknown study {study_id}")))?
                    .surveys
                    .insert(survey.annotator_id.clone(), survey.clone());
            }
        }
        self.last_seq = entry.seq;
        Ok(())
    }

    fn annotator_mut(&mut self, id: &str) -> Result<&mut AnnotatorState, String> {
        self.annotators.get_mut(id).ok_or_else(|| format!("unknown annotator {id}"))
    }

    pub fn replay(entries: &[JournalEntry]) -> Result<Self, ReplayError> {
        let mut state = State::default();
        for entry in entries {
            state.apply(entry)?;
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateStudy {
    #[serde(default)]
    pub study_id: Option<String>,
    pub items: Vec<TextItem>,
    pub frames: Vec<LabelRecord>,
    #[serde(default = "default_k")]
    pub redundancy_k: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub ablation: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    DEFAULT_REDUNDANCY_K
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCreated {
    pub study_id: String,
    pub batches: Vec<BatchRecord>,
    pub excluded_items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameView {
    pub foundation: moralframe_core::MoralFoundation,
    pub foundation_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foundation_explanation: Option<String>,
    pub roles: Vec<moralframe_core::EntityRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_explanation: Option<String>,
}

impl FrameView {
    /// Explanations are dropped from the payload, not just flagged, when
    /// `hide` is set.
    pub fn new(frame: &MoralityFrame, hide: bool) -> Self {
        let keep = |s: &String| (!hide && !s.trim().is_empty()).then(|| s.clone());
        FrameView {
            foundation: frame.foundation,
            foundation_label: frame.foundation.display_label().to_string(),
            foundation_explanation: keep(&frame.foundation_explanation),
            roles: frame.roles.clone(),
            role_explanation: keep(&frame.role_explanation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// 1-based.
    pub batch_index: usize,
    pub batch_count: usize,
    /// 1-based position within the batch.
    pub item_index: usize,
    pub batch_len: usize,
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum TaskView {
    Onboarding {
        study_id: String,
        annotator_id: String,
        instructions: String,
        examples: Vec<WorkedExample>,
        practice_total: usize,
    },
    Practice {
        study_id: String,
        annotator_id: String,
        item: ItemView,
        practice_id: String,
        frame: FrameView,
        explanations_hidden: bool,
        index: usize,
        total: usize,
    },
    Main {
        study_id: String,
        annotator_id: String,
        item: ItemView,
        frame: FrameView,
        explanations_hidden: bool,
        progress: Progress,
    },
}

impl TaskView {
    pub fn phase(&self) -> Phase {
        match self {
            TaskView::Onboarding { .. } => Phase::Onboarding,
            TaskView::Practice { .. } => Phase::Practice,
            TaskView::Main { .. } => Phase::Main,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub annotator_id: String,
    pub item_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub correction: Option<MoralityFrame>,
    /// Client-side measurement, used only when the server saw no task view.
    #[serde(default)]
    pub elapsed_ms: Option<u64>,
}

impl Submission {
    pub fn agree(annotator_id: &str, item_id: &str) -> Self {
        Submission {
            annotator_id: annotator_id.into(),
            item_id: item_id.into(),
            verdict: Verdict::Agree,
            correction: None,
            elapsed_ms: None,
        }
    }

    pub fn disagree(annotator_id: &str, item_id: &str, correction: MoralityFrame) -> Self {
        Submission {
            verdict: Verdict::Disagree,
            correction: Some(correction),
            ..Submission::agree(annotator_id, item_id)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeFeedback {
    pub outcome: PracticeOutcome,
    /// Present whenever the submission was wrong.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_answer: Option<MoralityFrame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyAck {
    pub replaced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorStatus {
    pub annotator_id: String,
    pub phase: Phase,
    pub practice_done: usize,
    pub completed: usize,
    pub total: usize,
    pub survey_submitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyStatus {
    pub header: StudyHeader,
    pub items: usize,
    pub scheduled_items: usize,
    pub batches: usize,
    pub judgments: usize,
    pub annotators: Vec<AnnotatorStatus>,
    /// Every scheduled item has exactly `redundancy_k` judgments.
    pub complete: bool,
}

struct Inner {
    state: State,
    journal: Journal,
}

/// Thread-safe study service. Commands are serialized by one lock.
pub struct Service {
    inner: Mutex<Inner>,
    content: ContentPack,
    clock: Arc<dyn Clock>,
}

impl Service {
    pub fn in_memory(content: ContentPack, clock: Arc<dyn Clock>) -> Self {
        Service {
            inner: Mutex::new(Inner {
                state: State::default(),
                journal: Journal::in_memory(),
            }),
            content,
            clock,
        }
    }

    /// Opens a journal file, replaying whatever it already holds.
    pub fn open(path: &std::path::Path, content: ContentPack, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let (journal, entries) = Journal::open(path).map_err(|e| ServiceError::Storage(e.to_string()))?;
        let state = State::replay(&entries).map_err(|e| ServiceError::Storage(e.to_string()))?;
        Ok(Service {
            inner: Mutex::new(Inner { state, journal }),
            content,
            clock,
        })
    }

    pub fn content(&self) -> &ContentPack {
        &self.content
    }

    pub fn state(&self) -> State {
        self.inner.lock().state.clone()
    }

    /// Entries held by an in-memory journal.
    pub fn memory_journal(&self) -> Vec<JournalEntry> {
        self.inner.lock().journal.memory_entries().to_vec()
    }

    fn commit(&self, inner: &mut Inner, event: Event) -> Result<(), ServiceError> {
        let entry = JournalEntry {
            seq: inner.state.last_seq + 1,
            at: self.clock.now(),
            event,
        };
        inner.journal.append(&entry).map_err(|e| ServiceError::Storage(e.to_string()))?;
        inner
            .state
            .apply(&entry)
            .map_err(|e| ServiceError::Storage(format!("state diverged from journal: {e}")))
    }

    pub fn create_study(&self, req: CreateStudy) -> Result<StudyCreated, ServiceError> {
        let mut inner = self.inner.lock();
        if req.redundancy_k == 0 || req.batch_size == 0 {
            return Err(ServiceError::InvalidRequest("redundancy_k and batch_size must be positive".into()));
        }
        if req.items.is_empty() {
            return Err(ServiceError::InvalidRequest("corpus is empty".into()));
        }
        let mut ids = BTreeSet::new();
        for item in &req.items {
            item.check().map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
            if !ids.insert(item.id.as_str()) {
                return Err(ServiceError::InvalidRequest(format!("duplicate item id {}", item.id)));
            }
        }
        let mut records: BTreeMap<&str, &LabelRecord> = BTreeMap::new();
        for r in &req.frames {
            if !ids.contains(r.item_id.as_str()) {
                return Err(ServiceError::InvalidRequest(format!("frame for unknown item {}", r.item_id)));
            }
            if records.insert(r.item_id.as_str(), r).is_some() {
                return Err(ServiceError::InvalidRequest(format!("two frames for item {}", r.item_id)));
            }
        }
        let missing: Vec<String> = req
            .items
            .iter()
            .filter(|i| !records.contains_key(i.id.as_str()))
            .map(|i| i.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(ServiceError::MissingFrames(missing));
        }
        let (mut included, mut excluded) = (Vec::new(), Vec::new());
        for item in &req.items {
            match records[item.id.as_str()].usable_frame() {
                Some(_) => included.push(item.id.clone()),
                None => excluded.push(item.id.clone()),
            }
        }
        if included.is_empty() {
            return Err(ServiceError::InvalidRequest("every item failed labeling".into()));
        }
        let study_id = req
            .study_id
            .clone()
            .unwrap_or_else(|| format!("study-{:03}", inner.state.studies.len() + 1));
        if study_id.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("empty study id".into()));
        }
        if inner.state.studies.contains_key(&study_id) {
            return Err(ServiceError::StudyExists(study_id));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        included.shuffle(&mut rng);
        let width = (included.len().div_ceil(req.batch_size)).to_string().len().max(2);
        let batches: Vec<BatchRecord> = included
            .chunks(req.batch_size)
            .enumerate()
            .map(|(i, chunk)| BatchRecord {
                batch_id: format!("{study_id}-b{i:0width$}"),
                item_ids: chunk.to_vec(),
            })
            .collect();
        let header = StudyHeader {
            study_id: study_id.clone(),
            redundancy_k: req.redundancy_k,
            batch_size: req.batch_size,
            ablation: req.ablation,
            seed: req.seed,
            excluded_items: excluded.clone(),
        };
        let frames = req
            .items
            .iter()
            .map(|i| records[i.id.as_str()].clone())
            .collect();
        self.commit(
            &mut inner,
            Event::StudyCreated {
                header,
                items: req.items,
                frames,
                batches: batches.clone(),
            },
        )?;
        Ok(StudyCreated {
            study_id,
            batches,
            excluded_items: excluded,
        })
    }

    /// Gives every batch to the `k` least-loaded annotators. Ties are broken
    /// by a seeded annotator order.
    pub fn assign(&self, study_id: &str, annotators: &[String]) -> Result<Vec<AssignmentRecord>, ServiceError> {
        let mut inner = self.inner.lock();
        let study = inner
            .state
            .studies
            .get(study_id)
            .ok_or_else(|| ServiceError::UnknownStudy(study_id.into()))?;
        if !study.assignments.is_empty() {
            return Err(ServiceError::AlreadyAssigned(study_id.into()));
        }
        let distinct: BTreeSet<&String> = annotators.iter().collect();
        if distinct.len() != annotators.len() {
            return Err(ServiceError::InvalidRequest("duplicate annotator id".into()));
        }
        if let Some(a) = annotators.iter().find(|a| a.trim().is_empty()) {
            return Err(ServiceError::InvalidRequest(format!("invalid annotator id {a:?}")));
        }
        if let Some(a) = annotators.iter().find(|a| inner.state.annotators.contains_key(*a)) {
            return Err(ServiceError::AnnotatorExists(a.clone()));
        }
        let k = study.header.redundancy_k;
        if annotators.len() < k {
            return Err(ServiceError::InsufficientAnnotators {
                needed: k,
                available: annotators.len(),
            });
        }
        let mut order: Vec<&String> = distinct.into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(study.header.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        let mut load = vec![0usize; order.len()];
        let mut assignments = Vec::new();
        for batch in &study.batches {
            let mut ranked: Vec<usize> = (0..order.len()).collect();
            ranked.sort_by_key(|&i| (load[i], i));
            let mut chosen: Vec<usize> = ranked.into_iter().take(k).collect();
            chosen.sort_unstable();
            for i in chosen {
                load[i] += batch.item_ids.len();
                assignments.push(AssignmentRecord {
                    annotator_id: order[i].clone(),
                    batch_id: batch.batch_id.clone(),
                });
            }
        }
        let mut os_rng = rand::rng();
        let tokens = order
            .iter()
            .map(|a| ((*a).clone(), format!("{:032x}", os_rng.random::<u128>())))
            .collect();
        self.commit(
            &mut inner,
            Event::AnnotatorsAssigned {
                study_id: study_id.into(),
                assignments: assignments.clone(),
                tokens,
            },
        )?;
        Ok(assignments)
    }

    /// Access tokens of a study's annotators, keyed by annotator id.
    pub fn tokens(&self, study_id: &str) -> Result<BTreeMap<String, String>, ServiceError> {
        let inner = self.inner.lock();
        if !inner.state.studies.contains_key(study_id) {
            return Err(ServiceError::UnknownStudy(study_id.into()));
        }
        Ok(inner
            .state
            .annotators
            .values()
            .filter(|a| a.study_id == study_id && !a.token.is_empty())
            .map(|a| (a.annotator_id.clone(), a.token.clone()))
            .collect())
    }

    /// Resolves a token to its annotator id.
    pub fn authenticate(&self, token: &str) -> Result<String, ServiceError> {
        let inner = self.inner.lock();
        inner
            .state
            .annotators
            .values()
            .find(|a| !a.token.is_empty() && a.token == token)
            .map(|a| a.annotator_id.clone())
            .ok_or(ServiceError::InvalidToken)
    }

    pub fn complete_onboarding(&self, annotator_id: &str) -> Result<Phase, ServiceError> {
        let mut inner = self.inner.lock();
        if !annotator(&inner.state, annotator_id)?.onboarded {
            self.commit(
                &mut inner,
                Event::OnboardingCompleted {
                    annotator_id: annotator_id.into(),
                },
            )?;
        }
        Ok(annotator(&inner.state, annotator_id)?.phase(self.content.practice.len()))
    }

    /// The annotator's next screen. Viewing a main item starts its timer.
    pub fn get_task(&self, annotator_id: &str) -> Result<TaskView, ServiceError> {
        let mut inner = self.inner.lock();
        let a = annotator(&inner.state, annotator_id)?.clone();
        let study = &inner.state.studies[&a.study_id];
        let hide = study.header.ablation;
        match a.phase(self.content.practice.len()) {
            Phase::Onboarding => Ok(TaskView::Onboarding {
                study_id: a.study_id.clone(),
                annotator_id: a.annotator_id.clone(),
                instructions: self.content.instructions.clone(),
                examples: self.content.examples.clone(),
                practice_total: self.content.practice.len(),
            }),
            Phase::Practice => {
                let index = a.practice.len();
                let p: &PracticeItem = &self.content.practice[index];
                Ok(TaskView::Practice {
                    study_id: a.study_id.clone(),
                    annotator_id: a.annotator_id.clone(),
                    item: ItemView {
                        id: p.id.clone(),
                        text: p.text.clone(),
                    },
                    practice_id: p.id.clone(),
                    frame: FrameView::new(&p.shown, hide),
                    explanations_hidden: hide,
                    index: index + 1,
                    total: self.content.practice.len(),
                })
            }
            Phase::Main => {
                let item_id = a.current_item().expect("main phase has a cursor item").to_string();
                let item = study.item(&item_id).expect("scheduled items exist");
                let frame = study.frame(&item_id).expect("scheduled items have frames");
                let view = TaskView::Main {
                    study_id: a.study_id.clone(),
                    annotator_id: a.annotator_id.clone(),
                    item: ItemView {
                        id: item.id.clone(),
                        text: item.text.clone(),
                    },
                    frame: FrameView::new(frame, hide),
                    explanations_hidden: hide,
                    progress: progress(study, &a),
                };
                let first_view = a.viewed.as_ref().map_or(true, |(id, _)| *id != item_id);
                if first_view {
                    self.commit(
                        &mut inner,
                        Event::TaskViewed {
                            annotator_id: annotator_id.into(),
                            item_id,
                        },
                    )?;
                }
                Ok(view)
            }
            Phase::Done => Err(ServiceError::StudyComplete(annotator_id.into())),
        }
    }

    pub fn submit_practice(&self, s: Submission) -> Result<PracticeFeedback, ServiceError> {
        let mut inner = self.inner.lock();
        let a = annotator(&inner.state, &s.annotator_id)?;
        let phase = a.phase(self.content.practice.len());
        if phase == Phase::Onboarding {
            return Err(ServiceError::PracticeRequired);
        }
        let Some(p) = self.content.practice.get(a.practice.len()) else {
            return Err(ServiceError::OutOfOrderSubmission {
                expected: "no further practice item".into(),
                got: s.item_id,
            });
        };
        if p.id != s.item_id {
            return Err(ServiceError::OutOfOrderSubmission {
                expected: p.id.clone(),
                got: s.item_id,
            });
        }
        let submitted = match (s.verdict, &s.correction) {
            (Verdict::Agree, None) => p.shown.clone(),
            (Verdict::Agree, Some(_)) => {
                return Err(ServiceError::InvalidRequest("agree verdict carries a correction".into()))
            }
            (Verdict::Disagree, None) => {
                return Err(ServiceError::IncompleteCorrection("disagree verdict without a corrected frame".into()))
            }
            (Verdict::Disagree, Some(frame)) => validate_frame_text(frame, &p.text)?,
        };
        let correct = submitted.matches(&p.answer);
        let outcome = PracticeOutcome {
            item_id: p.id.clone(),
            annotator_id: s.annotator_id.clone(),
            verdict: s.verdict,
            submitted,
            correct,
            feedback_shown: !correct,
        };
        let (answer, explanation) = if correct {
            (None, None)
        } else {
            (Some(p.answer.clone()), Some(p.explanation.clone()))
        };
        self.commit(&mut inner, Event::PracticeRecorded { outcome: outcome.clone() })?;
        let phase = annotator(&inner.state, &s.annotator_id)?.phase(self.content.practice.len());
        Ok(PracticeFeedback {
            outcome,
            correct_answer: answer,
            explanation,
            phase,
        })
    }

    pub fn submit_judgment(&self, s: Submission) -> Result<Judgment, ServiceError> {
        let mut inner = self.inner.lock();
        let a = annotator(&inner.state, &s.annotator_id)?;
        if a.judged.contains(&s.item_id) {
            return Err(ServiceError::DuplicateJudgment {
                annotator_id: s.annotator_id,
                item_id: s.item_id,
            });
        }
        match a.phase(self.content.practice.len()) {
            Phase::Onboarding | Phase::Practice => return Err(ServiceError::PracticeRequired),
            Phase::Done => return Err(ServiceError::StudyComplete(s.annotator_id)),
            Phase::Main => {}
        }
        let expected = a.current_item().expect("main phase has a cursor item");
        if expected != s.item_id {
            return Err(ServiceError::OutOfOrderSubmission {
                expected: expected.into(),
                got: s.item_id,
            });
        }
        let study = &inner.state.studies[&a.study_id];
        let now = self.clock.now();
        let elapsed_ms = match &a.viewed {
            Some((id, at)) if *id == s.item_id => (now - *at).num_milliseconds().max(1) as u64,
            _ => s.elapsed_ms.unwrap_or(1).max(1),
        };
        let mut judgment = Judgment {
            item_id: s.item_id.clone(),
            annotator_id: s.annotator_id.clone(),
            verdict: s.verdict,
            correction: s.correction.clone(),
            saw_explanations: !study.header.ablation,
            elapsed_ms,
        };
        judgment.check()?;
        if let Some(frame) = &judgment.correction {
            let text = &study.item(&s.item_id).expect("scheduled items exist").text;
            judgment.correction = Some(validate_frame_text(frame, text)?);
        }
        self.commit(
            &mut inner,
            Event::JudgmentRecorded {
                judgment: judgment.clone(),
            },
        )?;
        Ok(judgment)
    }

    pub fn submit_survey(&self, survey: SurveyResponse) -> Result<SurveyAck, ServiceError> {
        let mut inner = self.inner.lock();
        let a = annotator(&inner.state, &survey.annotator_id)?;
        if a.phase(self.content.practice.len()) != Phase::Done {
            return Err(ServiceError::StudyIncomplete(survey.annotator_id));
        }
        survey.check().map_err(|e| match e {
            SurveyError::ScoreOutOfRange { field, value } => ServiceError::ScoreOutOfRange {
                field: field.to_string(),
                value,
            },
            other => ServiceError::InvalidRequest(other.to_string()),
        })?;
        let study = &inner.state.studies[&a.study_id];
        let replaced = study.surveys.contains_key(&survey.annotator_id);
        let timing_warning = timing_check(study, a, &survey);
        if let Some(w) = &timing_warning {
            log::warn!("{w}");
        }
        self.commit(&mut inner, Event::SurveyRecorded { survey })?;
        Ok(SurveyAck {
            replaced,
            timing_warning,
        })
    }

    pub fn status(&self, study_id: &str) -> Result<StudyStatus, ServiceError> {
        let inner = self.inner.lock();
        let study = inner
            .state
            .studies
            .get(study_id)
            .ok_or_else(|| ServiceError::UnknownStudy(study_id.into()))?;
        let annotators = inner
            .state
            .annotators
            .values()
            .filter(|a| a.study_id == study_id)
            .map(|a| AnnotatorStatus {
                annotator_id: a.annotator_id.clone(),
                phase: a.phase(self.content.practice.len()),
                practice_done: a.practice.len(),
                completed: a.cursor,
                total: a.item_ids.len(),
                survey_submitted: study.surveys.contains_key(&a.annotator_id),
            })
            .collect();
        let coverage = study.coverage();
        let complete = !study.assignments.is_empty() && coverage.values().all(|&n| n == study.header.redundancy_k);
        Ok(StudyStatus {
            header: study.header.clone(),
            items: study.items.len(),
            scheduled_items: coverage.len(),
            batches: study.batches.len(),
            judgments: study.judgments.len(),
            annotators,
            complete,
        })
    }

    pub fn export(&self, study_id: &str) -> Result<StudyExport, ServiceError> {
        let inner = self.inner.lock();
        let study = inner
            .state
            .studies
            .get(study_id)
            .ok_or_else(|| ServiceError::UnknownStudy(study_id.into()))?;
        Ok(StudyExport {
            header: study.header.clone(),
            items: study.items.clone(),
            frames: study.frames.clone(),
            batches: study.batches.clone(),
            assignments: study.assignments.clone(),
            judgments: study.judgments.clone(),
            surveys: study.surveys.values().cloned().collect(),
        })
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.inner.lock().state.studies.keys().cloned().collect()
    }
}

fn annotator<'a>(state: &'a State, id: &str) -> Result<&'a AnnotatorState, ServiceError> {
    state
        .annotators
        .get(id)
        .ok_or_else(|| ServiceError::UnknownAnnotator(id.into()))
}

fn progress(study: &StudyState, a: &AnnotatorState) -> Progress {
    let mut start = 0;
    for (i, batch_id) in a.batch_ids.iter().enumerate() {
        let len = study.batch(batch_id).map_or(0, |b| b.item_ids.len());
        if a.cursor < start + len {
            return Progress {
                batch_index: i + 1,
                batch_count: a.batch_ids.len(),
                item_index: a.cursor - start + 1,
                batch_len: len,
                completed: a.cursor,
                total: a.item_ids.len(),
            };
        }
        start += len;
    }
    Progress {
        batch_index: a.batch_ids.len(),
        batch_count: a.batch_ids.len(),
        item_index: 0,
        batch_len: 0,
        completed: a.cursor,
        total: a.item_ids.len(),
    }
}

/// Compares the self-reported minutes per batch with the recorded judging
/// time. Off by more than a factor of 5 gives a warning.
fn timing_check(study: &StudyState, a: &AnnotatorState, survey: &SurveyResponse) -> Option<String> {
    if a.batch_ids.is_empty() {
        return None;
    }
    let total_ms: u64 = study
        .judgments
        .iter()
        .filter(|j| j.annotator_id == a.annotator_id)
        .map(|j| j.elapsed_ms)
        .sum();
    let measured = total_ms as f64 / 60_000.0 / a.batch_ids.len() as f64;
    let reported = survey.avg_minutes_per_batch;
    if measured <= 0.0 {
        return None;
    }
    let ratio = reported / measured;
    (!(0.2..=5.0).contains(&ratio)).then(|| {
        format!(
            "{} reports {reported:.1} min per batch but judged for {measured:.1} min per batch",
            a.annotator_id
        )
    })
}

//! Domain types shared by every stage of a study: foundations, entity roles,
//! morality frames, corpus items, human judgments and survey responses.
//!
//! All types are plain immutable values (`Send + Sync`), serialized with serde
//! using the snake_case wire names that appear in every JSONL artifact.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the six moral foundations, or `none` for texts without a moral judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoralFoundation {
    CareHarm,
    FairnessCheating,
    LoyaltyBetrayal,
    AuthoritySubversion,
    SanctityDegradation,
    LibertyOppression,
    None,
}

impl MoralFoundation {
    /// The closed label set, in canonical order.
    pub const ALL: [MoralFoundation; 7] = [
        MoralFoundation::CareHarm,
        MoralFoundation::FairnessCheating,
        MoralFoundation::LoyaltyBetrayal,
        MoralFoundation::AuthoritySubversion,
        MoralFoundation::SanctityDegradation,
        MoralFoundation::LibertyOppression,
        MoralFoundation::None,
    ];

    pub const MORAL: [MoralFoundation; 6] = [
        MoralFoundation::CareHarm,
        MoralFoundation::FairnessCheating,
        MoralFoundation::LoyaltyBetrayal,
        MoralFoundation::AuthoritySubversion,
        MoralFoundation::SanctityDegradation,
        MoralFoundation::LibertyOppression,
    ];

    /// Wire name, e.g. `care_harm`.
    pub fn as_str(self) -> &'static str {
        match self {
            MoralFoundation::CareHarm => "care_harm",
            MoralFoundation::FairnessCheating => "fairness_cheating",
            MoralFoundation::LoyaltyBetrayal => "loyalty_betrayal",
            MoralFoundation::AuthoritySubversion => "authority_subversion",
            MoralFoundation::SanctityDegradation => "sanctity_degradation",
            MoralFoundation::LibertyOppression => "liberty_oppression",
            MoralFoundation::None => "none",
        }
    }

    /// Human-facing label, e.g. `care/harm`.
    pub fn display_label(self) -> &'static str {
        match self {
            MoralFoundation::CareHarm => "care/harm",
            MoralFoundation::FairnessCheating => "fairness/cheating",
            MoralFoundation::LoyaltyBetrayal => "loyalty/betrayal",
            MoralFoundation::AuthoritySubversion => "authority/subversion",
            MoralFoundation::SanctityDegradation => "sanctity/degradation",
            MoralFoundation::LibertyOppression => "liberty/oppression",
            MoralFoundation::None => "none",
        }
    }

    pub fn is_moral(self) -> bool {
        self != MoralFoundation::None
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MoralFoundation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MoralFoundation {
    type Err = FrameError;

    /// Strict parse of the wire name. Lenient matching of model output lives in
    /// the prompt module.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MoralFoundation::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| FrameError::InvalidFoundation(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Actor,
    Target,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Actor => "actor",
            Role::Target => "target",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open character range `[start, end)` into a source text, counted in
/// Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Case-folded, whitespace-normalized entity mention. This is the identity
/// used whenever two entities are compared.
pub fn normalize_entity(surface: &str) -> String {
    surface
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// An entity mention with its role and polarity inside a frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityRole {
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
    pub role: Role,
    pub polarity: Polarity,
}

impl EntityRole {
    pub fn new(entity: impl Into<String>, role: Role, polarity: Polarity) -> Self {
        EntityRole {
            entity: entity.into(),
            span: None,
            role,
            polarity,
        }
    }

    pub fn with_span(mut self, start: usize, end: usize) -> Self {
        self.span = Some(Span { start, end });
        self
    }

    pub fn key(&self) -> RoleKey {
        RoleKey {
            entity: normalize_entity(&self.entity),
            role: self.role,
            polarity: self.polarity,
        }
    }
}

/// Comparison key of an [`EntityRole`]: normalized entity, role, polarity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoleKey {
    pub entity: String,
    pub role: Role,
    pub polarity: Polarity,
}

impl fmt::Display for RoleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.entity, self.role, self.polarity)
    }
}

/// Order-free identity of a frame: its foundation plus the set of role keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameKey {
    pub foundation: MoralFoundation,
    pub roles: BTreeSet<RoleKey>,
}

/// A foundation label with its explanation, plus the entity roles it involves
/// and their explanation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoralityFrame {
    pub foundation: MoralFoundation,
    #[serde(default)]
    pub foundation_explanation: String,
    #[serde(default)]
    pub roles: Vec<EntityRole>,
    #[serde(default)]
    pub role_explanation: String,
}

impl MoralityFrame {
    pub fn new(foundation: MoralFoundation, roles: Vec<EntityRole>) -> Self {
        MoralityFrame {
            foundation,
            foundation_explanation: String::new(),
            roles,
            role_explanation: String::new(),
        }
    }

    pub fn none() -> Self {
        MoralityFrame::new(MoralFoundation::None, Vec::new())
    }

    pub fn with_explanations(
        mut self,
        foundation_explanation: impl Into<String>,
        role_explanation: impl Into<String>,
    ) -> Self {
        self.foundation_explanation = foundation_explanation.into();
        self.role_explanation = role_explanation.into();
        self
    }

    pub fn role_set(&self) -> BTreeSet<RoleKey> {
        self.roles.iter().map(EntityRole::key).collect()
    }

    pub fn key(&self) -> FrameKey {
        FrameKey {
            foundation: self.foundation,
            roles: self.role_set(),
        }
    }

    /// Full-frame match: same foundation and the same set of normalized role
    /// tuples. Explanations and offsets are ignored.
    pub fn matches(&self, other: &MoralityFrame) -> bool {
        self.foundation == other.foundation && self.role_set() == other.role_set()
    }

    /// True when every role carries character offsets into its source text.
    pub fn is_anchored(&self) -> bool {
        self.roles.iter().all(|r| r.span.is_some())
    }

    /// Text-independent invariants.
    pub fn check_structure(&self) -> Result<(), FrameError> {
        if self.foundation == MoralFoundation::None && !self.roles.is_empty() {
            return Err(FrameError::NoneWithRoles {
                count: self.roles.len(),
            });
        }
        let mut seen = HashSet::new();
        for role in &self.roles {
            if role.entity.trim().is_empty() {
                return Err(FrameError::EmptyEntity);
            }
            let key = role.key();
            if !seen.insert(key.clone()) {
                return Err(FrameError::DuplicateRole(key));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("invalid foundation {0:?}: must be one of the 7 admissible labels")]
    InvalidFoundation(String),
    #[error("foundation `none` must carry no roles, found {count}")]
    NoneWithRoles { count: usize },
    #[error("span {start}..{end} of entity {entity:?} is outside the source text (length {len})")]
    SpanOutOfBounds {
        entity: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("span of entity {entity:?} covers {found:?} in the source text")]
    SpanMismatch { entity: String, found: String },
    #[error("duplicate role tuple {0}")]
    DuplicateRole(RoleKey),
    #[error("entity surface string is empty")]
    EmptyEntity,
}

/// Validates `frame` against `source` and resolves offsets for roles whose
/// surface string occurs exactly once in the text.
///
/// Roles whose surface string is absent or ambiguous are kept without a span
/// (non-anchored); they are not an error. Validation is idempotent.
pub fn validate_frame(frame: &MoralityFrame, source: &TextItem) -> Result<MoralityFrame, FrameError> {
    validate_frame_text(frame, &source.text)
}

/// [`validate_frame`] against a bare text.
pub fn validate_frame_text(frame: &MoralityFrame, text: &str) -> Result<MoralityFrame, FrameError> {
    frame.check_structure()?;
    let chars = CharIndex::new(text);
    let mut out = frame.clone();
    for role in &mut out.roles {
        match role.span {
            Some(span) => chars.check(&role.entity, span)?,
            None => role.span = chars.unique_occurrence(&role.entity),
        }
    }
    Ok(out)
}

struct CharIndex<'a> {
    text: &'a str,
    // byte offset of every char boundary, including text.len()
    boundaries: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    fn new(text: &'a str) -> Self {
        let mut boundaries: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        boundaries.push(text.len());
        CharIndex { text, boundaries }
    }

    fn char_len(&self) -> usize {
        self.boundaries.len() - 1
    }

    fn check(&self, entity: &str, span: Span) -> Result<(), FrameError> {
        let len = self.char_len();
        if span.start >= span.end || span.end > len {
            return Err(FrameError::SpanOutOfBounds {
                entity: entity.to_string(),
                start: span.start,
                end: span.end,
                len,
            });
        }
        let found = &self.text[self.boundaries[span.start]..self.boundaries[span.end]];
        if found != entity {
            return Err(FrameError::SpanMismatch {
                entity: entity.to_string(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    fn unique_occurrence(&self, entity: &str) -> Option<Span> {
        if entity.is_empty() {
            return None;
        }
        let mut hits = self.text.match_indices(entity).map(|(i, _)| i);
        let first = hits.next()?;
        // overlapping occurrences count as ambiguous too
        if self.text[first + 1..].contains(entity) {
            return None;
        }
        let start = self.boundaries.binary_search(&first).ok()?;
        let end = self.boundaries.binary_search(&(first + entity.len())).ok()?;
        Some(Span { start, end })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    #[serde(alias = "pro-vax")]
    ProVax,
    #[serde(alias = "anti-vax")]
    AntiVax,
    Neutral,
}

impl Stance {
    pub const ALL: [Stance; 3] = [Stance::ProVax, Stance::AntiVax, Stance::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Stance::ProVax => "pro_vax",
            Stance::AntiVax => "anti_vax",
            Stance::Neutral => "neutral",
        }
    }

    pub fn display_label(self) -> &'static str {
        match self {
            Stance::ProVax => "pro-vax",
            Stance::AntiVax => "anti-vax",
            Stance::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One corpus text with its optional upstream stance and reason tags.
///
/// Fields not known to this type are kept in `extra` and written back
/// unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextItem {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<Stance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasons: Option<BTreeSet<String>>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl TextItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        TextItem {
            id: id.into(),
            text: text.into(),
            stance: None,
            reasons: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_stance(mut self, stance: Stance) -> Self {
        self.stance = Some(stance);
        self
    }

    pub fn with_reasons<I, S>(mut self, reasons: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.reasons = Some(reasons.into_iter().map(Into::into).collect());
        self
    }

    pub fn check(&self) -> Result<(), CorpusError> {
        if self.id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if self.text.trim().is_empty() {
            return Err(CorpusError::EmptyText(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("item id is empty")]
    EmptyId,
    #[error("item {0:?} has empty text")]
    EmptyText(String),
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
}

/// Reads a JSONL corpus, one [`TextItem`] per non-blank line.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<TextItem>, CorpusError> {
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: TextItem =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: n + 1, source })?;
        item.check()?;
        if !ids.insert(item.id.clone()) {
            return Err(CorpusError::DuplicateId(item.id));
        }
        items.push(item);
    }
    Ok(items)
}

pub fn write_corpus<W: Write>(mut writer: W, items: &[TextItem]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    #[serde(alias = "yes")]
    Agree,
    #[serde(alias = "no")]
    Disagree,
}

/// One annotator's verdict on the frame shown for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub item_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<MoralityFrame>,
    pub saw_explanations: bool,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgmentError {
    #[error("an agreeing judgment must not carry a correction")]
    UnexpectedCorrection,
    #[error("a disagreeing judgment needs a complete corrected frame: {0}")]
    IncompleteCorrection(String),
}

impl Judgment {
    pub fn agree(item_id: impl Into<String>, annotator_id: impl Into<String>) -> Self {
        Judgment {
            item_id: item_id.into(),
            annotator_id: annotator_id.into(),
            verdict: Verdict::Agree,
            correction: None,
            saw_explanations: true,
            elapsed_ms: 1,
        }
    }

    pub fn disagree(
        item_id: impl Into<String>,
        annotator_id: impl Into<String>,
        correction: MoralityFrame,
    ) -> Self {
        Judgment {
            verdict: Verdict::Disagree,
            correction: Some(correction),
            ..Judgment::agree(item_id, annotator_id)
        }
    }

    /// Verdict/correction consistency, independent of the source text.
    pub fn check(&self) -> Result<(), JudgmentError> {
        match (self.verdict, &self.correction) {
            (Verdict::Agree, None) => Ok(()),
            (Verdict::Agree, Some(_)) => Err(JudgmentError::UnexpectedCorrection),
            (Verdict::Disagree, None) => Err(JudgmentError::IncompleteCorrection(
                "correction is missing".into(),
            )),
            (Verdict::Disagree, Some(frame)) => frame
                .check_structure()
                .map_err(|e| JudgmentError::IncompleteCorrection(e.to_string())),
        }
    }

    /// The foundation this annotator endorses: the shown one when agreeing,
    /// the corrected one otherwise.
    pub fn endorsed_foundation(&self, shown: MoralFoundation) -> MoralFoundation {
        match &self.correction {
            Some(frame) if self.verdict == Verdict::Disagree => frame.foundation,
            _ => shown,
        }
    }
}

/// Post-study questionnaire, one per annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub annotator_id: String,
    pub difficulty_without_expl: u8,
    pub difficulty_with_expl: u8,
    pub explanations_helpful: bool,
    pub reduced_cognitive_load: bool,
    pub avg_minutes_per_batch: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurveyError {
    #[error("{field} = {value} is outside the 1..=5 difficulty scale")]
    ScoreOutOfRange { field: &'static str, value: u8 },
    #[error("average minutes per batch must be positive, got {0}")]
    NonPositiveMinutes(f64),
}

impl SurveyResponse {
    pub fn check(&self) -> Result<(), SurveyError> {
        for (field, value) in [
            ("difficulty_without_expl", self.difficulty_without_expl),
            ("difficulty_with_expl", self.difficulty_with_expl),
        ] {
            if !(1..=5).contains(&value) {
                return Err(SurveyError::ScoreOutOfRange { field, value });
            }
        }
        if !(self.avg_minutes_per_batch.is_finite() && self.avg_minutes_per_batch > 0.0) {
            return Err(SurveyError::NonPositiveMinutes(self.avg_minutes_per_batch));
        }
        Ok(())
    }
}

/// Wording of the 1..=5 difficulty scale.
pub fn difficulty_label(score: u8) -> &'static str {
    match score {
        1 => "very easy",
        2 => "easy",
        3 => "okay",
        4 => "hard",
        5 => "very hard",
        _ => "invalid",
    }
}

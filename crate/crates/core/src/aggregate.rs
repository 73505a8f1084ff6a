//! Gold-label resolution by majority vote, and the evaluation metrics of the
//! LLM frames against the resolved gold.
//!
//! Resolution per item:
//! * a strict majority of `agree` verdicts adopts the LLM frame (`llm_win`);
//! * a strict majority of `disagree` verdicts adopts the unique modal
//!   correction, comparing corrections by foundation and role-tuple set
//!   (`human_majority`);
//! * anything else (even split, tied corrections) is left for manual
//!   adjudication with no gold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{krippendorff_alpha, AlphaError};
use crate::export::StudyExport;
use crate::model::{FrameKey, Judgment, MoralFoundation, MoralityFrame, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    LlmWin,
    HumanMajority,
    Adjudicated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedLabel {
    pub item_id: String,
    /// `None` while an adjudicated item awaits its manual decision.
    pub gold: Option<MoralityFrame>,
    pub source: LabelSource,
    pub vote_counts: BTreeMap<Verdict, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("item {0} has no judgments")]
    NoJudgments(String),
    #[error("judgment refers to item {0} which has no LLM frame")]
    UnknownItem(String),
    #[error("{} item(s) still need adjudication: {}", .0.len(), .0.join(", "))]
    UnresolvedItems(Vec<String>),
    #[error("item {0} is not pending adjudication")]
    NotPendingAdjudication(String),
    #[error("no items to evaluate")]
    Empty,
}

/// Orders roles canonically so equal-keyed frames serialize identically.
fn canonical(frame: &MoralityFrame) -> MoralityFrame {
    let mut out = frame.clone();
    out.roles.sort_by(|a, b| {
        (a.key(), &a.entity, a.span).cmp(&(b.key(), &b.entity, b.span))
    });
    out
}

fn canonical_repr(frame: &MoralityFrame) -> String {
    serde_json::to_string(&canonical(frame)).expect("frames always serialize")
}

/// Resolves one item from its judgments. `judgments` must be non-empty.
pub fn resolve_item(item_id: &str, llm_frame: &MoralityFrame, judgments: &[&Judgment]) -> ResolvedLabel {
    let agree = judgments.iter().filter(|j| j.verdict == Verdict::Agree).count();
    let disagree = judgments.len() - agree;
    let vote_counts = BTreeMap::from([(Verdict::Agree, agree), (Verdict::Disagree, disagree)]);
    let total = judgments.len();

    let (gold, source) = if 2 * agree > total {
        (Some(llm_frame.clone()), LabelSource::LlmWin)
    } else if 2 * disagree > total {
        let mut by_key: BTreeMap<FrameKey, Vec<&MoralityFrame>> = BTreeMap::new();
        for j in judgments {
            if let (Verdict::Disagree, Some(frame)) = (j.verdict, &j.correction) {
                by_key.entry(frame.key()).or_default().push(frame);
            }
        }
        let top = by_key.values().map(Vec::len).max().unwrap_or(0);
        let mut modal = by_key.values().filter(|v| v.len() == top);
        match (modal.next(), modal.next()) {
            (Some(frames), None) if top > 0 => {
                // representative independent of judgment order and annotator
                let gold = frames
                    .iter()
                    .map(|f| canonical(f))
                    .min_by_key(canonical_repr)
                    .expect("non-empty group");
                (Some(gold), LabelSource::HumanMajority)
            }
            _ => (None, LabelSource::Adjudicated),
        }
    } else {
        (None, LabelSource::Adjudicated)
    };
    ResolvedLabel {
        item_id: item_id.to_string(),
        gold,
        source,
        vote_counts,
    }
}

/// Resolves every item of `llm_frames`, sorted by item id.
pub fn resolve(
    llm_frames: &BTreeMap<String, MoralityFrame>,
    judgments: &[Judgment],
) -> Result<Vec<ResolvedLabel>, AggregateError> {
    let mut grouped: BTreeMap<&str, Vec<&Judgment>> = BTreeMap::new();
    for j in judgments {
        if !llm_frames.contains_key(&j.item_id) {
            return Err(AggregateError::UnknownItem(j.item_id.clone()));
        }
        grouped.entry(j.item_id.as_str()).or_default().push(j);
    }
    llm_frames
        .iter()
        .map(|(id, frame)| match grouped.get(id.as_str()) {
            Some(js) => Ok(resolve_item(id, frame, js)),
            None => Err(AggregateError::NoJudgments(id.clone())),
        })
        .collect()
}

/// Item ids whose gold is still missing.
pub fn pending_adjudications(resolved: &[ResolvedLabel]) -> Vec<String> {
    resolved
        .iter()
        .filter(|r| r.gold.is_none())
        .map(|r| r.item_id.clone())
        .collect()
}

/// Fills in manual decisions for adjudicated items. The source stays
/// `adjudicated`.
pub fn apply_adjudications(
    resolved: &mut [ResolvedLabel],
    decisions: &BTreeMap<String, MoralityFrame>,
) -> Result<(), AggregateError> {
    let index: BTreeMap<String, usize> = resolved
        .iter()
        .enumerate()
        .map(|(i, r)| (r.item_id.clone(), i))
        .collect();
    for (item_id, frame) in decisions {
        let i = *index
            .get(item_id)
            .ok_or_else(|| AggregateError::NotPendingAdjudication(item_id.clone()))?;
        if resolved[i].source != LabelSource::Adjudicated {
            return Err(AggregateError::NotPendingAdjudication(item_id.clone()));
        }
        resolved[i].gold = Some(frame.clone());
    }
    Ok(())
}

/// (gold, predicted) pairs for every resolved item.
fn paired<'a>(
    resolved: &'a [ResolvedLabel],
    llm_frames: &'a BTreeMap<String, MoralityFrame>,
) -> Result<Vec<(&'a MoralityFrame, &'a MoralityFrame)>, AggregateError> {
    let pending = pending_adjudications(resolved);
    if !pending.is_empty() {
        return Err(AggregateError::UnresolvedItems(pending));
    }
    if resolved.is_empty() {
        return Err(AggregateError::Empty);
    }
    resolved
        .iter()
        .map(|r| {
            let predicted = llm_frames
                .get(&r.item_id)
                .ok_or_else(|| AggregateError::UnknownItem(r.item_id.clone()))?;
            Ok((r.gold.as_ref().expect("checked above"), predicted))
        })
        .collect()
}

/// Fraction of items whose LLM frame matches gold on foundation and the full
/// role-tuple set.
pub fn accuracy_overall(
    resolved: &[ResolvedLabel],
    llm_frames: &BTreeMap<String, MoralityFrame>,
) -> Result<f64, AggregateError> {
    let pairs = paired(resolved, llm_frames)?;
    let hits = pairs.iter().filter(|(gold, pred)| gold.matches(pred)).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Fraction of items whose LLM foundation matches the gold foundation.
pub fn accuracy_mf(
    resolved: &[ResolvedLabel],
    llm_frames: &BTreeMap<String, MoralityFrame>,
) -> Result<f64, AggregateError> {
    let pairs = paired(resolved, llm_frames)?;
    let hits = pairs
        .iter()
        .filter(|(gold, pred)| gold.foundation == pred.foundation)
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub per_class: BTreeMap<MoralFoundation, f64>,
}

/// Per-class F1 from (gold, predicted) label pairs. Classes that occur in
/// neither gold nor predictions are left out of the macro mean.
pub fn f1_from_labels(pairs: &[(MoralFoundation, MoralFoundation)]) -> F1Report {
    let mut per_class = BTreeMap::new();
    for class in MoralFoundation::ALL {
        let tp = pairs.iter().filter(|(g, p)| *g == class && *p == class).count();
        let fp = pairs.iter().filter(|(g, p)| *g != class && *p == class).count();
        let fn_ = pairs.iter().filter(|(g, p)| *g == class && *p != class).count();
        if tp + fp + fn_ == 0 {
            continue;
        }
        per_class.insert(class, (2 * tp) as f64 / (2 * tp + fp + fn_) as f64);
    }
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    F1Report { macro_f1, per_class }
}

/// Macro-averaged F1 of the LLM foundation against gold.
pub fn macro_f1(
    resolved: &[ResolvedLabel],
    llm_frames: &BTreeMap<String, MoralityFrame>,
) -> Result<F1Report, AggregateError> {
    let pairs: Vec<_> = paired(resolved, llm_frames)?
        .into_iter()
        .map(|(g, p)| (g.foundation, p.foundation))
        .collect();
    Ok(f1_from_labels(&pairs))
}

/// Which ratings alpha is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaOn {
    /// The binary agree/disagree verdicts.
    #[default]
    Verdicts,
    /// The foundation each annotator endorses (shown one when agreeing,
    /// corrected one otherwise).
    Labels,
}

impl std::str::FromStr for AlphaOn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "verdicts" => Ok(AlphaOn::Verdicts),
            "labels" => Ok(AlphaOn::Labels),
            other => Err(format!("expected `verdicts` or `labels`, got {other:?}")),
        }
    }
}

/// Items x annotators rating matrix (annotators in id order, missing cells
/// where an annotator did not judge the item).
pub fn rating_matrix(
    llm_frames: &BTreeMap<String, MoralityFrame>,
    judgments: &[Judgment],
    on: AlphaOn,
) -> Vec<Vec<Option<String>>> {
    let annotators: BTreeSet<&str> = judgments.iter().map(|j| j.annotator_id.as_str()).collect();
    let column: BTreeMap<&str, usize> = annotators.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let row: BTreeMap<&str, usize> = llm_frames.keys().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut matrix = vec![vec![None; annotators.len()]; llm_frames.len()];
    for j in judgments {
        let Some(&r) = row.get(j.item_id.as_str()) else { continue };
        let value = match on {
            AlphaOn::Verdicts => format!("{:?}", j.verdict),
            AlphaOn::Labels => j
                .endorsed_foundation(llm_frames[&j.item_id].foundation)
                .as_str()
                .to_string(),
        };
        matrix[r][column[j.annotator_id.as_str()]] = Some(value);
    }
    matrix
}

/// Reported figures of the original GPT-4o human evaluation, kept for
/// side-by-side display. They are not targets this tool can reproduce.
pub mod reference {
    /// (acc_overall, acc_mf, f1_mf) with explanations shown to annotators.
    pub const WITH_EXPLANATIONS: (f64, f64, f64) = (0.9079, 0.9267, 0.9351);
    /// (acc_overall, acc_mf, f1_mf) with explanations withheld.
    pub const WITHOUT_EXPLANATIONS: (f64, f64, f64) = (0.6481, 0.717, 0.7258);
    pub const ALPHA: f64 = 0.979;
}

pub const COUNTING_RULE: &str = "every scheduled item counts once; adjudicated items use their manual gold; \
overall = LLM foundation and role-tuple set both equal gold (entities case-folded, whitespace-normalized); \
MF = LLM foundation equals gold; macro-F1 averages per-foundation F1 over classes present in gold or predictions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// "with explanations" or "without explanations".
    pub condition: String,
    pub acc_overall: f64,
    pub acc_mf: f64,
    pub f1_mf_macro: f64,
    pub per_class_f1: BTreeMap<MoralFoundation, f64>,
    /// `None` when there is too little overlap to compute it.
    pub alpha: Option<f64>,
    pub alpha_on: AlphaOn,
    pub n_items: usize,
    pub n_annotators: usize,
    pub redundancy_k: usize,
    pub sources: BTreeMap<LabelSource, usize>,
    pub counting_rule: String,
    pub seed: u64,
}

impl MetricsReport {
    /// Resolves and scores a study export. Fails with `UnresolvedItems` while
    /// adjudications are pending.
    pub fn evaluate(
        export: &StudyExport,
        adjudications: &BTreeMap<String, MoralityFrame>,
        alpha_on: AlphaOn,
        ablation_override: bool,
    ) -> Result<(Vec<ResolvedLabel>, MetricsReport), AggregateError> {
        let frames = export.scheduled_frames();
        let mut resolved = resolve(&frames, &export.judgments)?;
        apply_adjudications(&mut resolved, adjudications)?;
        let acc_overall = accuracy_overall(&resolved, &frames)?;
        let acc_mf = accuracy_mf(&resolved, &frames)?;
        let f1 = macro_f1(&resolved, &frames)?;
        let alpha = match krippendorff_alpha(&rating_matrix(&frames, &export.judgments, alpha_on)) {
            Ok(est) => Some(est.alpha),
            Err(AlphaError::InsufficientData(_)) => None,
        };
        let mut sources = BTreeMap::new();
        for r in &resolved {
            *sources.entry(r.source).or_insert(0) += 1;
        }
        let ablation = ablation_override || export.header.ablation;
        let report = MetricsReport {
            condition: if ablation { "without explanations" } else { "with explanations" }.to_string(),
            acc_overall,
            acc_mf,
            f1_mf_macro: f1.macro_f1,
            per_class_f1: f1.per_class,
            alpha,
            alpha_on,
            n_items: resolved.len(),
            n_annotators: export.annotators().len(),
            redundancy_k: export.header.redundancy_k,
            sources,
            counting_rule: COUNTING_RULE.to_string(),
            seed: export.header.seed,
        };
        Ok((resolved, report))
    }

    /// Plain-text table in the layout Method | Acc_overall | Acc_MF | F1_MF.
    pub fn render_table(&self) -> String {
        let pct = |x: f64| format!("{:.2}%", 100.0 * x);
        let method = format!("few-shot ({})", self.condition);
        let mut out = String::new();
        let _ = writeln!(out, "{:<36} {:>12} {:>10} {:>10}", "Method", "Acc_overall", "Acc_MF", "F1_MF");
        let _ = writeln!(
            out,
            "{:<36} {:>12} {:>10} {:>10}",
            method,
            pct(self.acc_overall),
            pct(self.acc_mf),
            pct(self.f1_mf_macro)
        );
        let (r_overall, r_mf, r_f1) = if self.condition == "without explanations" {
            reference::WITHOUT_EXPLANATIONS
        } else {
            reference::WITH_EXPLANATIONS
        };
        let _ = writeln!(
            out,
            "{:<36} {:>12} {:>10} {:>10}",
            "reference (GPT-4o, 9 raters)",
            pct(r_overall),
            pct(r_mf),
            pct(r_f1)
        );
        out.push('\n');
        match self.alpha {
            Some(a) => {
                let _ = writeln!(out, "Krippendorff alpha ({:?}): {a:.4}", self.alpha_on);
            }
            None => {
                let _ = writeln!(out, "Krippendorff alpha ({:?}): n/a (too little overlap)", self.alpha_on);
            }
        }
        let _ = writeln!(
            out,
            "items: {}  annotators: {}  k: {}  seed: {}",
            self.n_items, self.n_annotators, self.redundancy_k, self.seed
        );
        let sources: Vec<String> = self
            .sources
            .iter()
            .map(|(s, n)| format!("{}={n}", serde_json::to_value(s).unwrap().as_str().unwrap()))
            .collect();
        let _ = writeln!(out, "gold sources: {}", sources.join(" "));
        let _ = writeln!(out, "per-class F1:");
        for (class, f1) in &self.per_class_f1 {
            let _ = writeln!(out, "  {:<22} {:.4}", class.display_label(), f1);
        }
        let _ = writeln!(out, "counting rule: {}", self.counting_rule);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityRole, Polarity, Role};

    fn frame(f: MoralFoundation, roles: &[(&str, Role, Polarity)]) -> MoralityFrame {
        MoralityFrame::new(f, roles.iter().map(|(e, r, p)| EntityRole::new(*e, *r, *p)).collect())
    }

    fn votes(item: &str, agree: usize, corrections: &[MoralityFrame]) -> Vec<Judgment> {
        let mut out: Vec<Judgment> = (0..agree).map(|i| Judgment::agree(item, format!("a{i}"))).collect();
        for (i, c) in corrections.iter().enumerate() {
            out.push(Judgment::disagree(item, format!("d{i}"), c.clone()));
        }
        out
    }

    fn one_item(js: &[Judgment]) -> ResolvedLabel {
        let llm = frame(MoralFoundation::SanctityDegradation, &[("gene jab", Role::Actor, Polarity::Negative)]);
        let refs: Vec<&Judgment> = js.iter().collect();
        resolve_item("x", &llm, &refs)
    }

    #[test]
    fn unanimous_agreement_is_a_win() {
        let r = one_item(&votes("x", 3, &[]));
        assert_eq!(r.source, LabelSource::LlmWin);
        assert_eq!(r.vote_counts[&Verdict::Agree], 3);
        assert_eq!(r.gold.unwrap().foundation, MoralFoundation::SanctityDegradation);
    }

    #[test]
    fn three_way_disagreement_goes_to_adjudication() {
        let corrections = [MoralityFrame::none(), frame(MoralFoundation::CareHarm, &[])];
        let r = one_item(&votes("x", 1, &corrections));
        assert_eq!(r.source, LabelSource::Adjudicated);
        assert_eq!(r.gold, None);
    }

    #[test]
    fn even_split_goes_to_adjudication() {
        let corrections = [MoralityFrame::none(), MoralityFrame::none()];
        assert_eq!(one_item(&votes("x", 2, &corrections)).source, LabelSource::Adjudicated);
    }

    #[test]
    fn modal_correction_wins_regardless_of_entity_case() {
        let a = frame(MoralFoundation::CareHarm, &[("We", Role::Target, Polarity::Negative), ("pandemic", Role::Actor, Polarity::Negative)]);
        let b = frame(MoralFoundation::CareHarm, &[("pandemic", Role::Actor, Polarity::Negative), ("we", Role::Target, Polarity::Negative)]);
        let r = one_item(&votes("x", 1, &[a.clone(), b.clone(), MoralityFrame::none()]));
        assert_eq!(r.source, LabelSource::HumanMajority);
        let gold = r.gold.unwrap();
        assert!(gold.matches(&a));
        // swapping who said what does not change the representative
        let r2 = one_item(&votes("x", 1, &[MoralityFrame::none(), b, a]));
        assert_eq!(r2.gold.unwrap(), gold);
    }

    #[test]
    fn resolve_requires_judgments_for_every_item() {
        let frames = BTreeMap::from([
            ("a".to_string(), MoralityFrame::none()),
            ("b".to_string(), MoralityFrame::none()),
        ]);
        let js = votes("a", 1, &[]);
        assert_eq!(resolve(&frames, &js), Err(AggregateError::NoJudgments("b".into())));
        assert_eq!(
            resolve(&frames, &votes("zzz", 1, &[])),
            Err(AggregateError::UnknownItem("zzz".into()))
        );
    }

    /// 10 items: 7 full matches, 2 foundation-only matches, 1 full mismatch.
    fn ten_item_fixture() -> (Vec<ResolvedLabel>, BTreeMap<String, MoralityFrame>) {
        let mut resolved = Vec::new();
        let mut llm = BTreeMap::new();
        let fauci = ("Fauci", Role::Actor, Polarity::Negative);
        let kids = ("children", Role::Target, Polarity::Negative);
        for i in 0..10 {
            let id = format!("i{i}");
            let predicted = frame(MoralFoundation::FairnessCheating, &[fauci, kids]);
            let gold = match i {
                0..=6 => predicted.clone(),
                7 | 8 => frame(MoralFoundation::FairnessCheating, &[fauci]),
                _ => frame(MoralFoundation::AuthoritySubversion, &[fauci, kids]),
            };
            llm.insert(id.clone(), predicted);
            resolved.push(ResolvedLabel {
                item_id: id,
                gold: Some(gold),
                source: LabelSource::HumanMajority,
                vote_counts: BTreeMap::new(),
            });
        }
        (resolved, llm)
    }

    #[test]
    fn hand_counted_accuracies() {
        let (resolved, llm) = ten_item_fixture();
        assert_eq!(accuracy_overall(&resolved, &llm).unwrap(), 0.7);
        assert_eq!(accuracy_mf(&resolved, &llm).unwrap(), 0.9);
    }

    #[test]
    fn all_wins_score_one() {
        let frames = BTreeMap::from([("a".to_string(), MoralityFrame::none()), ("b".to_string(), frame(MoralFoundation::CareHarm, &[]))]);
        let mut js = votes("a", 3, &[]);
        js.extend(votes("b", 2, &[MoralityFrame::none()]));
        let resolved = resolve(&frames, &js).unwrap();
        assert_eq!(accuracy_overall(&resolved, &frames).unwrap(), 1.0);
        assert_eq!(macro_f1(&resolved, &frames).unwrap().macro_f1, 1.0);
    }

    #[test]
    fn unresolved_items_block_metrics() {
        let (mut resolved, llm) = ten_item_fixture();
        resolved[3].source = LabelSource::Adjudicated;
        resolved[3].gold = None;
        assert_eq!(
            accuracy_overall(&resolved, &llm),
            Err(AggregateError::UnresolvedItems(vec!["i3".into()]))
        );
        let decisions = BTreeMap::from([("i3".to_string(), MoralityFrame::none())]);
        apply_adjudications(&mut resolved, &decisions).unwrap();
        assert_eq!(accuracy_overall(&resolved, &llm).unwrap(), 0.6);
        let wrong = BTreeMap::from([("i0".to_string(), MoralityFrame::none())]);
        assert_eq!(
            apply_adjudications(&mut resolved, &wrong),
            Err(AggregateError::NotPendingAdjudication("i0".into()))
        );
    }

    #[test]
    fn two_class_f1() {
        use MoralFoundation::{CareHarm as A, FairnessCheating as B};
        let report = f1_from_labels(&[(A, A), (A, B), (B, B), (B, B)]);
        assert!((report.per_class[&A] - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.per_class[&B] - 4.0 / 5.0).abs() < 1e-12);
        assert!((report.macro_f1 - 11.0 / 15.0).abs() < 1e-12);
        assert_eq!(report.per_class.len(), 2);
    }

    #[test]
    fn single_predicted_class_f1() {
        use MoralFoundation::{CareHarm as A, FairnessCheating as B, LoyaltyBetrayal as C};
        // gold A,A,A,B,B,C, everything predicted A: F1_A = 6/9, F1_B = F1_C = 0
        let report = f1_from_labels(&[(A, A), (A, A), (A, A), (B, A), (B, A), (C, A)]);
        assert!((report.per_class[&A] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.per_class[&B], 0.0);
        assert_eq!(report.per_class[&C], 0.0);
        assert!((report.macro_f1 - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn rating_matrix_layout() {
        let frames = BTreeMap::from([
            ("a".to_string(), frame(MoralFoundation::CareHarm, &[])),
            ("b".to_string(), MoralityFrame::none()),
        ]);
        let js = vec![
            Judgment::agree("a", "p1"),
            Judgment::disagree("a", "p2", MoralityFrame::none()),
            Judgment::agree("b", "p2"),
        ];
        let m = rating_matrix(&frames, &js, AlphaOn::Labels);
        assert_eq!(m[0], vec![Some("care_harm".into()), Some("none".into())]);
        assert_eq!(m[1], vec![None, Some("none".into())]);
        let m = rating_matrix(&frames, &js, AlphaOn::Verdicts);
        assert_eq!(m[0], vec![Some("Agree".into()), Some("Disagree".into())]);
    }
}

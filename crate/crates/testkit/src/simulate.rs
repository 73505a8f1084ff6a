//! Simulated annotators that walk the full service workflow: onboarding,
//! both practice items, every assigned item in cursor order, then the
//! survey. Annotators take turns one item at a time on a manual clock, so a
//! run is fully determined by its seed.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use moralframe_core::export::StudyExport;
use moralframe_core::labels::LabelRecord;
use moralframe_core::{MoralityFrame, SurveyResponse, TextItem};
use moralframe_service::{
    ContentPack, CreateStudy, ManualClock, Service, ServiceError, StudyCreated, Submission, TaskView,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::synth::confusable;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub study_id: String,
    pub seed: u64,
    pub redundancy_k: usize,
    pub batch_size: usize,
    pub ablation: bool,
    pub annotators: Vec<String>,
    /// Probability that a verdict is right (agree exactly when the shown
    /// frame equals the truth).
    pub accuracy: f64,
    /// Pace per annotator; missing entries use 40 minutes per batch.
    pub minutes_per_batch: BTreeMap<String, f64>,
    /// Submitted after each annotator finishes.
    pub surveys: Vec<SurveyResponse>,
    /// Items on which every annotator disagrees, each with a different
    /// correction, so the vote cannot settle them.
    pub contested: Vec<String>,
}

impl SimConfig {
    pub fn new(annotators: usize, redundancy_k: usize, batch_size: usize, seed: u64) -> Self {
        SimConfig {
            study_id: "sim".into(),
            seed,
            redundancy_k,
            batch_size,
            ablation: false,
            annotators: (1..=annotators).map(|i| format!("P{i}")).collect(),
            accuracy: 0.95,
            minutes_per_batch: BTreeMap::new(),
            surveys: Vec::new(),
            contested: Vec::new(),
        }
    }
}

pub struct SimOutcome {
    pub service: Service,
    pub clock: Arc<ManualClock>,
    pub created: StudyCreated,
    pub export: StudyExport,
    /// Largest number of main items any annotator could see before its
    /// second practice outcome; zero when gating holds.
    pub leaked_before_practice: usize,
}

struct Annotator {
    id: String,
    rng: ChaCha8Rng,
    ms_per_item: f64,
    done: bool,
}

fn practice_submission(annotator: &str, p: &moralframe_service::PracticeItem) -> Submission {
    if p.shown.matches(&p.answer) {
        Submission::agree(annotator, &p.id)
    } else {
        Submission::disagree(annotator, &p.id, p.answer.clone())
    }
}

fn wrong_frame(truth: &MoralityFrame) -> MoralityFrame {
    MoralityFrame::new(confusable(truth.foundation), Vec::new())
}

/// The `n`-th of three pairwise distinct corrections for a contested item.
fn contested_correction(truth: &MoralityFrame, n: usize) -> MoralityFrame {
    match n % 3 {
        0 => truth.clone(),
        1 if !truth.roles.is_empty() => MoralityFrame::new(truth.foundation, Vec::new()),
        1 => MoralityFrame::new(confusable(confusable(truth.foundation)), Vec::new()),
        _ => wrong_frame(truth),
    }
}

/// Runs a whole study on an in-memory service.
pub fn run_study(
    content: ContentPack,
    items: &[TextItem],
    frames: &[LabelRecord],
    truth: &BTreeMap<String, MoralityFrame>,
    cfg: &SimConfig,
) -> Result<SimOutcome, ServiceError> {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2024, 5, 6, 9, 0, 0).unwrap()));
    let service = Service::in_memory(content, clock.clone());
    let created = service.create_study(CreateStudy {
        study_id: Some(cfg.study_id.clone()),
        items: items.to_vec(),
        frames: frames.to_vec(),
        redundancy_k: cfg.redundancy_k,
        batch_size: cfg.batch_size,
        ablation: cfg.ablation,
        seed: cfg.seed,
    })?;
    service.assign(&cfg.study_id, &cfg.annotators)?;
    let shown: BTreeMap<&str, &MoralityFrame> = frames
        .iter()
        .filter_map(|r| r.usable_frame().map(|f| (r.item_id.as_str(), f)))
        .collect();

    let mut annotators: Vec<Annotator> = cfg
        .annotators
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let minutes = cfg.minutes_per_batch.get(id).copied().unwrap_or(40.0);
            Annotator {
                id: id.clone(),
                rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(31).wrapping_add(i as u64 + 1)),
                ms_per_item: minutes * 60_000.0 / cfg.batch_size as f64,
                done: false,
            }
        })
        .collect();

    let mut judged: BTreeMap<String, usize> = BTreeMap::new();
    let mut leaked = 0;
    for a in &annotators {
        // a main view before practice would be a gating failure
        if matches!(service.get_task(&a.id)?, TaskView::Main { .. }) {
            leaked += 1;
        }
        service.complete_onboarding(&a.id)?;
        let practice = service.content().practice.clone();
        for (n, p) in practice.iter().enumerate() {
            if n + 1 < practice.len() && matches!(service.get_task(&a.id)?, TaskView::Main { .. }) {
                leaked += 1;
            }
            service.submit_practice(practice_submission(&a.id, p))?;
        }
    }

    while annotators.iter().any(|a| !a.done) {
        for a in annotators.iter_mut().filter(|a| !a.done) {
            let item_id = match service.get_task(&a.id) {
                Ok(TaskView::Main { item, .. }) => item.id,
                Err(ServiceError::StudyComplete(_)) => {
                    a.done = true;
                    continue;
                }
                Ok(other) => {
                    return Err(ServiceError::InvalidRequest(format!(
                        "{} unexpectedly in {:?}",
                        a.id,
                        other.phase()
                    )))
                }
                Err(e) => return Err(e),
            };
            let jitter: f64 = a.rng.random_range(0.8..1.2);
            clock.advance_ms((a.ms_per_item * jitter).round().max(1.0) as i64);
            let gold = &truth[&item_id];
            let llm_right = shown[item_id.as_str()].matches(gold);
            let right = a.rng.random_bool(cfg.accuracy);
            let seen = judged.entry(item_id.clone()).or_default();
            *seen += 1;
            let submission = match (llm_right, right) {
                _ if cfg.contested.contains(&item_id) => {
                    Submission::disagree(&a.id, &item_id, contested_correction(gold, *seen - 1))
                }
                (true, true) | (false, false) => Submission::agree(&a.id, &item_id),
                (false, true) => Submission::disagree(&a.id, &item_id, gold.clone()),
                (true, false) => Submission::disagree(&a.id, &item_id, wrong_frame(gold)),
            };
            service.submit_judgment(submission)?;
        }
    }
    for survey in &cfg.surveys {
        service.submit_survey(survey.clone())?;
    }
    let export = service.export(&cfg.study_id)?;
    Ok(SimOutcome {
        service,
        clock,
        created,
        export,
        leaked_before_practice: leaked,
    })
}

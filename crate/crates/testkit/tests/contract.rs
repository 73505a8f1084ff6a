use std::sync::Arc;

use chrono::{TimeZone, Utc};
use moralframe_core::labels::LabelRecord;
use moralframe_core::{MoralFoundation, MoralityFrame, TextItem};
use moralframe_service::{ContentPack, CreateStudy, ManualClock, Service, Submission};
use moralframe_testkit::contract::{contract_vectors, ContractVector};

/// Answers one vector on a fresh single-item study.
fn replay(v: &ContractVector) -> String {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2024, 5, 6, 9, 0, 0).unwrap()));
    let svc = Service::in_memory(ContentPack::default_pack(), clock);
    let item = TextItem::new("c1", v.text.clone());
    let shown = MoralityFrame::new(MoralFoundation::CareHarm, vec![]);
    svc.create_study(CreateStudy {
        study_id: Some("contract".into()),
        items: vec![item],
        frames: vec![LabelRecord::ok("c1", shown)],
        redundancy_k: 1,
        batch_size: 10,
        ablation: false,
        seed: 1,
    })
    .unwrap();
    svc.assign("contract", &["P1".to_string()]).unwrap();
    svc.complete_onboarding("P1").unwrap();
    for p in &svc.content().practice.clone() {
        let s = if p.shown.matches(&p.answer) {
            Submission::agree("P1", &p.id)
        } else {
            Submission::disagree("P1", &p.id, p.answer.clone())
        };
        svc.submit_practice(s).unwrap();
    }
    svc.get_task("P1").unwrap();
    let submission = Submission {
        annotator_id: "P1".into(),
        item_id: "c1".into(),
        verdict: v.verdict,
        correction: v.correction.clone(),
        elapsed_ms: None,
    };
    match svc.submit_judgment(submission) {
        Ok(_) => "ok".into(),
        Err(e) => e.code().into(),
    }
}

#[test]
fn service_answers_every_contract_vector_as_recorded() {
    let vectors = contract_vectors();
    assert!(vectors.iter().any(|v| v.expect == "ok"));
    assert!(vectors.iter().any(|v| v.expect != "ok"));
    for v in &vectors {
        assert_eq!(replay(v), v.expect, "vector {}", v.name);
    }
}

#[test]
fn vector_names_are_unique() {
    let vectors = contract_vectors();
    let mut names: Vec<&str> = vectors.iter().map(|v| v.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), vectors.len());
}

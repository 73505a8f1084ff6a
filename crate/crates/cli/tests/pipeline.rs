use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use moralframe_cli::{serve::prepare_study, stages, CliError, StudyConfig};
use moralframe_core::labels::{read_label_records, LabelStatus};
use moralframe_service::{ContentPack, ManualClock, Service};
use moralframe_testkit::bundle;

fn fixture(name: &str) -> PathBuf {
    bundle::fixtures_dir().join(name)
}

fn config(out: &Path) -> StudyConfig {
    let mut cfg = StudyConfig::load(&fixture("study.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn moralframe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moralframe"))
        .args(args)
        .env_remove("MORALFRAME_LLM_API_KEY")
        .env_remove("MORALFRAME_LLM_ENDPOINT")
        .env_remove("MORALFRAME_LLM_MODEL")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn labeling_is_deterministic_and_keeps_the_pilot_apart() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = stages::label(&config(a.path())).unwrap();
    stages::label(&config(b.path())).unwrap();
    for rel in ["frames.jsonl", "pilot/frames.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap());
    }
    assert_eq!((first[0].items, first[0].failures), (150, 1));
    assert_eq!((first[1].items, first[1].failures), (10, 0));
    let main = read_label_records(std::fs::read(a.path().join("frames.jsonl")).unwrap().as_slice()).unwrap();
    let pilot = read_label_records(std::fs::read(a.path().join("pilot/frames.jsonl")).unwrap().as_slice()).unwrap();
    assert!(main.iter().all(|r| r.item_id.starts_with("tw-")));
    assert!(pilot.iter().all(|r| r.item_id.starts_with("pilot-") && r.status == LabelStatus::Ok));
}

#[test]
fn run_all_writes_nine_hashed_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let summary = stages::run_all(&config(out.path())).unwrap();
    let names: Vec<&str> = summary.manifest.artifacts.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "entity_roles.json",
            "heatmaps.svg",
            "metrics.json",
            "metrics.txt",
            "mf_stance.csv",
            "reason_mf.csv",
            "reason_stance.csv",
            "resolved.jsonl",
            "survey.csv"
        ]
    );
    for a in &summary.manifest.artifacts {
        let bytes = std::fs::read(out.path().join(&a.name)).unwrap();
        assert_eq!(bytes.len(), a.bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("20240506"), "{} does not record the seed", a.name);
    }
    let inputs: Vec<&str> = summary.manifest.inputs.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(
        inputs,
        ["frames.jsonl", "pilot/frames.jsonl", "export.jsonl", "adjudications.jsonl", "reasons.toml"]
    );
    assert_eq!(summary.report.condition, "with explanations");
}

#[test]
fn pending_adjudication_exits_four_and_lists_the_items() {
    let out = tempfile::tempdir().unwrap();
    let o = moralframe(&[
        "aggregate",
        "--study",
        fixture("export.jsonl").to_str().unwrap(),
        "--adjudications",
        out.path().join("none.jsonl").to_str().unwrap(),
        "--output-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let b = bundle::build();
    for id in b.adjudications.keys() {
        assert!(stderr(&o).contains(id.as_str()));
    }
}

#[test]
fn adjudicating_the_open_items_unblocks_aggregation() {
    let out = tempfile::tempdir().unwrap();
    let decisions = out.path().join("adj.jsonl");
    let export = fixture("export.jsonl");
    let b = bundle::build();
    let ids: Vec<&String> = b.adjudications.keys().collect();
    assert_eq!(ids.len(), 2);

    let settled = b.export.scheduled_items().into_iter().find(|id| !b.adjudications.contains_key(id)).unwrap();
    let frame_file = out.path().join("frame.json");
    std::fs::write(&frame_file, serde_json::to_string(&b.truth[&settled]).unwrap()).unwrap();
    let err = stages::adjudicate(&export, &decisions, &settled, &frame_file).unwrap_err();
    assert!(matches!(err, CliError::Stage { stage: "adjudicate", .. }));

    for (n, id) in ids.iter().enumerate() {
        std::fs::write(&frame_file, serde_json::to_string(&b.truth[*id]).unwrap()).unwrap();
        let remaining = stages::adjudicate(&export, &decisions, id, &frame_file).unwrap();
        assert_eq!(remaining.len(), ids.len() - n - 1);
    }
    let o = moralframe(&[
        "aggregate",
        "--study",
        export.to_str().unwrap(),
        "--adjudications",
        decisions.to_str().unwrap(),
        "--output-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(&decisions).unwrap(),
        std::fs::read_to_string(fixture("adjudications.jsonl")).unwrap()
    );
}

#[test]
fn ablation_flag_labels_the_report() {
    let out = tempfile::tempdir().unwrap();
    let o = moralframe(&[
        "aggregate",
        "--config",
        fixture("study.toml").to_str().unwrap(),
        "--ablation",
        "--output-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["condition"], "without explanations");
    assert!(String::from_utf8_lossy(&o.stdout).contains("without explanations"));
}

#[test]
fn configuration_problems_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = moralframe(&["run-all", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "corpus = \"nope.jsonl\"\n").unwrap();
    let o = moralframe(&["label", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corpus"));
    let o = moralframe(&["analyze", "--study", fixture("export.jsonl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_credential_fails_before_labeling_anything() {
    let out = tempfile::tempdir().unwrap();
    let o = moralframe(&[
        "label",
        "--corpus",
        fixture("pilot.jsonl").to_str().unwrap(),
        "--backend",
        "http",
        "--output-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stage label"));
    assert!(stderr(&o).contains("MORALFRAME_LLM_API_KEY"));
    assert!(!out.path().join("frames.jsonl").exists());
}

#[test]
fn run_all_names_the_failing_stage() {
    let out = tempfile::tempdir().unwrap();
    let o = moralframe(&[
        "run-all",
        "--config",
        fixture("study.toml").to_str().unwrap(),
        "--reasons",
        fixture("corpus.jsonl").to_str().unwrap(),
        "--output-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let mut cfg = config(out.path());
    cfg.corpus = cfg.pilot_corpus.clone();
    let err = stages::run_all(&cfg).unwrap_err();
    assert!(matches!(err, CliError::Stage { stage: "label", .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn serve_creates_the_configured_study_once() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(out.path());
    cfg.pilot_corpus = None;
    cfg.annotators = (1..=9).map(|i| format!("P{i}")).collect();
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2024, 5, 6, 9, 0, 0).unwrap()));
    let svc = Service::in_memory(ContentPack::default_pack(), clock);

    let err = prepare_study(&svc, &cfg).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "frames must exist first: {err}");

    stages::label(&cfg).unwrap();
    let tokens = prepare_study(&svc, &cfg).unwrap();
    assert_eq!(tokens.len(), 9);
    assert_eq!(prepare_study(&svc, &cfg).unwrap(), tokens);
    assert_eq!(svc.study_ids(), ["study-001"]);
    let status = svc.status("study-001").unwrap();
    assert_eq!(status.header.excluded_items, ["tw-113"]);
    assert_eq!(status.scheduled_items, 149);
}

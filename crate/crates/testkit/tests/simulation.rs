use std::collections::{BTreeMap, BTreeSet};

use moralframe_core::labels::LabelRecord;
use moralframe_core::{MoralityFrame, TextItem};
use moralframe_service::ContentPack;
use moralframe_testkit::simulate::{run_study, SimConfig};
use moralframe_testkit::synth;

fn setup(n: usize, seed: u64) -> (Vec<TextItem>, Vec<LabelRecord>, BTreeMap<String, MoralityFrame>) {
    let corpus = synth::corpus(n, seed, "sim");
    let frames = synth::model_frames(&corpus, seed, 0.1, 0.05);
    let labels = corpus.iter().zip(frames).map(|(s, f)| LabelRecord::ok(&s.item.id, f)).collect();
    let truth = synth::truth_map(&corpus);
    (corpus.into_iter().map(|s| s.item).collect(), labels, truth)
}

#[test]
fn every_item_is_judged_by_exactly_k_distinct_annotators() {
    let (items, labels, truth) = setup(150, 21);
    let cfg = SimConfig::new(9, 3, 50, 21);
    let outcome = run_study(ContentPack::default_pack(), &items, &labels, &truth, &cfg).unwrap();
    assert_eq!(outcome.leaked_before_practice, 0);
    let mut judges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for j in &outcome.export.judgments {
        assert!(judges.entry(&j.item_id).or_default().insert(&j.annotator_id), "repeat judgment");
    }
    assert_eq!(judges.len(), 150);
    assert!(judges.values().all(|a| a.len() == 3));
    assert_eq!(outcome.export.judgments.len(), 450);
}

#[test]
fn same_seed_gives_the_same_export() {
    let (items, labels, truth) = setup(40, 4);
    let cfg = SimConfig::new(4, 2, 10, 4);
    let a = run_study(ContentPack::default_pack(), &items, &labels, &truth, &cfg).unwrap();
    let b = run_study(ContentPack::default_pack(), &items, &labels, &truth, &cfg).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.export.write(&mut x).unwrap();
    b.export.write(&mut y).unwrap();
    assert_eq!(x, y);
}

#[test]
fn ablated_studies_record_hidden_explanations() {
    let (items, labels, truth) = setup(12, 8);
    let mut cfg = SimConfig::new(3, 1, 4, 8);
    cfg.ablation = true;
    let outcome = run_study(ContentPack::default_pack(), &items, &labels, &truth, &cfg).unwrap();
    assert!(outcome.export.header.ablation);
    assert!(outcome.export.judgments.iter().all(|j| !j.saw_explanations));
}

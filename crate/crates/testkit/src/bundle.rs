//! The checked-in fixture bundle under `fixtures/`: a 150-item corpus, a
//! separate 10-item pilot corpus, recorded completions for both, the study
//! export of a simulated nine-annotator run, adjudications for the items the
//! vote leaves open, the reason taxonomy, the client contract vectors, and a
//! study config wiring them together.
//!
//! Everything is derived from [`BUNDLE_SEED`]; regenerating writes identical
//! bytes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use moralframe_core::aggregate::{pending_adjudications, resolve};
use moralframe_core::analysis::ReasonTaxonomy;
use moralframe_core::export::{write_adjudications, StudyExport};
use moralframe_core::labels::LabelRecord;
use moralframe_core::prompt::PromptTemplate;
use moralframe_core::{validate_frame, write_corpus, MoralityFrame, TextItem};
use moralframe_gateway::{batch_label, FixtureBackend, FixtureEntry, Gateway, LabelSettings};
use moralframe_service::ContentPack;

use crate::cases::survey_rows;
use crate::contract::contract_vectors;
use crate::simulate::{run_study, SimConfig};
use crate::synth;

pub const BUNDLE_SEED: u64 = 20_240_506;
pub const MODEL_NAME: &str = "gpt-4o";
pub const STUDY_ID: &str = "study-001";
pub const CORPUS_SIZE: usize = 150;
pub const PILOT_SIZE: usize = 10;
/// Items whose first completion uses a label outside the closed set.
pub const RESAMPLED: [&str; 2] = ["tw-007", "tw-042"];
/// Item whose completions never parse; it is left out of the study.
pub const FAILING: [&str; 1] = ["tw-113"];

/// Items whose annotators split three ways and need adjudication.
pub const CONTESTED: usize = 2;

pub const FILES: [&str; 9] = [
    "corpus.jsonl",
    "pilot.jsonl",
    "completions.jsonl",
    "truth.jsonl",
    "export.jsonl",
    "adjudications.jsonl",
    "reasons.toml",
    "contract_vectors.jsonl",
    "study.toml",
];

pub struct Bundle {
    pub corpus: Vec<TextItem>,
    pub pilot: Vec<TextItem>,
    pub truth: BTreeMap<String, MoralityFrame>,
    pub completions: Vec<FixtureEntry>,
    pub labels: Vec<LabelRecord>,
    pub export: StudyExport,
    pub adjudications: BTreeMap<String, MoralityFrame>,
    pub taxonomy: ReasonTaxonomy,
}

/// Directory of the checked-in bundle.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn label_settings() -> LabelSettings {
    LabelSettings::new(MODEL_NAME)
}

/// Builds the bundle in memory. Labels come from running the real batch
/// labeler over the recorded completions.
pub fn build() -> Bundle {
    let main = synth::corpus(CORPUS_SIZE, BUNDLE_SEED, "tw");
    let pilot = synth::corpus(PILOT_SIZE, BUNDLE_SEED + 1, "pilot");
    let template = PromptTemplate::default_protocol();

    let mut completions = Vec::new();
    for set in [&main, &pilot] {
        let items: Vec<TextItem> = set.iter().map(|s| s.item.clone()).collect();
        let frames = synth::model_frames(set, BUNDLE_SEED, 0.07, 0.03);
        completions.extend(synth::fixture_completions(
            &items,
            &frames,
            &template,
            MODEL_NAME,
            &RESAMPLED,
            &FAILING,
        ));
    }

    let corpus: Vec<TextItem> = main.iter().map(|s| s.item.clone()).collect();
    let gateway = Gateway::new(FixtureBackend::from_entries(completions.clone()));
    let labels = batch_label(&gateway, &corpus, &template, &label_settings())
        .expect("recorded completions cover the corpus")
        .records;

    let truth = synth::truth_map(&main);
    let mut cfg = SimConfig::new(9, 3, 50, BUNDLE_SEED);
    cfg.study_id = STUDY_ID.into();
    cfg.surveys = survey_rows();
    cfg.minutes_per_batch = cfg
        .surveys
        .iter()
        .map(|s| (s.annotator_id.clone(), s.avg_minutes_per_batch))
        .collect();
    cfg.contested = labels
        .iter()
        .filter(|r| r.usable_frame().is_some_and(|f| !f.matches(&truth[&r.item_id])))
        .map(|r| r.item_id.clone())
        .take(CONTESTED)
        .collect();
    let outcome = run_study(ContentPack::default_pack(), &corpus, &labels, &truth, &cfg)
        .expect("simulated study completes");
    let export = outcome.export;

    let resolved = resolve(&export.scheduled_frames(), &export.judgments).expect("every scheduled item is judged");
    let adjudications = pending_adjudications(&resolved)
        .into_iter()
        .map(|id| {
            let item = corpus.iter().find(|i| i.id == id).expect("pending items are corpus items");
            let gold = validate_frame(&truth[&id], item).expect("truth frames fit their text");
            (id, gold)
        })
        .collect();

    Bundle {
        corpus,
        pilot: pilot.into_iter().map(|s| s.item).collect(),
        truth,
        completions,
        labels,
        export,
        adjudications,
        taxonomy: synth::taxonomy(),
    }
}

fn jsonl<T: serde::Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).expect("fixture rows serialize");
        out.push(b'\n');
    }
    out
}

pub fn study_toml() -> String {
    format!(
        "# Fixture-mode study: recorded completions stand in for the model and a\n\
         # simulated study export stands in for the human judgments.\n\
         study_id = \"{STUDY_ID}\"\n\
         seed = {BUNDLE_SEED}\n\
         corpus = \"corpus.jsonl\"\n\
         pilot_corpus = \"pilot.jsonl\"\n\
         output_dir = \"out\"\n\
         redundancy_k = 3\n\
         batch_size = 50\n\
         ablation = false\n\
         judgments = \"export.jsonl\"\n\
         adjudications = \"adjudications.jsonl\"\n\
         reasons = \"reasons.toml\"\n\
         top_k = 2\n\
         alpha_on = \"verdicts\"\n\
         \n\
         [model]\n\
         name = \"{MODEL_NAME}\"\n\
         temperature = 0.0\n\
         max_output_tokens = 512\n\
         max_resamples = 3\n\
         concurrency = 4\n\
         backend = \"fixture\"\n\
         fixtures = \"completions.jsonl\"\n"
    )
}

impl Bundle {
    /// File name and contents of every bundle file, in [`FILES`] order.
    pub fn files(&self) -> Vec<(&'static str, Vec<u8>)> {
        let mut corpus = Vec::new();
        write_corpus(&mut corpus, &self.corpus).expect("in-memory write");
        let mut pilot = Vec::new();
        write_corpus(&mut pilot, &self.pilot).expect("in-memory write");
        let truth: Vec<LabelRecord> = self
            .truth
            .iter()
            .map(|(id, f)| LabelRecord::ok(id, f.clone()))
            .collect();
        let mut export = Vec::new();
        self.export.write(&mut export).expect("in-memory write");
        let mut adjudications = Vec::new();
        write_adjudications(&mut adjudications, &self.adjudications).expect("in-memory write");
        vec![
            ("corpus.jsonl", corpus),
            ("pilot.jsonl", pilot),
            ("completions.jsonl", jsonl(&self.completions)),
            ("truth.jsonl", jsonl(&truth)),
            ("export.jsonl", export),
            ("adjudications.jsonl", adjudications),
            ("reasons.toml", self.taxonomy.to_toml_string().into_bytes()),
            ("contract_vectors.jsonl", jsonl(&contract_vectors())),
            ("study.toml", study_toml().into_bytes()),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in self.files() {
            std::fs::File::create(dir.join(name))?.write_all(&bytes)?;
        }
        Ok(())
    }
}

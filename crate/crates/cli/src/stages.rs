use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use moralframe_core::aggregate::{
    apply_adjudications, pending_adjudications, resolve, AggregateError, AlphaOn, MetricsReport, ResolvedLabel,
};
use moralframe_core::analysis::{
    pearson_matrix, render_heatmaps, survey_report, top_entity_roles, EntityRoleTally, IndicatorMatrix,
    ReasonTaxonomy,
};
use moralframe_core::export::{read_adjudications, write_adjudications, StudyExport};
use moralframe_core::labels::{write_label_records, LabelRecord};
use moralframe_core::prompt::{PromptTemplate, ResamplePolicy};
use moralframe_core::{read_corpus, validate_frame, MoralityFrame, TextItem};
use moralframe_gateway::{
    batch_label, FixtureBackend, Gateway, HttpBackend, HttpConfig, LabelSettings, RateLimiter, ResponseCache,
    RetryPolicy,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{BackendKind, StudyConfig};
use crate::CliError;

/// One output file, held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: &'static str, bytes: impl Into<Vec<u8>>) -> Self {
        Artifact {
            name,
            bytes: bytes.into(),
        }
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.bytes)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::stage("write", format!("{}: {e}", dir.display())))?;
    for a in artifacts {
        let path = dir.join(a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| CliError::stage("write", format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn open(field: &str, path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("{field}: cannot open {}: {e}", path.display())))
}

fn to_json_lines<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, &row).expect("artifact rows serialize");
        out.push(b'\n');
    }
    out
}

fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifacts serialize");
    out.push(b'\n');
    out
}

// ---- label ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSummary {
    pub output: PathBuf,
    pub items: usize,
    pub failures: usize,
    pub remote_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
    #[serde(skip)]
    pub records: Vec<LabelRecord>,
}

impl std::fmt::Display for LabelSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} items, {} failed, {} remote calls, {} cache hits, {} retries",
            self.output.display(),
            self.items,
            self.failures,
            self.remote_calls,
            self.cache_hits,
            self.retries
        )
    }
}

fn build_gateway(cfg: &StudyConfig) -> Result<Gateway, CliError> {
    let model = &cfg.model;
    let gateway = match model.backend {
        BackendKind::Fixture => {
            let path = StudyConfig::require("model.fixtures", &model.fixtures)?;
            let backend = FixtureBackend::load(path)
                .map_err(|e| CliError::Config(format!("model.fixtures: {}: {e}", path.display())))?;
            Gateway::new(backend)
        }
        BackendKind::Http => {
            let http = HttpConfig::from_env(model.name.as_deref()).map_err(|e| CliError::stage("label", e))?;
            Gateway::new(HttpBackend::new(http))
        }
    };
    let gateway = gateway
        .with_retry(RetryPolicy {
            max_retries: model.max_retries,
            ..RetryPolicy::default()
        })
        .with_rate_limit(RateLimiter::per_minute(model.requests_per_minute));
    match &model.cache {
        Some(path) => {
            let cache = ResponseCache::open(path)
                .map_err(|e| CliError::Config(format!("model.cache: {}: {e}", path.display())))?;
            Ok(gateway.with_cache(cache))
        }
        None => Ok(gateway),
    }
}

fn settings(cfg: &StudyConfig, gateway_model: Option<String>) -> LabelSettings {
    let mut s = LabelSettings::new(gateway_model.unwrap_or_default());
    s.temperature = cfg.model.temperature;
    s.max_output_tokens = cfg.model.max_output_tokens;
    s.resample = ResamplePolicy {
        max_resamples: cfg.model.max_resamples,
    };
    s.concurrency = cfg.model.concurrency;
    s
}

fn load_template(cfg: &StudyConfig) -> Result<PromptTemplate, CliError> {
    let template = match &cfg.template {
        Some(path) => PromptTemplate::load(path).map_err(|e| CliError::Config(format!("template: {e}")))?,
        None => PromptTemplate::default_protocol(),
    };
    template.check().map_err(|e| CliError::Config(format!("template: {e}")))?;
    Ok(template)
}

fn label_one_corpus(
    gateway: &Gateway,
    template: &PromptTemplate,
    settings: &LabelSettings,
    corpus: &Path,
    output: PathBuf,
) -> Result<LabelSummary, CliError> {
    let items = read_corpus(open("corpus", corpus)?).map_err(|e| CliError::Config(format!("{}: {e}", corpus.display())))?;
    let before = gateway.stats();
    let outcome = batch_label(gateway, &items, template, settings).map_err(|e| CliError::stage("label", e))?;
    let after = gateway.stats();
    if let Some(dir) = output.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::stage("label", format!("{}: {e}", dir.display())))?;
    }
    let mut bytes = Vec::new();
    write_label_records(&mut bytes, &outcome.records).expect("in-memory write");
    std::fs::write(&output, bytes).map_err(|e| CliError::stage("label", format!("{}: {e}", output.display())))?;
    Ok(LabelSummary {
        output,
        items: outcome.records.len(),
        failures: outcome.failures(),
        remote_calls: after.remote_calls - before.remote_calls,
        cache_hits: after.cache_hits - before.cache_hits,
        retries: after.retries - before.retries,
        records: outcome.records,
    })
}

/// Labels the corpus into `<output_dir>/frames.jsonl` and, when configured,
/// the pilot corpus into `<output_dir>/pilot/frames.jsonl`.
pub fn label(cfg: &StudyConfig) -> Result<Vec<LabelSummary>, CliError> {
    cfg.validate()?;
    let corpus = StudyConfig::require("corpus", &cfg.corpus)?;
    let template = load_template(cfg)?;
    let gateway = build_gateway(cfg)?;
    let model = match cfg.model.backend {
        BackendKind::Fixture => cfg.model.name.clone(),
        BackendKind::Http => HttpConfig::from_env(cfg.model.name.as_deref())
            .map(|h| Some(h.model_name))
            .map_err(|e| CliError::stage("label", e))?,
    };
    let settings = settings(cfg, model);
    let mut out = vec![label_one_corpus(
        &gateway,
        &template,
        &settings,
        corpus,
        cfg.output_dir.join("frames.jsonl"),
    )?];
    if let Some(pilot) = &cfg.pilot_corpus {
        out.push(label_one_corpus(
            &gateway,
            &template,
            &settings,
            pilot,
            cfg.output_dir.join("pilot").join("frames.jsonl"),
        )?);
    }
    Ok(out)
}

// ---- aggregate / analyze ----

#[derive(Debug, Clone, PartialEq)]
pub struct StudyInputs {
    pub export: StudyExport,
    pub adjudications: BTreeMap<String, MoralityFrame>,
}

/// Reads the study export and the adjudications file; a missing
/// adjudications file counts as empty.
pub fn load_inputs(export: &Path, adjudications: Option<&Path>) -> Result<StudyInputs, CliError> {
    let export = StudyExport::read(open("study export", export)?)
        .map_err(|e| CliError::stage("aggregate", format!("{}: {e}", export.display())))?;
    let adjudications = match adjudications {
        Some(p) if p.exists() => read_adjudications(open("adjudications", p)?)
            .map_err(|e| CliError::stage("aggregate", format!("{}: {e}", p.display())))?,
        _ => BTreeMap::new(),
    };
    Ok(StudyInputs { export, adjudications })
}

fn aggregate_error(e: AggregateError) -> CliError {
    match e {
        AggregateError::UnresolvedItems(ids) => CliError::PendingAdjudication(ids),
        other => CliError::stage("aggregate", other),
    }
}

/// Gold labels with adjudications applied; pending items are an error.
pub fn gold_labels(inputs: &StudyInputs) -> Result<Vec<ResolvedLabel>, CliError> {
    let mut resolved = resolve(&inputs.export.scheduled_frames(), &inputs.export.judgments).map_err(aggregate_error)?;
    apply_adjudications(&mut resolved, &inputs.adjudications).map_err(aggregate_error)?;
    let pending = pending_adjudications(&resolved);
    if !pending.is_empty() {
        return Err(CliError::PendingAdjudication(pending));
    }
    Ok(resolved)
}

#[derive(Serialize)]
struct ResolvedRow<'a> {
    #[serde(flatten)]
    label: &'a ResolvedLabel,
    seed: u64,
}

/// `resolved.jsonl`, `metrics.json` and `metrics.txt`.
pub fn aggregate(
    inputs: &StudyInputs,
    alpha_on: AlphaOn,
    ablation: bool,
) -> Result<(Vec<ResolvedLabel>, MetricsReport, Vec<Artifact>), CliError> {
    let (resolved, report) =
        MetricsReport::evaluate(&inputs.export, &inputs.adjudications, alpha_on, ablation).map_err(aggregate_error)?;
    let seed = report.seed;
    let artifacts = vec![
        Artifact::new(
            "resolved.jsonl",
            to_json_lines(resolved.iter().map(|label| ResolvedRow { label, seed })),
        ),
        Artifact::new("metrics.json", to_pretty_json(&report)),
        Artifact::new("metrics.txt", report.render_table()),
    ];
    Ok((resolved, report, artifacts))
}

#[derive(Serialize)]
struct EntityRoles<'a> {
    seed: u64,
    k: usize,
    tallies: &'a [EntityRoleTally],
}

/// Correlation CSVs, entity-role tallies, survey table and heatmaps.
pub fn analyze(
    inputs: &StudyInputs,
    resolved: &[ResolvedLabel],
    taxonomy: &ReasonTaxonomy,
    k: usize,
) -> Result<Vec<Artifact>, CliError> {
    let fail = |e: moralframe_core::analysis::AnalysisError| CliError::stage("analyze", e);
    let seed = inputs.export.header.seed;
    let gold: BTreeMap<String, MoralityFrame> = resolved
        .iter()
        .filter_map(|r| r.gold.clone().map(|g| (r.item_id.clone(), g)))
        .collect();
    let ids: BTreeSet<String> = gold.keys().cloned().collect();
    let items: Vec<TextItem> = inputs.export.items.iter().filter(|i| ids.contains(&i.id)).cloned().collect();

    let foundations = IndicatorMatrix::foundations(&gold);
    let stances = IndicatorMatrix::stances(&items).map_err(fail)?;
    let reasons = IndicatorMatrix::reasons(&items, taxonomy).map_err(fail)?;
    let mf_stance = pearson_matrix(&foundations, &stances).map_err(fail)?;
    let reason_stance = pearson_matrix(&reasons, &stances).map_err(fail)?;
    let reason_mf = pearson_matrix(&reasons, &foundations).map_err(fail)?;
    let tallies = top_entity_roles(&gold, &items, Some(taxonomy), k).map_err(fail)?;
    let survey = survey_report(&inputs.export.surveys).map_err(fail)?;
    let svg = render_heatmaps(&[
        ("Moral foundation x stance", &mf_stance),
        ("Reason x stance", &reason_stance),
        ("Reason x moral foundation", &reason_mf),
    ]);

    Ok(vec![
        Artifact::new("mf_stance.csv", mf_stance.to_csv("foundation", seed).map_err(fail)?),
        Artifact::new("reason_stance.csv", reason_stance.to_csv("reason", seed).map_err(fail)?),
        Artifact::new("reason_mf.csv", reason_mf.to_csv("reason", seed).map_err(fail)?),
        Artifact::new(
            "entity_roles.json",
            to_pretty_json(&EntityRoles {
                seed,
                k,
                tallies: &tallies,
            }),
        ),
        Artifact::new("survey.csv", survey.to_csv(seed).map_err(fail)?),
        Artifact::new("heatmaps.svg", format!("<!-- seed: {seed} -->\n{svg}")),
    ])
}

// ---- run-all ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub study_id: String,
    pub seed: u64,
    pub condition: String,
    /// Files the run read, by file name.
    pub inputs: Vec<ManifestEntry>,
    pub artifacts: Vec<ManifestEntry>,
}

fn entry(name: &str, bytes: &[u8]) -> ManifestEntry {
    ManifestEntry {
        name: name.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len(),
    }
}

/// Hash entry named by the path below `root`, or by the file name for
/// paths elsewhere.
fn input_entry(path: &Path, root: &Path) -> Result<ManifestEntry, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::stage("manifest", format!("{}: {e}", path.display())))?;
    let name = match path.strip_prefix(root) {
        Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
        Err(_) => path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
    };
    Ok(entry(&name, &bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub labels: Vec<LabelSummary>,
    pub report: MetricsReport,
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

/// Scheduled items whose exported frame differs from the freshly labeled one.
fn frame_drift(export: &StudyExport, labels: &[LabelRecord]) -> Vec<String> {
    let fresh: BTreeMap<&str, &MoralityFrame> = labels
        .iter()
        .filter_map(|r| r.usable_frame().map(|f| (r.item_id.as_str(), f)))
        .collect();
    export
        .scheduled_frames()
        .into_iter()
        .filter(|(id, frame)| fresh.get(id.as_str()).map_or(true, |f| !f.matches(frame)))
        .map(|(id, _)| id)
        .collect()
}

/// Label (when a corpus is configured), aggregate, analyze, then write
/// `manifest.json` over the nine study artifacts.
pub fn run_all(cfg: &StudyConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let export_path = StudyConfig::require("judgments", &cfg.judgments)?;
    let reasons_path = StudyConfig::require("reasons", &cfg.reasons)?;
    let taxonomy = ReasonTaxonomy::load(reasons_path).map_err(|e| CliError::Config(format!("reasons: {e}")))?;
    let inputs = load_inputs(export_path, cfg.adjudications.as_deref())?;
    if cfg.seed != 0 && cfg.seed != inputs.export.header.seed {
        log::warn!(
            "config seed {} differs from the study export's seed {}; artifacts record the export's",
            cfg.seed,
            inputs.export.header.seed
        );
    }

    let mut manifest_inputs = Vec::new();
    let labels = if cfg.corpus.is_some() {
        let labels = label(cfg)?;
        let drift = frame_drift(&inputs.export, &labels[0].records);
        if !drift.is_empty() {
            return Err(CliError::stage(
                "label",
                format!(
                    "the study export shows other frames than this labeling run for {} item(s): {}",
                    drift.len(),
                    drift.join(", ")
                ),
            ));
        }
        for summary in &labels {
            manifest_inputs.push(input_entry(&summary.output, &cfg.output_dir)?);
        }
        labels
    } else {
        Vec::new()
    };

    let (resolved, report, mut artifacts) = aggregate(&inputs, cfg.alpha_on, cfg.ablation)?;
    artifacts.extend(analyze(&inputs, &resolved, &taxonomy, cfg.top_k)?);
    write_artifacts(&cfg.output_dir, &artifacts)?;

    manifest_inputs.push(input_entry(export_path, &cfg.output_dir)?);
    if let Some(p) = cfg.adjudications.as_deref().filter(|p| p.exists()) {
        manifest_inputs.push(input_entry(p, &cfg.output_dir)?);
    }
    manifest_inputs.push(input_entry(reasons_path, &cfg.output_dir)?);
    let mut entries: Vec<ManifestEntry> = artifacts.iter().map(|a| entry(a.name, &a.bytes)).collect();
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    let manifest = Manifest {
        study_id: inputs.export.header.study_id.clone(),
        seed: inputs.export.header.seed,
        condition: report.condition.clone(),
        inputs: manifest_inputs,
        artifacts: entries,
    };
    let manifest_path = cfg.output_dir.join("manifest.json");
    std::fs::write(&manifest_path, to_pretty_json(&manifest))
        .map_err(|e| CliError::stage("manifest", format!("{}: {e}", manifest_path.display())))?;
    Ok(RunSummary {
        labels,
        report,
        manifest,
        manifest_path,
    })
}

// ---- adjudicate ----

/// Records `frame_file` as the gold frame of `item_id` and returns the items
/// still waiting for a decision.
pub fn adjudicate(
    export: &Path,
    adjudications: &Path,
    item_id: &str,
    frame_file: &Path,
) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(frame_file)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", frame_file.display())))?;
    let frame: MoralityFrame = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not a frame: {e}", frame_file.display())))?;
    let mut inputs = load_inputs(export, Some(adjudications))?;
    let resolved = resolve(&inputs.export.scheduled_frames(), &inputs.export.judgments)
        .map_err(|e| CliError::stage("adjudicate", e))?;
    let open: BTreeSet<String> = pending_adjudications(&resolved).into_iter().collect();
    if !open.contains(item_id) {
        return Err(CliError::stage(
            "adjudicate",
            AggregateError::NotPendingAdjudication(item_id.to_string()),
        ));
    }
    let item = inputs
        .export
        .items
        .iter()
        .find(|i| i.id == item_id)
        .ok_or_else(|| CliError::stage("adjudicate", format!("item {item_id} is not in the export")))?;
    let frame = validate_frame(&frame, item).map_err(|e| CliError::stage("adjudicate", e))?;
    inputs.adjudications.insert(item_id.to_string(), frame);

    if let Some(dir) = adjudications.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::stage("adjudicate", e))?;
    }
    let mut bytes = Vec::new();
    write_adjudications(&mut bytes, &inputs.adjudications).expect("in-memory write");
    std::fs::write(adjudications, bytes)
        .map_err(|e| CliError::stage("adjudicate", format!("{}: {e}", adjudications.display())))?;
    Ok(open
        .into_iter()
        .filter(|id| !inputs.adjudications.contains_key(id))
        .collect())
}

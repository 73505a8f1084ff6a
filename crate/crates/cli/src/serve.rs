//! `serve`: opens the journal-backed service and, when a study config is
//! given, creates its study from the labeled frames on first start.

use std::collections::BTreeMap;
use std::sync::Arc;

use moralframe_core::labels::read_label_records;
use moralframe_core::read_corpus;
use moralframe_service::{ContentPack, CreateStudy, ServeConfig, Service, SystemClock};

use crate::config::StudyConfig;
use crate::CliError;

pub const DEFAULT_STUDY_ID: &str = "study";

pub fn open_service(cfg: &ServeConfig) -> Result<Service, CliError> {
    let content = match &cfg.content_pack {
        Some(p) => ContentPack::load(p).map_err(|e| CliError::Config(format!("content_pack: {e}")))?,
        None => ContentPack::default_pack(),
    };
    Service::open(&cfg.journal, content, Arc::new(SystemClock)).map_err(|e| CliError::stage("serve", e))
}

/// Creates the configured study unless the journal already has it, and
/// registers its annotators. Returns the annotator access tokens.
pub fn prepare_study(svc: &Service, cfg: &StudyConfig) -> Result<BTreeMap<String, String>, CliError> {
    let study_id = cfg.study_id.clone().unwrap_or_else(|| DEFAULT_STUDY_ID.to_string());
    if !svc.study_ids().contains(&study_id) {
        let corpus = StudyConfig::require("corpus", &cfg.corpus)?;
        let frames_path = cfg.output_dir.join("frames.jsonl");
        let items = read_corpus(std::io::BufReader::new(
            std::fs::File::open(corpus).map_err(|e| CliError::Config(format!("corpus: {e}")))?,
        ))
        .map_err(|e| CliError::Config(format!("corpus: {e}")))?;
        let frames = std::fs::File::open(&frames_path)
            .map_err(|e| {
                CliError::Config(format!(
                    "{}: {e}; run `moralframe label` for this config first",
                    frames_path.display()
                ))
            })
            .and_then(|f| {
                read_label_records(std::io::BufReader::new(f)).map_err(|e| CliError::Config(format!("frames: {e}")))
            })?;
        svc.create_study(CreateStudy {
            study_id: Some(study_id.clone()),
            items,
            frames,
            redundancy_k: cfg.redundancy_k,
            batch_size: cfg.batch_size,
            ablation: cfg.ablation,
            seed: cfg.seed,
        })
        .map_err(|e| CliError::stage("serve", e))?;
        if !cfg.annotators.is_empty() {
            svc.assign(&study_id, &cfg.annotators).map_err(|e| CliError::stage("serve", e))?;
        }
    }
    svc.tokens(&study_id).map_err(|e| CliError::stage("serve", e))
}

/// Serves the `/v1` API until ctrl-c.
pub fn run(cfg: &ServeConfig, study: Option<&StudyConfig>) -> Result<(), CliError> {
    let svc = open_service(cfg)?;
    if let Some(study) = study {
        for (annotator, token) in prepare_study(&svc, study)? {
            println!("annotator {annotator}: token {token}");
        }
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::stage("serve", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(cfg.bind)
            .await
            .map_err(|e| CliError::stage("serve", format!("bind {}: {e}", cfg.bind)))?;
        println!("listening on http://{}", cfg.bind);
        let app = moralframe_service::http::router(Arc::new(svc), cfg.ui_dir.clone());
        moralframe_service::http::serve(listener, app)
            .await
            .map_err(|e| CliError::stage("serve", e))
    })
}

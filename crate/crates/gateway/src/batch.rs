use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use moralframe_core::labels::LabelRecord;
use moralframe_core::prompt::{parse_completion, render_prompt, PromptTemplate, ResamplePolicy};
use moralframe_core::TextItem;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::{Gateway, GatewayError, GatewayStats, LlmRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub resample: ResamplePolicy,
    /// In-flight request bound.
    pub concurrency: usize,
}

impl LabelSettings {
    pub fn new(model_name: impl Into<String>) -> Self {
        LabelSettings {
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: 512,
            resample: ResamplePolicy::default(),
            concurrency: 4,
        }
    }

    pub fn request(&self, prompt: String) -> LlmRequest {
        LlmRequest {
            prompt,
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// One record per corpus item, in corpus order.
    pub records: Vec<LabelRecord>,
    pub stats: GatewayStats,
}

impl BatchOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.usable_frame().is_none()).count()
    }
}

fn label_one(
    gateway: &Gateway,
    template: &PromptTemplate,
    settings: &LabelSettings,
    item: &TextItem,
) -> Result<LabelRecord, GatewayError> {
    let prompt = match render_prompt(template, item) {
        Ok(p) => p,
        Err(e) => return Ok(LabelRecord::failed(&item.id, e.to_string())),
    };
    let req = settings.request(prompt);
    let fingerprint = req.fingerprint();
    let mut last_error = String::new();
    let mut attempts = 0;
    for sample in 0..settings.resample.max_attempts() {
        attempts += 1;
        let raw = match gateway.complete_sample(&req, sample) {
            Ok(resp) => resp.raw_text,
            Err(GatewayError::EmptyCompletion) => {
                last_error = GatewayError::EmptyCompletion.to_string();
                continue;
            }
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                last_error = e.to_string();
                break;
            }
        };
        match parse_completion(&raw, item) {
            Ok(frame) => {
                let mut record = LabelRecord::ok(&item.id, frame);
                record.attempts = attempts;
                record.fingerprint = Some(fingerprint);
                return Ok(record);
            }
            Err(e) => {
                log::debug!("item {}: sample {sample} unparseable: {e}", item.id);
                last_error = e.to_string();
            }
        }
    }
    let mut record = LabelRecord::failed(&item.id, last_error);
    record.attempts = attempts;
    record.fingerprint = Some(fingerprint);
    Ok(record)
}

/// Labels every item. Items whose completions never parse are returned with
/// `status = failed`; only configuration and credential errors abort.
pub fn batch_label(
    gateway: &Gateway,
    corpus: &[TextItem],
    template: &PromptTemplate,
    settings: &LabelSettings,
) -> Result<BatchOutcome, GatewayError> {
    if corpus.is_empty() {
        return Err(GatewayError::EmptyCorpus);
    }
    let slots: Vec<Mutex<Option<LabelRecord>>> = corpus.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<GatewayError>> = Mutex::new(None);
    let workers = settings.concurrency.clamp(1, corpus.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = corpus.get(i) else { return };
                match label_one(gateway, template, settings, item) {
                    Ok(record) => *slots[i].lock() = Some(record),
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner() {
        return Err(e);
    }
    let records = slots
        .into_iter()
        .map(|s| s.into_inner().expect("every slot filled when no worker aborted"))
        .collect();
    Ok(BatchOutcome {
        records,
        stats: gateway.stats(),
    })
}

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use moralframe_core::labels::LabelStatus;
use moralframe_core::prompt::PromptTemplate;
use moralframe_core::{MoralFoundation, TextItem};
use moralframe_gateway::{
    batch_label, Backend, BackendError, FaultInjector, FixtureBackend, FixtureEntry, Gateway, GatewayError,
    HttpBackend, HttpConfig, LabelSettings, LlmRequest, ResponseCache, RetryPolicy, StubBackend,
};

fn corpus(n: usize) -> Vec<TextItem> {
    (0..n)
        .map(|i| TextItem::new(format!("t{i:03}"), format!("Masks protect nurses and patients, tweet {i}")))
        .collect()
}

const CARE: &str = " care/harm\nExplanation: protecting people from illness.\n\
Actor-Target-Polarity: (Masks, actor, positive); (nurses, target, positive)\n\
Explanation: masks shield the nurses.\n";

fn settings() -> LabelSettings {
    let mut s = LabelSettings::new("stub-model");
    s.concurrency = 4;
    s
}

#[test]
fn pilot_of_ten_items_labels_everything() {
    let gw = Gateway::new(StubBackend::fixed(CARE));
    let out = batch_label(&gw, &corpus(10), &PromptTemplate::default_protocol(), &settings()).unwrap();
    assert_eq!(out.records.len(), 10);
    assert_eq!(out.failures(), 0);
    for (record, item) in out.records.iter().zip(corpus(10)) {
        assert_eq!(record.item_id, item.id);
        let frame = record.usable_frame().unwrap();
        assert_eq!(frame.foundation, MoralFoundation::CareHarm);
        assert_eq!(frame.roles[0].span.map(|s| (s.start, s.end)), Some((0, 5)));
    }
}

#[test]
fn empty_corpus_is_rejected() {
    let gw = Gateway::new(StubBackend::fixed(CARE));
    assert_eq!(
        batch_label(&gw, &[], &PromptTemplate::default_protocol(), &settings()),
        Err(GatewayError::EmptyCorpus)
    );
}

#[test]
fn out_of_set_labels_fail_after_all_resamples() {
    let gw = Gateway::new(StubBackend::fixed("Moral Foundation: patriotism\nExplanation: x\nActor-Target-Polarity: none"));
    let s = settings();
    let out = batch_label(&gw, &corpus(5), &PromptTemplate::default_protocol(), &s).unwrap();
    assert!(out.records.iter().all(|r| r.status == LabelStatus::Failed));
    assert!(out.records.iter().all(|r| r.attempts == s.resample.max_attempts()));
    assert!(out.records[0].error.as_deref().unwrap().contains("patriotism"));
    assert_eq!(out.stats.remote_calls, 5 * 4);
}

#[test]
fn resample_recovers_from_a_bad_first_sample() {
    let gw = Gateway::new(StubBackend::new(|_, sample| {
        Ok(if sample == 0 { "I cannot decide".into() } else { CARE.into() })
    }));
    let out = batch_label(&gw, &corpus(3), &PromptTemplate::default_protocol(), &settings()).unwrap();
    assert_eq!(out.failures(), 0);
    assert!(out.records.iter().all(|r| r.attempts == 2));
}

#[test]
fn injected_transient_failures_are_absorbed() {
    let backend = Arc::new(FaultInjector::new(StubBackend::fixed(CARE), 0.10, 11));
    let gw = Gateway::new(backend.clone()).with_retry(RetryPolicy::no_delay(6));
    let items = corpus(150);
    let s = settings();
    let out = batch_label(&gw, &items, &PromptTemplate::default_protocol(), &s).unwrap();
    assert_eq!(out.failures(), 0);
    assert!(backend.injected() > 0);
    assert!(out.stats.retries >= backend.injected());
    // no request amplification
    let bound = items.len() as u64 * u64::from(s.resample.max_attempts()) * 7;
    assert!(out.stats.remote_calls <= bound);
}

#[test]
fn auth_error_aborts_the_batch() {
    let gw = Gateway::new(StubBackend::new(|_, _| Err(BackendError::Auth("bad key".into()))));
    let err = batch_label(&gw, &corpus(20), &PromptTemplate::default_protocol(), &settings()).unwrap_err();
    assert!(matches!(err, GatewayError::AuthError(_)));
    assert!(gw.stats().remote_calls <= 4);
}

#[test]
fn fixture_backend_is_deterministic_and_cached_on_disk() {
    let template = PromptTemplate::default_protocol();
    let s = settings();
    let items = corpus(12);
    let entries: Vec<FixtureEntry> = items
        .iter()
        .map(|item| FixtureEntry {
            fingerprint: s
                .request(moralframe_core::prompt::render_prompt(&template, item).unwrap())
                .fingerprint(),
            raw_text: CARE.into(),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let run = || {
        let gw = Gateway::new(FixtureBackend::from_entries(entries.clone()))
            .with_cache(ResponseCache::open(&cache_path).unwrap());
        let out = batch_label(&gw, &items, &template, &s).unwrap();
        let mut bytes = Vec::new();
        moralframe_core::labels::write_label_records(&mut bytes, &out.records).unwrap();
        (bytes, out.stats)
    };
    let (first, stats1) = run();
    let (second, stats2) = run();
    assert_eq!(first, second);
    assert_eq!(stats1.remote_calls, 12);
    assert_eq!(stats2.remote_calls, 0);
    assert_eq!(stats2.cache_hits, 12);
}

/// Serves `responses` in order over plain HTTP, one per connection, and
/// returns the received request bodies.
fn stub_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, handle)
}

fn http_backend(endpoint: String) -> HttpBackend {
    HttpBackend::new(HttpConfig {
        endpoint,
        model_name: "m".into(),
        api_key: "k".into(),
        timeout: Duration::from_secs(10),
    })
}

#[test]
fn http_backend_returns_the_completion_verbatim() {
    let reply = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": CARE}}]});
    let (url, server) = stub_server(vec![(503, "{}".into()), (200, reply.to_string())]);
    let gw = Gateway::new(http_backend(url)).with_retry(RetryPolicy::no_delay(2));
    let resp = gw.complete(&LlmRequest::new("Text: hi\nMoral Foundation:\n", "m")).unwrap();
    assert_eq!(resp.raw_text, CARE);
    assert_eq!(gw.stats().retries, 1);
    let bodies = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
    assert_eq!(sent["model"], "m");
    assert_eq!(sent["temperature"], 0.0);
    assert_eq!(sent["messages"][0]["content"], "Text: hi\nMoral Foundation:\n");
}

#[test]
fn http_backend_maps_401_to_auth_error() {
    let (url, server) = stub_server(vec![(401, "{}".into())]);
    let backend = http_backend(url);
    assert!(matches!(backend.call(&LlmRequest::new("p", "m"), 0), Err(BackendError::Auth(_))));
    server.join().unwrap();
}

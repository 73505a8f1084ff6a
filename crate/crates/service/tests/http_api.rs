use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use moralframe_core::export::StudyExport;
use moralframe_service::{ContentPack, Service, SystemClock};
use serde_json::{json, Value};
use ureq::Agent;

struct Server {
    base: String,
    agent: Agent,
}

impl Server {
    fn start(ui_dir: Option<PathBuf>) -> Self {
        let svc = Arc::new(Service::in_memory(ContentPack::default_pack(), Arc::new(SystemClock)));
        let app = moralframe_service::http::router(svc, ui_dir);
        let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app).await.unwrap();
            });
        });
        let addr = rx.recv().unwrap();
        let agent: Agent = Agent::config_builder().http_status_as_error(false).build().into();
        Server {
            base: format!("http://{addr}"),
            agent,
        }
    }

    fn get(&self, path: &str) -> (u16, String) {
        self.get_as(path, "")
    }

    fn get_as(&self, path: &str, token: &str) -> (u16, String) {
        let mut resp = self
            .agent
            .get(format!("{}{path}", self.base))
            .header("Authorization", format!("Bearer {token}"))
            .call()
            .unwrap();
        (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
    }

    fn get_json(&self, path: &str, token: &str) -> (u16, Value) {
        let (status, body) = self.get_as(path, token);
        (status, serde_json::from_str(&body).unwrap())
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        self.post_as(path, "", body)
    }

    fn post_as(&self, path: &str, token: &str, body: Value) -> (u16, Value) {
        let mut resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("Authorization", format!("Bearer {token}"))
            .send_json(&body)
            .unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }
}

fn items(n: usize) -> (Value, Value) {
    let items: Vec<Value> = (0..n)
        .map(|i| json!({"id": format!("i{i}"), "text": format!("Doctors urge parents to vaccinate, note {i}")}))
        .collect();
    let frames: Vec<Value> = (0..n)
        .map(|i| {
            json!({
                "item_id": format!("i{i}"),
                "status": "ok",
                "frame": {
                    "foundation": "care_harm",
                    "roles": [{"entity": "Doctors", "role": "actor", "polarity": "positive"}],
                    "foundation_explanation": "protecting children",
                    "role_explanation": "doctors act to protect"
                }
            })
        })
        .collect();
    (Value::Array(items), Value::Array(frames))
}

#[test]
fn full_round_trip_over_http() {
    let server = Server::start(None);
    assert_eq!(server.get_json("/v1/health", "").0, 200);

    let (items, frames) = items(4);
    let request = json!({"study_id": "web", "items": items, "frames": frames, "redundancy_k": 2,
                         "batch_size": 2, "seed": 7, "annotators": ["A", "B"]});
    let (status, created) = server.post("/v1/studies", request.clone());
    assert_eq!(status, 201, "{created}");
    assert_eq!(created["batches"].as_array().unwrap().len(), 2);
    assert_eq!(created["assignments"].as_array().unwrap().len(), 4);
    let token = |a: &str| created["tokens"][a].as_str().unwrap().to_string();
    let (ta, tb) = (token("A"), token("B"));
    assert_eq!(ta.len(), 32);
    assert_ne!(ta, tb);

    let (status, again) = server.post("/v1/studies", request);
    assert_eq!(status, 409);
    assert_eq!(again["error"], "StudyExists");

    let (status, err) = server.get_json("/v1/annotators/A/task", "");
    assert_eq!((status, err["error"].as_str()), (401, Some("InvalidToken")));
    assert_eq!(server.get_json("/v1/annotators/A/task", &tb).0, 401);
    assert_eq!(server.get_json("/v1/annotators/A/task", "0123").0, 401);
    let (status, session) = server.get_json("/v1/session", &tb);
    assert_eq!(status, 200);
    assert_eq!((session["annotator_id"].as_str(), session["phase"].as_str()), (Some("B"), Some("onboarding")));

    let (status, task) = server.get_json("/v1/annotators/A/task", &ta);
    assert_eq!(status, 200);
    assert_eq!(task["phase"], "onboarding");

    let judge_a0 = json!({"annotator_id": "A", "item_id": "i0", "verdict": "agree"});
    assert_eq!(server.post_as("/v1/judgments", &tb, judge_a0.clone()).0, 401);
    let (status, err) = server.post_as("/v1/judgments", &ta, judge_a0);
    assert_eq!(status, 403);
    assert_eq!(err["error"], "PracticeRequired");

    for (annotator, tok) in [("A", &ta), ("B", &tb)] {
        assert_eq!(server.post_as(&format!("/v1/annotators/{annotator}/onboarding"), tok, json!({})).0, 200);
        for _ in 0..2 {
            let (_, task) = server.get_json(&format!("/v1/annotators/{annotator}/task"), tok);
            assert_eq!(task["phase"], "practice");
            let (status, fb) = server.post_as(
                "/v1/practice",
                tok,
                json!({"annotator_id": annotator, "item_id": task["practice_id"], "verdict": "agree"}),
            );
            assert_eq!(status, 200, "{fb}");
        }
        loop {
            let (status, task) = server.get_json(&format!("/v1/annotators/{annotator}/task"), tok);
            if status == 409 {
                assert_eq!(task["error"], "StudyComplete");
                break;
            }
            assert_eq!(task["phase"], "main");
            assert!(task["frame"]["foundation_explanation"].is_string());
            let item = task["item"]["id"].clone();
            let body = if annotator == "B" && item == "i1" {
                json!({"annotator_id": annotator, "item_id": item, "verdict": "disagree"})
            } else {
                json!({"annotator_id": annotator, "item_id": item, "verdict": "agree"})
            };
            let (status, judged) = server.post_as("/v1/judgments", tok, body);
            if status == 422 {
                assert_eq!(judged["error"], "IncompleteCorrection");
                let (status, _) = server.post_as(
                    "/v1/judgments",
                    tok,
                    json!({"annotator_id": annotator, "item_id": item, "verdict": "disagree",
                           "correction": {"foundation": "none", "roles": []}}),
                );
                assert_eq!(status, 201);
            } else {
                assert_eq!(status, 201, "{judged}");
            }
        }
    }

    let (status, err) = server.post_as(
        "/v1/surveys",
        &ta,
        json!({"annotator_id": "A", "difficulty_without_expl": 0, "difficulty_with_expl": 2,
               "explanations_helpful": true, "reduced_cognitive_load": true, "avg_minutes_per_batch": 20.0}),
    );
    assert_eq!(status, 422);
    assert_eq!(err["error"], "ScoreOutOfRange");
    let (status, _) = server.post_as(
        "/v1/surveys",
        &ta,
        json!({"annotator_id": "A", "difficulty_without_expl": 4, "difficulty_with_expl": 2,
               "explanations_helpful": true, "reduced_cognitive_load": false, "avg_minutes_per_batch": 20.0}),
    );
    assert_eq!(status, 200);

    let (status, st) = server.get_json("/v1/studies/web", "");
    assert_eq!(status, 200);
    assert_eq!(st["complete"], true);
    assert_eq!(st["judgments"], 8);

    let (status, body) = server.get("/v1/studies/web/export");
    assert_eq!(status, 200);
    let export = StudyExport::read(body.as_bytes()).unwrap();
    assert_eq!(export.judgments.len(), 8);
    assert_eq!(export.surveys.len(), 1);
    assert_eq!(export.header.redundancy_k, 2);
    let disagreements: Vec<_> = export.judgments.iter().filter(|j| j.correction.is_some()).collect();
    assert_eq!(disagreements.len(), 1);
    assert_eq!(disagreements[0].item_id, "i1");
    assert!(!body.contains(&ta), "tokens never leave through the export");

    let (status, err) = server.get_json("/v1/studies/nope", "");
    assert_eq!(status, 404);
    assert_eq!(err["error"], "UnknownStudy");
}

#[test]
fn static_ui_is_served_without_escaping_its_root() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<h1>ok</h1>").unwrap();
    std::fs::write(dir.path().join("secret.txt"), "no").unwrap();
    let server = Server::start(Some(ui));
    assert_eq!(server.get("/ui"), (200, "<h1>ok</h1>".to_string()));
    assert_eq!(server.get("/ui/index.html").0, 200);
    assert_eq!(server.get("/ui/missing.js").0, 404);
    assert_eq!(server.get("/ui/..%2Fsecret.txt").0, 404);
}

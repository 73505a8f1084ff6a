//! JSON-over-HTTP API, versioned under `/v1`.
//!
//! | method | path | body / result |
//! |---|---|---|
//! | POST | `/v1/studies` | [`CreateStudyRequest`] -> [`StudyCreated`] |
//! | GET | `/v1/studies` | study ids |
//! | GET | `/v1/studies/{id}` | [`StudyStatus`] |
//! | POST | `/v1/studies/{id}/assignments` | `{"annotators": [...]}` -> [`Assigned`] |
//! | GET | `/v1/studies/{id}/export` | JSONL study export |
//! | GET | `/v1/session` | token owner -> [`Session`] |
//! | GET | `/v1/annotators/{id}/task` | [`TaskView`] |
//! | POST | `/v1/annotators/{id}/onboarding` | completes onboarding -> phase |
//! | POST | `/v1/practice` | [`Submission`] -> [`PracticeFeedback`] |
//! | POST | `/v1/judgments` | [`Submission`] -> recorded judgment |
//! | POST | `/v1/surveys` | survey response -> [`SurveyAck`] |
//!
//! Annotator-scoped routes (session, task, onboarding, practice, judgments,
//! surveys) need `Authorization: Bearer <token>` with the token issued to that
//! annotator at assignment time.
//!
//! Errors are `{"error": <code>, "message": <text>}` with a 4xx/5xx status.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use moralframe_core::export::AssignmentRecord;
use moralframe_core::labels::{read_label_records, LabelRecord};
use moralframe_core::{read_corpus, SurveyResponse, TextItem};
use serde::{Deserialize, Serialize};

use crate::engine::{
    CreateStudy, PracticeFeedback, Service, ServiceError, StudyCreated, StudyStatus, Submission, SurveyAck,
    TaskView, DEFAULT_BATCH_SIZE, DEFAULT_REDUNDANCY_K,
};

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(ServiceError::InvalidRequest(e.body_text()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::UnknownStudy(_) | ServiceError::UnknownAnnotator(_) => StatusCode::NOT_FOUND,
        ServiceError::StudyExists(_)
        | ServiceError::AnnotatorExists(_)
        | ServiceError::AlreadyAssigned(_)
        | ServiceError::OutOfOrderSubmission { .. }
        | ServiceError::DuplicateJudgment { .. }
        | ServiceError::StudyComplete(_)
        | ServiceError::StudyIncomplete(_) => StatusCode::CONFLICT,
        ServiceError::PracticeRequired => StatusCode::FORBIDDEN,
        ServiceError::InvalidToken => StatusCode::UNAUTHORIZED,
        ServiceError::MissingFrames(_)
        | ServiceError::InsufficientAnnotators { .. }
        | ServiceError::IncompleteCorrection(_)
        | ServiceError::InvalidCorrection(_)
        | ServiceError::ScoreOutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.0.code().to_string(),
            message: self.0.to_string(),
        };
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Study creation over HTTP. Items and frames come inline or from server-side
/// JSONL paths.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateStudyRequest {
    #[serde(default)]
    pub study_id: Option<String>,
    #[serde(default)]
    pub items: Option<Vec<TextItem>>,
    #[serde(default)]
    pub frames: Option<Vec<LabelRecord>>,
    #[serde(default)]
    pub corpus_path: Option<PathBuf>,
    #[serde(default)]
    pub frames_path: Option<PathBuf>,
    #[serde(default)]
    pub redundancy_k: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub ablation: bool,
    #[serde(default)]
    pub seed: u64,
    /// Assigns these annotators right away when present.
    #[serde(default)]
    pub annotators: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateStudyResponse {
    #[serde(flatten)]
    pub created: StudyCreated,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<AssignmentRecord>,
    /// annotator id -> access token
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tokens: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assigned {
    pub assignments: Vec<AssignmentRecord>,
    /// annotator id -> access token
    pub tokens: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub annotator_id: String,
    pub study_id: String,
    pub phase: crate::engine::Phase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignRequest {
    pub annotators: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseResponse {
    pub phase: crate::engine::Phase,
}

fn read_items(path: &Path) -> Result<Vec<TextItem>, ServiceError> {
    let file = std::fs::File::open(path)
        .map_err(|e| ServiceError::InvalidRequest(format!("{}: {e}", path.display())))?;
    read_corpus(std::io::BufReader::new(file)).map_err(|e| ServiceError::InvalidRequest(format!("{}: {e}", path.display())))
}

fn read_frames(path: &Path) -> Result<Vec<LabelRecord>, ServiceError> {
    let file = std::fs::File::open(path)
        .map_err(|e| ServiceError::InvalidRequest(format!("{}: {e}", path.display())))?;
    read_label_records(std::io::BufReader::new(file))
        .map_err(|e| ServiceError::InvalidRequest(format!("{}: {e}", path.display())))
}

fn resolve_request(req: CreateStudyRequest) -> Result<(CreateStudy, Option<Vec<String>>), ServiceError> {
    let items = match (req.items, &req.corpus_path) {
        (Some(items), None) => items,
        (None, Some(path)) => read_items(path)?,
        _ => return Err(ServiceError::InvalidRequest("give exactly one of items and corpus_path".into())),
    };
    let frames = match (req.frames, &req.frames_path) {
        (Some(frames), None) => frames,
        (None, Some(path)) => read_frames(path)?,
        _ => return Err(ServiceError::InvalidRequest("give exactly one of frames and frames_path".into())),
    };
    Ok((
        CreateStudy {
            study_id: req.study_id,
            items,
            frames,
            redundancy_k: req.redundancy_k.unwrap_or(DEFAULT_REDUNDANCY_K),
            batch_size: req.batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            ablation: req.ablation,
            seed: req.seed,
        },
        req.annotators,
    ))
}

async fn create_study(
    State(svc): State<Arc<Service>>,
    body: Result<Json<CreateStudyRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CreateStudyResponse>)> {
    let Json(req) = body?;
    let (create, annotators) = resolve_request(req)?;
    if let Some(a) = &annotators {
        if a.len() < create.redundancy_k {
            return Err(ServiceError::InsufficientAnnotators {
                needed: create.redundancy_k,
                available: a.len(),
            }
            .into());
        }
    }
    let created = svc.create_study(create)?;
    let (assignments, tokens) = match annotators {
        Some(a) => (svc.assign(&created.study_id, &a)?, svc.tokens(&created.study_id)?),
        None => Default::default(),
    };
    Ok((
        StatusCode::CREATED,
        Json(CreateStudyResponse {
            created,
            assignments,
            tokens,
        }),
    ))
}

async fn list_studies(State(svc): State<Arc<Service>>) -> Json<Vec<String>> {
    Json(svc.study_ids())
}

async fn study_status(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StudyStatus>> {
    Ok(Json(svc.status(&id)?))
}

async fn assign(
    State(svc): State<Arc<Service>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AssignRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Assigned>)> {
    let Json(req) = body?;
    let assignments = svc.assign(&id, &req.annotators)?;
    let tokens = svc.tokens(&id)?;
    Ok((StatusCode::CREATED, Json(Assigned { assignments, tokens })))
}

fn bearer_owner(svc: &Service, headers: &HeaderMap) -> Result<String, ServiceError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or(ServiceError::InvalidToken)?;
    svc.authenticate(token)
}

/// The bearer token must belong to `annotator_id`.
fn authorize(svc: &Service, headers: &HeaderMap, annotator_id: &str) -> Result<(), ServiceError> {
    if bearer_owner(svc, headers)? == annotator_id {
        Ok(())
    } else {
        Err(ServiceError::InvalidToken)
    }
}

async fn session(State(svc): State<Arc<Service>>, headers: HeaderMap) -> ApiResult<Json<Session>> {
    let annotator_id = bearer_owner(&svc, &headers)?;
    let state = svc.state();
    let a = &state.annotators[&annotator_id];
    Ok(Json(Session {
        study_id: a.study_id.clone(),
        phase: a.phase(svc.content().practice.len()),
        annotator_id,
    }))
}

async fn export(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let bundle = svc.export(&id)?;
    let mut body = Vec::new();
    bundle
        .write(&mut body)
        .map_err(|e| ServiceError::Storage(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn task(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<TaskView>> {
    authorize(&svc, &headers, &id)?;
    Ok(Json(svc.get_task(&id)?))
}

async fn onboarding(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<PhaseResponse>> {
    authorize(&svc, &headers, &id)?;
    Ok(Json(PhaseResponse {
        phase: svc.complete_onboarding(&id)?,
    }))
}

async fn practice(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    body: Result<Json<Submission>, JsonRejection>,
) -> ApiResult<Json<PracticeFeedback>> {
    let Json(s) = body?;
    authorize(&svc, &headers, &s.annotator_id)?;
    Ok(Json(svc.submit_practice(s)?))
}

async fn judgment(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    body: Result<Json<Submission>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<moralframe_core::Judgment>)> {
    let Json(s) = body?;
    authorize(&svc, &headers, &s.annotator_id)?;
    Ok((StatusCode::CREATED, Json(svc.submit_judgment(s)?)))
}

async fn survey(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    body: Result<Json<SurveyResponse>, JsonRejection>,
) -> ApiResult<Json<SurveyAck>> {
    let Json(s) = body?;
    authorize(&svc, &headers, &s.annotator_id)?;
    Ok(Json(svc.submit_survey(s)?))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

/// `/v1` routes, plus static files under `/ui/` when `ui_dir` is set.
pub fn router(svc: Arc<Service>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/studies", post(create_study).get(list_studies))
        .route("/v1/studies/{id}", get(study_status))
        .route("/v1/studies/{id}/assignments", post(assign))
        .route("/v1/studies/{id}/export", get(export))
        .route("/v1/session", get(session))
        .route("/v1/annotators/{id}/task", get(task))
        .route("/v1/annotators/{id}/onboarding", post(onboarding))
        .route("/v1/practice", post(practice))
        .route("/v1/judgments", post(judgment))
        .route("/v1/surveys", post(survey))
        .with_state(svc);
    match ui_dir {
        Some(dir) => {
            let dir = Arc::new(dir);
            let index = dir.clone();
            api.route("/ui", get(move || static_file(index.clone(), "index.html".into())))
                .route(
                    "/ui/{*path}",
                    get(move |UrlPath(path): UrlPath<String>| static_file(dir.clone(), path)),
                )
        }
        None => api,
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

async fn static_file(root: Arc<PathBuf>, path: String) -> Response {
    let rel = Path::new(if path.is_empty() { "index.html" } else { &path });
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let full = root.join(rel);
    let read = tokio::task::spawn_blocking(move || std::fs::read(&full).map(|bytes| (full, bytes))).await;
    match read {
        Ok(Ok((full, bytes))) => ([(header::CONTENT_TYPE, content_type(&full))], bytes).into_response(),
        _ => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

//! REST endpoints.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use embedscape::eval::{default_report_specs, layout_quality_report, DEFAULT_K_EVAL};
use embedscape::query::{query, EmbeddingProvider, Metric, QueryResult};
use embedscape::selection::{pick_record, pick2d_record, select_records, Ray, Selector};
use embedscape::store::{Snapshot, Store, StoredLayout};
use embedscape::wire::{decode_points, parse_ingest, parse_ingest_as};
use embedscape::{AnnotationOutcome, AnnotationSource, Error, ExportFormat, ExportOptions, Modality, Params, Project, ReducerSpec};

use crate::jobs::{JobKind, Jobs};

/// Embedding providers by name.
pub type Providers = BTreeMap<String, Arc<dyn EmbeddingProvider>>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub jobs: Jobs,
    pub providers: Arc<Providers>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", get(project_info))
        .route("/projects/{id}/records", post(ingest))
        .route("/projects/{id}/records/{rid}/preview", get(preview))
        .route("/projects/{id}/layouts", post(fit_layout).get(list_layouts))
        .route("/projects/{id}/layouts/import", post(import_layout))
        .route("/projects/{id}/annotations", post(annotate))
        .route("/projects/{id}/annotations/export", get(export))
        .route("/projects/{id}/eval", post(eval))
        .route("/jobs/{id}", get(job))
        .route("/reports/{id}", get(report))
        .route("/layouts/{id}", get(layout_info))
        .route("/layouts/{id}/points", get(points))
        .route("/layouts/{id}/records", get(layout_records))
        .route("/layouts/{id}/query", post(query_layout))
        .route("/layouts/{id}/pick", post(pick))
        .route("/layouts/{id}/select", post(select))
        .route("/layouts/{id}/annotate", post(annotate_selection))
        .with_state(state)
}

// ------------------------------------------------------------------ errors

pub enum ApiError {
    Core(Error),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

/// HTTP status and a stable machine-readable code for each error.
pub fn classify(e: &Error) -> (StatusCode, &'static str) {
    use Error::*;
    match e {
        UnknownProject(_) => (StatusCode::NOT_FOUND, "unknown_project"),
        UnknownLayout(_) => (StatusCode::NOT_FOUND, "unknown_layout"),
        UnknownRecord(_) => (StatusCode::NOT_FOUND, "unknown_record"),
        AlreadyExists(_) => (StatusCode::CONFLICT, "already_exists"),
        DuplicateId(_) => (StatusCode::CONFLICT, "duplicate_id"),
        UnsupportedFormat(_) => (StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_format"),
        Unsupported(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unsupported"),
        MissingLabels(_) => (StatusCode::UNPROCESSABLE_ENTITY, "missing_labels"),
        ProviderTimeout => (StatusCode::GATEWAY_TIMEOUT, "provider_timeout"),
        ProviderError { .. } => (StatusCode::BAD_GATEWAY, "provider_error"),
        ProviderUnavailable(_) => (StatusCode::BAD_GATEWAY, "provider_unavailable"),
        CorruptStore { .. } | Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        InvalidSchema(_) => (StatusCode::BAD_REQUEST, "invalid_schema"),
        InvalidDim(_) => (StatusCode::BAD_REQUEST, "invalid_dim"),
        DimMismatch { .. } => (StatusCode::BAD_REQUEST, "dim_mismatch"),
        NonFinite { .. } => (StatusCode::BAD_REQUEST, "non_finite"),
        InvalidLabel(_) => (StatusCode::BAD_REQUEST, "invalid_label"),
        UnknownReducer(_) => (StatusCode::BAD_REQUEST, "unknown_reducer"),
        CountMismatch { .. } => (StatusCode::BAD_REQUEST, "count_mismatch"),
        EmptyQuery => (StatusCode::BAD_REQUEST, "empty_query"),
        DegenerateQuery => (StatusCode::BAD_REQUEST, "degenerate_query"),
        InvalidK(_) => (StatusCode::BAD_REQUEST, "invalid_k"),
        InsufficientData(_) => (StatusCode::BAD_REQUEST, "insufficient_data"),
        InsufficientPool { .. } => (StatusCode::BAD_REQUEST, "insufficient_pool"),
        Malformed { .. } => (StatusCode::BAD_REQUEST, "malformed"),
        _ => (StatusCode::BAD_REQUEST, "invalid_request"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::Core(e) => {
                let (status, code) = classify(&e);
                (status, code, e.to_string())
            }
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        };
        if status.is_server_error() {
            tracing::error!(%message, "request failed");
        }
        (status, Json(json!({"error": code, "message": message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError::Core(Error::InvalidArgument(msg.into()))
}

/// Runs store work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> embedscape::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
        .map_err(ApiError::Core)
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::Core(Error::Malformed { what: "request body", msg: e.to_string() }))
}

// ------------------------------------------------------------------ projects

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Deserialize)]
struct CreateProject {
    name: String,
    dim: usize,
    #[serde(default)]
    label_schema: Vec<String>,
}

async fn create_project(State(s): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: CreateProject = parse_json(&body)?;
    let store = s.store.clone();
    let p = blocking(move || store.create_project(&req.name, req.dim, req.label_schema)).await?;
    Ok((StatusCode::CREATED, Json(json!({"project_id": p.id}))))
}

async fn list_projects(State(s): State<AppState>) -> Json<Vec<Project>> {
    Json(s.store.list_projects())
}

#[derive(Serialize)]
struct LayoutInfo {
    layout_id: String,
    project_id: String,
    reducer: String,
    out_dim: usize,
    count: usize,
    params: Params,
    seed: u64,
    fitted_at: u64,
    supports_query: bool,
}

impl LayoutInfo {
    fn of(l: &StoredLayout) -> Self {
        LayoutInfo {
            layout_id: l.id().to_string(),
            project_id: l.project_id.clone(),
            reducer: l.layout.reducer_name.clone(),
            out_dim: l.layout.out_dim,
            count: l.layout.count(),
            params: l.layout.params.clone(),
            seed: l.layout.seed,
            fitted_at: l.layout.fitted_at,
            supports_query: l.fitted.supports_transform(),
        }
    }
}

async fn project_info(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let snap = s.store.snapshot(&id)?;
    let labelled = snap.data.current_labels().len();
    Ok(Json(json!({
        "project": snap.data.project(),
        "records": snap.data.len(),
        "annotated": labelled,
        "layouts": snap.layouts.keys().collect::<Vec<_>>(),
        "reports": snap.reports.keys().collect::<Vec<_>>(),
    })))
}

async fn list_layouts(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<LayoutInfo>>> {
    let snap = s.store.snapshot(&id)?;
    Ok(Json(snap.layouts.values().map(|l| LayoutInfo::of(l)).collect()))
}

/// Picks the ingest parser from `Content-Type`, sniffing when it is absent.
async fn ingest(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(';').next().unwrap_or_default().trim().to_ascii_lowercase());
    let store = s.store.clone();
    let count = blocking(move || {
        let rows = match content_type.as_deref() {
            None | Some("") => parse_ingest(&body)?,
            Some(ct) => parse_ingest_as(ct, &body)?,
        };
        store.ingest(&id, rows)
    })
    .await?;
    Ok(Json(json!({"count": count})))
}

async fn preview(State(s): State<AppState>, Path((id, rid)): Path<(String, String)>) -> ApiResult<Json<serde_json::Value>> {
    let snap = s.store.snapshot(&id)?;
    let r = snap.data.record(&rid).ok_or(Error::UnknownRecord(rid))?;
    Ok(Json(json!({"modality": r.modality, "payload": r.payload})))
}

// ------------------------------------------------------------------ jobs

#[derive(Deserialize)]
struct FitRequest {
    reducer: String,
    out_dim: usize,
    #[serde(default)]
    params: Params,
    #[serde(default)]
    seed: u64,
}

impl FitRequest {
    fn spec(self) -> ReducerSpec {
        ReducerSpec {
            name: self.reducer,
            params: self.params,
            out_dim: self.out_dim,
            seed: self.seed,
        }
    }
}

async fn fit_layout(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let spec = parse_json::<FitRequest>(&body)?.spec();
    let pid = s.store.resolve(&id)?;
    if !s.store.registry().contains(&spec.name) {
        return Err(ApiError::Core(Error::UnknownReducer(spec.name)));
    }
    let handle = match s.jobs.submit(JobKind::FitLayout, &pid) {
        Ok(h) => h,
        Err(busy) => {
            return Ok((
                StatusCode::CONFLICT,
                Json(json!({
                    "error": "fit_in_progress",
                    "message": format!("project `{pid}` already has a fit job running"),
                    "job_id": busy.job_id,
                })),
            )
                .into_response())
        }
    };
    let job_id = handle.id().to_string();
    let store = s.store.clone();
    tokio::task::spawn_blocking(move || {
        handle.start();
        let result = store.fit_layout(&pid, &spec).map(|l| l.id().to_string());
        if let Err(e) = &result {
            tracing::warn!(project = %pid, error = %e, "fit failed");
        }
        handle.finish(result.map_err(|e| e.to_string()));
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": job_id}))).into_response())
}

#[derive(Deserialize)]
struct EvalRequest {
    #[serde(default)]
    space: Option<String>,
    #[serde(default)]
    k_eval: Option<usize>,
    #[serde(default)]
    reducers: Option<Vec<FitRequest>>,
}

async fn eval(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: EvalRequest = if body.is_empty() { EvalRequest { space: None, k_eval: None, reducers: None } } else { parse_json(&body)? };
    let snap = s.store.snapshot(&id)?;
    let pid = snap.data.project().id.clone();
    let specs = match req.space.as_deref() {
        Some("full_dim") => Vec::new(),
        None | Some("layout") => match req.reducers {
            Some(r) => r.into_iter().map(FitRequest::spec).collect(),
            None => default_report_specs(),
        },
        Some(other) => return Err(bad_request(format!("space must be full_dim or layout, got `{other}`"))),
    };
    let k_eval = req.k_eval.unwrap_or(DEFAULT_K_EVAL);
    if k_eval == 0 {
        return Err(ApiError::Core(Error::InvalidK("k_eval must be at least 1".into())));
    }
    // Cheap checks up front so the caller gets a 4xx rather than a failed job.
    embedscape::eval::project_split(&snap.data)?;
    for spec in &specs {
        if !s.store.registry().contains(&spec.name) {
            return Err(ApiError::Core(Error::UnknownReducer(spec.name.clone())));
        }
    }
    let handle = s.jobs.submit(JobKind::EvalReport, &pid).expect("eval jobs are not exclusive");
    let job_id = handle.id().to_string();
    let store = s.store.clone();
    tokio::task::spawn_blocking(move || {
        handle.start();
        let result = run_eval(&store, &pid, &specs, k_eval);
        handle.finish(result.map_err(|e| e.to_string()));
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": job_id}))))
}

fn run_eval(store: &Store, pid: &str, specs: &[ReducerSpec], k_eval: usize) -> embedscape::Result<String> {
    let snap = store.snapshot(pid)?;
    let report = layout_quality_report(&snap.data, store.registry(), specs, k_eval)?;
    store.save_report(pid, report)
}

async fn job(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    match s.jobs.get(&id) {
        Some(t) => Json(t).into_response(),
        None => (StatusCode::NOT_FOUND, Json(json!({"error": "unknown_job", "message": format!("unknown job `{id}`")}))).into_response(),
    }
}

#[derive(Deserialize)]
struct FormatQuery {
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    include_foreign: Option<bool>,
}

async fn report(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<FormatQuery>) -> Response {
    let Ok(r) = s.store.report(&id) else {
        return (StatusCode::NOT_FOUND, Json(json!({"error": "unknown_report", "message": format!("unknown report `{id}`")}))).into_response();
    };
    match q.format.as_deref() {
        Some("csv") => ([(header::CONTENT_TYPE, "text/csv")], r.to_csv()).into_response(),
        None | Some("json") => ([(header::CONTENT_TYPE, "application/json")], r.to_json()).into_response(),
        Some(other) => ApiError::Core(Error::UnsupportedFormat(other.to_string())).into_response(),
    }
}

// ------------------------------------------------------------------ layouts

fn layout_of(s: &AppState, id: &str) -> ApiResult<(Arc<Snapshot>, Arc<StoredLayout>)> {
    Ok(s.store.layout(id)?)
}

async fn layout_info(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<LayoutInfo>> {
    let (_, l) = layout_of(&s, &id)?;
    Ok(Json(LayoutInfo::of(&l)))
}

async fn points(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (_, l) = layout_of(&s, &id)?;
    let bytes = l.points_bytes();
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], Body::from(bytes)).into_response())
}

/// Record ids and current labels in point-stream row order.
async fn layout_records(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let (snap, _) = layout_of(&s, &id)?;
    let d = &snap.data;
    let labels: Vec<Option<&str>> = (0..d.len())
        .map(|i| d.current_label_at(i).and_then(|c| d.project().label_name(c.label)))
        .collect();
    Ok(Json(json!({
        "revision": d.project().revision,
        "record_ids": d.records().iter().map(|r| &r.record_id).collect::<Vec<_>>(),
        "labels": labels,
    })))
}

#[derive(Deserialize)]
struct QueryRequest {
    #[serde(default)]
    provider: Option<String>,
    #[serde(default)]
    modality: Modality,
    payload: String,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    metric: Metric,
}

fn default_k() -> usize {
    10
}

async fn query_layout(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<QueryResult>> {
    let req: QueryRequest = parse_json(&body)?;
    let (snap, l) = layout_of(&s, &id)?;
    let name = req.provider.unwrap_or_else(|| "builtin".into());
    let provider = s
        .providers
        .get(&name)
        .cloned()
        .ok_or_else(|| bad_request(format!("unknown provider `{name}`; configured: {:?}", s.providers.keys().collect::<Vec<_>>())))?;
    let out = blocking(move || query(&snap.data, &l.fitted, provider.as_ref(), req.modality, &req.payload, req.k, req.metric)).await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
struct PickRequest {
    #[serde(default)]
    ray: Option<Ray>,
    #[serde(default)]
    angular_radius: Option<f64>,
    /// 2D layouts: click position and radius instead of a ray.
    #[serde(default)]
    point: Option<[f64; 2]>,
    #[serde(default)]
    radius: Option<f64>,
}

async fn pick(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: PickRequest = parse_json(&body)?;
    let (snap, l) = layout_of(&s, &id)?;
    let hit = match (req.ray, req.point) {
        (Some(ray), None) => {
            let alpha = req.angular_radius.ok_or_else(|| bad_request("angular_radius is required with ray"))?;
            pick_record(&snap.data, &l.layout, &ray, alpha)?
        }
        (None, Some(point)) => {
            let r = req.radius.ok_or_else(|| bad_request("radius is required with point"))?;
            pick2d_record(&snap.data, &l.layout, point, r)?
        }
        _ => return Err(bad_request("give either ray + angular_radius or point + radius")),
    };
    Ok(Json(json!({"record_id": hit})))
}

async fn select(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let sel: Selector = parse_json(&body)?;
    let (snap, l) = layout_of(&s, &id)?;
    let ids = select_records(&snap.data, &l.layout, &sel)?;
    Ok(Json(json!({"record_ids": ids})))
}

#[derive(Deserialize)]
struct SelectionAnnotation {
    center: Vec<f64>,
    radius: f64,
    label: String,
}

async fn annotate_selection(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<AnnotationOutcome>> {
    let req: SelectionAnnotation = parse_json(&body)?;
    let store = s.store.clone();
    let out = blocking(move || {
        let sel = Selector::new(req.center, req.radius)?;
        store.annotate_selection(&id, &sel, &req.label)
    })
    .await?;
    Ok(Json(out))
}

async fn import_layout(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<(StatusCode, Json<LayoutInfo>)> {
    let store = s.store.clone();
    let l = blocking(move || {
        let ps = decode_points(&body)?;
        store.import_layout(&id, ps.coords, ps.out_dim)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(LayoutInfo::of(&l))))
}

// ------------------------------------------------------------------ annotations

#[derive(Deserialize)]
struct AnnotateRequest {
    record_ids: Vec<String>,
    label: String,
    #[serde(default = "default_source")]
    source: AnnotationSource,
}

fn default_source() -> AnnotationSource {
    AnnotationSource::SinglePick
}

async fn annotate(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<AnnotationOutcome>> {
    let req: AnnotateRequest = parse_json(&body)?;
    let store = s.store.clone();
    let out = blocking(move || store.annotate(&id, &req.record_ids, &req.label, req.source)).await?;
    Ok(Json(out))
}

async fn export(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<FormatQuery>) -> ApiResult<Response> {
    let format: ExportFormat = q.format.as_deref().unwrap_or("csv").parse()?;
    let opts = ExportOptions {
        include_foreign: q.include_foreign.unwrap_or(false),
    };
    let store = s.store.clone();
    let bytes = blocking(move || store.export(&id, format, opts)).await?;
    let ct = match format {
        ExportFormat::Csv => "text/csv",
        ExportFormat::Ndjson => "application/x-ndjson",
    };
    Ok(([(header::CONTENT_TYPE, ct)], Body::from(bytes)).into_response())
}

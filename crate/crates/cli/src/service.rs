//! Local HTTP/JSON API over a project.
//!
//! Reads run concurrently. Mutations take the project write lock without
//! waiting and answer 409 while a job or another mutation holds it. Long
//! computations (matrix, extraction, cv, k-means) run as background jobs
//! polled through `GET /jobs/{id}`, at most one per kind at a time.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use uidkit_core::learn::Algorithm;
use uidkit_core::project::{IngestFailure, IngestReport, Project};
use uidkit_core::{Error, ExportFormat, Linkage, PixelRect};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Extract,
    Matrix,
    Cv,
    Kmeans,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobHandle {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: f64,
    /// API path of the result once done.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Default)]
struct Jobs {
    next: u64,
    handles: BTreeMap<String, JobHandle>,
}

pub struct AppState {
    project: RwLock<Project>,
    jobs: Mutex<Jobs>,
}

type Shared = Arc<AppState>;

#[derive(Debug, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn field(mut self, field: impl Into<String>, message: impl Into<String>) -> Self {
        self.fields.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
        self
    }

    fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", "project is busy with a running job or mutation")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match &e {
            Error::UnknownId { .. } => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            Error::Conflict(_) | Error::Duplicate { .. } => ApiError::new(StatusCode::CONFLICT, "conflict", message),
            Error::OutOfBounds { edge, .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "validation", message.clone()).field(format!("rect.{edge}"), message)
            }
            Error::Invalid { field, message: m } => {
                ApiError::new(StatusCode::BAD_REQUEST, "validation", message.clone()).field(field.clone(), m.clone())
            }
            Error::MissingLabels(ids) => {
                let mut err = ApiError::new(StatusCode::BAD_REQUEST, "validation", message);
                for id in ids {
                    err = err.field(format!("labels.{id}"), "missing label");
                }
                err
            }
            _ if e.is_validation() => ApiError::new(StatusCode::BAD_REQUEST, "validation", message),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "computation", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": { "kind": self.kind, "message": self.message, "fields": self.fields }
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose decoding errors carry the offending field path.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "validation", e.to_string()))?;
        parse_body(&bytes).map(Body)
    }
}

/// An absent body counts as `{}`.
pub struct OptionalBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for OptionalBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "validation", e.to_string()))?;
        let bytes = if bytes.iter().all(u8::is_ascii_whitespace) { Bytes::from_static(b"{}") } else { bytes };
        parse_body(&bytes).map(OptionalBody)
    }
}

fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.inner().to_string();
        ApiError::new(StatusCode::BAD_REQUEST, "validation", format!("invalid request body: {inner}"))
            .field(if path == "." { String::new() } else { path }, inner)
    })
}

impl AppState {
    fn read(&self) -> RwLockReadGuard<'_, Project> {
        self.project.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> ApiResult<RwLockWriteGuard<'_, Project>> {
        use std::sync::TryLockError;
        match self.project.try_write() {
            Ok(g) => Ok(g),
            Err(TryLockError::Poisoned(p)) => Ok(p.into_inner()),
            Err(TryLockError::WouldBlock) => Err(ApiError::busy()),
        }
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut JobHandle)) {
        let mut jobs = self.jobs.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(h) = jobs.handles.get_mut(id) {
            f(h);
        }
    }
}

type Work = Box<dyn FnOnce(&Project, &(dyn Fn(f64) + Sync)) -> uidkit_core::Result<String> + Send>;

fn start_job(state: &Shared, kind: JobKind, work: Work) -> ApiResult<(StatusCode, Json<JobHandle>)> {
    let handle = {
        let mut jobs = state.jobs.lock().unwrap_or_else(|p| p.into_inner());
        let busy = jobs
            .handles
            .values()
            .any(|h| h.kind == kind && matches!(h.state, JobState::Queued | JobState::Running));
        if busy {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "conflict",
                format!("a {kind:?} job is already running").to_lowercase(),
            ));
        }
        jobs.next += 1;
        let handle = JobHandle {
            id: format!("job-{}", jobs.next),
            kind,
            state: JobState::Queued,
            progress: 0.0,
            result: None,
            error: None,
        };
        jobs.handles.insert(handle.id.clone(), handle.clone());
        handle
    };
    let st = state.clone();
    let id = handle.id.clone();
    std::thread::spawn(move || {
        let project = st.read();
        st.update_job(&id, |h| h.state = JobState::Running);
        let progress = |f: f64| st.update_job(&id, |h| h.progress = h.progress.max(f.clamp(0.0, 1.0)));
        let outcome = work(&project, &progress);
        drop(project);
        st.update_job(&id, |h| match outcome {
            Ok(loc) => {
                h.progress = 1.0;
                h.result = Some(loc);
                h.state = JobState::Done;
            }
            Err(e) => {
                h.error = Some(e.to_string());
                h.state = JobState::Failed;
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(handle)))
}

pub fn router(project: Project) -> Router {
    let state: Shared = Arc::new(AppState {
        project: RwLock::new(project),
        jobs: Mutex::new(Jobs::default()),
    });
    Router::new()
        .route("/corpus", get(get_corpus))
        .route("/corpus/images", post(post_images))
        .route("/corpus/images/{id}/raw", get(get_raw))
        .route("/labels/{target}", post(post_labels))
        .route("/categories", get(get_categories).post(post_category))
        .route("/categories/{name}", delete(delete_category))
        .route("/prototypes", get(get_prototypes).post(post_prototype))
        .route("/prototypes/matrix", post(post_matrix).get(get_matrix))
        .route("/prototypes/dendrogram", get(get_dendrogram))
        .route("/prototypes/{id}", get(get_prototype).delete(delete_prototype))
        .route("/prototypes/{id}/image", get(get_prototype_image))
        .route("/features/extract", post(post_extract))
        .route("/datasets", get(get_datasets))
        .route("/datasets/{id}", get(get_dataset))
        .route("/learn/cv", post(post_cv))
        .route("/learn/kmeans", post(post_kmeans))
        .route("/reports", get(get_reports))
        .route("/reports/{id}", get(get_report))
        .route("/jobs/{id}", get(get_job))
        .with_state(state)
}

pub async fn serve(project: Project, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(project)).await
}

// ---- corpus ----

async fn get_corpus(State(st): State<Shared>) -> Json<serde_json::Value> {
    let p = st.read();
    let m = p.manifest();
    let images: Vec<_> = m
        .images
        .iter()
        .map(|(id, e)| {
            let labels: BTreeMap<&str, &str> = m
                .labels
                .iter()
                .filter_map(|(t, map)| map.get(id).map(|l| (t.as_str(), l.as_str())))
                .collect();
            json!({ "id": id, "name": e.name, "width": e.width, "height": e.height, "labels": labels })
        })
        .collect();
    let targets: Vec<&String> = m.labels.keys().collect();
    Json(json!({ "images": images, "targets": targets }))
}

async fn post_images(State(st): State<Shared>, mut multipart: Multipart) -> ApiResult<(StatusCode, Json<IngestReport>)> {
    let mut files = Vec::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "validation", e.to_string()))?
    {
        let name = field.file_name().or(field.name()).map(str::to_string);
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "validation", e.to_string()))?;
        files.push((name, bytes));
    }
    if files.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "validation", "no files in upload").field("files", "required"));
    }
    let mut p = st.write()?;
    let mut report = IngestReport::default();
    for (name, bytes) in files {
        match p.ingest_bytes(name.as_deref(), &bytes) {
            Ok(id) => report.ids.push(id),
            Err(e) if e.is_validation() => report.failures.push(IngestFailure {
                path: name.unwrap_or_default(),
                message: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    let status = if report.ids.is_empty() { StatusCode::BAD_REQUEST } else { StatusCode::CREATED };
    Ok((status, Json(report)))
}

async fn get_raw(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let p = st.read();
    let entry = p.image(&id)?;
    let ct = if entry.file.ends_with(".jpg") { "image/jpeg" } else { "image/png" };
    let bytes = p.image_bytes(&id)?;
    Ok(([(header::CONTENT_TYPE, ct)], bytes).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelsBody {
    labels: BTreeMap<String, String>,
}

async fn post_labels(
    State(st): State<Shared>,
    Path(target): Path<String>,
    Body(body): Body<LabelsBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut p = st.write()?;
    if let Some(id) = body.labels.keys().find(|id| p.image(id).is_err()) {
        return Err(ApiError::from(Error::UnknownId {
            kind: "image",
            id: id.clone(),
        })
        .field(format!("labels.{id}"), "unknown image id"));
    }
    p.set_labels(&target, &body.labels)?;
    Ok(Json(json!({ "target": target, "labeled": p.labels(&target).map_or(0, |m| m.len()) })))
}

// ---- categories and prototypes ----

async fn get_categories(State(st): State<Shared>) -> Json<serde_json::Value> {
    let p = st.read();
    let ps = p.prototypes();
    let cats: Vec<_> = ps
        .categories()
        .iter()
        .map(|c| json!({ "index": c.index, "name": c.name, "prototypes": ps.in_category(c.index).count() }))
        .collect();
    Json(json!({ "categories": cats }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoryBody {
    name: String,
}

async fn post_category(State(st): State<Shared>, Body(body): Body<CategoryBody>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let mut p = st.write()?;
    p.add_category(&body.name)?;
    let index = p.prototypes().category_index(body.name.trim());
    Ok((StatusCode::CREATED, Json(json!({ "index": index, "name": body.name.trim() }))))
}

async fn delete_category(State(st): State<Shared>, Path(name): Path<String>) -> ApiResult<StatusCode> {
    st.write()?.remove_category(&name)?;
    Ok(StatusCode::NO_CONTENT)
}

fn prototype_json(p: &Project, id: &str) -> ApiResult<serde_json::Value> {
    let ps = p.prototypes();
    let proto = ps.get(id).ok_or_else(|| Error::UnknownId {
        kind: "prototype",
        id: id.to_string(),
    })?;
    Ok(json!({
        "id": proto.id,
        "category": ps.categories()[proto.category].name,
        "source_id": proto.source_id,
        "rect": proto.rect,
        "complexity": proto.complexity(),
    }))
}

async fn get_prototypes(State(st): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    let p = st.read();
    let list = p
        .prototypes()
        .ordered()
        .iter()
        .map(|proto| prototype_json(&p, &proto.id))
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(json!({ "prototypes": list, "window": p.prototypes().window_size() })))
}

async fn get_prototype(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    prototype_json(&st.read(), &id).map(Json)
}

async fn get_prototype_image(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let png = st.read().prototype_png(&id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PrototypeBody {
    source_id: String,
    rect: PixelRect,
    category: String,
}

async fn post_prototype(State(st): State<Shared>, Body(body): Body<PrototypeBody>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let mut p = st.write()?;
    let id = p.add_prototype(&body.category, &body.source_id, body.rect).map_err(|e| {
        let field = match &e {
            Error::UnknownId { kind: "category", .. } => Some("category"),
            Error::UnknownId { kind: "image", .. } => Some("source_id"),
            _ => None,
        };
        let mut err = ApiError::from(e);
        if let Some(f) = field {
            err.status = StatusCode::BAD_REQUEST;
            err.kind = "validation";
            err = err.field(f, "unknown id");
        }
        err
    })?;
    Ok((StatusCode::CREATED, Json(prototype_json(&p, &id)?)))
}

async fn delete_prototype(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    st.write()?.remove_prototype(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_matrix(State(st): State<Shared>) -> ApiResult<(StatusCode, Json<JobHandle>)> {
    start_job(
        &st,
        JobKind::Matrix,
        Box::new(|p, _| p.compute_matrix().map(|_| "/prototypes/matrix".to_string())),
    )
}

async fn get_matrix(State(st): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    let p = st.read();
    let m = p
        .fresh_matrix()?
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", "no distance matrix for the current prototypes"))?;
    Ok(Json(json!({ "fingerprint": p.prototype_fingerprint(), "matrix": m })))
}

#[derive(Deserialize)]
struct DendrogramQuery {
    cut: Option<usize>,
    linkage: Option<String>,
}

async fn get_dendrogram(State(st): State<Shared>, Query(q): Query<DendrogramQuery>) -> ApiResult<Response> {
    let linkage: Linkage = match q.linkage.as_deref() {
        Some(s) => s.parse()?,
        None => Linkage::Average,
    };
    let report = st.read().dendrogram(q.cut, linkage).map_err(|e| match e {
        Error::CutOutOfRange { .. } => ApiError::from(e).field("cut", "out of range"),
        e => e.into(),
    })?;
    Ok(Json(report).into_response())
}

// ---- features, datasets, learning ----

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExtractBody {
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    audit: bool,
}

async fn post_extract(State(st): State<Shared>, OptionalBody(body): OptionalBody<ExtractBody>) -> ApiResult<(StatusCode, Json<JobHandle>)> {
    {
        let p = st.read();
        p.prototypes().check_complete()?;
        if let Some(t) = &body.target {
            if p.labels(t).is_none() {
                return Err(ApiError::from(Error::UnknownId {
                    kind: "target",
                    id: t.clone(),
                })
                .field("target", "unknown target"));
            }
        }
    }
    start_job(
        &st,
        JobKind::Extract,
        Box::new(move |p, progress| {
            p.extract(body.target.as_deref(), body.audit, &|done, total| progress(done as f64 / total as f64))
                .map(|id| format!("/datasets/{id}"))
        }),
    )
}

async fn get_datasets(State(st): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    Ok(Json(json!({ "datasets": st.read().datasets()? })))
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

fn negotiate(q: Option<&str>, headers: &HeaderMap) -> ApiResult<ExportFormat> {
    if let Some(f) = q {
        return f.parse().map_err(|e: Error| ApiError::from(e).field("format", "csv, arff or json"));
    }
    let accept = headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()).unwrap_or("");
    Ok(if accept.contains("text/csv") {
        ExportFormat::Csv
    } else if accept.contains("text/plain") {
        ExportFormat::Arff
    } else {
        ExportFormat::Json
    })
}

async fn get_dataset(
    State(st): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<FormatQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let format = negotiate(q.format.as_deref(), &headers)?;
    let body = st.read().dataset(&id)?.export(format)?;
    let disposition = format!("inline; filename=\"{id}.{}\"", format.extension());
    let disposition = if format == ExportFormat::Arff { disposition.replacen("inline", "attachment", 1) } else { disposition };
    Ok((
        [(header::CONTENT_TYPE, format.content_type().to_string()), (header::CONTENT_DISPOSITION, disposition)],
        body,
    )
        .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CvBody {
    dataset_id: String,
    algorithm: String,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default)]
    seed: u64,
}

fn default_k() -> usize {
    1
}

fn default_folds() -> usize {
    10
}

async fn post_cv(State(st): State<Shared>, Body(body): Body<CvBody>) -> ApiResult<(StatusCode, Json<JobHandle>)> {
    let algorithm = Algorithm::parse(&body.algorithm, body.k).map_err(|e| {
        let field = if matches!(&e, Error::Invalid { field, .. } if field == "k") { "k" } else { "algorithm" };
        ApiError::new(StatusCode::BAD_REQUEST, "validation", e.to_string()).field(field, e.to_string())
    })?;
    st.read().dataset(&body.dataset_id).map_err(|e| ApiError::from(e).field("dataset_id", "unknown dataset"))?;
    start_job(
        &st,
        JobKind::Cv,
        Box::new(move |p, _| {
            p.run_cv(&body.dataset_id, algorithm, body.folds, body.seed)
                .map(|(id, _)| format!("/reports/{id}"))
        }),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KmeansBody {
    dataset_id: String,
    #[serde(default = "default_clusters")]
    k: usize,
    #[serde(default)]
    seed: u64,
}

fn default_clusters() -> usize {
    3
}

async fn post_kmeans(State(st): State<Shared>, Body(body): Body<KmeansBody>) -> ApiResult<(StatusCode, Json<JobHandle>)> {
    st.read().dataset(&body.dataset_id).map_err(|e| ApiError::from(e).field("dataset_id", "unknown dataset"))?;
    start_job(
        &st,
        JobKind::Kmeans,
        Box::new(move |p, _| p.run_kmeans(&body.dataset_id, body.k, body.seed).map(|(id, _)| format!("/reports/{id}"))),
    )
}

async fn get_reports(State(st): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    Ok(Json(json!({ "reports": st.read().reports()? })))
}

async fn get_report(State(st): State<Shared>, Path(id): Path<String>, Query(q): Query<FormatQuery>) -> ApiResult<Response> {
    let report = st.read().report(&id)?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("text") => {
            let text = match &report {
                uidkit_core::project::Report::Cv { report, .. } => report.render_table(),
                uidkit_core::project::Report::Kmeans { report, .. } => report.render_table(),
            };
            Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
        }
        Some(other) => Err(ApiError::new(StatusCode::BAD_REQUEST, "validation", format!("unknown format `{other}`"))
            .field("format", "json or text")),
    }
}

async fn get_job(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<JobHandle>> {
    let jobs = st.jobs.lock().unwrap_or_else(|p| p.into_inner());
    jobs.handles
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| Error::UnknownId { kind: "job", id }.into())
}

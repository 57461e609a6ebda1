//! HTTP service for interactive outfit editing.
//!
//! A session holds one outfit. Point and template edits are recorded so they
//! can be undone, and every edit re-renders only the garments it changed.
//! Sessions are snapshotted to disk and rebuilt by replay on restart.

mod session;

use std::collections::HashMap;
use std::future::Future;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use drape_core::dsl::{library_with_shipped, print_template, EditTemplate};
use drape_core::pipeline::{Engine, ErrorClass, OutfitSpec, TemplateApplication};
use drape_core::GarmentCategory;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use session::{
    Edit, GarmentSummary, PointChange, PointRef, RenderLinks, Session, SessionError, SessionSummary, SnapshotDoc,
};

#[derive(Debug, Clone)]
pub struct Config {
    /// Outfit specs posted to the service resolve paths against this root.
    pub assets_root: PathBuf,
    /// Extra templates on top of the shipped ones.
    pub template_dir: Option<PathBuf>,
    /// Where session snapshots live; `None` disables persistence.
    pub snapshot_dir: Option<PathBuf>,
    pub snapshot_interval: Duration,
}

impl Config {
    pub fn new(assets_root: impl Into<PathBuf>) -> Self {
        Self {
            assets_root: assets_root.into(),
            template_dir: None,
            snapshot_dir: None,
            snapshot_interval: Duration::from_secs(30),
        }
    }
}

type Shared = Arc<Mutex<Session>>;

pub struct AppState {
    pub config: Config,
    engine: Arc<Engine>,
    library: Arc<Vec<EditTemplate>>,
    sessions: RwLock<HashMap<String, Shared>>,
    next_id: AtomicU64,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Templates(#[from] drape_core::dsl::LibraryError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl AppState {
    pub fn new(config: Config) -> Result<Self, StartupError> {
        let engine = Engine::default();
        let library = library_with_shipped(config.template_dir.as_deref(), engine.schema)?;
        Ok(Self {
            config,
            engine: Arc::new(engine),
            library: Arc::new(library),
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn library(&self) -> &[EditTemplate] {
        &self.library
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session {id}")))
    }

    fn fresh_id(&self) -> String {
        format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn insert(&self, s: Session) -> Shared {
        if let Some(n) = s.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
            self.next_id.fetch_max(n + 1, Ordering::Relaxed);
        }
        let id = s.id.clone();
        let shared = Arc::new(Mutex::new(s));
        self.sessions.write().expect("session map").insert(id, shared.clone());
        shared
    }

    /// Rebuilds every snapshotted session. Snapshots that fail to replay are
    /// logged and left on disk.
    pub fn restore_snapshots(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.config.snapshot_dir else { return Ok(0) };
        if !dir.exists() {
            return Ok(0);
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let mut restored = 0;
        for path in paths {
            let doc = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| serde_json::from_str::<SnapshotDoc>(&t).map_err(|e| e.to_string()));
            match doc.map(|d| Session::restore(d, self.engine.clone(), &self.library).map_err(|e| e.to_string())) {
                Ok(Ok(s)) => {
                    self.insert(s);
                    restored += 1;
                }
                Ok(Err(e)) | Err(e) => log::warn!("{}: not restored: {e}", path.display()),
            }
        }
        Ok(restored)
    }

    /// Writes snapshots of sessions changed since their last snapshot.
    pub fn write_snapshots(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.config.snapshot_dir else { return Ok(0) };
        std::fs::create_dir_all(dir)?;
        let sessions: Vec<Shared> = self.sessions.read().expect("session map").values().cloned().collect();
        let mut written = 0;
        for shared in sessions {
            let mut s = shared.lock().expect("session");
            if !s.dirty {
                continue;
            }
            let text = serde_json::to_string_pretty(&s.snapshot()).expect("snapshot serializes");
            let tmp = dir.join(format!("{}.json.tmp", s.id));
            std::fs::write(&tmp, text)?;
            std::fs::rename(&tmp, dir.join(format!("{}.json", s.id)))?;
            s.dirty = false;
            written += 1;
        }
        Ok(written)
    }
}

/// Error body: `{"error": kind, "message": ..., "stage"?, "garment"?}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::NotFound(what) => Self::not_found(what),
            SessionError::Invalid(m) => Self::invalid(m),
            SessionError::Conflict(m) => Self::new(StatusCode::CONFLICT, "conflict", m),
            SessionError::Pipeline(p) => {
                let status = match p.class {
                    ErrorClass::Validation => StatusCode::UNPROCESSABLE_ENTITY,
                    ErrorClass::Render => StatusCode::INTERNAL_SERVER_ERROR,
                };
                Self {
                    status,
                    body: json!({
                        "error": "pipeline",
                        "stage": p.stage,
                        "garment": p.garment,
                        "message": p.message,
                    }),
                }
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/templates", get(templates))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/garments/{garment}/points", patch(patch_points))
        .route("/sessions/{id}/templates/{name}", post(apply_template))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/render.png", get(render_png))
        .route("/sessions/{id}/layout.png", get(layout_png))
        .route("/images/{file}", get(image))
        .with_state(state)
}

/// Serves until `shutdown` resolves, snapshotting on an interval and once
/// more on the way out.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let snapshots = state.config.snapshot_dir.is_some().then(|| {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(state.config.snapshot_interval);
            tick.tick().await;
            loop {
                tick.tick().await;
                let s = state.clone();
                match tokio::task::spawn_blocking(move || s.write_snapshots()).await {
                    Ok(Ok(n)) if n > 0 => log::info!("snapshotted {n} session(s)"),
                    Ok(Ok(_)) => {}
                    Ok(Err(e)) => log::error!("snapshot failed: {e}"),
                    Err(e) => log::error!("snapshot task: {e}"),
                }
            }
        })
    });
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    if let Some(task) = snapshots {
        task.abort();
    }
    tokio::task::spawn_blocking(move || state.write_snapshots())
        .await
        .map_err(std::io::Error::other)??;
    Ok(())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        body: json!({ "error": "internal", "message": e.to_string() }),
    })?
}

async fn schema(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let s = state.engine.schema;
    Json(json!({ "version": s.version, "points": s.points() }))
}

#[derive(Serialize)]
struct TemplateInfo {
    name: String,
    categories: Vec<GarmentCategory>,
    requires: Option<Vec<GarmentCategory>>,
    source: String,
}

async fn templates(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let list: Vec<TemplateInfo> = state
        .library
        .iter()
        .map(|t| TemplateInfo {
            name: t.name.clone(),
            categories: t.selector.categories(),
            requires: t.requires.as_ref().map(|r| r.categories()),
            source: print_template(t),
        })
        .collect();
    Json(list)
}

/// Posted specs may only name files under the assets root.
fn check_relative(path: &Path) -> ApiResult<()> {
    let ok = path
        .components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if ok {
        Ok(())
    } else {
        Err(ApiError::invalid(format!(
            "path {} must be relative and stay inside the assets root",
            path.display()
        )))
    }
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let spec: OutfitSpec =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(format!("outfit spec: {e}")))?;
    let p = &spec.person;
    for path in [&p.image, &p.pose, &p.layout]
        .into_iter()
        .chain(spec.garments.iter().map(|g| &g.asset))
        .chain(spec.template_dir.iter())
    {
        check_relative(path)?;
    }
    let summary = blocking(move || {
        let id = state.fresh_id();
        let root = state.config.assets_root.clone();
        let s = Session::create(id, spec, &root, state.engine.clone(), &state.library)?;
        let summary = s.summary();
        state.insert(s);
        Ok(summary)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionSummary>> {
    let s = state.session(&id)?;
    let summary = s.lock().expect("session").summary();
    Ok(Json(summary))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchBody {
    changes: Vec<PointChange>,
}

#[derive(Serialize)]
struct PatchResponse {
    session: SessionSummary,
    warnings: Vec<String>,
}

async fn patch_points(
    State(state): State<Arc<AppState>>,
    UrlPath((id, garment)): UrlPath<(String, usize)>,
    body: Bytes,
) -> ApiResult<Json<PatchResponse>> {
    let shared = state.session(&id)?;
    let body: PatchBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(format!("point changes: {e}")))?;
    blocking(move || {
        let mut s = shared.lock().expect("session");
        let warnings = s.patch(garment, &body.changes)?;
        Ok(Json(PatchResponse {
            session: s.summary(),
            warnings,
        }))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplyBody {
    garment: Option<usize>,
}

#[derive(Serialize)]
struct ApplyResponse {
    session: SessionSummary,
    applications: Vec<TemplateApplication>,
}

async fn apply_template(
    State(state): State<Arc<AppState>>,
    UrlPath((id, name)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<ApplyResponse>> {
    let shared = state.session(&id)?;
    let template = state
        .library
        .iter()
        .find(|t| t.name == name)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("template \"{name}\"")))?;
    let body: ApplyBody = if body.iter().all(u8::is_ascii_whitespace) {
        ApplyBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(format!("template request: {e}")))?
    };
    blocking(move || {
        let mut s = shared.lock().expect("session");
        let applications = s.apply_template(&template, body.garment)?;
        Ok(Json(ApplyResponse {
            session: s.summary(),
            applications,
        }))
    })
    .await
}

async fn undo(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionSummary>> {
    let shared = state.session(&id)?;
    blocking(move || {
        let mut s = shared.lock().expect("session");
        s.undo()?;
        Ok(Json(s.summary()))
    })
    .await
}

fn png(bytes: Arc<Vec<u8>>) -> Response {
    (
        [
            (header::CONTENT_TYPE, "image/png"),
            (header::CACHE_CONTROL, "no-cache"),
        ],
        bytes.as_ref().clone(),
    )
        .into_response()
}

async fn render_png(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let bytes = state.session(&id)?.lock().expect("session").draft().png.clone();
    Ok(png(bytes))
}

async fn layout_png(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let bytes = state.session(&id)?.lock().expect("session").layout().png.clone();
    Ok(png(bytes))
}

/// Content-addressed images; only the current renders of live sessions are kept.
async fn image(State(state): State<Arc<AppState>>, UrlPath(file): UrlPath<String>) -> ApiResult<Response> {
    let hash = file
        .strip_suffix(".png")
        .ok_or_else(|| ApiError::not_found(format!("image {file}")))?;
    let sessions: Vec<Shared> = state.sessions.read().expect("session map").values().cloned().collect();
    for shared in sessions {
        if let Some(bytes) = shared.lock().expect("session").image(hash) {
            let mut r = png(bytes);
            r.headers_mut().insert(
                header::CACHE_CONTROL,
                header::HeaderValue::from_static("public, max-age=31536000, immutable"),
            );
            return Ok(r);
        }
    }
    Err(ApiError::not_found(format!("image {file}")))
}

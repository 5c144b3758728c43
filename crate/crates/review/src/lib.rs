//! Review queues over HTTP.
//!
//! Queues are `*.jsonl` files of review items in one directory; the queue id
//! is the file stem. Decisions from every queue go to a single append-only
//! JSONL log that is flushed to disk before a request is acknowledged. The
//! effective verdict of an item is the latest by timestamp (ties go to the
//! later line), so replaying the log always rebuilds the same state.
//!
//! Routes:
//!
//! | method | path | body / result |
//! |---|---|---|
//! | GET | `/api/queues` | list of queue summaries |
//! | GET | `/api/queues/{id}?page=&size=` | undecided items, pages from 0 |
//! | POST | `/api/queues/{id}/decisions` | decision JSON, returns progress |
//! | GET | `/api/queues/{id}/export` | effective decisions as JSONL |
//! | GET | `/img/{digest}?size=` | image bytes, or a PNG thumbnail |

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sceneset_core::manifest::{
    digest_file, effective_decisions, read_corpus, read_jsonl, read_review_items, resolve_image, DecisionRecord,
    ManifestError, ReadMode, ReviewItem, Validate, Verdict,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::services::ServeDir;

pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 500;
pub const DEFAULT_THUMB_SIZE: u32 = 160;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown queue {0:?}")]
    UnknownQueue(String),
    #[error("item {item:?} is not in queue {queue:?}")]
    UnknownItem { queue: String, item: String },
    #[error("{0}")]
    BadRequest(String),
    #[error("no image with digest {0}")]
    UnknownImage(String),
    #[error("queue {queue:?}: {problem}")]
    BadQueue { queue: String, problem: String },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("image: {0}")]
    Image(String),
}

impl ReviewError {
    fn status(&self) -> StatusCode {
        match self {
            ReviewError::UnknownQueue(_) | ReviewError::UnknownItem { .. } | ReviewError::UnknownImage(_) => {
                StatusCode::NOT_FOUND
            }
            ReviewError::BadRequest(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        (self.status(), Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReviewError + '_ {
    move |source| ReviewError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub queue_dir: PathBuf,
    pub decision_log: PathBuf,
    /// Root for relative image refs.
    pub image_root: Option<PathBuf>,
    /// Corpus whose digests are served under `/img/`.
    pub corpus: Option<PathBuf>,
    pub thumb_cache: PathBuf,
    /// Static files for the browser client, served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl ServiceConfig {
    /// Queues in `queue_dir`, log and thumbnail cache beside them.
    pub fn new(queue_dir: impl Into<PathBuf>) -> Self {
        let queue_dir = queue_dir.into();
        ServiceConfig {
            decision_log: queue_dir.join("decisions.jsonl"),
            thumb_cache: queue_dir.join(".thumbs"),
            queue_dir,
            image_root: None,
            corpus: None,
            ui_dir: None,
        }
    }
}

struct Queue {
    items: Vec<ReviewItem>,
    index: HashMap<String, usize>,
}

struct Log {
    file: File,
    path: PathBuf,
    entries: Vec<DecisionRecord>,
    /// queue id -> item id -> effective decision
    effective: HashMap<String, BTreeMap<String, DecisionRecord>>,
}

impl Log {
    fn apply(&mut self, d: DecisionRecord) {
        if let Some(q) = &d.queue_id {
            let slot = self.effective.entry(q.clone()).or_default();
            match slot.get(&d.item_id) {
                Some(prev) if prev.timestamp > d.timestamp => {}
                _ => {
                    slot.insert(d.item_id.clone(), d.clone());
                }
            }
        }
        self.entries.push(d);
    }

    fn decided(&self, queue: &str) -> Option<&BTreeMap<String, DecisionRecord>> {
        self.effective.get(queue)
    }
}

struct Inner {
    config: ServiceConfig,
    queues: BTreeMap<String, Queue>,
    images: HashMap<String, PathBuf>,
    log: Mutex<Log>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct ReviewService {
    inner: Arc<Inner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub decided: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSummary {
    pub queue_id: String,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub queue_id: String,
    pub page: usize,
    pub size: usize,
    pub items: Vec<ReviewItem>,
    pub progress: Progress,
}

/// Body of a decision POST. The verdict stays a string here so an unknown
/// one is reported as a validation error rather than a parse failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionInput {
    pub item_id: String,
    pub verdict: String,
    pub reviewer: String,
    /// Seconds since the epoch; the server clock when omitted.
    #[serde(default)]
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub decision: DecisionRecord,
    pub progress: Progress,
}

fn now() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64)
}

fn is_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

impl ReviewService {
    /// Loads every queue, replays the decision log and indexes images.
    /// A torn final log line (crash mid-write) is skipped.
    pub fn open(config: ServiceConfig) -> Result<Self, ReviewError> {
        let mut queues = BTreeMap::new();
        let entries = std::fs::read_dir(&config.queue_dir).map_err(io_err(&config.queue_dir))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .filter(|p| !same_file(p, &config.decision_log))
            .collect();
        paths.sort();
        for path in paths {
            let queue_id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let items = read_review_items(&path)?;
            let mut index = HashMap::new();
            for (k, item) in items.iter().enumerate() {
                if index.insert(item.item_id.clone(), k).is_some() {
                    return Err(ReviewError::BadQueue { queue: queue_id, problem: format!("duplicate item {:?}", item.item_id) });
                }
            }
            queues.insert(queue_id, Queue { items, index });
        }

        let mut images = HashMap::new();
        if let Some(corpus) = &config.corpus {
            for inst in read_corpus(corpus, ReadMode::Strict)?.records {
                if let Some(d) = inst.digest {
                    images.entry(d).or_insert_with(|| resolve_image(config.image_root.as_deref(), &inst.image_ref));
                }
            }
        }
        for q in queues.values_mut() {
            for item in &mut q.items {
                let path = resolve_image(config.image_root.as_deref(), &item.image_ref);
                if path.is_file() {
                    let d = digest_file(&path)?;
                    if item.thumbnail_ref.is_none() {
                        item.thumbnail_ref = Some(format!("/img/{d}?size={DEFAULT_THUMB_SIZE}"));
                    }
                    images.entry(d).or_insert(path);
                }
            }
        }

        let mut entries = Vec::new();
        if config.decision_log.exists() {
            entries = read_jsonl::<DecisionRecord>(&config.decision_log, ReadMode::Lenient, false)?.records;
        } else if let Some(dir) = config.decision_log.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&config.decision_log)
            .map_err(io_err(&config.decision_log))?;
        let mut log = Log { file, path: config.decision_log.clone(), entries: Vec::new(), effective: HashMap::new() };
        for d in entries {
            log.apply(d);
        }
        Ok(ReviewService { inner: Arc::new(Inner { config, queues, images, log: Mutex::new(log) }) })
    }

    fn queue(&self, id: &str) -> Result<&Queue, ReviewError> {
        self.inner.queues.get(id).ok_or_else(|| ReviewError::UnknownQueue(id.to_string()))
    }

    fn progress_locked(&self, log: &Log, id: &str, q: &Queue) -> Progress {
        let decided = log.decided(id).map_or(0, |m| q.items.iter().filter(|i| m.contains_key(&i.item_id)).count());
        Progress { decided, total: q.items.len() }
    }

    pub fn queues(&self) -> Vec<QueueSummary> {
        let log = self.inner.log.lock().expect("log lock");
        self.inner
            .queues
            .iter()
            .map(|(id, q)| QueueSummary { queue_id: id.clone(), progress: self.progress_locked(&log, id, q) })
            .collect()
    }

    /// One page of the items still lacking a decision, in queue order.
    pub fn page(&self, id: &str, page: usize, size: usize) -> Result<QueuePage, ReviewError> {
        if size == 0 || size > MAX_PAGE_SIZE {
            return Err(ReviewError::BadRequest(format!("size must be in 1..={MAX_PAGE_SIZE}")));
        }
        let q = self.queue(id)?;
        let log = self.inner.log.lock().expect("log lock");
        let decided = log.decided(id);
        let items = q
            .items
            .iter()
            .filter(|i| !decided.is_some_and(|m| m.contains_key(&i.item_id)))
            .skip(page.saturating_mul(size))
            .take(size)
            .cloned()
            .collect();
        Ok(QueuePage { queue_id: id.to_string(), page, size, items, progress: self.progress_locked(&log, id, q) })
    }

    /// Appends a decision and syncs the log before returning.
    pub fn decide(&self, id: &str, input: DecisionInput) -> Result<Ack, ReviewError> {
        let q = self.queue(id)?;
        let verdict: Verdict = input.verdict.parse().map_err(ReviewError::BadRequest)?;
        if !q.index.contains_key(&input.item_id) {
            return Err(ReviewError::UnknownItem { queue: id.to_string(), item: input.item_id });
        }
        let record = DecisionRecord {
            queue_id: Some(id.to_string()),
            item_id: input.item_id,
            verdict,
            reviewer: input.reviewer.trim().to_string(),
            timestamp: input.timestamp.unwrap_or_else(now),
        };
        let violations = record.violations();
        if !violations.is_empty() {
            return Err(ReviewError::BadRequest(format!("{violations:?}")));
        }
        let mut line = serde_json::to_vec(&record).map_err(|e| ReviewError::BadRequest(e.to_string()))?;
        line.push(b'\n');
        let mut log = self.inner.log.lock().expect("log lock");
        let path = log.path.clone();
        log.file.write_all(&line).map_err(io_err(&path))?;
        log.file.sync_data().map_err(io_err(&path))?;
        log.apply(record.clone());
        let progress = self.progress_locked(&log, id, q);
        Ok(Ack { decision: record, progress })
    }

    /// Effective decisions of a queue, in queue order.
    pub fn export(&self, id: &str) -> Result<Vec<DecisionRecord>, ReviewError> {
        let q = self.queue(id)?;
        let log = self.inner.log.lock().expect("log lock");
        let Some(decided) = log.decided(id) else {
            return Ok(Vec::new());
        };
        Ok(q.items.iter().filter_map(|i| decided.get(&i.item_id).cloned()).collect())
    }

    /// Full decision log as recorded, including superseded entries.
    pub fn log_entries(&self) -> Vec<DecisionRecord> {
        self.inner.log.lock().expect("log lock").entries.clone()
    }

    /// Image bytes and content type, or a cached PNG thumbnail whose longer
    /// side is `size` pixels.
    pub fn image(&self, digest: &str, size: Option<u32>) -> Result<(Vec<u8>, &'static str), ReviewError> {
        if !is_digest(digest) {
            return Err(ReviewError::BadRequest(format!("{digest:?} is not a sha256 hex digest")));
        }
        let digest = digest.to_ascii_lowercase();
        let path = self.inner.images.get(&digest).ok_or_else(|| ReviewError::UnknownImage(digest.clone()))?;
        let Some(size) = size else {
            let bytes = std::fs::read(path).map_err(io_err(path))?;
            let mime = image::guess_format(&bytes).map_or("application/octet-stream", |f| f.to_mime_type());
            return Ok((bytes, mime));
        };
        if size == 0 || size > 2048 {
            return Err(ReviewError::BadRequest("thumbnail size must be in 1..=2048".into()));
        }
        let cache = &self.inner.config.thumb_cache;
        let cached = cache.join(format!("{digest}-{size}.png"));
        if let Ok(bytes) = std::fs::read(&cached) {
            return Ok((bytes, "image/png"));
        }
        let img = image::open(path).map_err(|e| ReviewError::Image(e.to_string()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        img.thumbnail(size, size)
            .write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| ReviewError::Image(e.to_string()))?;
        let bytes = out.into_inner();
        std::fs::create_dir_all(cache).map_err(io_err(cache))?;
        let tmp = cache.join(format!(".{digest}-{size}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, &bytes).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &cached).map_err(io_err(&cached))?;
        Ok((bytes, "image/png"))
    }

    pub fn router(self) -> Router {
        let ui = self.inner.config.ui_dir.clone();
        let api = Router::new()
            .route("/api/queues", get(list_queues))
            .route("/api/queues/{id}", get(get_queue))
            .route("/api/queues/{id}/decisions", post(post_decision))
            .route("/api/queues/{id}/export", get(export_queue))
            .route("/img/{digest}", get(get_image))
            .with_state(self);
        match ui {
            Some(dir) => api.fallback_service(ServeDir::new(dir)),
            None => api,
        }
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Runs the service until the process is stopped.
pub async fn serve(service: ReviewService, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, service.router()).await
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    page: Option<usize>,
    size: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct ImageQuery {
    size: Option<u32>,
}

async fn list_queues(State(s): State<ReviewService>) -> Json<Vec<QueueSummary>> {
    Json(s.queues())
}

async fn get_queue(
    State(s): State<ReviewService>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> Result<Json<QueuePage>, ReviewError> {
    s.page(&id, q.page.unwrap_or(0), q.size.unwrap_or(DEFAULT_PAGE_SIZE)).map(Json)
}

async fn post_decision(
    State(s): State<ReviewService>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> Result<Json<Ack>, ReviewError> {
    let input: DecisionInput =
        serde_json::from_slice(&body).map_err(|e| ReviewError::BadRequest(format!("malformed decision: {e}")))?;
    // the fsync blocks, keep it off the async workers
    tokio::task::spawn_blocking(move || s.decide(&id, input))
        .await
        .map_err(|e| ReviewError::BadRequest(e.to_string()))?
        .map(Json)
}

async fn export_queue(State(s): State<ReviewService>, UrlPath(id): UrlPath<String>) -> Result<Response, ReviewError> {
    let mut out = Vec::new();
    for d in s.export(&id)? {
        serde_json::to_writer(&mut out, &d).map_err(|e| ReviewError::BadRequest(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from(out)).into_response())
}

async fn get_image(
    State(s): State<ReviewService>,
    UrlPath(digest): UrlPath<String>,
    Query(q): Query<ImageQuery>,
) -> Result<Response, ReviewError> {
    let (bytes, mime) = tokio::task::spawn_blocking(move || s.image(&digest, q.size))
        .await
        .map_err(|e| ReviewError::BadRequest(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, mime)], Body::from(bytes)).into_response())
}

/// Replays a decision log into per-item effective verdicts for one queue.
pub fn replay(log: &[DecisionRecord], queue_id: &str) -> BTreeMap<String, DecisionRecord> {
    effective_decisions(log.iter().filter(|d| d.queue_id.as_deref() == Some(queue_id)))
}

//! HTTP facade over a published engine snapshot.
//!
//! Handlers clone an `Arc` to the current snapshot and work on it without
//! holding any lock, so a reload never disturbs requests already running.
//! Writers (reload and insert) are serialized by a mutex, build a complete new
//! engine off to the side and publish it with a single pointer swap.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderName, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use expertise::search::{Filters, SearchConfig, DEFAULT_SUGGESTIONS};
use expertise::snapshot;
use expertise::{AuthorRecord, Engine, KbRelation, PublicationRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ServiceError;
use crate::load::{load_engine, BuildInfo, EngineOptions};
use crate::render::{author_view, run_search, run_suggest, split_list, to_json, SearchRequest};

pub const VERSION_HEADER: &str = "x-snapshot-version";

/// An immutable, published engine.
#[derive(Debug)]
pub struct EngineSnapshot {
    pub engine: Engine,
    pub version: u64,
    pub info: BuildInfo,
}

impl EngineSnapshot {
    /// Digest of the profiles and author records, for detecting mutation.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(snapshot::to_bytes(self.engine.store(), None));
        for a in self.engine.authors() {
            h.update(serde_json::to_vec(a).expect("author records serialize"));
        }
        hex::encode(h.finalize())
    }
}

pub struct AppState {
    current: RwLock<Arc<EngineSnapshot>>,
    writer: tokio::sync::Mutex<()>,
    options: EngineOptions,
    base: SearchConfig,
}

impl AppState {
    pub fn new(engine: Engine, info: BuildInfo, options: EngineOptions, base: SearchConfig) -> Self {
        Self {
            current: RwLock::new(Arc::new(EngineSnapshot { engine, version: 1, info })),
            writer: tokio::sync::Mutex::new(()),
            options,
            base,
        }
    }

    pub fn snapshot(&self) -> Arc<EngineSnapshot> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    fn publish(&self, engine: Engine, info: BuildInfo) -> Arc<EngineSnapshot> {
        let mut slot = self.current.write().unwrap_or_else(|e| e.into_inner());
        let next = Arc::new(EngineSnapshot {
            engine,
            version: slot.version + 1,
            info,
        });
        *slot = Arc::clone(&next);
        next
    }

    /// Rebuilds from a corpus directory and publishes the result.
    pub async fn reload(&self, corpus_dir: Option<PathBuf>) -> Result<Arc<EngineSnapshot>, ServiceError> {
        let _w = self.writer.lock().await;
        let mut opts = self.options.clone();
        if let Some(dir) = corpus_dir {
            opts.corpus_dir = dir;
        }
        let (engine, info) = blocking(move || load_engine(&opts)).await??;
        Ok(self.publish(engine, info))
    }

    /// Copies the current engine, adds the publications and publishes it.
    pub async fn insert(&self, batch: InsertRequest) -> Result<Arc<EngineSnapshot>, ServiceError> {
        let _w = self.writer.lock().await;
        let current = self.snapshot();
        let (engine, info) = blocking(move || {
            let mut engine = current.engine.clone();
            apply_insert(&mut engine, batch)?;
            Ok::<_, ServiceError>((engine, current.info.clone()))
        })
        .await??;
        Ok(self.publish(engine, info))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InsertRequest {
    #[serde(default)]
    pub publications: Vec<PublicationRecord>,
    #[serde(default)]
    pub authors: Vec<AuthorRecord>,
}

fn apply_insert(engine: &mut Engine, batch: InsertRequest) -> Result<(), ServiceError> {
    let known: BTreeSet<&str> = batch.authors.iter().map(|a| a.id.as_str()).collect();
    for p in &batch.publications {
        if p.authors.is_empty() {
            return Err(ServiceError::BadRequest(format!("publication {} has no authors", p.id.as_str())));
        }
        if let Some(a) = p.authors.iter().find(|a| engine.author(a.as_str()).is_none() && !known.contains(a.as_str())) {
            return Err(ServiceError::BadRequest(format!(
                "publication {} names unknown author {}",
                p.id.as_str(),
                a.as_str()
            )));
        }
    }
    let mut pending = batch.authors;
    for p in &batch.publications {
        let (now, later): (Vec<_>, Vec<_>) = pending.into_iter().partition(|a| p.authors.contains(&a.id));
        pending = later;
        engine.insert_publication(p, now)?;
    }
    match pending.first() {
        Some(a) => Err(ServiceError::BadRequest(format!("author {} has no publication in the batch", a.id.as_str()))),
        None => Ok(()),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/search", get(search))
        .route("/suggest", get(suggest))
        .route("/authors/{id}", get(author))
        .route("/admin/reload", post(reload))
        .route("/admin/publications", post(insert))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: SocketAddr) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| ServiceError::Io {
            path: bind.to_string(),
            source: e,
        })?;
    log::info!("listening on {}", listener.local_addr().map_or(bind, |a| a));
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}

fn rejected(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::BadRequest(e.to_string())
}

fn json_body(body: String, version: u64) -> Response {
    let mut resp = (
        [(axum::http::header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body,
    )
        .into_response();
    resp.headers_mut()
        .insert(HeaderName::from_static(VERSION_HEADER), HeaderValue::from(version));
    resp
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: u64,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let snap = state.snapshot();
    let body = Health {
        status: "ok".into(),
        version: snap.version,
    };
    json_body(to_json(&body), snap.version)
}

/// Raw query string of `GET /search`.
#[derive(Debug, Default, Deserialize)]
pub struct SearchParams {
    pub q: Option<String>,
    pub kb: Option<String>,
    pub emb: Option<String>,
    pub dept_in: Option<String>,
    pub dept_out: Option<String>,
    pub post_in: Option<String>,
    pub post_out: Option<String>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
    pub kb_relation: Option<String>,
}

fn flag(name: &str, v: Option<&str>) -> Result<bool, ServiceError> {
    match v.map(str::trim) {
        None | Some("") | Some("0") | Some("false") | Some("no") => Ok(false),
        Some("1") | Some("true") | Some("yes") => Ok(true),
        Some(other) => Err(ServiceError::BadRequest(format!("{name} must be a boolean, got {other:?}"))),
    }
}

impl SearchParams {
    pub fn into_request(self) -> Result<SearchRequest, ServiceError> {
        let list = |v: &Option<String>| v.as_deref().map(split_list).unwrap_or_default();
        let kb_relation = self
            .kb_relation
            .as_deref()
            .map(|r| r.parse::<KbRelation>().map_err(ServiceError::BadRequest))
            .transpose()?;
        Ok(SearchRequest {
            query: self.q.clone().unwrap_or_default(),
            use_kb: flag("kb", self.kb.as_deref())?,
            use_embeddings: flag("emb", self.emb.as_deref())?,
            filters: Filters {
                include_depts: list(&self.dept_in),
                exclude_depts: list(&self.dept_out),
                include_posts: list(&self.post_in),
                exclude_posts: list(&self.post_out),
            },
            limit: self.limit,
            offset: self.offset.unwrap_or(0),
            kb_relation,
        })
    }
}

async fn search(State(state): State<Arc<AppState>>, params: Result<Query<SearchParams>, QueryRejection>) -> Result<Response, ServiceError> {
    let Query(params) = params.map_err(rejected)?;
    if params.q.as_deref().is_none_or(|q| q.trim().is_empty()) {
        return Err(ServiceError::BadRequest("missing query parameter q".into()));
    }
    let req = params.into_request()?;
    let snap = state.snapshot();
    let base = state.base.clone();
    let version = snap.version;
    let resp = blocking(move || run_search(&snap.engine, &base, &req)).await??;
    Ok(json_body(to_json(&resp), version))
}

#[derive(Debug, Deserialize)]
pub struct SuggestParams {
    pub term: Option<String>,
    pub k: Option<usize>,
}

async fn suggest(State(state): State<Arc<AppState>>, params: Result<Query<SuggestParams>, QueryRejection>) -> Result<Response, ServiceError> {
    let Query(params) = params.map_err(rejected)?;
    let term = params
        .term
        .ok_or_else(|| ServiceError::BadRequest("missing query parameter term".into()))?;
    let snap = state.snapshot();
    let body = run_suggest(&snap.engine, &state.base, &term, params.k.unwrap_or(DEFAULT_SUGGESTIONS));
    Ok(json_body(to_json(&body), snap.version))
}

async fn author(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let snap = state.snapshot();
    let view = author_view(&snap.engine, &id).ok_or_else(|| ServiceError::NotFound(format!("author {id}")))?;
    Ok(json_body(to_json(&view), snap.version))
}

#[derive(Debug, Default, Deserialize)]
pub struct ReloadRequest {
    pub corpus_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Published {
    pub version: u64,
    pub authors: usize,
    pub publications: usize,
}

impl Published {
    fn of(snap: &EngineSnapshot) -> Self {
        Self {
            version: snap.version,
            authors: snap.engine.store().author_count(),
            publications: snap.engine.store().publication_count(),
        }
    }
}

async fn reload(State(state): State<Arc<AppState>>, body: axum::body::Bytes) -> Result<Response, ServiceError> {
    let dir = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        serde_json::from_slice::<ReloadRequest>(&body)
            .map_err(|e| ServiceError::BadRequest(format!("invalid reload body: {e}")))?
            .corpus_dir
    };
    let snap = state.reload(dir).await?;
    Ok(json_body(to_json(&Published::of(&snap)), snap.version))
}

async fn insert(State(state): State<Arc<AppState>>, batch: Result<Json<InsertRequest>, JsonRejection>) -> Result<Response, ServiceError> {
    let Json(batch) = batch.map_err(rejected)?;
    let snap = state.insert(batch).await?;
    Ok(json_body(to_json(&Published::of(&snap)), snap.version))
}

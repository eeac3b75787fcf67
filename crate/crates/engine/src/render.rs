//! The JSON shapes shared by the HTTP API and the command line.
//!
//! Both front ends call [`run_search`] and serialize with [`to_json`], so the
//! same request yields the same bytes from either.

use expertise::search::{Filters, MatchResult, SearchConfig};
use expertise::{Engine, KbRelation};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const DEFAULT_LIMIT: usize = 50;

/// One ranked author as shown to users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultView {
    pub author: String,
    pub name: String,
    pub department: String,
    pub post: String,
    pub s_e: u64,
    pub s_a: f64,
    pub explanation: Vec<String>,
    pub provenance: Vec<String>,
}

impl ResultView {
    pub fn new(engine: &Engine, r: &MatchResult) -> Self {
        let rec = engine.author(r.author_id.as_str());
        Self {
            author: r.author_id.as_str().to_string(),
            name: rec.map(|a| a.display_name()).unwrap_or_default(),
            department: rec.map(|a| a.department.clone()).unwrap_or_default(),
            post: rec.map(|a| a.post.clone()).unwrap_or_default(),
            s_e: r.s_e,
            s_a: r.s_a,
            explanation: r.explanation.clone(),
            provenance: r.provenance.iter().map(|p| p.as_str().to_string()).collect(),
        }
    }
}

/// A search as requested by a client.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchRequest {
    pub query: String,
    pub use_kb: bool,
    pub use_embeddings: bool,
    pub filters: Filters,
    pub limit: Option<usize>,
    pub offset: usize,
    pub kb_relation: Option<KbRelation>,
}

impl SearchRequest {
    pub fn config(&self, base: &SearchConfig) -> SearchConfig {
        SearchConfig {
            use_kb: self.use_kb,
            use_embeddings: self.use_embeddings,
            kb_relation: self.kb_relation.unwrap_or(base.kb_relation),
            ..base.clone()
        }
    }
}

/// Response envelope: a page of results plus the parsed query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: QueryView,
    pub total: usize,
    pub offset: usize,
    pub results: Vec<ResultView>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub raw: String,
    pub bigrams: Vec<String>,
    pub unigrams: Vec<String>,
    pub expansions: Vec<Expansion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub source: String,
    pub term: String,
}

pub fn run_search(engine: &Engine, base: &SearchConfig, req: &SearchRequest) -> Result<SearchResponse, ServiceError> {
    let cfg = req.config(base);
    let out = engine.search_filtered(&req.query, &cfg, &req.filters)?;
    let total = out.results.len();
    let limit = req.limit.unwrap_or(DEFAULT_LIMIT);
    let results = out
        .results
        .iter()
        .skip(req.offset)
        .take(limit)
        .map(|r| ResultView::new(engine, r))
        .collect();
    Ok(SearchResponse {
        query: QueryView {
            raw: out.query.raw_query.clone(),
            bigrams: out.query.bigrams.iter().cloned().collect(),
            unigrams: out.query.unigrams.iter().cloned().collect(),
            expansions: out
                .expansions
                .iter()
                .map(|(p, t)| Expansion {
                    source: p.as_str().to_string(),
                    term: t.clone(),
                })
                .collect(),
        },
        total,
        offset: req.offset,
        results,
        diagnostics: out.diagnostics,
    })
}

/// Related terms for query refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub term: String,
    pub suggestions: Vec<String>,
}

pub fn run_suggest(engine: &Engine, base: &SearchConfig, term: &str, k: usize) -> SuggestResponse {
    SuggestResponse {
        term: engine.store().pipeline().normalize_term(term),
        suggestions: engine.suggest_terms(term, k, base.kb_relation),
    }
}

/// An author with the features of their profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorView {
    pub id: String,
    pub name: String,
    pub post: String,
    pub department: String,
    pub faculty: String,
    pub publications: usize,
    pub features: Vec<String>,
}

pub fn author_view(engine: &Engine, id: &str) -> Option<AuthorView> {
    let rec = engine.author(id)?;
    let profile = engine.store().profile(id);
    Some(AuthorView {
        id: id.to_string(),
        name: rec.display_name(),
        post: rec.post.clone(),
        department: rec.department.clone(),
        faculty: rec.faculty.clone(),
        publications: engine.store().publications_of(id).map_or(0, |p| p.len()),
        features: profile.map(|p| p.features.into_keys().collect()).unwrap_or_default(),
    })
}

/// Compact JSON; the single serializer behind API bodies and `--json`.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("response types serialize")
}

/// Splits a comma separated list, dropping blanks.
pub fn split_list(raw: &str) -> Vec<String> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

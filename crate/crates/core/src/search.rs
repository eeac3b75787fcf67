//! Query parsing, retrieval, explanation, scoring and expansion.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AuthorId, AuthorRecord, Corpus, PublicationRecord};
use crate::embeddings::EmbeddingTable;
use crate::kb::{KbRelation, KnowledgeBase};
use crate::profiles::{ProfileConfig, ProfileError, ProfileStore};
use crate::textpipe::{is_bigram, join_bigram, Pipeline};

pub const BIGRAM_WEIGHT: u64 = 10;
pub const UNIGRAM_WEIGHT: u64 = 1;
pub const NO_VALID_TERMS: &str = "no valid query terms";
pub const DEFAULT_SUGGESTIONS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("both include and exclude given for {0}")]
    ConflictingFilter(&'static str),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Direct,
    Kb,
    Embedding,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Kb => "kb",
            Self::Embedding => "embedding",
        }
    }
}

/// How sub-search results are ordered before the top-n cut, and how the final
/// list is ranked. Ties always fall back to ascending author id.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// Explanation score, then academic score.
    #[default]
    Lexicographic,
    /// `s_e + academic_weight * s_a`.
    WeightedSum { academic_weight: f64 },
}

impl Ranking {
    pub fn compare(self, a: (u64, f64, &str), b: (u64, f64, &str)) -> Ordering {
        let primary = match self {
            Ranking::Lexicographic => b.0.cmp(&a.0).then_with(|| b.1.total_cmp(&a.1)),
            Ranking::WeightedSum { academic_weight } => {
                let ka = a.0 as f64 + academic_weight * a.1;
                let kb = b.0 as f64 + academic_weight * b.1;
                kb.total_cmp(&ka)
            }
        };
        primary.then_with(|| a.2.cmp(b.2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub use_kb: bool,
    pub use_embeddings: bool,
    pub neighbors_k: usize,
    pub expansion_top_n: usize,
    /// Defaults to the latest publication year in the store.
    pub reference_year: Option<i32>,
    pub recency_window: i32,
    pub old_score: f64,
    pub min_year_score: f64,
    pub max_year_score: f64,
    pub ranking: Ranking,
    pub kb_relation: KbRelation,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            use_kb: false,
            use_embeddings: false,
            neighbors_k: 25,
            expansion_top_n: 50,
            reference_year: None,
            recency_window: 20,
            old_score: 0.01,
            min_year_score: 0.05,
            max_year_score: 1.0,
            ranking: Ranking::Lexicographic,
            kb_relation: KbRelation::Children,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if self.neighbors_k == 0 {
            return bad("neighbors_k must be at least 1");
        }
        if self.expansion_top_n == 0 {
            return bad("expansion_top_n must be at least 1");
        }
        if self.recency_window < 2 {
            return bad("recency_window must be at least 2");
        }
        if self.min_year_score.partial_cmp(&self.max_year_score) != Some(std::cmp::Ordering::Less) {
            return bad("min_year_score must be below max_year_score");
        }
        Ok(())
    }

    /// Recency weight of a publication from `year`.
    pub fn year_score(&self, year: i32, reference_year: i32) -> f64 {
        let age = (reference_year - year).max(0);
        if age >= self.recency_window {
            return self.old_score;
        }
        let steps = f64::from(self.recency_window - 1);
        self.min_year_score
            + (self.max_year_score - self.min_year_score) * f64::from(self.recency_window - 1 - age) / steps
    }
}

/// 10 per bigram and 1 per unigram.
pub fn explanation_score<S: AsRef<str>>(explanation: &[S]) -> u64 {
    explanation
        .iter()
        .map(|f| if is_bigram(f.as_ref()) { BIGRAM_WEIGHT } else { UNIGRAM_WEIGHT })
        .sum()
}

/// The valid query features, plus what the explanation fallback needs from the
/// raw query.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueryTerms {
    pub raw_query: String,
    pub unigrams: BTreeSet<String>,
    pub bigrams: BTreeSet<String>,
    /// Adjacent token pairs of the normalized query, in order, valid or not.
    pub pairs: Vec<String>,
    /// Normalized query tokens, in order.
    pub tokens: Vec<String>,
}

impl QueryTerms {
    pub fn is_empty(&self) -> bool {
        self.unigrams.is_empty() && self.bigrams.is_empty()
    }

    pub fn len(&self) -> usize {
        self.unigrams.len() + self.bigrams.len()
    }

    /// Q_T: bigrams first, then unigrams.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.bigrams.iter().chain(&self.unigrams).map(String::as_str)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.unigrams.contains(term) || self.bigrams.contains(term)
    }

    /// Valid unigrams that are not part of any adjacent query pair.
    fn standalone(&self) -> impl Iterator<Item = &String> {
        let paired: BTreeSet<&str> = self.pairs.iter().flat_map(|p| p.split(' ')).collect();
        self.unigrams.iter().filter(move |u| !paired.contains(u.as_str()))
    }
}

/// One sub-search's share of a merged result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub source: Provenance,
    /// The expansion term searched for; `None` for the direct search.
    pub term: Option<String>,
    pub explanation: Vec<String>,
    pub s_e: u64,
    pub s_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub author_id: AuthorId,
    pub explanation: Vec<String>,
    pub s_e: u64,
    pub s_a: f64,
    pub provenance: BTreeSet<Provenance>,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub query: QueryTerms,
    pub results: Vec<MatchResult>,
    /// Expansion sub-searches that were run, in merge order.
    pub expansions: Vec<(Provenance, String)>,
    pub diagnostics: Vec<String>,
}

/// Department and post filters. Matching is case-insensitive; at most one of
/// include/exclude may be set per facet.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Filters {
    pub include_depts: Vec<String>,
    pub exclude_depts: Vec<String>,
    pub include_posts: Vec<String>,
    pub exclude_posts: Vec<String>,
}

impl Filters {
    pub fn is_empty(&self) -> bool {
        self.include_depts.is_empty()
            && self.exclude_depts.is_empty()
            && self.include_posts.is_empty()
            && self.exclude_posts.is_empty()
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if !self.include_depts.is_empty() && !self.exclude_depts.is_empty() {
            return Err(SearchError::ConflictingFilter("department"));
        }
        if !self.include_posts.is_empty() && !self.exclude_posts.is_empty() {
            return Err(SearchError::ConflictingFilter("post"));
        }
        Ok(())
    }

    fn facet_ok(value: Option<&str>, include: &[String], exclude: &[String]) -> bool {
        let hit = |list: &[String]| value.is_some_and(|v| list.iter().any(|x| x.eq_ignore_ascii_case(v)));
        (include.is_empty() || hit(include)) && !hit(exclude)
    }

    pub fn accepts(&self, author: Option<&AuthorRecord>) -> bool {
        Self::facet_ok(author.map(|a| a.department.as_str()), &self.include_depts, &self.exclude_depts)
            && Self::facet_ok(author.map(|a| a.post.as_str()), &self.include_posts, &self.exclude_posts)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Scored {
    author: AuthorId,
    explanation: Vec<String>,
    s_e: u64,
    s_a: f64,
}

/// Profiles, author metadata and the optional expansion resources.
#[derive(Debug, Clone)]
pub struct Engine {
    store: ProfileStore,
    authors: BTreeMap<AuthorId, AuthorRecord>,
    embeddings: Option<EmbeddingTable>,
    kb: Option<KnowledgeBase>,
}

impl Engine {
    pub fn new(store: ProfileStore, authors: impl IntoIterator<Item = AuthorRecord>) -> Self {
        Self {
            store,
            authors: authors.into_iter().map(|a| (a.id.clone(), a)).collect(),
            embeddings: None,
            kb: None,
        }
    }

    pub fn from_corpus(corpus: &Corpus, pipeline: Pipeline, config: ProfileConfig) -> Result<Self, ProfileError> {
        let store = ProfileStore::build(&corpus.publications, pipeline, config)?;
        Ok(Self::new(store, corpus.authors.iter().cloned()))
    }

    pub fn with_embeddings(mut self, table: EmbeddingTable) -> Self {
        self.embeddings = Some(table);
        self
    }

    pub fn with_kb(mut self, kb: KnowledgeBase) -> Self {
        self.kb = Some(kb);
        self
    }

    pub fn store(&self) -> &ProfileStore {
        &self.store
    }

    pub fn embeddings(&self) -> Option<&EmbeddingTable> {
        self.embeddings.as_ref()
    }

    pub fn kb(&self) -> Option<&KnowledgeBase> {
        self.kb.as_ref()
    }

    pub fn author(&self, id: &str) -> Option<&AuthorRecord> {
        self.authors.get(id)
    }

    pub fn authors(&self) -> impl Iterator<Item = &AuthorRecord> {
        self.authors.values()
    }

    /// Adds a publication, and any unseen authors, without rebuilding.
    pub fn insert_publication(
        &mut self,
        publication: &PublicationRecord,
        new_authors: impl IntoIterator<Item = AuthorRecord>,
    ) -> Result<(), ProfileError> {
        self.store.insert_publication(publication)?;
        for a in new_authors {
            self.authors.entry(a.id.clone()).or_insert(a);
        }
        Ok(())
    }

    pub fn reference_year(&self, cfg: &SearchConfig) -> i32 {
        cfg.reference_year.or(self.store.max_year()).unwrap_or(0)
    }

    /// Normalizes `raw` and keeps the unigrams and bigrams that exist in the
    /// global vocabulary.
    pub fn parse_query(&self, raw: &str) -> QueryTerms {
        let pipeline = self.store.pipeline();
        let stream = pipeline.normalize(raw);
        let index = self.store.index();
        let mut pairs = Vec::new();
        for (l, r) in stream.adjacent_pairs(pipeline.gap_close()) {
            let b = join_bigram(l, r);
            if !pairs.contains(&b) {
                pairs.push(b);
            }
        }
        QueryTerms {
            raw_query: raw.to_string(),
            unigrams: stream.tokens.iter().filter(|t| index.contains(t)).cloned().collect(),
            bigrams: pairs.iter().filter(|b| index.contains(b)).cloned().collect(),
            pairs,
            tokens: stream.tokens,
        }
    }

    /// Authors whose profile holds at least one query term.
    pub fn retrieve(&self, qt: &QueryTerms) -> BTreeSet<AuthorId> {
        let mut out = BTreeSet::new();
        for t in qt.terms() {
            if let Some(authors) = self.store.lookup(t) {
                out.extend(authors.iter().cloned());
            }
        }
        out
    }

    /// The explanation vector: matched query bigrams, then the matched
    /// component unigrams of unmatched query pairs, then matched standalone
    /// unigrams. Bigrams come first, each group sorted.
    pub fn explain(&self, author: &str, qt: &QueryTerms) -> Vec<String> {
        let has = |f: &str| self.store.contains(author, f);
        let mut bigrams = BTreeSet::new();
        let mut unigrams = BTreeSet::new();
        for b in &qt.bigrams {
            if has(b) {
                bigrams.insert(b.clone());
            }
        }
        for pair in &qt.pairs {
            if qt.bigrams.contains(pair) && has(pair) {
                continue;
            }
            for u in pair.split(' ') {
                if qt.unigrams.contains(u) && has(u) {
                    unigrams.insert(u.to_string());
                }
            }
        }
        for u in qt.standalone() {
            if has(u) {
                unigrams.insert(u.clone());
            }
        }
        bigrams.into_iter().chain(unigrams).collect()
    }

    /// Recency-weighted count of the author's publications containing a query
    /// term of their profile. Each publication counts once.
    pub fn academic_score(&self, author: &str, qt: &QueryTerms, cfg: &SearchConfig) -> f64 {
        let reference = self.reference_year(cfg);
        self.academic_score_at(author, qt, cfg, reference)
    }

    fn academic_score_at(&self, author: &str, qt: &QueryTerms, cfg: &SearchConfig, reference: i32) -> f64 {
        let mut pubs = BTreeSet::new();
        for t in qt.terms() {
            if let Some(p) = self.store.feature_publications(author, t) {
                pubs.extend(p.iter());
            }
        }
        pubs.into_iter()
            .filter_map(|p| self.store.publication_year(author, p.as_str()))
            .map(|y| cfg.year_score(y, reference))
            .sum()
    }

    fn score(&self, qt: &QueryTerms, cfg: &SearchConfig, reference: i32) -> Vec<Scored> {
        let mut out: Vec<Scored> = self
            .retrieve(qt)
            .into_iter()
            .map(|author| {
                let explanation = self.explain(author.as_str(), qt);
                let s_e = explanation_score(&explanation);
                let s_a = self.academic_score_at(author.as_str(), qt, cfg, reference);
                Scored {
                    author,
                    explanation,
                    s_e,
                    s_a,
                }
            })
            .collect();
        out.sort_by(|a, b| cfg.ranking.compare((a.s_e, a.s_a, a.author.as_str()), (b.s_e, b.s_a, b.author.as_str())));
        out
    }

    /// Expansion sub-search terms, in merge order.
    fn expansion_terms(&self, qt: &QueryTerms, cfg: &SearchConfig, diagnostics: &mut Vec<String>) -> Vec<(Provenance, String)> {
        let mut out = Vec::new();
        if cfg.use_kb {
            match &self.kb {
                Some(kb) => {
                    for t in kb.expand_terms(qt.terms(), cfg.kb_relation) {
                        out.push((Provenance::Kb, t));
                    }
                }
                None => diagnostics.push("knowledge base expansion requested but no knowledge base is loaded".into()),
            }
        }
        if cfg.use_embeddings {
            match &self.embeddings {
                Some(table) => {
                    let mut words = BTreeSet::new();
                    for t in qt.terms() {
                        for part in t.split(' ') {
                            for (w, _) in table.nearest_words(part, cfg.neighbors_k) {
                                if !qt.contains(&w) {
                                    words.insert(w);
                                }
                            }
                        }
                    }
                    out.extend(words.into_iter().map(|w| (Provenance::Embedding, w)));
                }
                None => diagnostics.push("embedding expansion requested but no embedding table is loaded".into()),
            }
        }
        out
    }

    /// Runs the full pipeline: direct retrieval, expansion sub-searches, merge
    /// and ranking.
    pub fn search(&self, raw: &str, cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
        cfg.validate()?;
        let reference = self.reference_year(cfg);
        let qt = self.parse_query(raw);
        let mut diagnostics = Vec::new();
        let expansions = self.expansion_terms(&qt, cfg, &mut diagnostics);

        let run = |(source, term): &(Provenance, String)| -> Vec<Scored> {
            let mut hits = self.score(&self.parse_query(term), cfg, reference);
            hits.truncate(cfg.expansion_top_n);
            let _ = source;
            hits
        };
        #[cfg(feature = "parallel")]
        let sub: Vec<Vec<Scored>> = {
            use rayon::prelude::*;
            expansions.par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let sub: Vec<Vec<Scored>> = expansions.iter().map(run).collect();

        let mut merged: BTreeMap<AuthorId, MatchResult> = BTreeMap::new();
        let mut add = |hits: Vec<Scored>, source: Provenance, term: Option<&String>| {
            for h in hits {
                let entry = merged.entry(h.author.clone()).or_insert_with(|| MatchResult {
                    author_id: h.author.clone(),
                    explanation: Vec::new(),
                    s_e: 0,
                    s_a: 0.0,
                    provenance: BTreeSet::new(),
                    contributions: Vec::new(),
                });
                for f in &h.explanation {
                    if !entry.explanation.contains(f) {
                        entry.explanation.push(f.clone());
                    }
                }
                entry.s_e += h.s_e;
                entry.s_a += h.s_a;
                entry.provenance.insert(source);
                entry.contributions.push(Contribution {
                    source,
                    term: term.cloned(),
                    explanation: h.explanation,
                    s_e: h.s_e,
                    s_a: h.s_a,
                });
            }
        };
        add(self.score(&qt, cfg, reference), Provenance::Direct, None);
        for ((source, term), hits) in expansions.iter().zip(sub) {
            add(hits, *source, Some(term));
        }

        let mut results: Vec<MatchResult> = merged.into_values().collect();
        results.sort_by(|a, b| cfg.ranking.compare((a.s_e, a.s_a, a.author_id.as_str()), (b.s_e, b.s_a, b.author_id.as_str())));
        if qt.is_empty() && results.is_empty() {
            diagnostics.insert(0, NO_VALID_TERMS.to_string());
        }
        Ok(SearchOutcome {
            query: qt,
            results,
            expansions,
            diagnostics,
        })
    }

    /// [`Engine::search`] followed by [`Engine::filter_results`].
    pub fn search_filtered(&self, raw: &str, cfg: &SearchConfig, filters: &Filters) -> Result<SearchOutcome, SearchError> {
        filters.validate()?;
        let mut outcome = self.search(raw, cfg)?;
        outcome.results = self.filter_results(outcome.results, filters)?;
        Ok(outcome)
    }

    /// Keeps results whose author passes `filters`, preserving order.
    pub fn filter_results(&self, results: Vec<MatchResult>, filters: &Filters) -> Result<Vec<MatchResult>, SearchError> {
        filters.validate()?;
        if filters.is_empty() {
            return Ok(results);
        }
        Ok(results
            .into_iter()
            .filter(|r| filters.accepts(self.authors.get(&r.author_id)))
            .collect())
    }

    /// Terms for refining a query around `term`: knowledge-base children in
    /// sorted order, then embedding neighbours by similarity, without
    /// duplicates, at most `k`.
    pub fn suggest_terms(&self, term: &str, k: usize, relation: KbRelation) -> Vec<String> {
        let norm = self.store.pipeline().normalize_term(term);
        if norm.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut out: Vec<String> = Vec::new();
        let push = |t: String, out: &mut Vec<String>| {
            if t != norm && !out.contains(&t) && out.len() < k {
                out.push(t);
            }
        };
        if let Some(kb) = &self.kb {
            for t in kb.related(&norm, relation) {
                push(t, &mut out);
            }
        }
        if let Some(table) = &self.embeddings {
            for (w, _) in table.nearest_words(&norm, k) {
                push(w, &mut out);
            }
        }
        out
    }
}

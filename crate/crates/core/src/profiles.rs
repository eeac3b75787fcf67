//! Academic profiles and the inverted feature index.
//!
//! A profile maps each feature (unigram or bigram) of an author to the
//! publications, and through them the years, in which it occurs. Occurrence is
//! binary per publication: repeated mentions inside one abstract count once.
//!
//! The store keeps, for every author, the publications containing *each*
//! feature, including features that have not yet reached the document
//! frequency threshold. Promotion into the profile is then a counter crossing
//! the threshold, so inserting a publication touches only that publication's
//! features and authors.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AuthorId, PubId, PublicationRecord};
use crate::textpipe::{is_bigram, FeatureSet, Pipeline};

pub const DEFAULT_MIN_DF: usize = 2;

/// Where the document-frequency threshold is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinDfScope {
    /// A feature enters an author's profile once it occurs in `min_df` of
    /// that author's own abstracts.
    #[default]
    PerAuthor,
    /// A feature enters the profile of every author using it once it occurs in
    /// `min_df` abstracts anywhere in the corpus.
    Corpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub min_df: usize,
    pub scope: MinDfScope,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            min_df: DEFAULT_MIN_DF,
            scope: MinDfScope::PerAuthor,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("publication {0} is already indexed")]
    DuplicatePublication(String),
    #[error("publication {0} has no authors")]
    NoAuthors(String),
}

/// Owned view of one author's profile: feature to publication years.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcademicProfile {
    pub author_id: AuthorId,
    pub features: BTreeMap<String, BTreeSet<i32>>,
}

/// Inverted index from feature to the authors whose profiles contain it. The
/// two key spaces are the global unigram and bigram vocabularies.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureIndex {
    pub(crate) unigrams: HashMap<String, BTreeSet<AuthorId>>,
    pub(crate) bigrams: HashMap<String, BTreeSet<AuthorId>>,
}

impl FeatureIndex {
    fn space(&self, feature: &str) -> &HashMap<String, BTreeSet<AuthorId>> {
        if is_bigram(feature) {
            &self.bigrams
        } else {
            &self.unigrams
        }
    }

    fn space_mut(&mut self, feature: &str) -> &mut HashMap<String, BTreeSet<AuthorId>> {
        if is_bigram(feature) {
            &mut self.bigrams
        } else {
            &mut self.unigrams
        }
    }

    fn add(&mut self, feature: &str, author: &AuthorId) {
        let space = self.space_mut(feature);
        match space.get_mut(feature) {
            Some(set) => {
                set.insert(author.clone());
            }
            None => {
                space.insert(feature.to_string(), BTreeSet::from([author.clone()]));
            }
        }
    }

    /// Authors whose profiles contain exactly `term`. Bigrams are looked up in
    /// the bigram index only, unigrams in the unigram index only.
    pub fn lookup(&self, term: &str) -> Option<&BTreeSet<AuthorId>> {
        self.space(term).get(term)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.space(term).contains_key(term)
    }

    pub fn unigram_count(&self) -> usize {
        self.unigrams.len()
    }

    pub fn bigram_count(&self) -> usize {
        self.bigrams.len()
    }

    pub fn unigrams(&self) -> impl Iterator<Item = (&String, &BTreeSet<AuthorId>)> {
        self.unigrams.iter()
    }

    pub fn bigrams(&self) -> impl Iterator<Item = (&String, &BTreeSet<AuthorId>)> {
        self.bigrams.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub(crate) struct AuthorState {
    pub(crate) publications: BTreeMap<PubId, i32>,
    /// Every feature seen in the author's abstracts, with the publications
    /// containing it. Profile membership is decided by [`ProfileStore::contains`].
    pub(crate) terms: BTreeMap<String, BTreeSet<PubId>>,
}

#[derive(Debug, Clone)]
pub struct ProfileStore {
    pipeline: Pipeline,
    config: ProfileConfig,
    pub(crate) authors: HashMap<AuthorId, AuthorState>,
    pub(crate) index: FeatureIndex,
    publication_ids: HashSet<PubId>,
    /// Corpus-wide document frequency of each feature.
    doc_freq: HashMap<String, usize>,
    /// Authors with at least one occurrence of each feature. Only maintained
    /// for [`MinDfScope::Corpus`], where crossing the threshold promotes the
    /// feature for all of them at once.
    occurrences: HashMap<String, BTreeSet<AuthorId>>,
    max_year: Option<i32>,
}

impl PartialEq for ProfileStore {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.pipeline.gap_close() == other.pipeline.gap_close()
            && self.authors == other.authors
            && self.index == other.index
    }
}

impl ProfileStore {
    pub fn new(pipeline: Pipeline, config: ProfileConfig) -> Self {
        Self {
            pipeline,
            config,
            authors: HashMap::new(),
            index: FeatureIndex::default(),
            publication_ids: HashSet::new(),
            doc_freq: HashMap::new(),
            occurrences: HashMap::new(),
            max_year: None,
        }
    }

    /// Batch construction: collects every author's abstracts, counts document
    /// frequencies in one pass and derives the index from the finished
    /// profiles.
    pub fn build(
        publications: &[PublicationRecord],
        pipeline: Pipeline,
        config: ProfileConfig,
    ) -> Result<Self, ProfileError> {
        let mut store = Self::new(pipeline, config);
        let mut seen = HashSet::new();
        for p in publications {
            if p.authors.is_empty() {
                return Err(ProfileError::NoAuthors(p.id.to_string()));
            }
            if !seen.insert(&p.id) {
                return Err(ProfileError::DuplicatePublication(p.id.to_string()));
            }
            let features = store.pipeline.features(&p.abstract_text);
            for f in features.iter() {
                *store.doc_freq.entry(f.clone()).or_default() += 1;
            }
            for a in unique_authors(p) {
                let state = store.authors.entry(a.clone()).or_default();
                state.publications.insert(p.id.clone(), p.year);
                for f in features.iter() {
                    state.terms.entry(f.clone()).or_default().insert(p.id.clone());
                }
            }
            store.max_year = store.max_year.max(Some(p.year));
        }
        store.publication_ids = seen.into_iter().cloned().collect();

        let mut index = FeatureIndex::default();
        for (author, state) in &store.authors {
            for (f, pubs) in &state.terms {
                if store.promoted(pubs.len(), f) {
                    index.add(f, author);
                }
            }
        }
        if config.scope == MinDfScope::Corpus {
            for (author, state) in &store.authors {
                for f in state.terms.keys() {
                    store.occurrences.entry(f.clone()).or_default().insert(author.clone());
                }
            }
        }
        store.index = index;
        Ok(store)
    }

    fn promoted(&self, author_df: usize, feature: &str) -> bool {
        match self.config.scope {
            MinDfScope::PerAuthor => author_df >= self.config.min_df,
            MinDfScope::Corpus => {
                author_df >= 1 && self.doc_freq.get(feature).copied().unwrap_or(0) >= self.config.min_df
            }
        }
    }

    /// Adds one publication. Cost depends on the publication's own features
    /// and authors, not on the size of the store.
    pub fn insert_publication(&mut self, p: &PublicationRecord) -> Result<(), ProfileError> {
        if p.authors.is_empty() {
            return Err(ProfileError::NoAuthors(p.id.to_string()));
        }
        if self.publication_ids.contains(&p.id) {
            return Err(ProfileError::DuplicatePublication(p.id.to_string()));
        }
        let features = self.pipeline.features(&p.abstract_text);
        self.publication_ids.insert(p.id.clone());
        self.max_year = self.max_year.max(Some(p.year));
        let authors = unique_authors(p);

        match self.config.scope {
            MinDfScope::PerAuthor => {
                for a in authors {
                    let state = self.authors.entry(a.clone()).or_default();
                    state.publications.insert(p.id.clone(), p.year);
                    for f in features.iter() {
                        let pubs = state.terms.entry(f.clone()).or_default();
                        pubs.insert(p.id.clone());
                        if pubs.len() == self.config.min_df {
                            self.index.add(f, a);
                        }
                    }
                }
            }
            MinDfScope::Corpus => self.insert_corpus_scope(p, &features, &authors),
        }
        Ok(())
    }

    fn insert_corpus_scope(&mut self, p: &PublicationRecord, features: &FeatureSet, authors: &[&AuthorId]) {
        for a in authors {
            let state = self.authors.entry((*a).clone()).or_default();
            state.publications.insert(p.id.clone(), p.year);
            for f in features.iter() {
                state.terms.entry(f.clone()).or_default().insert(p.id.clone());
            }
        }
        for f in features.iter() {
            let df = self.doc_freq.entry(f.clone()).or_default();
            *df += 1;
            let df = *df;
            let holders = self.occurrences.entry(f.clone()).or_default();
            holders.extend(authors.iter().map(|a| (*a).clone()));
            if df == self.config.min_df {
                let holders: Vec<AuthorId> = holders.iter().cloned().collect();
                for a in &holders {
                    self.index.add(f, a);
                }
            } else if df > self.config.min_df {
                for a in authors {
                    self.index.add(f, a);
                }
            }
        }
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn config(&self) -> ProfileConfig {
        self.config
    }

    pub fn index(&self) -> &FeatureIndex {
        &self.index
    }

    pub fn max_year(&self) -> Option<i32> {
        self.max_year
    }

    pub fn publication_count(&self) -> usize {
        self.publication_ids.len()
    }

    pub fn author_count(&self) -> usize {
        self.authors.len()
    }

    pub fn has_author(&self, author: &str) -> bool {
        self.authors.contains_key(author)
    }

    /// Author ids in sorted order.
    pub fn author_ids(&self) -> Vec<&AuthorId> {
        let mut ids: Vec<_> = self.authors.keys().collect();
        ids.sort();
        ids
    }

    /// Exact-match retrieval for one lemmatized term.
    pub fn lookup(&self, term: &str) -> Option<&BTreeSet<AuthorId>> {
        self.index.lookup(term)
    }

    /// Whether `feature` is in the author's profile.
    pub fn contains(&self, author: &str, feature: &str) -> bool {
        self.authors
            .get(author)
            .and_then(|s| s.terms.get(feature))
            .is_some_and(|pubs| self.promoted(pubs.len(), feature))
    }

    /// Publications of `author` containing `feature`, if the feature is in the
    /// profile.
    pub fn feature_publications(&self, author: &str, feature: &str) -> Option<&BTreeSet<PubId>> {
        let pubs = self.authors.get(author)?.terms.get(feature)?;
        self.promoted(pubs.len(), feature).then_some(pubs)
    }

    pub fn publication_year(&self, author: &str, publication: &str) -> Option<i32> {
        self.authors.get(author)?.publications.get(publication).copied()
    }

    pub fn publications_of(&self, author: &str) -> Option<&BTreeMap<PubId, i32>> {
        self.authors.get(author).map(|s| &s.publications)
    }

    pub fn profile(&self, author: &str) -> Option<AcademicProfile> {
        let (id, state) = self.authors.get_key_value(author)?;
        let features = state
            .terms
            .iter()
            .filter(|(f, pubs)| self.promoted(pubs.len(), f))
            .map(|(f, pubs)| {
                let years = pubs.iter().map(|p| state.publications[p]).collect();
                (f.clone(), years)
            })
            .collect();
        Some(AcademicProfile {
            author_id: id.clone(),
            features,
        })
    }

    /// Number of features in the author's profile.
    pub fn profile_len(&self, author: &str) -> usize {
        self.authors.get(author).map_or(0, |s| {
            s.terms
                .iter()
                .filter(|(f, pubs)| self.promoted(pubs.len(), f))
                .count()
        })
    }

    /// Rebuilds derived counters after the raw author states were restored
    /// from a snapshot.
    pub(crate) fn from_parts(
        pipeline: Pipeline,
        config: ProfileConfig,
        authors: HashMap<AuthorId, AuthorState>,
        index: FeatureIndex,
    ) -> Self {
        let mut store = Self::new(pipeline, config);
        let mut doc_pubs: HashMap<&str, HashSet<&PubId>> = HashMap::new();
        for (author, state) in &authors {
            for (p, &year) in &state.publications {
                store.publication_ids.insert(p.clone());
                store.max_year = store.max_year.max(Some(year));
            }
            for (f, pubs) in &state.terms {
                doc_pubs.entry(f.as_str()).or_default().extend(pubs.iter());
                if config.scope == MinDfScope::Corpus {
                    store.occurrences.entry(f.clone()).or_default().insert(author.clone());
                }
            }
        }
        store.doc_freq = doc_pubs.into_iter().map(|(f, p)| (f.to_string(), p.len())).collect();
        store.authors = authors;
        store.index = index;
        store
    }
}

fn unique_authors(p: &PublicationRecord) -> Vec<&AuthorId> {
    let mut seen = HashSet::new();
    p.authors.iter().filter(|a| seen.insert(*a)).collect()
}

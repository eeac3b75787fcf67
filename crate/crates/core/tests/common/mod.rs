//! Shared fixtures and a naive reference engine.
//!
//! The reference builds profiles by counting every author's features from
//! scratch, scans all profiles for every query and computes cosines directly
//! from raw vectors. It shares only the text pipeline with the library.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use expertise::corpus::{AuthorRecord, Corpus, GrantRecord, PublicationRecord};
use expertise::search::{MatchResult, Provenance};
use expertise::synth::TopicSpec;
use expertise::textpipe::{join_bigram, Pipeline};
use expertise::{EmbeddingTable, KnowledgeBase};

pub struct NaiveConfig {
    pub use_kb: bool,
    pub use_embeddings: bool,
    pub min_df: usize,
    pub neighbors_k: usize,
    pub top_n: usize,
}

impl NaiveConfig {
    pub fn new(use_kb: bool, use_embeddings: bool) -> Self {
        Self {
            use_kb,
            use_embeddings,
            min_df: 2,
            neighbors_k: 25,
            top_n: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveHit {
    pub author: String,
    pub explanation: Vec<String>,
    pub s_e: u64,
    pub s_a: f64,
    pub provenance: BTreeSet<Provenance>,
}

/// author -> feature -> publication -> year
type Profiles = BTreeMap<String, BTreeMap<String, BTreeMap<String, i32>>>;

pub struct NaiveEngine {
    pipeline: Pipeline,
    profiles: Profiles,
    reference_year: i32,
}

struct NaiveQuery {
    unigrams: BTreeSet<String>,
    bigrams: BTreeSet<String>,
    pairs: Vec<String>,
}

impl NaiveQuery {
    fn has(&self, t: &str) -> bool {
        self.unigrams.contains(t) || self.bigrams.contains(t)
    }

    fn all(&self) -> Vec<String> {
        self.bigrams.iter().chain(&self.unigrams).cloned().collect()
    }
}

pub fn naive_year_score(year: i32, reference: i32) -> f64 {
    let age = if reference > year { reference - year } else { 0 };
    if age >= 20 {
        0.01
    } else {
        // Twenty evenly spaced points from 0.05 (age 19) to 1.0 (age 0).
        0.05 + 0.95 * f64::from(19 - age) / 19.0
    }
}

impl NaiveEngine {
    pub fn new(publications: &[PublicationRecord], pipeline: Pipeline, min_df: usize) -> Self {
        let mut all: Profiles = BTreeMap::new();
        let mut reference_year = i32::MIN;
        for p in publications {
            reference_year = reference_year.max(p.year);
            let stream = pipeline.normalize(&p.abstract_text);
            let mut feats: BTreeSet<String> = stream.tokens.iter().cloned().collect();
            for (l, r) in stream.adjacent_pairs(pipeline.gap_close()) {
                feats.insert(join_bigram(l, r));
            }
            for a in &p.authors {
                let prof = all.entry(a.to_string()).or_default();
                for f in &feats {
                    prof.entry(f.clone()).or_default().insert(p.id.to_string(), p.year);
                }
            }
        }
        for prof in all.values_mut() {
            prof.retain(|_, pubs| pubs.len() >= min_df);
        }
        Self {
            pipeline,
            profiles: all,
            reference_year,
        }
    }

    pub fn profile(&self, author: &str) -> Option<&BTreeMap<String, BTreeMap<String, i32>>> {
        self.profiles.get(author)
    }

    fn in_vocab(&self, f: &str) -> bool {
        self.profiles.values().any(|p| p.contains_key(f))
    }

    fn parse(&self, raw: &str) -> NaiveQuery {
        let stream = self.pipeline.normalize(raw);
        let mut pairs: Vec<String> = Vec::new();
        for (l, r) in stream.adjacent_pairs(self.pipeline.gap_close()) {
            let b = format!("{l} {r}");
            if !pairs.contains(&b) {
                pairs.push(b);
            }
        }
        NaiveQuery {
            unigrams: stream.tokens.iter().filter(|t| self.in_vocab(t)).cloned().collect(),
            bigrams: pairs.iter().filter(|b| self.in_vocab(b)).cloned().collect(),
            pairs,
        }
    }

    fn explain(&self, profile: &BTreeMap<String, BTreeMap<String, i32>>, q: &NaiveQuery) -> Vec<String> {
        let mut bigrams = Vec::new();
        let mut unigrams = Vec::new();
        for b in &q.bigrams {
            if profile.contains_key(b) {
                bigrams.push(b.clone());
            }
        }
        let mut paired = BTreeSet::new();
        for pair in &q.pairs {
            let (l, r) = pair.split_once(' ').unwrap();
            paired.insert(l.to_string());
            paired.insert(r.to_string());
            if q.bigrams.contains(pair) && profile.contains_key(pair) {
                continue;
            }
            for u in [l, r] {
                if q.unigrams.contains(u) && profile.contains_key(u) {
                    unigrams.push(u.to_string());
                }
            }
        }
        for u in &q.unigrams {
            if !paired.contains(u) && profile.contains_key(u) {
                unigrams.push(u.clone());
            }
        }
        bigrams.sort();
        bigrams.dedup();
        unigrams.sort();
        unigrams.dedup();
        bigrams.extend(unigrams);
        bigrams
    }

    fn score(&self, q: &NaiveQuery) -> Vec<(String, Vec<String>, u64, f64)> {
        let mut out = Vec::new();
        for (author, profile) in &self.profiles {
            if !q.all().iter().any(|t| profile.contains_key(t)) {
                continue;
            }
            let v = self.explain(profile, q);
            let s_e: u64 = v.iter().map(|f| if f.contains(' ') { 10 } else { 1 }).sum();
            let mut pubs: BTreeMap<&str, i32> = BTreeMap::new();
            for t in q.all() {
                if let Some(ps) = profile.get(&t) {
                    for (p, y) in ps {
                        pubs.insert(p, *y);
                    }
                }
            }
            let s_a: f64 = pubs.values().map(|&y| naive_year_score(y, self.reference_year)).sum();
            out.push((author.clone(), v, s_e, s_a));
        }
        out.sort_by(|a, b| b.2.cmp(&a.2).then(b.3.total_cmp(&a.3)).then(a.0.cmp(&b.0)));
        out
    }

    pub fn search(
        &self,
        raw: &str,
        cfg: &NaiveConfig,
        kb: Option<&KnowledgeBase>,
        table: Option<&EmbeddingTable>,
    ) -> Vec<NaiveHit> {
        let q = self.parse(raw);
        let mut subs: Vec<(Provenance, String)> = Vec::new();
        if cfg.use_kb {
            if let Some(kb) = kb {
                let mut terms = BTreeSet::new();
                for t in q.all() {
                    for c in kb.children(&t) {
                        if !q.has(c) {
                            terms.insert(c.to_string());
                        }
                    }
                }
                subs.extend(terms.into_iter().map(|t| (Provenance::Kb, t)));
            }
        }
        if cfg.use_embeddings {
            if let Some(table) = table {
                let mut words = BTreeSet::new();
                for t in q.all() {
                    for part in t.split(' ') {
                        for w in brute_force_neighbours(table, part, cfg.neighbors_k) {
                            if !q.has(&w.0) {
                                words.insert(w.0);
                            }
                        }
                    }
                }
                subs.extend(words.into_iter().map(|w| (Provenance::Embedding, w)));
            }
        }

        let mut merged: BTreeMap<String, NaiveHit> = BTreeMap::new();
        let mut add = |hits: Vec<(String, Vec<String>, u64, f64)>, source: Provenance| {
            for (author, v, s_e, s_a) in hits {
                let e = merged.entry(author.clone()).or_insert_with(|| NaiveHit {
                    author,
                    explanation: vec![],
                    s_e: 0,
                    s_a: 0.0,
                    provenance: BTreeSet::new(),
                });
                for f in v {
                    if !e.explanation.contains(&f) {
                        e.explanation.push(f);
                    }
                }
                e.s_e += s_e;
                e.s_a += s_a;
                e.provenance.insert(source);
            }
        };
        add(self.score(&q), Provenance::Direct);
        for (source, term) in subs {
            let mut hits = self.score(&self.parse(&term));
            hits.truncate(cfg.top_n);
            add(hits, source);
        }
        let mut out: Vec<NaiveHit> = merged.into_values().collect();
        out.sort_by(|a, b| b.s_e.cmp(&a.s_e).then(b.s_a.total_cmp(&a.s_a)).then(a.author.cmp(&b.author)));
        out
    }
}

/// Cosine from raw vectors over the whole vocabulary, sorted by descending
/// similarity then word.
pub fn brute_force_neighbours(table: &EmbeddingTable, word: &str, k: usize) -> Vec<(String, f64)> {
    let Some(q) = table.vector(word) else {
        return vec![];
    };
    let norm = |v: &[f32]| v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut all: Vec<(String, f64)> = table
        .words()
        .iter()
        .filter(|w| w.as_str() != word)
        .map(|w| {
            let v = table.vector(w).unwrap();
            let dot: f64 = q.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            (w.clone(), dot / (qn * norm(v)))
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Compares engine output with the reference, returning the first mismatch.
pub fn compare(engine: &[MatchResult], naive: &[NaiveHit]) -> Result<(), String> {
    if engine.len() != naive.len() {
        return Err(format!("{} results vs {} expected", engine.len(), naive.len()));
    }
    for (i, (e, n)) in engine.iter().zip(naive).enumerate() {
        if e.author_id.as_str() != n.author {
            return Err(format!("rank {i}: {} vs {}", e.author_id, n.author));
        }
        if e.s_e != n.s_e || (e.s_a - n.s_a).abs() > 1e-9 {
            return Err(format!("rank {i} {}: ({}, {}) vs ({}, {})", n.author, e.s_e, e.s_a, n.s_e, n.s_a));
        }
        if e.explanation != n.explanation {
            return Err(format!("rank {i} {}: {:?} vs {:?}", n.author, e.explanation, n.explanation));
        }
        if e.provenance != n.provenance {
            return Err(format!("rank {i} {}: provenance differs", n.author));
        }
    }
    Ok(())
}

pub fn synthetic_kb(spec: &TopicSpec, pipeline: &Pipeline) -> KnowledgeBase {
    KnowledgeBase::from_json(&spec.taxonomy_json(), pipeline).unwrap()
}

pub fn author(id: &str, dept: &str, post: &str) -> AuthorRecord {
    AuthorRecord {
        id: id.into(),
        first_name: "Ada".into(),
        last_name: id.to_uppercase(),
        post: post.into(),
        department: dept.into(),
        faculty: "Faculty".into(),
    }
}

pub fn publication(id: &str, authors: &[&str], year: i32, text: &str) -> PublicationRecord {
    PublicationRecord {
        id: id.into(),
        abstract_text: text.into(),
        authors: authors.iter().map(|a| (*a).into()).collect(),
        year,
    }
}

pub fn grant(id: &str, title: &str, holders: &[&str]) -> GrantRecord {
    GrantRecord {
        id: id.into(),
        title: title.into(),
        keywords: Vec::new(),
        holders: holders.iter().map(|h| (*h).into()).collect(),
    }
}

const SYLLABLES: &[&str] = &["zor", "qua", "vex", "bli", "tor", "mun", "kel", "dra", "fen", "gol", "pim", "sar"];

/// A made-up word unique to `i`, free of suffixes the lemmatizer strips.
pub fn nonce_word(i: usize, salt: usize) -> String {
    let a = SYLLABLES[i % SYLLABLES.len()];
    let b = SYLLABLES[(i / SYLLABLES.len() + salt) % SYLLABLES.len()];
    let c = SYLLABLES[(i / (SYLLABLES.len() * SYLLABLES.len())) % SYLLABLES.len()];
    format!("{a}{b}{c}x")
}

/// Every author owns a unique two-word phrase used in two abstracts; every
/// grant title embeds the phrases of all its holders.
pub fn unique_bigram_corpus(n_authors: usize) -> Corpus {
    let phrase = |i: usize| format!("{} {}", nonce_word(i, 0), nonce_word(i, 5));
    let depts = ["Computing", "Physics", "Mathematics"];
    let posts = ["professor", "reader", "lecturer"];
    let authors: Vec<AuthorRecord> = (0..n_authors)
        .map(|i| author(&format!("u{i:03}"), depts[i % 3], posts[(i / 3) % 3]))
        .collect();
    let mut publications = Vec::new();
    for (i, a) in authors.iter().enumerate() {
        for k in 0..2 {
            let text = format!("We study {} with shared methods and data.", phrase(i));
            publications.push(publication(&format!("p{i:03}-{k}"), &[a.id.as_str()], 2015 + k, &text));
        }
    }
    let mut grants = Vec::new();
    let mut g = 0;
    let mut i = 0;
    while i < n_authors {
        let size = 1 + g % 4;
        let holders: Vec<usize> = (i..(i + size).min(n_authors)).collect();
        let title = holders.iter().map(|&h| phrase(h)).collect::<Vec<_>>().join(" and ");
        let ids: Vec<String> = holders.iter().map(|&h| authors[h].id.to_string()).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        grants.push(grant(&format!("g{g:03}"), &format!("Advancing {title} for practical use"), &refs));
        i += size;
        g += 1;
    }
    Corpus {
        authors,
        publications,
        grants,
    }
}

//! Browser demo: a seeded synthetic corpus indexed entirely in WebAssembly.
//!
//! Every method returns a JSON string so the page only needs `JSON.parse`.

use expertise::embeddings::train_cbow;
use expertise::synth::{generate_synthetic_corpus, TopicSpec};
use expertise::{Engine, KbRelation, KnowledgeBase, Pipeline, ProfileConfig, SearchConfig, TrainingConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Row<'a> {
    author: &'a str,
    name: String,
    department: &'a str,
    post: &'a str,
    s_e: u64,
    s_a: f64,
    explanation: &'a [String],
    provenance: Vec<&'static str>,
}

#[derive(Serialize)]
struct SearchView<'a> {
    total: usize,
    expansions: Vec<String>,
    diagnostics: &'a [String],
    results: Vec<Row<'a>>,
}

#[derive(Serialize)]
struct Neighbour {
    word: String,
    cosine: f64,
}

#[wasm_bindgen]
pub struct Demo {
    engine: Engine,
}

#[wasm_bindgen]
impl Demo {
    /// Generates the corpus, builds profiles and trains small word vectors.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, authors: usize, papers: usize) -> Result<Demo, JsError> {
        let spec = TopicSpec::default();
        let pipeline = Pipeline::default();
        let corpus = generate_synthetic_corpus(seed, authors, papers, &spec)?;
        let kb = KnowledgeBase::from_json(&spec.taxonomy_json(), &pipeline)?;
        let training = TrainingConfig {
            dim: 24,
            min_count: 5,
            epochs: 3,
            ..TrainingConfig::default()
        };
        let (table, _) = train_cbow(&corpus.publications, &pipeline, &training)?;
        let engine = Engine::from_corpus(&corpus, pipeline, ProfileConfig::default())?
            .with_kb(kb)
            .with_embeddings(table);
        Ok(Demo { engine })
    }

    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        let store = self.engine.store();
        let words = self.engine.embeddings().map_or(0, |t| t.len());
        format!(
            "{} authors, {} abstracts, {} word vectors",
            store.author_count(),
            store.publication_count(),
            words
        )
    }

    /// Ranked authors with explanations, at most `limit` rows.
    pub fn search(&self, query: &str, use_kb: bool, use_emb: bool, limit: usize) -> Result<String, JsError> {
        let cfg = SearchConfig {
            use_kb,
            use_embeddings: use_emb,
            ..SearchConfig::default()
        };
        let out = self.engine.search(query, &cfg)?;
        let results = out
            .results
            .iter()
            .take(limit)
            .map(|r| {
                let rec = self.engine.author(r.author_id.as_str());
                Row {
                    author: r.author_id.as_str(),
                    name: rec.map(|a| a.display_name()).unwrap_or_default(),
                    department: rec.map_or("", |a| a.department.as_str()),
                    post: rec.map_or("", |a| a.post.as_str()),
                    s_e: r.s_e,
                    s_a: r.s_a,
                    explanation: &r.explanation,
                    provenance: r.provenance.iter().map(|p| p.as_str()).collect(),
                }
            })
            .collect();
        let view = SearchView {
            total: out.results.len(),
            expansions: out.expansions.iter().map(|(p, t)| format!("{}: {t}", p.as_str())).collect(),
            diagnostics: &out.diagnostics,
            results,
        };
        Ok(serde_json::to_string(&view)?)
    }

    /// Closest words by cosine similarity.
    pub fn nearest(&self, word: &str, k: usize) -> Result<String, JsError> {
        let word = self.engine.store().pipeline().normalize_term(word);
        let rows: Vec<Neighbour> = self
            .engine
            .embeddings()
            .map(|t| t.nearest_words(&word, k))
            .unwrap_or_default()
            .into_iter()
            .map(|(word, cosine)| Neighbour { word, cosine })
            .collect();
        Ok(serde_json::to_string(&rows)?)
    }

    /// Knowledge-base children then vector neighbours, for refining a query.
    pub fn suggest(&self, term: &str, k: usize) -> Result<String, JsError> {
        Ok(serde_json::to_string(&self.engine.suggest_terms(term, k, KbRelation::Children))?)
    }
}

//! Building an [`Engine`] from a corpus directory, with an on-disk cache.
//!
//! A corpus directory holds `authors.jsonl`, `publications.jsonl` and
//! optionally `grants.jsonl`, `kb.json` and `vectors.txt`. Profiles are cached
//! in `snapshot.json`; the cache is reused only when its manifest records the
//! same input digest and profile settings.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use expertise::corpus::{LoadOptions, AUTHORS_FILE, PUBLICATIONS_FILE};
use expertise::embeddings::train_cbow;
use expertise::snapshot::{self, Manifest};
use expertise::{Corpus, EmbeddingTable, Engine, KnowledgeBase, Pipeline, ProfileConfig, ProfileStore, TrainingConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::ServiceError;

pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const KB_FILE: &str = "kb.json";
pub const VECTORS_FILE: &str = "vectors.txt";

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub corpus_dir: PathBuf,
    pub profile: ProfileConfig,
    pub gap_close: bool,
    /// Defaults to `kb.json` in the corpus directory, when present.
    pub kb_path: Option<PathBuf>,
    /// Defaults to `vectors.txt` in the corpus directory, when present.
    pub vectors_path: Option<PathBuf>,
    /// Read and write `snapshot.json`.
    pub use_cache: bool,
}

impl EngineOptions {
    pub fn new(corpus_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus_dir: corpus_dir.into(),
            profile: ProfileConfig::default(),
            gap_close: Pipeline::default().gap_close(),
            kb_path: None,
            vectors_path: None,
            use_cache: true,
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline::default().with_gap_close(self.gap_close)
    }

    fn resource(&self, explicit: &Option<PathBuf>, default: &str) -> Option<PathBuf> {
        match explicit {
            Some(p) => Some(p.clone()),
            None => Some(self.corpus_dir.join(default)).filter(|p| p.is_file()),
        }
    }
}

/// Where an engine came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildInfo {
    pub corpus_dir: String,
    pub input_sha256: String,
    pub built_at_unix: u64,
    pub from_cache: bool,
    pub kb: Option<String>,
    pub vectors: Option<String>,
    pub profiles: Manifest,
}

/// Digest over the author and publication files, the inputs to profiles.
pub fn input_digest(dir: &Path) -> Result<String, ServiceError> {
    let mut h = Sha256::new();
    for name in [AUTHORS_FILE, PUBLICATIONS_FILE] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| ServiceError::io(&path, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn cached_store(path: &Path, opts: &EngineOptions, input: &str) -> Option<(ProfileStore, Manifest)> {
    let bytes = fs::read(path).ok()?;
    let m = snapshot::read_manifest(&bytes).ok()?;
    let fresh = m.input_sha256.as_deref() == Some(input)
        && m.min_df == opts.profile.min_df
        && m.scope == opts.profile.scope
        && m.gap_close == opts.gap_close;
    if !fresh {
        return None;
    }
    match snapshot::from_bytes(&bytes, opts.pipeline()) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("ignoring cached profiles at {}: {e}", path.display());
            None
        }
    }
}

/// Loads the corpus and resources named by `opts` and assembles an engine.
pub fn load_engine(opts: &EngineOptions) -> Result<(Engine, BuildInfo), ServiceError> {
    let dir = &opts.corpus_dir;
    let corpus = Corpus::load_dir(dir, LoadOptions::default())?;
    let input = input_digest(dir)?;
    let snap_path = dir.join(SNAPSHOT_FILE);

    let cached = if opts.use_cache {
        cached_store(&snap_path, opts, &input)
    } else {
        None
    };
    let from_cache = cached.is_some();
    let (store, manifest) = match cached {
        Some(v) => v,
        None => {
            let store = ProfileStore::build(&corpus.publications, opts.pipeline(), opts.profile)?;
            let bytes = snapshot::to_bytes(&store, Some(input.clone()));
            let manifest = snapshot::read_manifest(&bytes)?;
            if opts.use_cache {
                fs::write(&snap_path, &bytes).map_err(|e| ServiceError::io(&snap_path, e))?;
            }
            (store, manifest)
        }
    };
    log::info!(
        "profiles for {} authors over {} publications ({})",
        manifest.authors,
        manifest.publications,
        if from_cache { "cached" } else { "built" }
    );

    let mut engine = Engine::new(store, corpus.authors);
    let kb_path = opts.resource(&opts.kb_path, KB_FILE);
    if let Some(p) = &kb_path {
        engine = engine.with_kb(KnowledgeBase::load(p, &opts.pipeline())?);
    }
    let vectors_path = opts.resource(&opts.vectors_path, VECTORS_FILE);
    if let Some(p) = &vectors_path {
        engine = engine.with_embeddings(read_vectors(p)?);
    }
    let built_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let info = BuildInfo {
        corpus_dir: dir.display().to_string(),
        input_sha256: input,
        built_at_unix,
        from_cache,
        kb: kb_path.map(|p| p.display().to_string()),
        vectors: vectors_path.map(|p| p.display().to_string()),
        profiles: manifest,
    };
    Ok((engine, info))
}

pub fn read_vectors(path: &Path) -> Result<EmbeddingTable, ServiceError> {
    let f = fs::File::open(path).map_err(|e| ServiceError::io(path, e))?;
    Ok(EmbeddingTable::read_text(BufReader::new(f))?)
}

pub fn write_vectors(path: &Path, table: &EmbeddingTable) -> Result<(), ServiceError> {
    let f = fs::File::create(path).map_err(|e| ServiceError::io(path, e))?;
    table.write_text(std::io::BufWriter::new(f))?;
    Ok(())
}

/// Trains word vectors on the corpus abstracts and stores them next to it.
pub fn train_vectors(opts: &EngineOptions, cfg: &TrainingConfig) -> Result<EmbeddingTable, ServiceError> {
    let corpus = Corpus::load_dir(&opts.corpus_dir, LoadOptions::default())?;
    let (table, report) = train_cbow(&corpus.publications, &opts.pipeline(), cfg)?;
    log::info!(
        "trained {} word vectors over {} tokens, final loss {:?}",
        table.len(),
        report.training_tokens,
        report.epoch_losses.last()
    );
    write_vectors(&opts.corpus_dir.join(VECTORS_FILE), &table)?;
    Ok(table)
}

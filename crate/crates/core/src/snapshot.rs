//! Profile store persistence.
//!
//! A snapshot is one JSON document with four sections:
//!
//! ```text
//! {
//!   "manifest":      { format, version, min_df, scope, gap_close, tables_sha256,
//!                      authors, publications, input_sha256, content_sha256 },
//!   "profiles":      { author_id: { "publications": { pub_id: year },
//!                                   "terms": { feature: [pub_id, ...] } } },
//!   "unigram_index": { unigram: [author_id, ...] },
//!   "bigram_index":  { bigram:  [author_id, ...] }
//! }
//! ```
//!
//! `terms` holds every feature seen in the author's abstracts, including ones
//! below the document-frequency threshold, so that a restored store can keep
//! accepting insertions. All maps are key-sorted, so equal stores serialize to
//! identical bytes. `content_sha256` covers the three data sections and is
//! checked on load; `input_sha256` is an optional caller-supplied digest of
//! the corpus files the store was built from.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::AuthorId;
use crate::profiles::{AuthorState, FeatureIndex, MinDfScope, ProfileConfig, ProfileStore};
use crate::textpipe::Pipeline;

pub const FORMAT: &str = "expertise-profiles";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("malformed snapshot: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported snapshot format {format} v{version}")]
    Unsupported { format: String, version: u32 },
    #[error("snapshot content hash mismatch")]
    Corrupt,
    #[error("snapshot was built with different text tables")]
    TablesMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub min_df: usize,
    pub scope: MinDfScope,
    pub gap_close: bool,
    pub tables_sha256: String,
    pub authors: usize,
    pub publications: usize,
    pub input_sha256: Option<String>,
    pub content_sha256: String,
}

type Section<V> = BTreeMap<String, V>;

#[derive(Serialize, Deserialize)]
struct Body {
    profiles: BTreeMap<AuthorId, AuthorState>,
    unigram_index: Section<BTreeSet<AuthorId>>,
    bigram_index: Section<BTreeSet<AuthorId>>,
}

#[derive(Serialize)]
struct FileRef<'a> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a Body,
}

#[derive(Deserialize)]
struct FileOwned {
    manifest: Manifest,
    #[serde(flatten)]
    body: Body,
}

fn body_of(store: &ProfileStore) -> Body {
    let sorted = |m: &std::collections::HashMap<String, BTreeSet<AuthorId>>| {
        m.iter().map(|(k, v)| (k.clone(), v.clone())).collect::<Section<_>>()
    };
    Body {
        profiles: store.authors.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        unigram_index: sorted(&store.index.unigrams),
        bigram_index: sorted(&store.index.bigrams),
    }
}

fn content_hash(body: &Body) -> String {
    let bytes = serde_json::to_vec(body).expect("snapshot body serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Serializes the store. Equal stores give byte-identical output.
pub fn to_bytes(store: &ProfileStore, input_sha256: Option<String>) -> Vec<u8> {
    let body = body_of(store);
    let config = store.config();
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        min_df: config.min_df,
        scope: config.scope,
        gap_close: store.pipeline().gap_close(),
        tables_sha256: store.pipeline().tables_digest().to_string(),
        authors: store.author_count(),
        publications: store.publication_count(),
        input_sha256,
        content_sha256: content_hash(&body),
    };
    serde_json::to_vec(&FileRef {
        manifest: &manifest,
        body: &body,
    })
    .expect("snapshot serializes")
}

/// Reads only the manifest, e.g. to decide whether a cached snapshot is stale.
pub fn read_manifest(bytes: &[u8]) -> Result<Manifest, SnapshotError> {
    #[derive(Deserialize)]
    struct Head {
        manifest: Manifest,
    }
    let head: Head = serde_json::from_slice(bytes)?;
    Ok(head.manifest)
}

/// Restores a store. `pipeline` must be built from the same tables; its
/// gap-closing setting is taken from the manifest.
pub fn from_bytes(bytes: &[u8], pipeline: Pipeline) -> Result<(ProfileStore, Manifest), SnapshotError> {
    let file: FileOwned = serde_json::from_slice(bytes)?;
    let m = file.manifest;
    if m.format != FORMAT || m.version != VERSION {
        return Err(SnapshotError::Unsupported {
            format: m.format,
            version: m.version,
        });
    }
    if content_hash(&file.body) != m.content_sha256 {
        return Err(SnapshotError::Corrupt);
    }
    if pipeline.tables_digest() != m.tables_sha256 {
        return Err(SnapshotError::TablesMismatch);
    }
    let pipeline = pipeline.with_gap_close(m.gap_close);
    let config = ProfileConfig {
        min_df: m.min_df,
        scope: m.scope,
    };
    let index = FeatureIndex {
        unigrams: file.body.unigram_index.into_iter().collect(),
        bigrams: file.body.bigram_index.into_iter().collect(),
    };
    let store = ProfileStore::from_parts(pipeline, config, file.body.profiles.into_iter().collect(), index);
    Ok((store, m))
}

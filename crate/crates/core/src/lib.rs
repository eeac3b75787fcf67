//! Explainable expertise retrieval.
//!
//! Author profiles are built from publication abstracts as sets of unigram and
//! bigram features with the years they were published in. Queries are matched
//! against an inverted feature index, optionally expanded through a subject
//! taxonomy and corpus-trained CBOW word vectors, and every match comes back
//! with the explanation vector that justifies it.

pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod kb;
pub mod profiles;
pub mod search;
pub mod snapshot;
pub mod synth;
pub mod textpipe;

pub use corpus::{AuthorId, AuthorRecord, Corpus, CorpusError, GrantRecord, PubId, PublicationRecord};
pub use embeddings::{EmbeddingError, EmbeddingTable, TrainingConfig};
pub use kb::{KbError, KbRelation, KnowledgeBase};
pub use profiles::{AcademicProfile, FeatureIndex, MinDfScope, ProfileConfig, ProfileError, ProfileStore};
pub use search::{Engine, Filters, MatchResult, Provenance, QueryTerms, Ranking, SearchConfig, SearchOutcome};
pub use textpipe::{FeatureSet, Pipeline, TokenStream};

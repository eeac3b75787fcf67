use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use expertise::corpus::CorpusError;
use expertise::embeddings::EmbeddingError;
use expertise::kb::KbError;
use expertise::search::SearchError;
use expertise::snapshot::SnapshotError;
use expertise::ProfileError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

/// Body of every error response.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq, Eq)]
pub struct ErrorBody {
    pub error: String,
    pub code: String,
}

impl ServiceError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::BadRequest(_) | Self::Search(_) | Self::Profile(_) => StatusCode::BAD_REQUEST,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Corpus(_) | Self::Kb(_) | Self::Embedding(_) | Self::Snapshot(_) | Self::Io { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::BadRequest(_) => "bad_request",
            Self::NotFound(_) => "not_found",
            Self::Search(SearchError::ConflictingFilter(_)) => "conflicting_filter",
            Self::Search(SearchError::InvalidConfig(_)) => "invalid_config",
            Self::Profile(_) => "invalid_publication",
            Self::Corpus(_) => "corpus_error",
            Self::Kb(_) => "kb_error",
            Self::Embedding(_) => "embedding_error",
            Self::Snapshot(_) => "snapshot_error",
            Self::Io { .. } => "io_error",
            Self::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.to_string(),
            code: self.code().to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

//! Service and command-line plumbing around the `expertise` engine.

pub mod error;
pub mod load;
pub mod render;
pub mod service;

pub use error::{ErrorBody, ServiceError};
pub use load::{load_engine, BuildInfo, EngineOptions};
pub use render::{run_search, to_json, ResultView, SearchRequest, SearchResponse};
pub use service::{router, AppState, EngineSnapshot};

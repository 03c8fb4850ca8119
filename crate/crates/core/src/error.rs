use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // vectors
    #[error("vector norm is zero (or below 1e-12)")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    // ensemble
    #[error("summary `{0}` has no embedding")]
    MissingEmbedding(String),
    #[error("frame track is empty")]
    EmptyTrack,
    #[error("need at least {min} summaries to filter, got {got}")]
    TooFewSummaries { min: usize, got: usize },
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{id}` cannot place summary {index}: {reason}")]
    TemplateMismatch {
        id: String,
        index: usize,
        reason: String,
    },
    #[error("select strategy needs filter scores, none were recorded")]
    MissingScores,
    #[error("invalid summary set: {0}")]
    InvalidSummarySet(String),

    // retrieval / spans
    #[error("invalid span [{start}, {end})")]
    InvalidSpan { start: f64, end: f64 },
    #[error("invalid frame track: {0}")]
    InvalidTrack(String),
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("frame index {index} out of range for {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("span set is empty")]
    EmptySpanSet,

    // metrics
    #[error("no evaluable results")]
    NoResults,
    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
    #[error("{} predictions have no matching annotation: {}", .0.len(), .0.join(", "))]
    UnmatchedQueries(Vec<String>),

    // providers
    #[error("environment variable `{0}` holding the API key is not set")]
    AuthMissing(String),
    #[error("provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider returned an empty response")]
    EmptyResponse,
    #[error("judge verdict could not be parsed: {0}")]
    UnparseableVerdict(String),
    #[error("cache schema mismatch: file has version {found}, supported {supported}")]
    SchemaMismatch { found: u32, supported: u32 },
    #[error("corrupt cache file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("embedding model mismatch: cache built with `{cache}`, embedder is `{embedder}`")]
    ModelMismatch { cache: String, embedder: String },

    // datasets
    #[error("unknown annotation adapter `{0}`")]
    UnknownAdapter(String),
    #[error("{malformed} of {total} lines malformed (allowed fraction {allowed})")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        allowed: f64,
    },
    #[error("duplicate expert `{expert_id}` for video `{video_id}`")]
    DuplicateExpert { video_id: String, expert_id: String },
    #[error("no usable summaries in {0}")]
    NoUsableEntries(PathBuf),

    // config / io
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown UPOS tag `{0}`")]
    UnknownTag(String),
    #[error("{file}:{line}: malformed token line ({found} columns, expected 10)")]
    MalformedLine {
        file: String,
        line: usize,
        found: usize,
    },
    #[error("duplicate language id `{0}` in registry")]
    DuplicateLanguage(String),
    #[error("coordinates out of range for `{id}`: lat {lat}, lon {lon}")]
    CoordinateOutOfRange { id: String, lat: f64, lon: f64 },
    #[error("block digit {digit} outside [0, {alphabet})")]
    DigitOutOfRange { digit: usize, alphabet: usize },
    #[error("empty block counts")]
    EmptyCounts,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("mismatched block size: {0} vs {1}")]
    MismatchedBlockSize(usize, usize),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("k = {k} outside valid range [2, {n})")]
    KOutOfRange { k: usize, n: usize },
    #[error("no coordinates for `{0}`")]
    MissingCoordinates(String),
    #[error("sentence of length {len} too short for order {order}")]
    SentenceTooShort { len: usize, order: usize },
    #[error("surrogate generation reached an unseen context")]
    MissingContext,
    #[error("joint distributions have inconsistent marginals (max deviation {0:e})")]
    InconsistentMarginals(f64),
    #[error("language `{0}` not found")]
    UnknownLanguage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

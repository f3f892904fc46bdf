use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("filter design failed: achieved {achieved_db:.1} dB stop-band attenuation, required {required_db:.1} dB")]
    FilterDesign { achieved_db: f64, required_db: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("window out of bounds: {0}")]
    OutOfBounds(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("sample rate {actual} Hz does not match the pipeline rate {expected} Hz")]
    SampleRate { expected: u32, actual: u32 },

    #[error("ingest error in {path}: {msg}")]
    Ingest { path: PathBuf, msg: String },

    #[error("unknown {kind}: {name}")]
    Unknown { kind: &'static str, name: String },

    #[error("label out of range: {0}")]
    Label(usize),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub fn ingest(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Ingest {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

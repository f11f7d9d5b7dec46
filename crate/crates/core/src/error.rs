// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced while parsing inputs, validating data, training probes
/// or computing metrics.
#[derive(Debug, Error)]
pub enum Error {
    /// A transcript record failed schema validation.
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate conversation id `{0}`")]
    DuplicateId(String),

    /// Bundle file does not start with the expected magic bytes.
    #[error("bad magic: expected \"PPAB\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported bundle format version {found} (supported up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    /// The byte stream ended before (or continued after) the declared payload.
    #[error("truncated bundle: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },

    /// Malformed but correctly framed data (bad metadata, spans, shapes).
    #[error("format error: {0}")]
    Format(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no usable examples ({skipped} conversations skipped)")]
    NoExamples { skipped: usize },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{0}")]
    Metric(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

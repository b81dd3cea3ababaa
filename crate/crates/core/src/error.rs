use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("{path}: expected a mono recording, found {channels} channels")]
    NotMono { path: PathBuf, channels: u16 },

    #[error("{path}: expected 16-bit integer PCM, found {bits}-bit {format}")]
    NotPcm16 {
        path: PathBuf,
        bits: u16,
        format: &'static str,
    },

    #[error("{path}: malformed WAV header: {reason}")]
    MalformedWav { path: PathBuf, reason: String },

    #[error("{path}:{line}: unknown session token {token:?} (expected B1, B2 or B3)")]
    UnknownSession {
        path: PathBuf,
        line: usize,
        token: String,
    },

    #[error("{path}:{line}: intelligibility {value} outside 0..=100")]
    IntelligibilityRange {
        path: PathBuf,
        line: usize,
        value: i64,
    },

    #[error("{path}:{line}: duplicate utterance path {entry}")]
    DuplicatePath {
        path: PathBuf,
        line: usize,
        entry: String,
    },

    #[error("{path}:{line}: {reason}")]
    ManifestSyntax {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("speaker {speaker} has inconsistent intelligibility ({first}% vs {second}%)")]
    InconsistentIntelligibility {
        speaker: String,
        first: u8,
        second: u8,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint container: {0}")]
    CorruptCheckpoint(String),

    #[error("session {0} is absent from the manifest")]
    MissingSession(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("no subnet for gate class {0}")]
    MissingSubnet(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

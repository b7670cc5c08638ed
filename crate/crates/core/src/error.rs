// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad options or configuration.
    Config,
    /// Malformed or inconsistent input data.
    Data,
    /// A NaN or infinity appeared during computation.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape for {op}: {shape:?} ({reason})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },

    #[error("row {row} is not a probability distribution (sum {sum})")]
    NotDistribution { row: usize, sum: f64 },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalar(Vec<usize>),

    #[error("malformed npy header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("payload size mismatch in {path}: header declares {expected} bytes, found {actual}")]
    PayloadSize {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("unsupported dtype {descr:?} in {path}")]
    UnsupportedDtype { path: PathBuf, descr: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("entry {id:?}: {tokens} tokens listed but tensor has {rows} rows")]
    TokenCountMismatch { id: String, tokens: usize, rows: usize },

    #[error("inconsistent attention blocks: {0}")]
    BlockDims(String),

    #[error("operation requires at least one vision token (N_V = 0)")]
    NoVision,

    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("production {0} is not in the module vocabulary")]
    UnseenProduction(String),

    #[error("duplicate rule {0} in vocabulary")]
    DuplicateRule(String),

    #[error("tree has {leaves} leaves but {rows} token embeddings were given")]
    LeafCount { leaves: usize, rows: usize },

    #[error("module for {rule} expects {expected} inputs, got {actual}")]
    ArityMismatch {
        rule: String,
        expected: usize,
        actual: usize,
    },

    #[error("validation production {0} never occurs in the training split")]
    SplitClosure(String),

    #[error("{0} split is empty")]
    EmptySplit(&'static str),

    #[error("corruption set is empty")]
    EmptyCorruption,

    #[error("leaf index {index} out of range for a tree with {leaves} leaves")]
    LeafIndex { index: usize, leaves: usize },

    #[error("corruption left the output unchanged; restoration scores are undefined")]
    DegenerateCorruption,

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonFinite(_) => ErrorClass::Numerical,
            Error::Invalid(_) => ErrorClass::Config,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

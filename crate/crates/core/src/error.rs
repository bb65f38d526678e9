use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("vocabulary must have at least 2 bins, got {0}")]
    VocabTooSmall(u32),
    #[error("token {bin} is outside a vocabulary of {vocab} bins")]
    TokenOutOfRange { bin: u32, vocab: u32 },
    #[error("action chunks hold 7 tokens, got {0}")]
    ChunkLength(usize),
    #[error("dimension {dim}: bounds ({low}, {high}) are not an increasing finite range")]
    InvalidBounds { dim: usize, low: f64, high: f64 },
}

/// Structural problems with a draft tree or the data attached to it.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("node {node} points at missing parent {parent}")]
    DanglingParent { node: usize, parent: usize },
    #[error("node {node} is part of a parent cycle")]
    Cycle { node: usize },
    #[error("node {node} has parent {parent}, which is not earlier in the order")]
    OutOfOrder { node: usize, parent: usize },
    #[error("node {node} has depth {depth}, expected {expected}")]
    DepthMismatch { node: usize, depth: u32, expected: u32 },
    #[error("sibling tokens under the same parent repeat at node {node}")]
    DuplicateSibling { node: usize },
    #[error("expected {expected} reference tokens, got {actual}")]
    ReferenceMismatch { expected: usize, actual: usize },
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("top-k of {k} is outside 1..={vocab}")]
    TopKOutOfRange { k: usize, vocab: u32 },
    #[error("feature context has {rows} rows but the prefix holds {emitted} tokens")]
    ContextMismatch { rows: usize, emitted: usize },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("sequences differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sequence length {0} is not a whole number of action chunks")]
    NotChunked(usize),
    #[error("no episode statistics to aggregate")]
    EmptyStats,
    #[error("acceptance length {length} exceeds the histogram range 0..={max_depth}")]
    HistogramOverflow { length: usize, max_depth: usize },
    #[error("report identity violated: {0}")]
    Identity(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} does not exist")]
    Missing(PathBuf),
    #[error("could not read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ConfigError {
    /// Process exit code for this class of failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Missing(_) => 3,
            ConfigError::Io { .. } => 4,
            ConfigError::Malformed(_) => 5,
            ConfigError::Invalid(_) => 6,
        }
    }
}

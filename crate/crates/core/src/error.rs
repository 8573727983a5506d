use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong between loading a model and emitting attributions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("operation requires a {expected} formula")]
    Form { expected: &'static str },

    #[error("node {node} is a leaf; split() needs an inner node")]
    NotInner { node: usize },

    #[error("ensemble has no trees")]
    EmptyEnsemble,

    #[error("model schema violation: {0}")]
    Schema(String),

    #[error("tree {tree} is not a tree: node {node} is reachable more than once")]
    Cycle { tree: usize, node: usize },

    #[error("tree {tree}, node {node}: {reason}")]
    Cover {
        tree: usize,
        node: usize,
        reason: &'static str,
    },

    #[error("tree {tree} has depth {depth}, above the cap of {cap}")]
    DepthExceeded { tree: usize, depth: usize, cap: usize },

    #[error("depth cap {0} is outside 0..=30")]
    InvalidDepthCap(usize),

    #[error("{path}: missing feature column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}, column `{column}`: {reason}")]
    BadCell {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("{path}: row {row} has {actual} cells, header has {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("background data is empty")]
    EmptyBackground,

    #[error("{players} players exceed the oracle cap of {cap}")]
    TooManyPlayers { players: usize, cap: usize },

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
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

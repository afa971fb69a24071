use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate element {element}: jacobian determinant {det:e}")]
    DegenerateElement { element: usize, det: f64 },

    #[error("degenerate boundary face {face}: surface jacobian {det:e}")]
    DegenerateFace { face: usize, det: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("linear solver breakdown after {iterations} iterations (relative residual {residual:e})")]
    SolverBreakdown { iterations: usize, residual: f64 },

    #[error(
        "rank-deficient normal matrix: pivot at node {node} collapsed to {ratio:e} of its diagonal \
         (the loss does not determine the field; is the regularization weight zero?)"
    )]
    RankDeficient { node: usize, ratio: f64 },

    #[error("regularization group `{0}` is empty")]
    EmptyGroup(&'static str),

    #[error("time grid mismatch: {0}")]
    Misaligned(String),

    #[error("no measurements available at t = {time} s")]
    MissingMeasurement { time: f64 },

    #[error("unknown node id {node} (mesh has {n_nodes} nodes)")]
    UnknownNode { node: usize, n_nodes: usize },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: row {row}: {message}")]
    Csv { path: PathBuf, row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Failures of the numerics, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateElement { .. }
                | Error::DegenerateFace { .. }
                | Error::SingularSystem(_)
                | Error::SolverBreakdown { .. }
                | Error::RankDeficient { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

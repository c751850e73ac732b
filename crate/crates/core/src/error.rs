use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// Each variant belongs to one module; [`Error::module`] reports which, so the
/// command-line front end can tag its messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: rssi {value} outside [{floor}, {ceil}]")]
    Range {
        line: usize,
        value: f64,
        floor: f64,
        ceil: f64,
    },

    #[error("invalid {module} parameter: {message}")]
    Param {
        module: &'static str,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training failed at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("warping band of radius {window} cannot align lengths {len_a} and {len_b}")]
    Infeasible {
        window: usize,
        len_a: usize,
        len_b: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("repeat {repeat}: {source}")]
    Repeat {
        repeat: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn param(module: &'static str, message: impl Into<String>) -> Self {
        Error::Param {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Name of the module the error originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::Range { .. } => "traces",
            Error::Param { module, .. } => module,
            Error::Shape(_) | Error::Training { .. } | Error::Checkpoint(_) => "nn",
            Error::Infeasible { .. } => "baseline",
            Error::Repeat { source, .. } => source.module(),
            Error::Io { .. } => "io",
        }
    }
}

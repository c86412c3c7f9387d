use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-submodular pairwise term ({p}, {q}) with weight {weight}")]
    Submodularity { p: usize, q: usize, weight: f64 },

    #[error("invalid edge ({p}, {q}) for {nodes} nodes")]
    InvalidEdge { p: usize, q: usize, nodes: usize },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("size bounds invalid: s_min = {s_min} > s_max = {s_max}")]
    Bounds { s_min: usize, s_max: usize },

    #[error("infeasible size constraint: s_min = {s_min} exceeds {pixels} pixels")]
    Infeasible { s_min: usize, pixels: usize },

    #[error("image {image}: {source}")]
    Image {
        image: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("undefined size ratio: true size is zero")]
    UndefinedRatio,

    #[error("generation error: {0}")]
    Generation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }

    /// Attaches the offending image index.
    pub fn for_image(self, image: usize) -> Self {
        Error::Image {
            image,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Bounds { .. } | Error::Infeasible { .. } => 3,
            Error::Numerical(_) => 4,
            Error::Image { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

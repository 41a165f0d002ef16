use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient points: requested {requested} from a source of {available}")]
    InsufficientPoints { requested: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate class {label}: {count} point(s), need at least 2")]
    DegenerateClass { label: i8, count: usize },

    #[error("singular reference: variance {index} of the reference distribution is not positive")]
    SingularReference { index: usize },

    #[error("ill-posed; set ridge>0")]
    IllPosed,

    #[error("numeric overflow in {0}")]
    NumericOverflow(&'static str),

    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("{name} {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("generation {generation}: {source}")]
    Generation {
        generation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("group {0} not present in rows")]
    MissingGroup(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn at_generation(self, generation: usize) -> Self {
        match self {
            e @ Error::Generation { .. } => e,
            other => Error::Generation {
                generation,
                source: Box::new(other),
            },
        }
    }
}

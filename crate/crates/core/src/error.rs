use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A domain value failed one of its validity rules.
    #[error("invalid {type_name}: {rule}")]
    Invariant {
        type_name: &'static str,
        rule: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NPY file at byte {offset}: {message}")]
    NpyFormat { offset: usize, message: String },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("CSV line {line}, cell {cell}: {message}")]
    Csv {
        line: usize,
        cell: usize,
        message: String,
    },

    #[error("token table line {line}: {message}")]
    TokenTable { line: usize, message: String },

    #[error("lexicon: {0}")]
    Lexicon(String),

    #[error("duplicate category {0:?}")]
    DuplicateCategory(String),

    #[error("unknown category {0:?}")]
    UnknownCategory(String),

    #[error("token count mismatch: {left} vs {right}")]
    TokenCountMismatch { left: usize, right: usize },

    #[error("zero variance input")]
    ZeroVariance,

    #[error("all values tied")]
    AllTied,

    #[error("degenerate dissimilarity matrix (all distances equal)")]
    DegenerateRdm,

    #[error("rank 0 after centering")]
    RankZero,

    #[error("too few pairs: {found} (need at least {required})")]
    TooFewPairs { found: usize, required: usize },

    #[error("no top-token entry for {side} feature {feature}")]
    MissingTopTokens { side: &'static str, feature: usize },

    #[error("null sample {sample}: {source}")]
    NullSample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invariant(type_name: &'static str, rule: impl Into<String>) -> Self {
        Error::Invariant {
            type_name,
            rule: rule.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by an analysis that has too little signal to
    /// score, as opposed to bad input.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Error::TooFewPairs { .. }
            | Error::ZeroVariance
            | Error::AllTied
            | Error::DegenerateRdm
            | Error::RankZero => true,
            Error::NullSample { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}

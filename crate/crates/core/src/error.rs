use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite gradient in {block}")]
    NonFiniteGradient { block: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("neighbor count k = {k} requires more than {k} samples, got {n}")]
    TooFewSamples { k: usize, n: usize },

    #[error("insufficient samples for CI test: n = {n} must exceed k_cmi = {k}; use a smaller k")]
    InsufficientSamples { n: usize, k: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at iteration {iteration}: non-finite {term}")]
    Diverged { iteration: usize, term: &'static str },

    #[error("CI test {test} failed: {source}")]
    Test {
        test: String,
        #[source]
        source: Box<Error>,
    },

    #[error("graph contains a cycle")]
    CyclicGraph,

    #[error("single-class labels: AUC is undefined")]
    SingleClass,

    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

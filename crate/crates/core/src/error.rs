use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("component {component} is empty (effective weight {weight:.3e})")]
    EmptyComponent { component: usize, weight: f64 },

    #[error("numerical failure: {message}\n{dump}")]
    Numerical { message: String, dump: String },

    #[error("invalid node count k={k} for p={p} variables")]
    InvalidK { k: usize, p: usize },

    #[error("cannot assign row {row}: no strictly positive entry")]
    Assignment { row: usize },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("accuracy is undefined: ground truth has no edges")]
    NoTruthEdges,

    #[error("state {state} has {count} observations, at least {needed} required")]
    UnderpopulatedState {
        state: usize,
        count: usize,
        needed: usize,
    },

    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Multi-state sparse Gaussian network discovery.
//!
//! The crate estimates, jointly, a clustering of variables into nodes and a
//! sparse node-level precision matrix, optionally for a mixture of latent
//! network states fit by EM. Single-state solvers (graphical lasso, ONMtF,
//! coherent graphical lasso) are exposed on their own and reused by the
//! mixture fit and by the pipeline baselines.
//!
//! Conventions used throughout:
//! - data matrices have observations in rows and variables in columns;
//! - the model is zero-mean, so no centering is ever applied;
//! - covariances use the biased `1/n` normalizer.

pub mod baselines;
pub mod cgl;
pub mod error;
pub mod glasso;
pub mod kmeans;
pub mod linalg;
pub mod metrics;
pub mod mngl;
pub mod model;
pub mod onmtf;
pub mod synthgen;

pub use error::{Error, Result};
pub use model::{
    ClusterIndicator, Component, DataMatrix, EmpiricalCovariance, MixtureState, NodePrecision,
    ResponsibilityMatrix, SolverSettings,
};

pub use nalgebra::{DMatrix, DVector};

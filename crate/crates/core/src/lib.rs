//! Greedy sparse feature selection for logistic text classifiers.
//!
//! The crate provides logistic Orthogonal Matching Pursuit ([`omp`]) and
//! overlapping Group OMP ([`gomp`]), lasso/ridge/elastic-net baselines
//! ([`baselines`]), a text-to-sparse-matrix pipeline ([`textpipe`]), group
//! structure tooling ([`grouping`]) and a dev-set grid-search harness
//! ([`eval`]).

pub mod baselines;
pub mod error;
pub mod eval;
pub mod gomp;
pub mod grouping;
pub mod logistic;
pub mod omp;
pub mod sparse;
pub mod textpipe;
pub mod trajectory;

pub use error::{Error, Result};
pub use logistic::{ActiveSet, FitOptions, Labels, Model};
pub use sparse::SparseMatrix;

//! Small learners used by the reference applications' model stages.

mod bigram;
mod linear;
mod quantile;
mod rng;
mod tree;

use thiserror::Error;

pub use bigram::{fit_bigram, generate, BigramModel, END, START};
pub use linear::{fit_linear, LinearModel, RIDGE_FALLBACK};
pub use quantile::QuantileSketch;
pub use rng::SplitMix64;
pub use tree::{fit_tree, TreeModel, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("no training rows")]
    Empty,
    #[error("row {row} has {got} features, expected {expected}")]
    Dimension { row: usize, expected: usize, got: usize },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("normal equations are singular even with ridge fallback")]
    Singular,
    #[error("quantile of an empty sketch")]
    EmptySketch,
    #[error("quantile level {0} outside [0, 1]")]
    BadQuantile(f64),
}

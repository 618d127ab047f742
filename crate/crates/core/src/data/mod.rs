//! Rating datasets, filtering, the shadow/target/extraction split and a
//! planted-factor synthetic generator.

mod dataset;
mod filter;
mod split;
mod synthetic;

pub use dataset::{load_csv, load_movielens, parse_csv, parse_movielens, RatingDataset, Rating, RawRating};
pub use filter::filter_min_interactions;
pub use split::{make_cross_splits, make_splits, verify_bundle, SplitBundle, SplitFractions};
pub use synthetic::{generate_synthetic, generate_synthetic_planted, SyntheticDataset, SyntheticSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, #[source] source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate rating for user {user}, item {item}")]
    Duplicate { line: usize, user: u64, item: u64 },
    #[error("degenerate split: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("split invariant violated: {0}")]
    InvariantViolation(String),
    #[error("serialization: {0}")]
    Format(String),
}

//! Leak-free dataset construction.
//!
//! Frames of the same temporal scene are grouped by embedding each image
//! (visual features, annotation statistics and timestamp), reducing the
//! embeddings to 2D with t-SNE and clustering them with DBSCAN. Whole
//! clusters are then assigned to train/val/test so no scene straddles two
//! subsets. DBCV scores the clustering. The module also picks the cloudiest
//! and sunniest days from station weather records for negative images.

mod dbcv;
mod dbscan;
mod embedding;
mod split;
mod tsne;
mod weather;

pub use dbcv::dbcv;
pub use dbscan::{dbscan, NOISE};
pub use embedding::{
    build_embedding, embedding_matrix, standardize_columns, ImageEmbedding, ANNOTATION_DIM, EMBEDDING_DIM, VISUAL_DIM,
};
pub use split::{cluster_split, ClusterPartition, SplitResult, Subset};
pub use tsne::{conditional_probabilities, reduce, tsne, Reduced2D, TsneParams};
pub use weather::{select_extreme_days, DayRecord, ExtremeDays};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LeakageError {
    #[error("visual feature vector has length {0}, expected {VISUAL_DIM}")]
    WrongVisualLength(usize),
    #[error("perplexity {perplexity} needs more than {} points, got {n}", 3.0 * perplexity)]
    PerplexityTooLarge { perplexity: f64, n: usize },
    #[error("all input points are identical")]
    DegenerateInput,
    #[error("DBCV needs at least two clusters with two or more points, found {0}")]
    TooFewClusters(usize),
    #[error("input is empty or too short: {0}")]
    EmptyInput(String),
    #[error("all weather variables are constant across the records")]
    ConstantVariables,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, LeakageError>;

//! Hashed bag-of-n-grams regression scorer with a sigmoid output and MSE training.

mod features;
mod model;
mod rank;
mod train;

pub use features::{featurize, PairedInput, SparseVector, BOUNDARY_TOKEN};
pub use model::{mse_loss, sigmoid, BatchGradient, ScorerModel, DEFAULT_DIM, MODEL_MAGIC};
pub use rank::{rank_by_scores, rank_candidates, RankingTask};
pub use train::{train, EpochRecord, Optimizer, TrainConfig, TrainOutcome};

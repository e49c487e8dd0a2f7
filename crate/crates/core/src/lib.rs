//! Dialogue-adaptive pre-training corpora and a desk-scale scorer.
//!
//! The pipeline: ingest dialogues ([`corpus`]), cut them into windows of at
//! most ten utterances, derive three coherence-breaking negatives per
//! positive ([`negatives`]), score positives by n-gram token specificity
//! ([`nidf`], [`scoring`]), train a hashed-feature sigmoid regressor on the
//! scores ([`scorer`]) and evaluate with ranking and correlation metrics
//! ([`metrics`]). The [`cli`] module wires these into the `dapo` binary.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the `f64` instantiations the CLI uses.

pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod hashing;
pub mod metrics;
pub mod negatives;
pub mod nidf;
pub mod rng;
pub mod scalar;
pub mod scorer;
pub mod scoring;

pub use corpus::{parse_dialogues, segment_dialogue, tokenize, Dialogue, Utterance};
pub use error::{Error, Result};
pub use negatives::{build_examples, gen_ui, gen_uo, gen_ur, Example, ExampleKind};
pub use nidf::{extract_ngrams, NgramKey, NidfTable};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use scorer::{featurize, rank_candidates, train, PairedInput, RankingTask, ScorerModel, TrainConfig};
pub use scoring::{corpus_stats, score_example, split_corpus, ScoreConfig, StatsReport};

pub type NidfTableF64 = NidfTable<f64>;
pub type NidfTableF32 = NidfTable<f32>;
pub type ScorerModelF64 = ScorerModel<f64>;
pub type ScorerModelF32 = ScorerModel<f32>;
pub type CorrelationF64 = metrics::Correlation<f64>;

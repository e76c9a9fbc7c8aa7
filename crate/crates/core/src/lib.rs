//! Personalized skip-gram word embeddings.
//!
//! The crate trains universal skip-gram vectors with negative sampling on a
//! background corpus, adapts them to individual users (full retraining or a
//! learned `h x h` linear layer on top of frozen background weights), and
//! evaluates the resulting mappings with two tasks: user prediction by
//! likelihood inversion and TF-IDF sentence completion.

pub mod adapt;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod format;
pub mod matrix;
pub mod sgns;


pub use adapt::{AdaptiveLayer, LayerInit, PersonalizedEmbedding, Provenance};
pub use eval::{CompletionSummary, EvalReport, MappingScorer, PredictionResult, SimilarityIndex, UserPredictionSummary, UserPriorTable};
pub use corpus::{EvalDocument, Sentence, SegmentMode, UserCorpus, Vocabulary};
pub use error::{Error, Result};

pub use matrix::Matrix;
pub use sgns::{EmbeddingModel, LrSchedule, NoiseSampler, TrainConfig, TrainStats};

//! Synthetic data generation for adapting grounding-verification models
//! to a target domain.
//!
//! Per evidence, a generator produces few-shot claims with assigned labels,
//! teachers score their entailment certainty, label-preserving augmentations
//! grow the population, and a distribution-matching objective keeps the best
//! `K` samples each iteration. Numeric code is generic over [`Scalar`]
//! (`f32` or `f64`); the pipeline itself runs in `f64`.

pub mod augment;
pub mod certainty;
pub mod corpus;
pub mod embed;
pub mod gateway;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod selection;
pub mod simlab;

pub use certainty::{digamma, ldiv, solve_beta_params, update_certainty, BetaParams, DomainError, HardLabel};
pub use corpus::{
    emit_dataset, ingest_targets, read_dataset, LabeledExample, Origin, SampleId, SyntheticSample, TargetCorpus,
};
pub use embed::{distance, distance_sq, EmbedError, EmbeddingVector, TargetIndex};
pub use gateway::{Gateway, GatewayError};
pub use scalar::Scalar;
pub use selection::{contribution, has_converged, select_top_k, ObjectiveBreakdown, SelectionResult, Weights};

pub type BetaParams64 = BetaParams<f64>;
pub type EmbeddingVector64 = EmbeddingVector<f64>;
pub type TargetIndex64 = TargetIndex<f64>;
pub type ObjectiveBreakdown64 = ObjectiveBreakdown<f64>;
pub type SelectionResult64 = SelectionResult<f64>;
pub type Weights64 = Weights<f64>;

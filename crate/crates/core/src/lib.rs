//! Citation-importance aware document representation and science mapping.
//!
//! The crate is organised as a pipeline of loosely coupled stages:
//!
//! * [`corpus`] - document model, corpus loading and synthetic fixtures
//! * [`importance`] - per-citation features, entropy weights, importance scores
//! * [`sampler`] - importance-aware triplet sampling with hard negatives
//! * [`embedder`] - surrogate base encoder, projection head and triplet training
//! * [`netgraph`] - k-NN and citation networks, structural statistics
//! * [`communities`] - Leiden community detection and clustering accuracy
//! * [`scimap`] - topic vectors, 2-D layout, overlays and map export
//! * [`evalmetrics`] - ranking and classification metrics
//! * [`pipeline`] - stage runner, configuration, manifests and sweeps

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod communities;
pub mod corpus;
pub mod embedder;
pub mod evalmetrics;
pub mod experiment;
pub mod importance;
pub mod netgraph;
pub mod pipeline;
pub mod sampler;
pub mod scimap;
mod util;

pub use corpus::{Corpus, Document, ReferenceEntry, SectionCounts};
pub use embedder::{EmbeddingMatrix, EmbeddingModel};
pub use importance::{FeatureSet, ImportanceWeights, ScoredCitation};
pub use sampler::{Triplet, TripletSet};

//! Mining food substitutes from meal logs.
//!
//! The pipeline: normalize free-text food entries against a taxonomy
//! ([`taxonomy`]), count food/context co-occurrences across meals ([`corpus`]),
//! weight them into a sparse PPMI matrix ([`ppmi`]), compress with a truncated
//! randomized SVD ([`svd`]), rank substitute candidates by cosine similarity
//! ([`ranker`]), and score rankings against human judgements ([`eval`]).
//! [`synth`] generates corpora with planted substitute clusters for end-to-end
//! verification and [`pipeline`] wires the stages together with on-disk
//! artifacts.
//!
//! The `parallel` feature (on by default) runs the heavy stages on a rayon
//! thread pool. Parallel and sequential paths produce bit-identical results;
//! `*_seq` variants are always available for comparison.

pub mod corpus;
pub mod error;
pub mod eval;
mod linalg;
pub mod pipeline;
pub mod ppmi;
pub mod ranker;
pub mod sparse;
pub mod svd;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
pub use taxonomy::{FoodKey, SalientFeature, Taxonomy};

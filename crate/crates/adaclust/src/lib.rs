// `!(x > 0.0)` guards deliberately treat NaN as invalid; `x <= 0.0` would
// let it through. Indexed loops stay where several arrays share the index.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Clustering with centroids that re-adapt to each batch.
//!
//! A small MLP encoder maps features into an embedding space; a stack of
//! centroid update blocks then alternates soft assignment (through a learned,
//! attention-style score) with responsibility-weighted centroid updates.
//! Because centroids are re-derived from the batch at hand, a model trained
//! on one domain carries its learned similarity metric to a shifted domain in
//! a single forward pass, without retraining.

pub mod autodiff;
pub mod baselines;
pub mod datagen;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{ActivationKind, Matrix};

// Every code block in the book runs as a doctest of this crate, so the
// prose cannot drift from the implementation. The CLI chapter is shell
// transcripts only and carries nothing runnable.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/matrices.md")]
    mod matrices {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/blocks.md")]
    mod blocks {}
    #[doc = include_str!("../../../book/src/objectives.md")]
    mod objectives {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
}

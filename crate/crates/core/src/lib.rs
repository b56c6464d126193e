//! Bengali sentiment classification pipeline.
//!
//! The crate is organised around the stages of the experiment harness:
//!
//! - [`corpus`]: loading, validating, partitioning and summarising labeled corpora
//! - [`annotate`]: merging three independent annotator labels and reporting agreement
//! - [`embed`]: tokenisation and the three embedding backends (word-level static,
//!   subword static, contextual)
//! - [`model`]: classifier assembly (embedding -> GRU/LSTM/CNN head -> dense -> softmax)
//! - [`train`]: Adam optimisation with L2 regularisation, early stopping, checkpoints
//! - [`eval`]: accuracy/confusion reports and the backends x heads x tasks result matrix
//! - [`apply`]: per-category sentiment percentages over categorised comments
//!
//! Everything is seeded and single-threaded so runs are reproducible bit-for-bit.

pub mod annotate;
pub mod apply;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod synth;
pub mod text;
pub mod train;

pub use error::Error;

/// Maximum token positions per sequence. Longer inputs are truncated from the tail.
pub const MAX_SEQUENCE_LEN: usize = 128;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;

//! Enriched visual encoding for video captioning.
//!
//! Videos are described by four codes: hierarchical Fourier encodings of 2D and
//! 3D network activations ([`hft`]), object and action semantics
//! ([`semantic`]). They are concatenated and squashed by a fixed random tanh
//! projection ([`fusion`]), and the result seeds the hidden state of a
//! two-layer GRU language model ([`gru`]). [`metrics`] scores generated
//! captions; [`synth`] fabricates small datasets with known answers.

pub mod config;
pub mod error;
pub mod fusion;
pub mod gru;
pub mod hft;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod semantic;
pub mod synth;

pub use error::{Error, Result};

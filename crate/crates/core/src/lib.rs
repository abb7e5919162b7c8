//! Sparse Markov chain models of pathway data and their maps.
//!
//! The pipeline: build a fixed-order state network from weighted paths
//! ([`corpus`]), lump the states of each physical node by minimum entropy-rate loss
//! and expand to any model size ([`lumping`]), cluster the resulting flows with a map
//! equation that shares codewords between co-modular states of one physical node
//! ([`mapeq`]), and choose the model size by cross-validated code length
//! ([`crossval`]). [`metrics`] compares maps; [`synth`] generates planted-memory data.

pub mod corpus;
pub mod crossval;
pub mod error;
pub mod lumping;
pub mod mapeq;
pub mod metrics;
pub mod synth;
pub mod util;

pub use error::{Error, LineDiagnostic, Result};

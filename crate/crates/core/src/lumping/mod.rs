//! Minimum entropy-rate-loss lumping of state nodes within each physical node, and
//! expansion of the stored merge sequences into sparse models of any size.

mod dendrogram;
mod model;
mod objective;

pub use dendrogram::{build_dendrogram, build_dendrograms, read_dendrograms, write_dendrograms, LumpDendrogram, LumpOptions, Merge};
pub use model::{expand_model, lumped_network, partition_at, unlump_sequence, Expander, SparseModel, Unlump};
pub use objective::{entropy_rate, kl_divergence, lump_delta, lump_delta_states, OutProfile};

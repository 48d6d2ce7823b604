//! Flow-graph intrusion detection: E-GraphSAGE edge embeddings trained with
//! Deep Graph Infomax, oblivious-tree boosting on top, and edge-mask
//! explainers with fidelity/sparsity evaluation.

pub mod cli;
pub mod detect;
pub mod dgi;
pub mod egsage;
pub mod error;
pub mod explain;
pub mod flowdata;
pub mod netgraph;
pub mod numcore;
pub mod synthgen;
pub mod xaieval;

pub use error::{Error, Result};

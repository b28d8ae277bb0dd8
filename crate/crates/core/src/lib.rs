//! Feature interaction-aware graph neural networks.
//!
//! Node representations combine a GNN embedding `h_i` (GCN or GraphSAGE-mean
//! aggregation) with an attention-pooled summary `f_i` of the node's pairwise
//! feature interactions, `z_i = h_i ⊕ f_i`. Models train either on node labels
//! (cross-entropy) or on graph structure alone (link prediction with negative
//! sampling).

pub mod aggregator;
pub mod attention;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod factorizer;
pub mod fm_reduction;
pub mod graph;
pub mod rng;
pub mod sparse;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

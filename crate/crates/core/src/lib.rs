//! Recursive embed → cluster → summarize tree index over a text corpus, with
//! tree-traversal, collapsed-tree, layer-restricted and flat retrieval.

pub mod chunker;
pub mod clustering;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod persistence;
pub mod providers;
pub mod retrieval;
pub mod tree;
pub mod vector;

pub use error::{Error, Result};

/// Dense node identifier, assigned in build order.
pub type NodeId = usize;

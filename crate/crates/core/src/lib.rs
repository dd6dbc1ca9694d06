//! Knowledge-graph augmented textual entailment.
//!
//! Premise and hypothesis are linked to concepts of an external knowledge
//! graph, the one-hop neighborhood of those concepts is filtered with
//! Personalized PageRank, and the resulting contextual subgraph is encoded
//! with a relational graph convolutional network. The graph encoding is
//! concatenated with a text encoding and classified by a feedforward layer.

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod kg_store;
pub mod linker;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod rgcn;
pub mod subgraph;
pub mod synthetic;
pub mod text_encoder;
pub mod trainer;

pub use error::{KesError, Result};

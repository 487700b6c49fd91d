//! Subtype-specific gene network inference.
//!
//! The pipeline pairs a vector-quantized patient autoencoder with a graph
//! link-prediction model trained on a prior gene interaction network, then
//! fine-tunes the graph encoder per subtype so that the product of patient
//! and gene embeddings reconstructs expression. Decoding the fine-tuned gene
//! embeddings yields one network per subtype.

pub mod baselines;
pub mod cli;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod graph_m;
pub mod infer_m;
pub mod knockout;
pub mod numerics;
pub mod patient_m;
pub mod persistence;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};

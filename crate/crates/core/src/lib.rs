//! Unsupervised video object segmentation from dense per-pixel embeddings,
//! objectness and optical flow, driven by tracked diverse seeds.

pub mod crf;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod feature_store;
pub mod graph;
pub mod motion;
pub mod segmenter;
pub mod synthetic;
pub mod tracking;

pub use error::{Error, Result};

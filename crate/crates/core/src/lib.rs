//! Incremental few-shot instance segmentation head.
//!
//! A γ-scaled cosine-similarity classifier is trained on base-class mask
//! embeddings; novel classes are added afterwards by imprinting averaged,
//! normalized shot features into the weight matrix. Around it sits the
//! post-processing pipeline that turns per-point masks into instances
//! (stability filter, classification, NMS) and a COCO-style evaluator.
//!
//! Mask embeddings and logits arrive as [`bundleio::EmbeddingBundle`]s,
//! produced either by [`synthgen`] or by an offline exporter.

pub mod bundleio;
pub mod classifier;
pub mod error;
pub mod evalkit;
pub mod incremental;
pub mod maskops;
pub mod numcore;
pub mod pipeline;
pub mod synthgen;

pub use error::{Error, Result};

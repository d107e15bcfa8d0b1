//! Prompt-embedding prediction from image features.
//!
//! The pipeline regresses sentence-embedding targets from precomputed image
//! features with a joint cosine + vocabulary-classification objective, can
//! retrain with a difficulty-ordered curriculum, and refines ensembles of
//! predictions with a domain-adaptive kernel meta-regressor.
//!
//! Interchangeable strategies (head wirings, curriculum split heuristics,
//! ensemble combiners) sit behind traits and are looked up by name in
//! [`registry::Registry`] instances, which is how the CLI selects them.

pub mod bundle;
pub mod cli;
pub mod curriculum;
pub mod dakl;
pub mod dataio;
pub mod error;
pub mod evalkit;
pub mod heads;
pub mod linalg;
pub mod registry;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};

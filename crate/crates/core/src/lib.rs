//! Flashcards: capturing an autoencoder's learned representation as
//! recursively reconstructed maze patterns, and replaying them to retrain
//! or to counter forgetting in continual learning.

mod error;

pub mod autoencoder;
pub mod batch;
pub mod classify;
pub mod continual;
pub mod data;
pub mod flashcards;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod patterns;
pub mod seed;

pub use batch::{ImageBatch, LatentBatch};
pub use error::{Error, ErrorClass, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Emotion-conditioned conversation generation: a GRU encoder-decoder with an
//! emotion category embedding, an internal emotion memory and an external
//! emotion vocabulary, plus the data, training and evaluation pipeline around it.

pub mod checkpoint;
pub mod classifier;
pub mod corpus;
mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod training;

pub use error::{EcmError, Result};

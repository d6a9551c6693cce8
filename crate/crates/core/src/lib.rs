//! Sentence similarity by decomposing and composing lexical semantics.
//!
//! For a sentence pair `(S, T)` the model
//!
//! 1. looks up a word vector for every token ([`embeddings`]);
//! 2. builds the word-by-word cosine matrix and a semantic matching vector for
//!    every word from the other sentence ([`matcher`]);
//! 3. splits each word vector into a similar and a dissimilar component
//!    relative to its matching vector ([`decomposer`]);
//! 4. composes both components with a two-channel n-gram CNN and max-pooling
//!    into one feature vector per sentence ([`composer`]);
//! 5. scores `sigmoid(u . [f(S); f(T)] + b)` ([`model`]).
//!
//! Training maximizes the likelihood of binary labels with Adam; embeddings
//! stay frozen.

pub mod composer;
pub mod data;
pub mod decomposer;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod matcher;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig, TrainingInstance};

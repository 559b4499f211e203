//! Deterministic federated-learning simulator for comparing client-selection
//! strategies.
//!
//! The crate simulates a server coordinating many clients over non-IID data
//! splits and measures how many communication rounds each selection strategy
//! needs to reach a target test accuracy. Four strategies ship out of the
//! box: uniform random, greedy k-center over weight embeddings, a deep-Q
//! agent, and a deep-Q ensemble whose picks are spread across spectral
//! clusters of the client population.
//!
//! Everything is seeded: given the same config and seeds, a run reproduces
//! its output files byte for byte, including under parallel client
//! execution.

pub mod data;
pub mod error;
pub mod experiment;
pub mod fed;
pub mod metrics;
pub mod nn;
pub mod rl;
pub mod seeding;
pub mod selectors;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};

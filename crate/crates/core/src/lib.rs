//! Simulation and detection library for jamming attacks in cell-free
//! massive MIMO networks.
//!
//! The library has two halves. The physical half (`channel`, `mobility`,
//! `topology`, `dataset`) simulates a downlink cell-free network with
//! moving users and an intermittent jammer, and turns each simulation
//! into a labeled sequence of connection-graph snapshots. The learning
//! half (`neural`, `training`) classifies those sequences with a gated
//! graph convolution followed by a temporal self-attention encoder,
//! trained end to end with reverse-mode gradients computed on a tape.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod mobility;
pub mod neural;
pub mod rng;
pub mod topology;
pub mod training;

pub use error::{Error, Result};

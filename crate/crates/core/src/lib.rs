//! Residual hybrid quantum-classical classifiers and the tooling to evaluate them.
//!
//! The crate is organised bottom-up:
//!
//! - [`statevector`]: exact dense simulation of small qubit registers.
//! - [`feature_map`]: angle encoding, the variational circuit, Pauli readout and
//!   parameter-shift Jacobians.
//! - [`nn`]: dense layers, ReLU/dropout MLP heads, softmax cross-entropy, Adam.
//! - [`models`]: the classical, pure-quantum, original-hybrid and residual-hybrid
//!   architectures with exact parameter counting.
//! - [`data`]: CSV ingestion, scaling, PCA, stratified folds and client partitions.
//! - [`train`]: centralized training, FedAvg simulation, DP-FL and communication accounting.
//! - [`privacy`]: membership inference and gradient inversion attacks.

pub mod data;
pub mod error;
pub mod feature_map;
pub mod models;
pub mod nn;
pub mod privacy;
pub mod seeds;
pub mod statevector;
pub mod train;

pub use error::{Error, Result};

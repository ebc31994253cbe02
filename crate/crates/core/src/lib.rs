//! Deterministic federated-learning simulation.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: a small CNN engine (LeNet-5 and a tiny GAN) with batch/group
//!   normalisation, weighted cross-entropy and plain SGD.
//! * [`data`]: CIFAR-10 ingestion, synthetic image datasets, preprocessing
//!   and Dirichlet label-skew partitioning.
//! * [`fed`]: the synchronous federated loop with FedAvg, FedProx and FedIR.
//! * [`fedos`]: unknown-class augmentation: generators, the weighted
//!   open-set loss and inference-time masking of the extra output.
//! * [`harness`]: experiment configuration, centralized baselines, ablation
//!   matrices and report emission.
//!
//! Everything that consumes randomness takes an explicit seed and derives
//! independent streams from it, so a run is a pure function of its
//! configuration.

pub mod data;
pub mod error;
pub mod fed;
pub mod fedos;
pub mod harness;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use nn::{
    Batch, Gradients, LayerSpec, Mode, ModelSpec, Network, NormKind, Real, Tensor, WeightSet,
};

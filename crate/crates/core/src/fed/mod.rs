//! Synchronous federated training: client sampling, local SGD under a
//! variant rule, sample-weighted aggregation and server-side evaluation.

mod aggregate;
mod client;
mod engine;
mod trace;

pub use aggregate::{aggregate, ClientUpdate};
pub use client::{
    epoch_order, fedir_weights, local_train, sample_clients, ClientState, LocalOutcome, LocalTask,
};
pub use engine::{
    evaluate, label_distribution, run_training, Federation, GlobalState, RunOptions,
};
pub use trace::{Checkpoint, MetricTrace, RoundRecord, TraceSummary, TRACE_COLUMNS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedos::UnknownConfig;

/// Rounds abort once the mean round loss exceeds this.
pub const DIVERGENCE_LOSS: f64 = 1e4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundConfig {
    pub rounds: usize,
    pub client_fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Run the selected clients' local training on the rayon pool.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            rounds: 500,
            client_fraction: 0.2,
            local_epochs: 1,
            batch_size: 32,
            lr: 0.1,
            seed: 0,
            parallel: true,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "client fraction {} outside (0, 1]",
                self.client_fraction
            )));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "local_epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// How a selected client trains locally.
#[derive(Clone, Debug)]
pub enum Variant {
    FedAvg,
    /// Proximal term `(mu/2)·‖w − w_global‖²`.
    FedProx { mu: f64 },
    /// Label-marginal importance weights `p(y)/q_k(y)`.
    FedIr { smoothing: f64 },
    FedOs(UnknownConfig),
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::FedAvg => "fedavg",
            Variant::FedProx { .. } => "fedprox",
            Variant::FedIr { .. } => "fedir",
            Variant::FedOs(_) => "fedos",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Variant::FedProx { mu } if !(mu.is_finite() && *mu >= 0.0) => {
                Err(Error::InvalidArgument(format!("FedProx mu {mu} must be >= 0")))
            }
            Variant::FedIr { smoothing } if !(smoothing.is_finite() && *smoothing >= 0.0) => Err(
                Error::InvalidArgument(format!("FedIR smoothing {smoothing} must be >= 0")),
            ),
            Variant::FedOs(u) => u.validate(),
            _ => Ok(()),
        }
    }
}

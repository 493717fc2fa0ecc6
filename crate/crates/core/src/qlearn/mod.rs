//! Per-saccade Q networks trained on Monte-Carlo reward targets.

mod checkpoint;
mod network;
mod train;

pub use checkpoint::{
    checkpoint_path, curve_csv, curve_path, load_checkpoint, load_stack, save_checkpoint,
    save_stack, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_INPUT, CHECKPOINT_VERSION,
};
pub use network::{init_bound, ForwardCache, Gradient, QNetwork};
pub use train::{
    fit, generate_training_set, mc_q_target, to_matrices, train_saccade_network, train_stack,
    train_stack_with, CurvePoint, QTargetSample, TrainingConfig, TrainingReport,
};

use crate::belief::BeliefState;
use crate::error::{Error, Result};

/// What the networks see: the posterior scaled by √n.
///
/// The posterior is a fixed function of the statistic `s` (and the prior),
/// so Q is still a function of the state. Feeding raw `s` makes the network
/// learn the softmax itself; with the default data budget it does not, and
/// plain gradient descent stalls near the per-action mean.
pub fn network_input(belief: &BeliefState) -> Vec<f64> {
    let scale = (belief.n() as f64).sqrt();
    belief.posterior().into_iter().map(|p| p * scale).collect()
}

/// One network per saccade, index 0 driving the first eye movement.
#[derive(Debug, Clone, PartialEq)]
pub struct QStack {
    nets: Vec<QNetwork>,
}

impl QStack {
    pub fn new(nets: Vec<QNetwork>) -> Self {
        Self { nets }
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn networks(&self) -> &[QNetwork] {
        &self.nets
    }

    /// Network for saccade number `saccade` (1-based).
    pub fn for_saccade(&self, saccade: usize) -> Result<&QNetwork> {
        saccade
            .checked_sub(1)
            .and_then(|i| self.nets.get(i))
            .ok_or_else(|| Error::Invalid(format!("no Q network for saccade {saccade}")))
    }
}

//! SGD with momentum and the frame-level, sequence-level and adaptation
//! training loops.
//!
//! Every loop follows the same recipe: epoch 1 runs without momentum, later
//! epochs use `momentum_after_first_epoch`; frames (or utterances) are
//! shuffled with a stream derived from `seed` and the epoch number; a
//! baseline report for the untouched model is emitted as epoch 0.

mod adapt;
mod frame;
mod sequence;
mod sgd;

pub use adapt::{adapt, AdaptMode};
pub use frame::{distill, distill_from_targets, distill_network, frame_error, train_ce};
pub use sequence::{sequence_train, SequenceRegulariser, SequenceUtterance};
pub use sgd::{sgd_step, MomentumState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{HardLabels, TemperatureMode};
use crate::numerics::Matrix;
use crate::workbench::{splice, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Kd,
    Hybrid,
    SmbrKd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Halve the learning rate after any epoch whose cv frame error is not
    /// below the best seen so far.
    HalveOnCvStall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScope {
    All,
    GatesOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum_after_first_epoch: f64,
    pub minibatch_size: usize,
    pub max_epochs: usize,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub q: f64,
    pub temperature: f64,
    pub temperature_mode: TemperatureMode,
    pub p: f64,
    pub update_scope: UpdateScope,
    /// Interpret `learning_rate` per frame: the step applied to a minibatch
    /// mean gradient is multiplied by the number of frames in the batch.
    pub lr_per_sample: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            momentum_after_first_epoch: 0.9,
            minibatch_size: 256,
            max_epochs: 10,
            lr_schedule: LrSchedule::Constant,
            seed: 0,
            loss_kind: LossKind::Ce,
            q: 0.0,
            temperature: 1.0,
            temperature_mode: TemperatureMode::Shared,
            p: 0.0,
            update_scope: UpdateScope::All,
            lr_per_sample: false,
        }
    }
}

impl TrainConfig {
    /// Five iterations at a fixed per-frame rate of 2e-4.
    pub fn adaptation() -> Self {
        Self {
            learning_rate: 2e-4,
            max_epochs: 5,
            lr_per_sample: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum_after_first_epoch) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::invalid("minibatch size must be at least 1"));
        }
        if !(self.q >= 0.0) || !self.q.is_finite() {
            return Err(Error::invalid("q must be non-negative"));
        }
        if !(self.p >= 0.0) || !self.p.is_finite() {
            return Err(Error::invalid("p must be non-negative"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid("temperature must be positive"));
        }
        Ok(())
    }

    pub(crate) fn momentum_for_epoch(&self, epoch: usize) -> f64 {
        if epoch <= 1 {
            0.0
        } else {
            self.momentum_after_first_epoch
        }
    }

    pub(crate) fn step_size(&self, lr: f64, frames: usize) -> f64 {
        if self.lr_per_sample {
            lr * frames as f64
        } else {
            lr
        }
    }
}

/// One line of a training log. Epoch 0 describes the model before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean training loss over the epoch (for epoch 0, of the initial model).
    pub loss: f64,
    pub cv_frame_error: f64,
    pub seconds: f64,
    pub learning_rate: f64,
    /// Mean per-frame expected state accuracy on the training lattices
    /// after the epoch; sequence training only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_accuracy: Option<f64>,
}

impl EpochReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::invalid(format!("bad report line: {e}")))
    }
}

/// Spliced frames with optional state labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub features: Matrix,
    pub labels: Option<HardLabels>,
}

impl FrameSet {
    pub fn new(features: Matrix, labels: Option<HardLabels>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::shape(format!(
                    "{} labels for {} frames",
                    l.len(),
                    features.rows()
                )));
            }
        }
        Ok(Self { features, labels })
    }

    /// Splices every utterance and stacks the frames in order. Labels come
    /// from the reference alignments.
    pub fn from_utterances(utts: &[Utterance], context: usize) -> Result<Self> {
        let spliced: Vec<Matrix> = utts.iter().map(|u| splice(&u.features, context)).collect();
        let refs: Vec<&Matrix> = spliced.iter().collect();
        let features = if refs.is_empty() {
            Matrix::zeros(0, 0)
        } else {
            Matrix::vstack(&refs)?
        };
        let labels = utts
            .iter()
            .flat_map(|u| u.alignment.states().iter().copied())
            .collect();
        Self::new(features, Some(HardLabels::new(labels)))
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> FrameSet {
        FrameSet {
            features: self.features.select_rows(indices),
            labels: self.labels.as_ref().map(|l| l.select(indices)),
        }
    }

    pub(crate) fn require_labels(&self, what: &str) -> Result<&HardLabels> {
        self.labels
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{what} needs labelled frames")))
    }
}

pub(crate) fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_round_trip() {
        let r = EpochReport {
            epoch: 3,
            loss: 0.1 + 0.2,
            cv_frame_error: 0.25,
            seconds: 0.0,
            learning_rate: 1e-3,
            expected_accuracy: None,
        };
        let line = r.to_json_line();
        assert!(!line.contains("expected_accuracy"));
        assert_eq!(EpochReport::from_json_line(&line).unwrap(), r);
    }

    #[test]
    fn first_epoch_has_no_momentum() {
        let cfg = TrainConfig {
            momentum_after_first_epoch: 0.7,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.momentum_for_epoch(1), 0.0);
        assert_eq!(cfg.momentum_for_epoch(2), 0.7);
    }
}

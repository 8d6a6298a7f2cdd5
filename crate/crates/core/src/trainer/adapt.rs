use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{HardLabels, SoftTargets};
use crate::network::Network;
use crate::numerics::argmax;

use super::frame::{run_frame_training, Targets};
use super::{EpochReport, FrameSet, LossKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    /// Label the data with the speaker-independent model's own per-frame
    /// argmax, then fine-tune with cross-entropy on those labels.
    TwoPassCe,
    /// Fine-tune directly on a teacher's posteriors.
    OnePassKd,
}

/// Unsupervised adaptation of a copy of `si_net` on `data`. Labels in
/// `data` are never read; `eval` (labelled) only feeds the reports.
pub fn adapt(
    si_net: &Network,
    data: &FrameSet,
    eval: &FrameSet,
    mode: AdaptMode,
    teacher: Option<&Network>,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<EpochReport>)> {
    let mut net = si_net.clone();
    let reports = match mode {
        AdaptMode::TwoPassCe => {
            let post = si_net.posteriors(&data.features, 1.0)?;
            let labels = (0..post.rows()).map(|t| argmax(post.row(t))).collect();
            let first_pass = FrameSet::new(data.features.clone(), Some(HardLabels::new(labels)))?;
            let cfg = TrainConfig {
                loss_kind: LossKind::Ce,
                ..cfg.clone()
            };
            run_frame_training(&mut net, &first_pass, eval, Targets::Labels, &cfg)?
        }
        AdaptMode::OnePassKd => {
            let teacher =
                teacher.ok_or_else(|| Error::invalid("one-pass adaptation needs a teacher"))?;
            let targets =
                SoftTargets::new(teacher.posteriors(&data.features, cfg.temperature)?, cfg.temperature)?;
            let unlabelled = FrameSet::new(data.features.clone(), None)?;
            let cfg = TrainConfig {
                loss_kind: LossKind::Kd,
                ..cfg.clone()
            };
            run_frame_training(&mut net, &unlabelled, eval, Targets::Soft(&targets), &cfg)?
        }
    };
    Ok((net, reports))
}

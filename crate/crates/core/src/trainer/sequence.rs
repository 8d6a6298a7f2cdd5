use std::time::Instant;

use crate::error::{Error, Result};
use crate::losses::{ce_loss, kd_loss_with, HardLabels, LossResult, SoftTargets};
use crate::network::Network;
use crate::numerics::{Matrix, Rng};
use crate::sequence::{smbr_kd_objective, smbr_objective, Lattice, ReferenceAlignment, SmbrConfig};
use crate::workbench::{splice, Utterance};

use super::{frame_error, sgd_step, EpochReport, FrameSet, LossKind, LrSchedule, MomentumState, TrainConfig};

/// One utterance prepared for sequence training.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceUtterance {
    /// Spliced features.
    pub features: Matrix,
    pub lattice: Lattice,
    pub alignment: ReferenceAlignment,
}

impl SequenceUtterance {
    pub fn from_utterances(utts: &[Utterance], context: usize) -> Result<Vec<Self>> {
        utts.iter()
            .map(|u| {
                let lattice = u
                    .lattice
                    .clone()
                    .ok_or_else(|| Error::invalid(format!("utterance {} has no lattice", u.id)))?;
                Ok(Self {
                    features: splice(&u.features, context),
                    lattice,
                    alignment: u.alignment.clone(),
                })
            })
            .collect()
    }
}

/// The frame-level term interpolated with sMBR through `p`.
#[derive(Clone, Copy)]
pub enum SequenceRegulariser<'a> {
    None,
    /// Distillation towards the teacher's posteriors at `cfg.temperature`.
    Teacher(&'a Network),
    /// Cross-entropy against the reference alignment (CE-smoothed sMBR).
    Labels,
}

fn utterance_objective(
    net: &Network,
    utt: &SequenceUtterance,
    reg: SequenceRegulariser<'_>,
    smbr_cfg: &SmbrConfig,
    cfg: &TrainConfig,
) -> Result<(LossResult, f64, crate::network::ForwardTrace)> {
    let trace = net.forward(&utt.features, 1.0)?;
    let smbr = smbr_objective(&utt.lattice, &trace.posteriors, &utt.alignment, smbr_cfg)?;
    let regulariser = match reg {
        _ if cfg.p == 0.0 => LossResult {
            value: 0.0,
            dlogits: Matrix::zeros(trace.logits.rows(), trace.logits.cols()),
        },
        SequenceRegulariser::None => {
            return Err(Error::invalid("p > 0 needs a teacher or labels to regularise with"))
        }
        SequenceRegulariser::Teacher(teacher) => {
            let targets =
                SoftTargets::new(teacher.posteriors(&utt.features, cfg.temperature)?, cfg.temperature)?;
            kd_loss_with(&trace.logits, &targets, cfg.temperature, cfg.temperature_mode, None)?
        }
        SequenceRegulariser::Labels => ce_loss(
            &trace.posteriors,
            &HardLabels::new(utt.alignment.states().to_vec()),
        )?,
    };
    let combined = smbr_kd_objective(&smbr, &regulariser, cfg.p)?;
    Ok((combined, smbr.expected_accuracy, trace))
}

fn mean_expected_accuracy(net: &Network, utts: &[SequenceUtterance], smbr_cfg: &SmbrConfig) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut frames = 0;
    for u in utts {
        let post = net.posteriors(&u.features, 1.0)?;
        total += smbr_objective(&u.lattice, &post, &u.alignment, smbr_cfg)?.expected_accuracy;
        frames += u.lattice.num_frames();
    }
    Ok((total / frames as f64, frames))
}

/// Per-utterance SGD on `-E[A]/T + p · regulariser`.
///
/// Each report carries the mean per-frame expected accuracy of the training
/// lattices after the epoch next to the usual cv frame error; the two need
/// not move together.
pub fn sequence_train(
    net: &mut Network,
    utts: &[SequenceUtterance],
    cv: &FrameSet,
    reg: SequenceRegulariser<'_>,
    smbr_cfg: &SmbrConfig,
    cfg: &TrainConfig,
) -> Result<Vec<EpochReport>> {
    cfg.validate()?;
    smbr_cfg.validate()?;
    if cfg.loss_kind != LossKind::SmbrKd {
        return Err(Error::invalid("sequence training needs loss_kind = smbr_kd"));
    }
    if utts.is_empty() {
        return Err(Error::invalid("sequence training without lattices"));
    }
    if cfg.p > 0.0 && matches!(reg, SequenceRegulariser::None) {
        return Err(Error::invalid("p > 0 needs a teacher or labels to regularise with"));
    }
    let total_frames: usize = utts.iter().map(|u| u.lattice.num_frames()).sum();

    let start = Instant::now();
    let mut initial_loss = 0.0;
    for u in utts {
        initial_loss += utterance_objective(net, u, reg, smbr_cfg, cfg)?.0.value
            * u.lattice.num_frames() as f64;
    }
    let (ea, _) = mean_expected_accuracy(net, utts, smbr_cfg)?;
    let mut reports = vec![EpochReport {
        epoch: 0,
        loss: initial_loss / total_frames as f64,
        cv_frame_error: frame_error(net, cv)?,
        seconds: start.elapsed().as_secs_f64(),
        learning_rate: cfg.learning_rate,
        expected_accuracy: Some(ea),
    }];

    let mut best_cv = reports[0].cv_frame_error;
    let mut lr = cfg.learning_rate;
    let mut state = MomentumState::new(net);
    let mut order: Vec<usize> = (0..utts.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let momentum = cfg.momentum_for_epoch(epoch);
        Rng::derive(cfg.seed, "sequence/shuffle", epoch).shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let u = &utts[i];
            let (loss, _, trace) = utterance_objective(net, u, reg, smbr_cfg, cfg)?;
            total += loss.value * u.lattice.num_frames() as f64;
            let grads = net.backward(&trace, &loss.dlogits)?;
            let step = cfg.step_size(lr, u.lattice.num_frames());
            sgd_step(net, &grads, &mut state, step, momentum, cfg.update_scope)?;
        }
        let (ea, _) = mean_expected_accuracy(net, utts, smbr_cfg)?;
        let cv_frame_error = frame_error(net, cv)?;
        reports.push(EpochReport {
            epoch,
            loss: total / total_frames as f64,
            cv_frame_error,
            seconds: start.elapsed().as_secs_f64(),
            learning_rate: lr,
            expected_accuracy: Some(ea),
        });
        if cv_frame_error < best_cv {
            best_cv = cv_frame_error;
        } else if cfg.lr_schedule == LrSchedule::HalveOnCvStall {
            lr *= 0.5;
        }
    }
    Ok(reports)
}

use std::time::Instant;

use crate::error::{Error, Result};
use crate::losses::{ce_loss, hybrid_loss_with, LossResult, SoftTargets};
use crate::network::{Network, NetworkConfig};
use crate::numerics::{argmax, Rng};

use super::{batches, sgd_step, EpochReport, FrameSet, LossKind, LrSchedule, MomentumState, TrainConfig};

const EVAL_CHUNK: usize = 1024;

/// Where the per-frame targets come from.
#[derive(Clone, Copy)]
pub(crate) enum Targets<'a> {
    Labels,
    Teacher(&'a Network),
    /// Precomputed soft targets, row-aligned with the training frames.
    Soft(&'a SoftTargets),
}

/// Fraction of labelled frames whose most likely state is wrong.
pub fn frame_error(net: &Network, set: &FrameSet) -> Result<f64> {
    let labels = set.require_labels("frame error")?.as_slice();
    if set.is_empty() {
        return Err(Error::invalid("frame error over an empty set"));
    }
    let mut wrong = 0usize;
    let order: Vec<usize> = (0..set.len()).collect();
    for chunk in order.chunks(EVAL_CHUNK) {
        let x = set.features.select_rows(chunk);
        let trace = net.forward(&x, 1.0)?;
        for (r, &i) in chunk.iter().enumerate() {
            wrong += usize::from(argmax(trace.logits.row(r)) != labels[i]);
        }
    }
    Ok(wrong as f64 / set.len() as f64)
}

fn batch_loss(
    net: &Network,
    train: &FrameSet,
    indices: &[usize],
    targets: Targets<'_>,
    cfg: &TrainConfig,
) -> Result<(LossResult, crate::network::ForwardTrace)> {
    let batch = train.select(indices);
    let trace = net.forward(&batch.features, 1.0)?;
    let loss = match targets {
        Targets::Labels => ce_loss(&trace.posteriors, batch.require_labels("cross-entropy")?)?,
        Targets::Teacher(_) | Targets::Soft(_) => {
            let soft = match targets {
                Targets::Teacher(t) => SoftTargets::new(
                    t.posteriors(&batch.features, cfg.temperature)?,
                    cfg.temperature,
                )?,
                Targets::Soft(s) => s.select(indices),
                Targets::Labels => unreachable!(),
            };
            let q = if cfg.loss_kind == LossKind::Hybrid { cfg.q } else { 0.0 };
            hybrid_loss_with(
                &trace.logits,
                &soft,
                batch.labels.as_ref(),
                q,
                cfg.temperature,
                cfg.temperature_mode,
            )?
        }
    };
    Ok((loss, trace))
}

fn mean_loss(net: &Network, train: &FrameSet, targets: Targets<'_>, cfg: &TrainConfig) -> Result<f64> {
    let order: Vec<usize> = (0..train.len()).collect();
    let mut total = 0.0;
    for b in batches(&order, cfg.minibatch_size.max(EVAL_CHUNK)) {
        total += batch_loss(net, train, b, targets, cfg)?.0.value * b.len() as f64;
    }
    Ok(total / train.len() as f64)
}

pub(crate) fn run_frame_training(
    net: &mut Network,
    train: &FrameSet,
    cv: &FrameSet,
    targets: Targets<'_>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochReport>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if let Targets::Soft(s) = targets {
        if s.posteriors.rows() != train.len() {
            return Err(Error::shape("soft targets do not match the training frames"));
        }
    }
    if matches!(targets, Targets::Labels) || (cfg.loss_kind == LossKind::Hybrid && cfg.q > 0.0) {
        train.require_labels("this loss")?;
    }
    cv.require_labels("cross-validation")?;

    let start = Instant::now();
    let mut reports = vec![EpochReport {
        epoch: 0,
        loss: mean_loss(net, train, targets, cfg)?,
        cv_frame_error: frame_error(net, cv)?,
        seconds: start.elapsed().as_secs_f64(),
        learning_rate: cfg.learning_rate,
        expected_accuracy: None,
    }];
    let mut best_cv = reports[0].cv_frame_error;
    let mut lr = cfg.learning_rate;
    let mut state = MomentumState::new(net);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let momentum = cfg.momentum_for_epoch(epoch);
        Rng::derive(cfg.seed, "shuffle", epoch).shuffle(&mut order);
        let mut total = 0.0;
        for b in batches(&order, cfg.minibatch_size) {
            let (loss, trace) = batch_loss(net, train, b, targets, cfg)?;
            total += loss.value * b.len() as f64;
            let grads = net.backward(&trace, &loss.dlogits)?;
            let step = cfg.step_size(lr, b.len());
            sgd_step(net, &grads, &mut state, step, momentum, cfg.update_scope)?;
        }
        let cv_frame_error = frame_error(net, cv)?;
        reports.push(EpochReport {
            epoch,
            loss: total / train.len() as f64,
            cv_frame_error,
            seconds: start.elapsed().as_secs_f64(),
            learning_rate: lr,
            expected_accuracy: None,
        });
        if cv_frame_error < best_cv {
            best_cv = cv_frame_error;
        } else if cfg.lr_schedule == LrSchedule::HalveOnCvStall {
            lr *= 0.5;
        }
    }
    Ok(reports)
}

/// Cross-entropy training against the labels of `train`.
pub fn train_ce(
    net: &mut Network,
    train: &FrameSet,
    cv: &FrameSet,
    cfg: &TrainConfig,
) -> Result<Vec<EpochReport>> {
    if cfg.loss_kind != LossKind::Ce {
        return Err(Error::invalid("train_ce needs loss_kind = ce"));
    }
    run_frame_training(net, train, cv, Targets::Labels, cfg)
}

/// Builds a fresh student from `student_cfg` (seeded with `cfg.seed`) and
/// trains it against `teacher`.
pub fn distill(
    student_cfg: NetworkConfig,
    teacher: &Network,
    train: &FrameSet,
    cv: &FrameSet,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<EpochReport>)> {
    let mut student = Network::build(student_cfg, cfg.seed)?;
    let reports = distill_network(&mut student, teacher, train, cv, cfg)?;
    Ok((student, reports))
}

/// Distillation into an existing student. Teacher posteriors are computed
/// per minibatch at `cfg.temperature`; labels are only read when
/// `loss_kind = hybrid` and `q > 0`.
pub fn distill_network(
    student: &mut Network,
    teacher: &Network,
    train: &FrameSet,
    cv: &FrameSet,
    cfg: &TrainConfig,
) -> Result<Vec<EpochReport>> {
    check_distill_kind(cfg)?;
    let (s, t) = (student.config(), teacher.config());
    if s.output_dim != t.output_dim || s.input_dim != t.input_dim {
        return Err(Error::shape(format!(
            "teacher maps {} -> {}, student {} -> {}",
            t.input_dim, t.output_dim, s.input_dim, s.output_dim
        )));
    }
    run_frame_training(student, train, cv, Targets::Teacher(teacher), cfg)
}

/// Distillation from targets computed ahead of time, for instance by
/// exporting teacher posteriors on unlabelled data.
pub fn distill_from_targets(
    student: &mut Network,
    targets: &SoftTargets,
    train: &FrameSet,
    cv: &FrameSet,
    cfg: &TrainConfig,
) -> Result<Vec<EpochReport>> {
    check_distill_kind(cfg)?;
    run_frame_training(student, train, cv, Targets::Soft(targets), cfg)
}

fn check_distill_kind(cfg: &TrainConfig) -> Result<()> {
    match cfg.loss_kind {
        LossKind::Kd | LossKind::Hybrid => Ok(()),
        other => Err(Error::invalid(format!("distillation with loss_kind {other:?}"))),
    }
}

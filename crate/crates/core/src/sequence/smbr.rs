use crate::error::{Error, Result};
use crate::losses::LossResult;
use crate::numerics::{log_add, Matrix};

use super::{Lattice, ReferenceAlignment};

pub const DEFAULT_ACOUSTIC_SCALE: f64 = 0.1;
pub const DEFAULT_PRIOR_FLOOR: f64 = 1e-8;

/// Arc posteriors and partition function of a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    pub arc_posteriors: Vec<f64>,
    pub total_logprob: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Log-domain forward-backward. An arc's score is
/// `frame_log_scores[t][state] + graph_logweight`.
pub fn forward_backward(lat: &Lattice, frame_log_scores: &Matrix) -> Result<ForwardBackward> {
    if frame_log_scores.rows() != lat.num_frames() {
        return Err(Error::shape(format!(
            "{} score rows for a {}-frame lattice",
            frame_log_scores.rows(),
            lat.num_frames()
        )));
    }
    if lat.max_state() >= frame_log_scores.cols() {
        return Err(Error::shape(format!(
            "lattice state {} outside {} score columns",
            lat.max_state(),
            frame_log_scores.cols()
        )));
    }
    let arcs = lat.arcs();
    let scores: Vec<f64> = arcs
        .iter()
        .map(|a| frame_log_scores.get(a.frame, a.state) + a.graph_logweight)
        .collect();
    let order = lat.arcs_by_source();

    let mut alpha = vec![f64::NEG_INFINITY; lat.num_nodes()];
    alpha[0] = 0.0;
    for &i in &order {
        let a = &arcs[i];
        alpha[a.to] = log_add(alpha[a.to], alpha[a.from] + scores[i]);
    }
    let mut beta = vec![f64::NEG_INFINITY; lat.num_nodes()];
    beta[lat.end_node()] = 0.0;
    for &i in order.iter().rev() {
        let a = &arcs[i];
        beta[a.from] = log_add(beta[a.from], scores[i] + beta[a.to]);
    }

    let total_logprob = alpha[lat.end_node()];
    if !total_logprob.is_finite() {
        return Err(Error::DegenerateLattice(
            "all complete paths have zero probability".into(),
        ));
    }
    let arc_posteriors = arcs
        .iter()
        .zip(&scores)
        .map(|(a, s)| (alpha[a.from] + s + beta[a.to] - total_logprob).exp())
        .collect();
    Ok(ForwardBackward {
        arc_posteriors,
        total_logprob,
        alpha,
        beta,
    })
}

/// Acoustic scale and the state priors that turn posteriors into scaled
/// pseudo log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct SmbrConfig {
    pub acoustic_scale: f64,
    pub state_priors: Vec<f64>,
    pub prior_floor: f64,
}

impl SmbrConfig {
    pub fn new(acoustic_scale: f64, state_priors: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            acoustic_scale,
            state_priors,
            prior_floor: DEFAULT_PRIOR_FLOOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Priors from label frequencies, floored at [`DEFAULT_PRIOR_FLOOR`] and
    /// renormalised.
    pub fn from_labels<'a>(
        acoustic_scale: f64,
        num_states: usize,
        labels: impl IntoIterator<Item = &'a usize>,
    ) -> Result<Self> {
        let mut counts = vec![0.0f64; num_states];
        let mut total = 0.0f64;
        for &l in labels {
            if l >= num_states {
                return Err(Error::invalid(format!("label {l} >= {num_states} states")));
            }
            counts[l] += 1.0;
            total += 1.0;
        }
        if total == 0.0 {
            return Err(Error::invalid("cannot estimate priors from no labels"));
        }
        let floored: Vec<f64> = counts
            .iter()
            .map(|c| (c / total).max(DEFAULT_PRIOR_FLOOR))
            .collect();
        let z: f64 = floored.iter().sum();
        Self::new(acoustic_scale, floored.iter().map(|p| p / z).collect())
    }

    /// Flat priors, which make the scores plain scaled log posteriors.
    pub fn uniform(acoustic_scale: f64, num_states: usize) -> Result<Self> {
        Self::new(acoustic_scale, vec![1.0 / num_states as f64; num_states])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.acoustic_scale > 0.0) || !self.acoustic_scale.is_finite() {
            return Err(Error::invalid("acoustic scale must be positive"));
        }
        if !(self.prior_floor > 0.0) {
            return Err(Error::invalid("prior floor must be positive"));
        }
        let sum: f64 = self.state_priors.iter().sum();
        if (sum - 1.0).abs() > 1e-5 || self.state_priors.iter().any(|p| *p < 0.0) {
            return Err(Error::invalid(format!("state priors sum to {sum}")));
        }
        Ok(())
    }

    /// `k (log y - log prior)` per frame and state.
    pub fn frame_log_scores(&self, posteriors: &Matrix) -> Result<Matrix> {
        if posteriors.cols() != self.state_priors.len() {
            return Err(Error::shape(format!(
                "{} posterior columns, {} priors",
                posteriors.cols(),
                self.state_priors.len()
            )));
        }
        let log_prior: Vec<f64> = self
            .state_priors
            .iter()
            .map(|p| p.max(self.prior_floor).ln())
            .collect();
        let mut out = Matrix::zeros(posteriors.rows(), posteriors.cols());
        for t in 0..posteriors.rows() {
            for ((o, y), lp) in out.row_mut(t).iter_mut().zip(posteriors.row(t)).zip(&log_prior)
            {
                *o = self.acoustic_scale * (y.max(f64::MIN_POSITIVE).ln() - lp);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmbrResult {
    /// Expected number of correct frames, in `[0, T]`.
    pub expected_accuracy: f64,
    pub arc_posteriors: Vec<f64>,
    /// Expected path accuracy given that the path uses the arc.
    pub arc_expected_accuracy: Vec<f64>,
    /// Derivative of `expected_accuracy` with respect to the logits (ascent
    /// direction).
    pub dlogits: Matrix,
    pub num_frames: usize,
}

/// Expected state accuracy over the lattice and its gradient with respect to
/// the logits that produced `posteriors` (softmax at T=1).
pub fn smbr_objective(
    lat: &Lattice,
    posteriors: &Matrix,
    reference: &ReferenceAlignment,
    cfg: &SmbrConfig,
) -> Result<SmbrResult> {
    if reference.len() != lat.num_frames() {
        return Err(Error::invalid(format!(
            "reference has {} frames, lattice {}",
            reference.len(),
            lat.num_frames()
        )));
    }
    if posteriors.rows() != lat.num_frames() {
        return Err(Error::shape(format!(
            "{} posterior rows for a {}-frame lattice",
            posteriors.rows(),
            lat.num_frames()
        )));
    }
    cfg.validate()?;
    let scores = cfg.frame_log_scores(posteriors)?;
    let fb = forward_backward(lat, &scores)?;
    let arcs = lat.arcs();
    let ref_states = reference.states();
    let acc: Vec<f64> = arcs
        .iter()
        .map(|a| f64::from(u8::from(a.state == ref_states[a.frame])))
        .collect();
    let weight = |i: usize| scores.get(arcs[i].frame, arcs[i].state) + arcs[i].graph_logweight;

    // Accuracy-augmented recursions: expected accuracy of the partial path
    // ending at (alpha) or starting from (beta) each node.
    let order = lat.arcs_by_source();
    let mut alpha_acc = vec![0.0; lat.num_nodes()];
    for &i in &order {
        let a = &arcs[i];
        let share = (fb.alpha[a.from] + weight(i) - fb.alpha[a.to]).exp();
        if share > 0.0 {
            alpha_acc[a.to] += share * (alpha_acc[a.from] + acc[i]);
        }
    }
    let mut beta_acc = vec![0.0; lat.num_nodes()];
    for &i in order.iter().rev() {
        let a = &arcs[i];
        let share = (weight(i) + fb.beta[a.to] - fb.beta[a.from]).exp();
        if share > 0.0 {
            beta_acc[a.from] += share * (beta_acc[a.to] + acc[i]);
        }
    }

    let expected_accuracy: f64 = fb
        .arc_posteriors
        .iter()
        .zip(&acc)
        .map(|(g, a)| g * a)
        .sum();
    let arc_expected_accuracy: Vec<f64> = arcs
        .iter()
        .enumerate()
        .map(|(i, a)| alpha_acc[a.from] + acc[i] + beta_acc[a.to])
        .collect();

    let mut dlogits = Matrix::zeros(lat.num_frames(), posteriors.cols());
    for (i, a) in arcs.iter().enumerate() {
        let g = fb.arc_posteriors[i];
        if g > 0.0 {
            let v = dlogits.get(a.frame, a.state)
                + cfg.acoustic_scale * g * (arc_expected_accuracy[i] - expected_accuracy);
            dlogits.set(a.frame, a.state, v);
        }
    }
    Ok(SmbrResult {
        expected_accuracy,
        arc_posteriors: fb.arc_posteriors,
        arc_expected_accuracy,
        dlogits,
        num_frames: lat.num_frames(),
    })
}

/// Descent-form combination `-E[A]/T + p · regulariser`.
///
/// The regulariser is normally the distillation loss on the same frames; a
/// cross-entropy [`LossResult`] gives CE-smoothed sMBR.
pub fn smbr_kd_objective(smbr: &SmbrResult, regulariser: &LossResult, p: f64) -> Result<LossResult> {
    if !(p >= 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p must be non-negative, got {p}")));
    }
    if regulariser.dlogits.shape() != smbr.dlogits.shape() {
        return Err(Error::shape(format!(
            "sMBR gradient {:?} vs regulariser {:?}",
            smbr.dlogits.shape(),
            regulariser.dlogits.shape()
        )));
    }
    let frames = smbr.num_frames as f64;
    let mut dlogits = smbr.dlogits.clone();
    dlogits.scale(-1.0 / frames);
    let mut value = -smbr.expected_accuracy / frames;
    if p > 0.0 {
        dlogits.add_scaled(&regulariser.dlogits, p)?;
        value += p * regulariser.value;
    }
    Ok(LossResult { value, dlogits })
}

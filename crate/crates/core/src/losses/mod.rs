//! Frame-level objectives. Every loss is a (weighted) mean over frames and
//! returns its gradient with respect to the student logits.

use crate::error::{Error, Result};
use crate::numerics::{log_softmax_into, softmax_into, softmax_rows, Matrix};

/// Ground-truth state index per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardLabels(Vec<usize>);

impl HardLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn select(&self, indices: &[usize]) -> HardLabels {
        HardLabels(indices.iter().map(|&i| self.0[i]).collect())
    }

    fn check(&self, frames: usize, classes: usize) -> Result<()> {
        if self.0.len() != frames {
            return Err(Error::shape(format!(
                "{} labels for {frames} frames",
                self.0.len()
            )));
        }
        if let Some(bad) = self.0.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(())
    }
}

impl From<Vec<usize>> for HardLabels {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Teacher posteriors used as pseudo labels, with the temperature that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTargets {
    pub posteriors: Matrix,
    pub temperature: f64,
}

impl SoftTargets {
    pub fn new(posteriors: Matrix, temperature: f64) -> Result<Self> {
        for r in 0..posteriors.rows() {
            let row = posteriors.row(r);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-5 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::invalid(format!(
                    "soft target row {r} is not a distribution (sum {sum})"
                )));
            }
        }
        if !(temperature > 0.0) {
            return Err(Error::invalid("soft target temperature must be positive"));
        }
        Ok(Self {
            posteriors,
            temperature,
        })
    }

    pub fn select(&self, indices: &[usize]) -> SoftTargets {
        SoftTargets {
            posteriors: self.posteriors.select_rows(indices),
            temperature: self.temperature,
        }
    }

    /// Mean per-frame entropy `-Σ p ln p`.
    pub fn mean_entropy(&self) -> f64 {
        let n = self.posteriors.rows();
        let total: f64 = (0..n)
            .map(|r| {
                self.posteriors
                    .row(r)
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| -p * p.ln())
                    .sum::<f64>()
            })
            .sum();
        total / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub dlogits: Matrix,
}

/// How the student softmax temperature relates to the teacher's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TemperatureMode {
    /// Student and teacher use the same temperature.
    #[default]
    Shared,
    /// Only the teacher is tempered; the student softmax stays at T=1.
    TeacherOnly,
}

fn frame_weights(weights: Option<&[f64]>, frames: usize) -> Result<(Vec<f64>, f64)> {
    let w = match weights {
        Some(w) if w.len() != frames => {
            return Err(Error::shape(format!(
                "{} frame weights for {frames} frames",
                w.len()
            )))
        }
        Some(w) if w.iter().any(|v| !(*v >= 0.0)) => {
            return Err(Error::invalid("frame weights must be non-negative"))
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; frames],
    };
    let total: f64 = w.iter().sum();
    if frames > 0 && !(total > 0.0) {
        return Err(Error::invalid("frame weights sum to zero"));
    }
    Ok((w, total))
}

fn check_nonempty(frames: usize) -> Result<()> {
    if frames == 0 {
        Err(Error::invalid("loss over an empty batch"))
    } else {
        Ok(())
    }
}

/// Cross-entropy against hard labels, given T=1 posteriors. The gradient is
/// the fused softmax/CE form `(y - onehot) / N`.
pub fn ce_loss(posteriors: &Matrix, labels: &HardLabels) -> Result<LossResult> {
    ce_loss_weighted(posteriors, labels, None)
}

pub fn ce_loss_weighted(
    posteriors: &Matrix,
    labels: &HardLabels,
    weights: Option<&[f64]>,
) -> Result<LossResult> {
    let (n, k) = posteriors.shape();
    check_nonempty(n)?;
    labels.check(n, k)?;
    let (w, total) = frame_weights(weights, n)?;
    let mut value = 0.0;
    let mut dlogits = posteriors.clone();
    for (t, &label) in labels.as_slice().iter().enumerate() {
        let scale = w[t] / total;
        value -= scale * posteriors.get(t, label).max(f64::MIN_POSITIVE).ln();
        let row = dlogits.row_mut(t);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(LossResult { value, dlogits })
}

/// Distillation loss `-Σ_j ỹ_j log y_j` with `y = softmax(z / T)`, averaged
/// over frames. The gradient is `(y - ỹ) / (N T)`.
pub fn kd_loss(
    student_logits: &Matrix,
    targets: &SoftTargets,
    temperature: f64,
) -> Result<LossResult> {
    kd_loss_with(student_logits, targets, temperature, TemperatureMode::Shared, None)
}

pub fn kd_loss_with(
    student_logits: &Matrix,
    targets: &SoftTargets,
    temperature: f64,
    mode: TemperatureMode,
    weights: Option<&[f64]>,
) -> Result<LossResult> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if targets.temperature != temperature {
        return Err(Error::invalid(format!(
            "soft targets were produced at T={}, loss requested T={temperature}",
            targets.temperature
        )));
    }
    if student_logits.shape() != targets.posteriors.shape() {
        return Err(Error::shape(format!(
            "student logits {:?} vs teacher targets {:?}",
            student_logits.shape(),
            targets.posteriors.shape()
        )));
    }
    let student_t = match mode {
        TemperatureMode::Shared => temperature,
        TemperatureMode::TeacherOnly => 1.0,
    };
    let (n, k) = student_logits.shape();
    check_nonempty(n)?;
    let (w, total) = frame_weights(weights, n)?;
    let mut value = 0.0;
    let mut dlogits = Matrix::zeros(n, k);
    let mut log_y = vec![0.0; k];
    for t in 0..n {
        let z = student_logits.row(t);
        let target = targets.posteriors.row(t);
        log_softmax_into(z, student_t, &mut log_y);
        let scale = w[t] / total;
        let frame: f64 = target.iter().zip(&log_y).map(|(p, ly)| p * ly).sum();
        value -= scale * frame;
        let row = dlogits.row_mut(t);
        softmax_into(z, student_t, row);
        for (d, p) in row.iter_mut().zip(target) {
            *d = (*d - p) * scale / student_t;
        }
    }
    Ok(LossResult { value, dlogits })
}

/// `kd + q · ce`, with the CE term always at T=1 on the same logits. Labels
/// are only consulted when `q > 0`.
pub fn hybrid_loss(
    student_logits: &Matrix,
    targets: &SoftTargets,
    labels: Option<&HardLabels>,
    q: f64,
    temperature: f64,
) -> Result<LossResult> {
    hybrid_loss_with(
        student_logits,
        targets,
        labels,
        q,
        temperature,
        TemperatureMode::Shared,
    )
}

pub fn hybrid_loss_with(
    student_logits: &Matrix,
    targets: &SoftTargets,
    labels: Option<&HardLabels>,
    q: f64,
    temperature: f64,
    mode: TemperatureMode,
) -> Result<LossResult> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::invalid(format!("q must be non-negative, got {q}")));
    }
    let mut kd = kd_loss_with(student_logits, targets, temperature, mode, None)?;
    if q == 0.0 {
        return Ok(kd);
    }
    let labels =
        labels.ok_or_else(|| Error::invalid("hybrid loss with q > 0 needs hard labels"))?;
    let ce = ce_loss(&softmax_rows(student_logits, 1.0)?, labels)?;
    kd.value += q * ce.value;
    kd.dlogits.add_scaled(&ce.dlogits, q)?;
    Ok(kd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{uniform_init, Rng};

    fn random_logits(n: usize, k: usize, seed: u64) -> Matrix {
        uniform_init(n, k, -3.0, 3.0, &mut Rng::new(seed, "logits")).unwrap()
    }

    fn one_hot(labels: &[usize], k: usize) -> Matrix {
        let mut m = Matrix::zeros(labels.len(), k);
        for (t, &l) in labels.iter().enumerate() {
            m.set(t, l, 1.0);
        }
        m
    }

    #[test]
    fn ce_reference_values() {
        let perfect = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let r = ce_loss(&perfect, &HardLabels::new(vec![0])).unwrap();
        assert_eq!(r.value, 0.0);

        let uniform = Matrix::filled(3, 5, 0.2);
        let r = ce_loss(&uniform, &HardLabels::new(vec![0, 3, 4])).unwrap();
        assert!((r.value - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let p = Matrix::filled(1, 3, 1.0 / 3.0);
        assert!(matches!(
            ce_loss(&p, &HardLabels::new(vec![3])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn kd_with_one_hot_teacher_is_ce() {
        let z = random_logits(4, 6, 1);
        let labels = vec![0, 5, 2, 2];
        let targets = SoftTargets::new(one_hot(&labels, 6), 1.0).unwrap();
        let kd = kd_loss(&z, &targets, 1.0).unwrap();
        let ce = ce_loss(&softmax_rows(&z, 1.0).unwrap(), &HardLabels::new(labels)).unwrap();
        assert!((kd.value - ce.value).abs() < 1e-10);
        assert!(kd.dlogits.max_abs_diff(&ce.dlogits) < 1e-10);
    }

    #[test]
    fn kd_at_teacher_equals_entropy() {
        let z = random_logits(5, 4, 2);
        for t in [1.0, 2.5] {
            let targets = SoftTargets::new(softmax_rows(&z, t).unwrap(), t).unwrap();
            let r = kd_loss(&z, &targets, t).unwrap();
            assert!(r.dlogits.as_slice().iter().all(|v| v.abs() < 1e-15));
            assert!((r.value - targets.mean_entropy()).abs() < 1e-12);
        }
    }

    #[test]
    fn kd_rejects_temperature_mismatch() {
        let z = random_logits(2, 3, 3);
        let targets = SoftTargets::new(softmax_rows(&z, 2.0).unwrap(), 2.0).unwrap();
        assert!(matches!(
            kd_loss(&z, &targets, 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn teacher_only_temperature_uses_unit_student_softmax() {
        let z = random_logits(3, 4, 4);
        let teacher = random_logits(3, 4, 5);
        let targets = SoftTargets::new(softmax_rows(&teacher, 3.0).unwrap(), 3.0).unwrap();
        let r = kd_loss_with(&z, &targets, 3.0, TemperatureMode::TeacherOnly, None).unwrap();
        let y = softmax_rows(&z, 1.0).unwrap();
        let mut expected = y.clone();
        expected.add_scaled(&targets.posteriors, -1.0).unwrap();
        expected.scale(1.0 / 3.0);
        assert!(r.dlogits.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn hybrid_degenerate_cases() {
        let z = random_logits(4, 5, 6);
        let labels = HardLabels::new(vec![1, 1, 4, 0]);
        let teacher = SoftTargets::new(softmax_rows(&random_logits(4, 5, 7), 1.0).unwrap(), 1.0)
            .unwrap();
        let kd = kd_loss(&z, &teacher, 1.0).unwrap();
        let h0 = hybrid_loss(&z, &teacher, Some(&labels), 0.0, 1.0).unwrap();
        assert_eq!(h0, kd);
        assert_eq!(hybrid_loss(&z, &teacher, None, 0.0, 1.0).unwrap(), kd);

        let onehot = SoftTargets::new(one_hot(labels.as_slice(), 5), 1.0).unwrap();
        let h1 = hybrid_loss(&z, &onehot, Some(&labels), 1.0, 1.0).unwrap();
        let ce = ce_loss(&softmax_rows(&z, 1.0).unwrap(), &labels).unwrap();
        assert!((h1.value - 2.0 * ce.value).abs() < 1e-10);

        let h = hybrid_loss(&z, &teacher, Some(&labels), 0.5, 1.0).unwrap();
        assert!((h.value - (kd.value + 0.5 * ce.value)).abs() < 1e-9);
        let mut lin = kd.dlogits.clone();
        lin.add_scaled(&ce.dlogits, 0.5).unwrap();
        assert!(h.dlogits.max_abs_diff(&lin) < 1e-12);
    }

    #[test]
    fn hybrid_errors() {
        let z = random_logits(2, 3, 8);
        let t = SoftTargets::new(softmax_rows(&z, 1.0).unwrap(), 1.0).unwrap();
        assert!(hybrid_loss(&z, &t, None, -0.1, 1.0).is_err());
        assert!(hybrid_loss(&z, &t, None, 0.5, 1.0).is_err());
    }

    #[test]
    fn frame_weights_default_to_plain_mean() {
        let p = softmax_rows(&random_logits(3, 4, 9), 1.0).unwrap();
        let l = HardLabels::new(vec![0, 1, 2]);
        let a = ce_loss(&p, &l).unwrap();
        let b = ce_loss_weighted(&p, &l, Some(&[2.0, 2.0, 2.0])).unwrap();
        assert!((a.value - b.value).abs() < 1e-15);
        let c = ce_loss_weighted(&p, &l, Some(&[1.0, 0.0, 0.0])).unwrap();
        assert!((c.value + p.get(0, 0).ln()).abs() < 1e-15);
    }
}

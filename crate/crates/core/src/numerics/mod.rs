//! Elementary numerics shared by every other module: a dense row-major
//! matrix, a reproducible named-stream generator, and the stable scalar
//! kernels (sigmoid, tempered softmax, log-sum-exp).
//!
//! Values are held as `f64`; on-disk storage is 32-bit where lossless (see
//! [`crate::workbench::tensor_file`]).

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::Rng;

use crate::error::{Error, Result};

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "temperature must be positive and finite, got {temperature}"
        )))
    }
}

/// Softmax of `logits / temperature`, shifted by the maximum before
/// exponentiation.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, temperature, &mut out);
    Ok(out)
}

/// `log softmax(logits / temperature)`.
pub fn log_softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let mut out = vec![0.0; logits.len()];
    log_softmax_into(logits, temperature, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits
        .iter()
        .map(|z| z / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z / temperature - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub(crate) fn log_softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits
        .iter()
        .map(|z| z / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z / temperature - max).exp()).sum();
    let log_norm = max + sum.ln();
    for (o, z) in out.iter_mut().zip(logits) {
        *o = z / temperature - log_norm;
    }
}

/// Row-wise tempered softmax of an `N x K` logit matrix.
pub fn softmax_rows(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    check_temperature(temperature)?;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        softmax_into(logits.row(r), temperature, out.row_mut(r));
    }
    Ok(out)
}

/// `log Σ exp(v)` with max-shift. Entries may be `-inf`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("log_sum_exp of an empty sequence"));
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// `log(exp(a) + exp(b))`, tolerant of `-inf` operands.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Matrix of i.i.d. draws from `[lo, hi)`. Entries are rounded to the
/// nearest `f32` so freshly initialised parameters store losslessly.
pub fn uniform_init(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Result<Matrix> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!(
            "uniform_init requires lo < hi, got [{lo}, {hi})"
        )));
    }
    let data = (0..rows * cols)
        .map(|_| rng.uniform_f32_exact(lo, hi))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Rng;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((sigmoid(-(3f64.ln())) - 0.25).abs() < 1e-15);
        assert_eq!(sigmoid(1e308), 1.0);
        assert_eq!(sigmoid(-1e308), 0.0);
    }

    #[test]
    fn softmax_reference_points() {
        let u = softmax_with_temperature(&[1.5, 1.5, 1.5], 3.0).unwrap();
        for p in u {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax_with_temperature(&[2f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax_with_temperature(&[4f64.ln(), 0.0], 2.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(matches!(
            softmax_with_temperature(&[1.0], 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(softmax_with_temperature(&[1.0], -1.0).is_err());
    }

    #[test]
    fn log_sum_exp_reference_points() {
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(log_sum_exp(&[]).is_err());
        assert_eq!(log_add(f64::NEG_INFINITY, 2.0), 2.0);
    }

    #[test]
    fn uniform_init_is_deterministic_and_in_range() {
        let a = uniform_init(2, 2, -0.5, 0.5, &mut Rng::new(7, "w")).unwrap();
        let b = uniform_init(2, 2, -0.5, 0.5, &mut Rng::new(7, "w")).unwrap();
        assert_eq!(a, b);

        let m = uniform_init(100, 100, -0.5, 0.5, &mut Rng::new(99, "range")).unwrap();
        assert!(m.as_slice().iter().all(|v| (-0.5..0.5).contains(v)));
        assert!(uniform_init(1, 1, 0.5, 0.5, &mut Rng::new(1, "x")).is_err());
    }

    #[test]
    fn uniform_init_mean_is_near_zero() {
        for seed in [1u64, 2, 3] {
            let m = uniform_init(1000, 1000, -0.5, 0.5, &mut Rng::new(seed, "mean")).unwrap();
            let mean = m.as_slice().iter().sum::<f64>() / 1e6;
            assert!(mean.abs() <= 0.02, "seed {seed}: mean {mean}");
        }
    }

    proptest! {
        #[test]
        fn sigmoid_is_antisymmetric(x in -800.0f64..800.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-7);
        }

        #[test]
        fn softmax_is_shift_invariant(
            z in prop::collection::vec(-30.0f64..30.0, 1..12),
            c in -100.0f64..100.0,
            t in 0.1f64..10.0,
        ) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let a = softmax_with_temperature(&z, t).unwrap();
            let b = softmax_with_temperature(&shifted, t).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn softmax_preserves_argmax(
            z in prop::collection::vec(-30.0f64..30.0, 1..12),
            t in 0.05f64..20.0,
        ) {
            let p = softmax_with_temperature(&z, t).unwrap();
            prop_assert_eq!(argmax(&p), argmax(&z));
        }

        #[test]
        fn log_sum_exp_of_copies(x in -500.0f64..500.0, k in 1usize..64) {
            let v = vec![x; k];
            prop_assert!((log_sum_exp(&v).unwrap() - (x + (k as f64).ln())).abs() < 1e-9);
        }
    }
}

use crate::numerics::Matrix;

pub fn spliced_dim(feature_dim: usize, context: usize) -> usize {
    feature_dim * (2 * context + 1)
}

/// Row `t` of the result is frames `t - context ..= t + context`
/// concatenated, with the first and last frames repeated past the edges.
pub fn splice(features: &Matrix, context: usize) -> Matrix {
    let (frames, dim) = features.shape();
    let width = 2 * context + 1;
    let mut out = Matrix::zeros(frames, dim * width);
    if frames == 0 {
        return out;
    }
    for t in 0..frames {
        let row = out.row_mut(t);
        for w in 0..width {
            let src = (t + w).saturating_sub(context).min(frames - 1);
            row[w * dim..(w + 1) * dim].copy_from_slice(features.row(src));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(frames: usize, dim: usize) -> Matrix {
        Matrix::from_vec(frames, dim, (0..frames * dim).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn zero_context_is_identity() {
        let x = ramp(5, 3);
        assert_eq!(splice(&x, 0), x);
    }

    #[test]
    fn output_dimensions() {
        assert_eq!(splice(&ramp(20, 40), 7).cols(), 600);
        assert_eq!(splice(&ramp(20, 40), 5).cols(), 440);
        assert_eq!(spliced_dim(40, 5), 440);
    }

    #[test]
    fn interior_rows_concatenate_neighbours_and_edges_replicate() {
        let x = ramp(6, 2);
        let s = splice(&x, 2);
        let expect_row = |frames: [usize; 5]| -> Vec<f64> {
            frames.iter().flat_map(|&f| x.row(f).to_vec()).collect()
        };
        assert_eq!(s.row(3), expect_row([1, 2, 3, 4, 5]).as_slice());
        assert_eq!(s.row(0), expect_row([0, 0, 0, 1, 2]).as_slice());
        assert_eq!(s.row(5), expect_row([3, 4, 5, 5, 5]).as_slice());
    }
}

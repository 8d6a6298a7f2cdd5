//! Test-only oracles: central finite differences and brute-force lattice
//! path enumeration. Nothing here calls the forward-backward code it checks.
#![allow(dead_code)]

use hdnn::numerics::{softmax_rows, uniform_init};
use hdnn::sequence::LatticeArc;
use hdnn::{Lattice, Matrix, Rng};

/// Central difference of `f` around every entry of `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or the absolute difference norm when both are
/// tiny.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Matrix {
    uniform_init(rows, cols, lo, hi, rng).unwrap()
}

pub fn random_distribution_rows(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    softmax_rows(&random_matrix(rows, cols, -3.0, 3.0, rng), 1.0).unwrap()
}

/// Random frame-synchronous lattice with 1..=3 nodes per interior boundary
/// and at most `max_arcs` arcs per frame; every node lies on a complete path.
pub fn random_lattice(frames: usize, states: usize, max_arcs: usize, rng: &mut Rng) -> Lattice {
    let mut counts = vec![1usize; frames + 1];
    for c in counts.iter_mut().take(frames).skip(1) {
        *c = 1 + rng.below(max_arcs.min(3));
    }
    let mut first = vec![0usize; frames + 1];
    for t in 1..=frames {
        first[t] = first[t - 1] + counts[t - 1];
    }
    let num_nodes = first[frames] + 1;
    let mut arcs = Vec::new();
    for t in 0..frames {
        let (a, b) = (counts[t], counts[t + 1]);
        let need = a.max(b);
        let total = need + rng.below(max_arcs - need + 1);
        for i in 0..total {
            let (from, to) = if i < need {
                (i % a, i % b)
            } else {
                (rng.below(a), rng.below(b))
            };
            arcs.push(LatticeArc {
                from: first[t] + from,
                to: first[t + 1] + to,
                frame: t,
                state: rng.below(states),
                graph_logweight: rng.uniform(-1.0, 0.0),
            });
        }
    }
    Lattice::new(frames, num_nodes, arcs).unwrap()
}

/// Every complete path as a list of arc indices.
pub fn enumerate_paths(lat: &Lattice) -> Vec<Vec<usize>> {
    fn walk(lat: &Lattice, node: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if node == lat.end_node() {
            out.push(prefix.clone());
            return;
        }
        for (i, a) in lat.arcs().iter().enumerate() {
            if a.from == node {
                prefix.push(i);
                walk(lat, a.to, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(lat, 0, &mut Vec::new(), &mut out);
    out
}

pub struct BruteForce {
    pub arc_posteriors: Vec<f64>,
    pub expected_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub num_paths: usize,
}

/// Path posteriors and expected accuracy by explicit enumeration, with path
/// weight `exp(Σ scores[t][state] + graph_logweight)`.
pub fn brute_force(lat: &Lattice, scores: &Matrix, reference: &[usize]) -> BruteForce {
    let paths = enumerate_paths(lat);
    let arcs = lat.arcs();
    let logw: Vec<f64> = paths
        .iter()
        .map(|p| {
            p.iter()
                .map(|&i| scores.get(arcs[i].frame, arcs[i].state) + arcs[i].graph_logweight)
                .sum()
        })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logw.iter().map(|w| (w - max).exp()).sum();
    let mut arc_posteriors = vec![0.0; arcs.len()];
    let mut expected_accuracy = 0.0;
    let mut min_accuracy = f64::INFINITY;
    let mut max_accuracy = f64::NEG_INFINITY;
    for (p, w) in paths.iter().zip(&logw) {
        let prob = (w - max).exp() / z;
        let acc = p
            .iter()
            .filter(|&&i| arcs[i].state == reference[arcs[i].frame])
            .count() as f64;
        for &i in p {
            arc_posteriors[i] += prob;
        }
        expected_accuracy += prob * acc;
        min_accuracy = min_accuracy.min(acc);
        max_accuracy = max_accuracy.max(acc);
    }
    BruteForce {
        arc_posteriors,
        expected_accuracy,
        min_accuracy,
        max_accuracy,
        num_paths: paths.len(),
    }
}

/// `k (log softmax(z) - log prior)`, computed directly from logits.
pub fn scores_from_logits(logits: &Matrix, k: f64, priors: &[f64]) -> Matrix {
    let post = softmax_rows(logits, 1.0).unwrap();
    let mut s = Matrix::zeros(post.rows(), post.cols());
    for t in 0..post.rows() {
        for j in 0..post.cols() {
            s.set(t, j, k * (post.get(t, j).ln() - priors[j].ln()));
        }
    }
    s
}

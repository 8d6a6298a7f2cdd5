//! Analytic gradients against central finite differences.

mod common;

use common::*;
use hdnn::losses::{ce_loss, hybrid_loss, kd_loss};
use hdnn::numerics::softmax_rows;
use hdnn::sequence::{smbr_objective, SmbrConfig};
use hdnn::{Architecture, HardLabels, Matrix, Network, NetworkConfig, ReferenceAlignment, Rng, SoftTargets};

const STEP: f64 = 1e-3;
const TOL: f64 = 1e-4;

/// `L = Σ c∘z + ½ Σ d∘z²` with fixed random `c`, `d`.
struct Quadratic {
    c: Matrix,
    d: Matrix,
}

impl Quadratic {
    fn new(n: usize, k: usize, rng: &mut Rng) -> Self {
        Self {
            c: random_matrix(n, k, -1.0, 1.0, rng),
            d: random_matrix(n, k, 0.1, 1.0, rng),
        }
    }

    fn value(&self, z: &Matrix) -> f64 {
        z.as_slice()
            .iter()
            .zip(self.c.as_slice())
            .zip(self.d.as_slice())
            .map(|((z, c), d)| c * z + 0.5 * d * z * z)
            .sum()
    }

    fn grad(&self, z: &Matrix) -> Matrix {
        let mut g = self.c.clone();
        for ((g, z), d) in g.as_mut_slice().iter_mut().zip(z.as_slice()).zip(self.d.as_slice()) {
            *g += d * z;
        }
        g
    }
}

fn check_network(arch: Architecture, seed: u64) {
    let mut rng = Rng::new(seed, "gradcheck");
    let input = 2 + rng.below(5);
    let hidden = 2 + rng.below(15);
    let layers = 1 + rng.below(4);
    let out = 2 + rng.below(5);
    let frames = 1 + rng.below(8);
    let cfg = NetworkConfig::new(arch, input, hidden, layers, out);
    let mut net = Network::build(cfg, seed).unwrap();
    // Non-zero biases so their gradients are exercised off the init point.
    for (id, t) in net.params_mut().tensors_mut() {
        if matches!(id, hdnn::TensorId::HiddenBias(_) | hdnn::TensorId::OutputBias) {
            for v in t.iter_mut() {
                *v = rng.uniform(-0.5, 0.5);
            }
        }
    }
    let x = random_matrix(frames, input, -2.0, 2.0, &mut rng);
    let loss = Quadratic::new(frames, out, &mut rng);
    let trace = net.forward(&x, 1.0).unwrap();
    let grads = net.backward(&trace, &loss.grad(&trace.logits)).unwrap();

    let ids: Vec<_> = net.params().tensors().iter().map(|t| t.id).collect();
    for id in ids {
        let base = net.params().tensors().into_iter().find(|t| t.id == id).unwrap().data.to_vec();
        let mut probe = net.clone();
        let numeric = central_diff(&base, STEP, |v| {
            probe.params_mut().tensor_mut(id).unwrap().copy_from_slice(v);
            loss.value(&probe.forward(&x, 1.0).unwrap().logits)
        });
        let analytic = grads.params.tensors().into_iter().find(|t| t.id == id).unwrap().data;
        let err = rel_error(analytic, &numeric);
        assert!(err < TOL, "{arch} seed {seed} {id:?}: rel error {err:e}");
    }
}

#[test]
fn highway_backward_matches_finite_differences() {
    for seed in 0..40 {
        check_network(Architecture::Highway, seed);
    }
}

#[test]
fn plain_backward_matches_finite_differences() {
    for seed in 100..120 {
        check_network(Architecture::Plain, seed);
    }
}

#[test]
fn saturated_highway_gradients_match_plain() {
    let mut rng = Rng::new(5, "saturation");
    let cfg_h = NetworkConfig::new(Architecture::Highway, 5, 6, 3, 4);
    let mut highway = Network::build(cfg_h, 5).unwrap();
    let g = highway.gates_mut().unwrap();
    g.transform = Matrix::filled(6, 6, 60.0);
    g.carry = Matrix::filled(6, 6, -60.0);
    let mut params = highway.params().clone();
    params.gates = None;
    let plain = Network::from_parameters(
        NetworkConfig::new(Architecture::Plain, 5, 6, 3, 4),
        params,
    )
    .unwrap();

    let x = random_matrix(7, 5, -1.0, 1.0, &mut rng);
    let loss = Quadratic::new(7, 4, &mut rng);
    let th = highway.forward(&x, 1.0).unwrap();
    let tp = plain.forward(&x, 1.0).unwrap();
    assert!(th.posteriors.max_abs_diff(&tp.posteriors) < 1e-4);
    let gh = highway.backward(&th, &loss.grad(&th.logits)).unwrap();
    let gp = plain.backward(&tp, &loss.grad(&tp.logits)).unwrap();
    for l in 0..3 {
        let d = gh.params.hidden[l].weight.max_abs_diff(&gp.params.hidden[l].weight);
        assert!(d < 1e-3, "layer {l}: {d}");
    }
}

fn labels(n: usize, k: usize, rng: &mut Rng) -> HardLabels {
    HardLabels::new((0..n).map(|_| rng.below(k)).collect())
}

#[test]
fn ce_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed, "ce");
        let (n, k) = (1 + rng.below(8), 2 + rng.below(6));
        let z = random_matrix(n, k, -3.0, 3.0, &mut rng);
        let y = labels(n, k, &mut rng);
        let analytic = ce_loss(&softmax_rows(&z, 1.0).unwrap(), &y).unwrap().dlogits;
        let numeric = central_diff(z.as_slice(), STEP, |v| {
            let zz = Matrix::from_vec(n, k, v.to_vec()).unwrap();
            ce_loss(&softmax_rows(&zz, 1.0).unwrap(), &y).unwrap().value
        });
        assert!(rel_error(analytic.as_slice(), &numeric) < TOL, "seed {seed}");
    }
}

#[test]
fn kd_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed, "kd");
        let (n, k) = (1 + rng.below(8), 2 + rng.below(6));
        let t = [1.0, 2.0, 3.0][seed as usize % 3];
        let z = random_matrix(n, k, -3.0, 3.0, &mut rng);
        let teacher = softmax_rows(&random_matrix(n, k, -3.0, 3.0, &mut rng), t).unwrap();
        let targets = SoftTargets::new(teacher, t).unwrap();
        let analytic = kd_loss(&z, &targets, t).unwrap().dlogits;
        let numeric = central_diff(z.as_slice(), STEP, |v| {
            let zz = Matrix::from_vec(n, k, v.to_vec()).unwrap();
            kd_loss(&zz, &targets, t).unwrap().value
        });
        assert!(rel_error(analytic.as_slice(), &numeric) < TOL, "seed {seed}");
    }
}

#[test]
fn hybrid_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed, "hybrid");
        let (n, k) = (1 + rng.below(8), 2 + rng.below(6));
        let t = [1.0, 2.0][seed as usize % 2];
        let q = rng.uniform(0.0, 2.0);
        let z = random_matrix(n, k, -3.0, 3.0, &mut rng);
        let teacher = softmax_rows(&random_matrix(n, k, -3.0, 3.0, &mut rng), t).unwrap();
        let targets = SoftTargets::new(teacher, t).unwrap();
        let y = labels(n, k, &mut rng);
        let analytic = hybrid_loss(&z, &targets, Some(&y), q, t).unwrap().dlogits;
        let numeric = central_diff(z.as_slice(), STEP, |v| {
            let zz = Matrix::from_vec(n, k, v.to_vec()).unwrap();
            hybrid_loss(&zz, &targets, Some(&y), q, t).unwrap().value
        });
        assert!(rel_error(analytic.as_slice(), &numeric) < TOL, "seed {seed}");
    }
}

#[test]
fn smbr_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed, "smbr");
        let frames = 1 + rng.below(5);
        let states = 3;
        let lat = random_lattice(frames, states, 3, &mut rng);
        let reference: Vec<usize> = (0..frames).map(|_| rng.below(states)).collect();
        let k = rng.uniform(0.05, 1.0);
        let cfg = SmbrConfig::new(k, vec![0.5, 0.3, 0.2]).unwrap();
        let z = random_matrix(frames, states, -2.0, 2.0, &mut rng);
        let ali = ReferenceAlignment(reference.clone());
        let r = smbr_objective(&lat, &softmax_rows(&z, 1.0).unwrap(), &ali, &cfg).unwrap();

        let numeric = central_diff(z.as_slice(), STEP, |v| {
            let zz = Matrix::from_vec(frames, states, v.to_vec()).unwrap();
            let scores = scores_from_logits(&zz, k, &cfg.state_priors);
            brute_force(&lat, &scores, &reference).expected_accuracy
        });
        let err = rel_error(r.dlogits.as_slice(), &numeric);
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn smbr_ascent_step_increases_expected_accuracy() {
    let mut improved = 0;
    for seed in 0..25 {
        let mut rng = Rng::new(seed, "ascent");
        let frames = 2 + rng.below(4);
        let lat = random_lattice(frames, 3, 3, &mut rng);
        let reference = ReferenceAlignment((0..frames).map(|_| rng.below(3)).collect());
        let cfg = SmbrConfig::uniform(0.5, 3).unwrap();
        let mut z = random_matrix(frames, 3, -2.0, 2.0, &mut rng);
        let before = smbr_objective(&lat, &softmax_rows(&z, 1.0).unwrap(), &reference, &cfg).unwrap();
        if before.dlogits.as_slice().iter().all(|g| g.abs() < 1e-12) {
            continue;
        }
        z.add_scaled(&before.dlogits, 1e-3).unwrap();
        let after = smbr_objective(&lat, &softmax_rows(&z, 1.0).unwrap(), &reference, &cfg).unwrap();
        assert!(after.expected_accuracy > before.expected_accuracy, "seed {seed}");
        improved += 1;
    }
    assert!(improved >= 20);
}

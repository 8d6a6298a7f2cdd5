use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hdnn::numerics::softmax_rows;
use hdnn::sequence::{forward_backward, smbr_objective, SmbrConfig};
use hdnn::workbench::build_lattice;
use hdnn::{Matrix, ReferenceAlignment, Rng};

const STATES: usize = 12;

fn setup(frames: usize, branch: usize) -> (hdnn::Lattice, Matrix, ReferenceAlignment, SmbrConfig) {
    let mut rng = Rng::new(0, "bench/lattice");
    let ali = ReferenceAlignment((0..frames).map(|t| (t / 5) % STATES).collect());
    let lat = build_lattice(&ali, STATES, branch, &mut rng).unwrap();
    let logits = Matrix::from_vec(frames, STATES, (0..frames * STATES).map(|_| rng.normal()).collect()).unwrap();
    let post = softmax_rows(&logits, 1.0).unwrap();
    let cfg = SmbrConfig::new(0.1, vec![1.0 / STATES as f64; STATES]).unwrap();
    (lat, post, ali, cfg)
}

fn lattice(c: &mut Criterion) {
    let mut group = c.benchmark_group("lattice");
    for frames in [100, 500] {
        let (lat, post, ali, cfg) = setup(frames, 4);
        let scores = cfg.frame_log_scores(&post).unwrap();
        group.bench_with_input(BenchmarkId::new("forward_backward", frames), &frames, |b, _| {
            b.iter(|| forward_backward(&lat, &scores).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("smbr", frames), &frames, |b, _| {
            b.iter(|| smbr_objective(&lat, &post, &ali, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lattice);
criterion_main!(benches);

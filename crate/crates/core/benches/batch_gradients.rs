use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cardio_lstm::lstm::{GradCheckOptions, GradCheckProblem};
use cardio_lstm::training::{batch_gradients, Example, LossKind, SequenceModel};
use cardio_lstm::{Parallelism, Rng, Vector};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn sequences(n: usize, steps: usize, dim: usize, seed: u64) -> Vec<Example> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| Example {
            inputs: (0..steps)
                .map(|_| Vector::new((0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap())
                .collect(),
            target: rng.uniform(0.0, 1.0),
        })
        .collect()
}

fn bench_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_gradients");
    for (steps, hidden) in [(1, 16), (10, 32)] {
        let model = SequenceModel::init(11, hidden, &mut Rng::new(1)).unwrap();
        let data = sequences(64, steps, 11, 2);
        let batch: Vec<usize> = (0..data.len()).collect();
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, format!("T{steps}_H{hidden}")), &mode, |b, &mode| {
                b.iter(|| batch_gradients(&model, &data, black_box(&batch), LossKind::MeanSquaredError, mode).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_gradcheck(c: &mut Criterion) {
    let mut group = c.benchmark_group("grad_check");
    group.sample_size(20);
    let problem = GradCheckProblem::random(42, 8, 8, 10).unwrap();
    for (name, parallelism) in MODES {
        let opts = GradCheckOptions {
            parallelism,
            ..Default::default()
        };
        group.bench_function(name, |b| b.iter(|| problem.check(black_box(&opts)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_batch, bench_gradcheck);
criterion_main!(benches);

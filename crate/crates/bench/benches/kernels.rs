use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dmtl_core::data::{synth_generate, SynthLayout, SyntheticSpec};
use dmtl_core::layers::preset_trunk;
use dmtl_core::{DmtlModel, Graph, Tensor, TrainConfig, Trainer};

fn filled(shape: Vec<usize>, seed: u64) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    // Cheap deterministic fill in [-1, 1).
    let data: Vec<f64> = (0..n as u64)
        .map(|i| {
            let x = (i ^ seed).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
            x as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    Tensor::from_f64(shape, &data).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [32usize, 128, 256] {
        let (a, b) = (filled(vec![n, n], 1), filled(vec![n, n], 2));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut g = Graph::new();
                let (x, y) = (g.leaf(a.clone()), g.leaf(b.clone()));
                let z = g.matmul(x, y).unwrap();
                let s = g.sum(z, None).unwrap();
                black_box(g.backward(s).unwrap());
            })
        });
    }
    group.finish();
}

fn conv(c: &mut Criterion) {
    let x = filled(vec![16, 3, 32, 32], 3);
    let w = filled(vec![16, 3, 3, 3], 4);
    c.bench_function("conv2d_3x3_16x3x32x32", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let (xn, wn) = (g.leaf(x.clone()), g.leaf(w.clone()));
            let y = g.conv2d(xn, wn, 1, 1).unwrap();
            let s = g.sum(y, None).unwrap();
            black_box(g.backward(s).unwrap());
        })
    });
}

fn train_step(c: &mut Criterion) {
    let mut spec = SyntheticSpec::shared_latent(256, 6, 2, 0);
    spec.layout = SynthLayout::Image { channels: 1, height: 16, width: 16 };
    let data = synth_generate(&spec).unwrap();
    let trunk = preset_trunk("tiny").unwrap().specs;
    let model = DmtlModel::<f32>::build(data.catalog(), &trunk, data.sample_shape(), 0).unwrap();
    let config = TrainConfig {
        max_iterations: u64::MAX,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, &data, config).unwrap();
    c.bench_function("train_step_tiny_batch32", |bench| {
        bench.iter(|| black_box(trainer.step(&data).unwrap()))
    });
}

criterion_group!(benches, matmul, conv, train_step);
criterion_main!(benches);

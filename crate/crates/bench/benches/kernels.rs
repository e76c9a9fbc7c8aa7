use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvec_core::adapt::{adaptive_sgd_step, AdaptiveLayer};
use pvec_core::eval::{MappingScorer, SimilarityIndex};
use pvec_core::sgns::sgd_step;
use pvec_core::{EmbeddingModel, Matrix, NoiseSampler, PersonalizedEmbedding, Provenance, Sentence};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-0.5f32..0.5)).collect())
}

fn random_model(v: usize, h: usize) -> EmbeddingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = random_matrix(&mut rng, v, h);
    let output = random_matrix(&mut rng, v, h);
    EmbeddingModel::new(input, output).unwrap()
}

fn bench_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sgd_step");
    for h in [16, 100, 300] {
        let mut model = random_model(1000, h);
        group.bench_with_input(BenchmarkId::new("sgns", h), &h, |b, _| {
            b.iter(|| sgd_step(&mut model, black_box(3), black_box(17), &[5, 99, 400, 733, 901], 1e-4))
        });
        let background = random_model(1000, h);
        let mut layer = AdaptiveLayer::identity("u", h, 0);
        group.bench_with_input(BenchmarkId::new("adaptive_layer", h), &h, |b, _| {
            b.iter(|| adaptive_sgd_step(&background, &mut layer, black_box(3), black_box(17), &[5, 99, 400, 733, 901], 1e-4))
        });
    }
    group.finish();
}

fn bench_sampler(c: &mut Criterion) {
    let probs: Vec<f64> = {
        let raw: Vec<f64> = (0..50_000).map(|i| (1.0 / (i as f64 + 1.0)).powf(0.75)).collect();
        let z: f64 = raw.iter().sum();
        raw.iter().map(|p| p / z).collect()
    };
    let mut sampler = NoiseSampler::new(&probs, 2).unwrap();
    let mut out = Vec::with_capacity(5);
    c.bench_function("sample_negatives_k5", |b| {
        b.iter(|| sampler.sample_negatives_into(5, &[0, 1], &mut out).unwrap())
    });
}

fn bench_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("eval");
    for v in [1000, 10_000] {
        let mapping = PersonalizedEmbedding::from_model("u", random_model(v, 100), Provenance::Retrain);
        group.bench_with_input(BenchmarkId::new("log_partition", v), &v, |b, _| {
            b.iter_batched(
                || MappingScorer::new(&mapping),
                |scorer| scorer.log_partition(black_box(7)),
                criterion::BatchSize::SmallInput,
            )
        });
        let index = SimilarityIndex::new(&mapping);
        let remainder = Sentence::new(vec![1, 20, 300, 444, 999]);
        group.bench_with_input(BenchmarkId::new("complete_sentence", v), &v, |b, _| {
            b.iter(|| index.rank(black_box(5), &remainder).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_steps, bench_sampler, bench_eval);
criterion_main!(benches);

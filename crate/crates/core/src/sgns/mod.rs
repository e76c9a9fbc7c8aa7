//! Skip-gram with negative sampling: model storage, the per-pair objective
//! and its gradients, and the background training loop.

mod kernel;
mod sampler;
pub(crate) mod shared;
pub(crate) mod train;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kernel::{
    adaptive_gradients_slices, adaptive_loss_slices, loss_from_scores, pair_gradients_slices, pair_loss_slices,
    sigmoid, softplus, LossValue, PairGradients, LOSS_TERM_CAP,
};
pub use sampler::NoiseSampler;
pub use train::{for_each_pair, pairs_in_corpus, pairs_in_sentence, Progress, TrainStats, LOG_EVERY, MIN_LR_FRACTION};

use crate::corpus::{Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use shared::SharedMatrix;
use train::{Scratch, SgnsTrainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Linear,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Half-width `b` of the context window.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub workers: usize,
    /// Frequent-word subsampling threshold; off when `None`.
    pub subsample: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            lr_schedule: LrSchedule::Linear,
            seed: 1,
            workers: 1,
            subsample: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if let Some(t) = self.subsample {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::InvalidConfig("subsample threshold must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Input vectors (`W`, one row per word) and output vectors (`W'`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub input: Matrix,
    pub output: Matrix,
}

impl EmbeddingModel {
    pub fn new(input: Matrix, output: Matrix) -> Result<Self> {
        if input.shape() != output.shape() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", input.shape()),
                found: format!("{:?}", output.shape()),
            });
        }
        Ok(EmbeddingModel { input, output })
    }

    pub fn vocab_size(&self) -> usize {
        self.input.rows()
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    /// `2 · V · h`
    pub fn trainable_parameters(&self) -> usize {
        2 * self.vocab_size() * self.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite() && self.output.is_finite()
    }

    pub fn score(&self, target: usize, context: usize) -> f32 {
        kernel::dot(self.output.row(context), self.input.row(target))
    }
}

/// Input vectors uniform in `[-0.5/dim, 0.5/dim)`, output vectors zero.
pub fn init_model(vocab_size: usize, dim: usize, seed: u64) -> Result<EmbeddingModel> {
    if vocab_size == 0 || dim == 0 {
        return Err(Error::InvalidDimension { vocab_size, dim });
    }
    let bound = 0.5 / dim as f32;
    let dist = Uniform::new(-bound, bound).expect("non-empty range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input: Vec<f32> = (0..vocab_size * dim).map(|_| dist.sample(&mut rng)).collect();
    Ok(EmbeddingModel {
        input: Matrix::from_vec(vocab_size, dim, input),
        output: Matrix::zeros(vocab_size, dim),
    })
}

fn rows<'a>(m: &'a Matrix, ids: impl IntoIterator<Item = &'a usize>) -> Vec<&'a [f32]> {
    ids.into_iter().map(|&i| m.row(i)).collect()
}

/// Negative-sampling loss of one example, evaluated in `f64`.
pub fn pair_loss(model: &EmbeddingModel, target: usize, positive: usize, negatives: &[usize]) -> LossValue<f64> {
    let to64 = |r: &[f32]| r.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let t = to64(model.input.row(target));
    let p = to64(model.output.row(positive));
    let n: Vec<Vec<f64>> = negatives.iter().map(|&i| to64(model.output.row(i))).collect();
    let n_refs: Vec<&[f64]> = n.iter().map(Vec::as_slice).collect();
    pair_loss_slices(&t, &p, &n_refs)
}

pub fn pair_gradients(model: &EmbeddingModel, target: usize, positive: usize, negatives: &[usize]) -> PairGradients<f32> {
    pair_gradients_slices(
        model.input.row(target),
        model.output.row(positive),
        &rows(&model.output, negatives),
    )
}

/// Decrements every touched vector by `lr` times its gradient at the
/// current parameters. Returns the pre-step loss.
pub fn sgd_step(
    model: &mut EmbeddingModel,
    target: usize,
    positive: usize,
    negatives: &[usize],
    lr: f32,
) -> LossValue<f64> {
    let mut scratch = Scratch::new(model.dim(), negatives.len());
    let EmbeddingModel { input, output } = model;
    train::sgns_step(input, output, &mut scratch, target, positive, negatives, lr)
}

/// Continues training `model` in place on `corpus`.
pub fn train_epochs(
    model: &mut EmbeddingModel,
    corpus: &[Sentence],
    vocab: &Vocabulary,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&Progress),
) -> Result<TrainStats> {
    if model.vocab_size() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} words", vocab.len()),
            found: format!("{} model rows", model.vocab_size()),
        });
    }
    let input = SharedMatrix::from_matrix(&model.input);
    let output = SharedMatrix::from_matrix(&model.output);
    let trainer = SgnsTrainer {
        input: &input,
        output: &output,
        dim: model.dim(),
    };
    let result = train::drive(&trainer, corpus, vocab, config, sink);
    let v = model.vocab_size();
    model.input = input.into_matrix(v);
    model.output = output.into_matrix(v);
    result
}

/// Trains a fresh model on a background corpus.
pub fn train_background(
    corpus: &[Sentence],
    vocab: &Vocabulary,
    dim: usize,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&Progress),
) -> Result<(EmbeddingModel, TrainStats)> {
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("empty training corpus".into()));
    }
    let mut model = init_model(vocab.len(), dim, config.seed)?;
    let stats = train_epochs(&mut model, corpus, vocab, config, sink)?;
    Ok((model, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use rand::Rng;

    fn toy_model(h: usize, v: usize, seed: u64) -> EmbeddingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = init_model(v, h, seed).unwrap();
        for x in m.output.as_mut_slice() {
            *x = rng.random_range(-0.5..0.5);
        }
        for x in m.input.as_mut_slice() {
            *x = rng.random_range(-0.5..0.5);
        }
        m
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(50, 8, 3).unwrap();
        let b = init_model(50, 8, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.output.as_slice().iter().all(|&x| x == 0.0));
        assert!(a.input.as_slice().iter().all(|&x| (-0.0625..0.0625).contains(&x)));
        assert_ne!(a, init_model(50, 8, 4).unwrap());
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(matches!(init_model(0, 4, 0), Err(Error::InvalidDimension { .. })));
        assert!(matches!(init_model(4, 0, 0), Err(Error::InvalidDimension { .. })));
    }

    #[test]
    fn zero_model_loss_and_gradients() {
        let m = EmbeddingModel::new(Matrix::zeros(7, 4), Matrix::zeros(7, 4)).unwrap();
        let l = pair_loss(&m, 0, 1, &[2, 3, 4, 5, 6]);
        assert!((l.value - 6.0 * 2f64.ln()).abs() < 1e-12);
        let g = pair_gradients(&m, 0, 1, &[2, 3]);
        assert!(g.target.iter().chain(&g.positive).chain(g.negatives.iter().flatten()).all(|&x| x == 0.0));
    }

    #[test]
    fn step_example_and_zero_lr() {
        let mut m = EmbeddingModel::new(Matrix::from_vec(2, 1, vec![1.0, 0.0]), Matrix::zeros(2, 1)).unwrap();
        let before = m.clone();
        sgd_step(&mut m, 0, 1, &[], 0.0);
        assert_eq!(m, before);
        sgd_step(&mut m, 0, 1, &[], 0.1);
        assert_eq!(m.output.row(1), [0.05]);
    }

    #[test]
    fn step_matches_gradients_exactly() {
        let mut m = toy_model(8, 12, 9);
        let negs = [3, 4, 4, 7];
        let g = pair_gradients(&m, 1, 2, &negs);
        let before = m.clone();
        let lr = 0.05f32;
        sgd_step(&mut m, 1, 2, &negs, lr);
        for i in 0..8 {
            assert_eq!(m.input.get(1, i), before.input.get(1, i) - lr * (1.0 * g.target[i]));
            assert_eq!(m.output.get(2, i), before.output.get(2, i) - lr * g.positive[i]);
            assert_eq!(m.output.get(3, i), before.output.get(3, i) - lr * g.negatives[0][i]);
            // repeated negative gets two decrements of the same gradient
            let once = before.output.get(4, i) - lr * g.negatives[1][i];
            assert_eq!(m.output.get(4, i), once - lr * g.negatives[2][i]);
        }
        for r in [0, 5, 6, 8, 9, 10, 11] {
            assert_eq!(m.output.row(r), before.output.row(r));
        }
        for r in (0..12).filter(|&r| r != 1) {
            assert_eq!(m.input.row(r), before.input.row(r));
        }
    }

    #[test]
    fn small_step_decreases_loss() {
        let mut m = toy_model(8, 10, 21);
        let negs = [5, 6, 7];
        let before = pair_loss(&m, 0, 1, &negs).value;
        sgd_step(&mut m, 0, 1, &negs, 1e-3);
        assert!(pair_loss(&m, 0, 1, &negs).value < before);
    }

    fn cooccur_corpus() -> (Vocabulary, Vec<Sentence>) {
        let raw: Vec<Vec<&str>> = (0..200).map(|i| if i % 2 == 0 { vec!["a", "b"] } else { vec!["c", "d"] }).collect();
        let vocab = build_vocab(&raw, 1).unwrap();
        let s = crate::corpus::index_corpus(&raw, &vocab);
        (vocab, s)
    }

    #[test]
    fn cooccurrence_ordering() {
        let (vocab, corpus) = cooccur_corpus();
        let cfg = TrainConfig { window: 1, negatives: 2, epochs: 50, learning_rate: 0.05, ..TrainConfig::default() };
        let (m, _) = train_background(&corpus, &vocab, 8, &cfg, &mut |_| {}).unwrap();
        let (a, b, c) = (vocab.get("a").unwrap(), vocab.get("b").unwrap(), vocab.get("c").unwrap());
        assert!(m.score(a, b) > m.score(a, c));
    }

    #[test]
    fn single_worker_is_bit_reproducible() {
        let (vocab, corpus) = cooccur_corpus();
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let (m1, s1) = train_background(&corpus, &vocab, 16, &cfg, &mut |_| {}).unwrap();
        let (m2, s2) = train_background(&corpus, &vocab, 16, &cfg, &mut |_| {}).unwrap();
        assert_eq!(m1.input.as_slice(), m2.input.as_slice());
        assert_eq!(m1.output.as_slice(), m2.output.as_slice());
        assert_eq!(s1, s2);
    }

    #[test]
    fn parallel_training_stays_finite() {
        let (vocab, corpus) = cooccur_corpus();
        let cfg = TrainConfig { epochs: 5, workers: 4, window: 1, negatives: 2, ..TrainConfig::default() };
        let (m, stats) = train_background(&corpus, &vocab, 8, &cfg, &mut |_| {}).unwrap();
        assert!(m.is_finite());
        assert_eq!(stats.pairs, 5 * 400);
        let (a, b, c) = (vocab.get("a").unwrap(), vocab.get("b").unwrap(), vocab.get("c").unwrap());
        assert!(m.score(a, b) > m.score(a, c));
    }

    #[test]
    fn progress_log_is_emitted() {
        let (vocab, corpus) = cooccur_corpus();
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let mut lines = Vec::new();
        train_background(&corpus, &vocab, 4, &cfg, &mut |p| lines.push(p.clone())).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].pairs, 800);
        assert!(lines[1].lr < lines[0].lr);
    }

    #[test]
    fn exhausted_vocabulary_propagates() {
        let raw = vec![vec!["a", "b"]];
        let vocab = build_vocab(&raw, 1).unwrap();
        let corpus = crate::corpus::index_corpus(&raw, &vocab);
        let err = train_background(&corpus, &vocab, 4, &TrainConfig::default(), &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::ExhaustedVocabulary));
    }
}

//! Pair enumeration and the epoch driver shared by background training,
//! retraining and adaptive-layer training.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::kernel::{self, LossValue};
use super::sampler::NoiseSampler;
use super::shared::SharedMatrix;
use super::{LrSchedule, TrainConfig};
use crate::corpus::{Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Number of pairs between progress records.
pub const LOG_EVERY: u64 = 10_000;

/// Smallest learning rate reached by the linear schedule, relative to the
/// initial rate.
pub const MIN_LR_FRACTION: f32 = 1e-4;

/// One line of the training progress log.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub epoch: usize,
    pub pairs: u64,
    pub mean_loss: f64,
    pub lr: f32,
}

impl fmt::Display for Progress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} pairs={} loss={:.6} lr={:.6e}",
            self.epoch, self.pairs, self.mean_loss, self.lr
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    pub epochs: usize,
    pub pairs: u64,
    pub mean_loss: f64,
    pub clamped: u64,
}

/// Calls `f(target, context)` for every in-bounds pair of a fixed window.
#[inline]
pub fn for_each_pair(tokens: &[usize], window: usize, mut f: impl FnMut(usize, usize)) {
    let n = tokens.len();
    for t in 0..n {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(n.saturating_sub(1));
        for j in lo..=hi {
            if j != t {
                f(tokens[t], tokens[j]);
            }
        }
    }
}

/// Number of ordered pairs in a sentence of `n` tokens.
pub fn pairs_in_sentence(n: usize, window: usize) -> u64 {
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(n.saturating_sub(1));
            (hi - lo) as u64
        })
        .sum()
}

pub fn pairs_in_corpus(corpus: &[Sentence], window: usize) -> u64 {
    corpus.iter().map(|s| pairs_in_sentence(s.len(), window)).sum()
}

/// Storage that a training step reads rows from and writes updates to.
pub(crate) trait RowStore {
    fn read_row(&self, row: usize, out: &mut [f32]);
    /// `row[i] -= lr * (coeff * x[i])`
    fn apply(&mut self, row: usize, lr: f32, coeff: f32, x: &[f32]);
}

impl RowStore for Matrix {
    #[inline]
    fn read_row(&self, row: usize, out: &mut [f32]) {
        out.copy_from_slice(self.row(row));
    }

    #[inline]
    fn apply(&mut self, row: usize, lr: f32, coeff: f32, x: &[f32]) {
        for (v, &xi) in self.row_mut(row).iter_mut().zip(x) {
            *v -= lr * (coeff * xi);
        }
    }
}

impl RowStore for &SharedMatrix {
    #[inline]
    fn read_row(&self, row: usize, out: &mut [f32]) {
        SharedMatrix::read_row(self, row, out)
    }

    #[inline]
    fn apply(&mut self, row: usize, lr: f32, coeff: f32, x: &[f32]) {
        SharedMatrix::apply(self, row, lr, coeff, x)
    }
}

/// Reusable buffers for one worker.
pub(crate) struct Scratch {
    target: Vec<f32>,
    adapted: Vec<f32>,
    contexts: Vec<f32>,
    coeffs: Vec<f32>,
    scores: Vec<f64>,
    grad: Vec<f32>,
    row: Vec<f32>,
}

impl Scratch {
    pub fn new(dim: usize, negatives: usize) -> Self {
        Scratch {
            target: vec![0.0; dim],
            adapted: vec![0.0; dim],
            contexts: vec![0.0; dim * (negatives + 1)],
            coeffs: Vec::with_capacity(negatives + 1),
            scores: Vec::with_capacity(negatives + 1),
            grad: vec![0.0; dim],
            row: vec![0.0; dim],
        }
    }
}

/// Scores the target against the positive and negatives, fills the gradient
/// coefficients and `grad = Σ coeff_c · v'_c`, and returns the loss.
fn score_contexts<O: RowStore>(
    output: &O,
    target: &[f32],
    context_ids: impl Iterator<Item = usize>,
    scratch_contexts: &mut Vec<f32>,
    coeffs: &mut Vec<f32>,
    scores: &mut Vec<f64>,
    grad: &mut [f32],
) -> LossValue<f64> {
    let h = target.len();
    coeffs.clear();
    scores.clear();
    for (c, id) in context_ids.enumerate() {
        if scratch_contexts.len() < (c + 1) * h {
            scratch_contexts.resize((c + 1) * h, 0.0);
        }
        let ctx = &mut scratch_contexts[c * h..(c + 1) * h];
        output.read_row(id, ctx);
        let s = kernel::dot(ctx, target);
        coeffs.push(kernel::grad_coeff(s, c == 0));
        scores.push(s as f64);
    }
    for (c, &coeff) in coeffs.iter().enumerate() {
        let ctx = &scratch_contexts[c * h..(c + 1) * h];
        if c == 0 {
            for (g, &x) in grad.iter_mut().zip(ctx) {
                *g = coeff * x;
            }
        } else {
            for (g, &x) in grad.iter_mut().zip(ctx) {
                *g = *g + coeff * x;
            }
        }
    }
    kernel::loss_from_scores(scores[0], scores[1..].iter().copied())
}

/// One SGD step on the full model; all gradients are taken at the
/// pre-step parameters.
pub(crate) fn sgns_step<I: RowStore, O: RowStore>(
    input: &mut I,
    output: &mut O,
    scratch: &mut Scratch,
    target: usize,
    positive: usize,
    negatives: &[usize],
    lr: f32,
) -> LossValue<f64> {
    input.read_row(target, &mut scratch.target);
    let ids = std::iter::once(positive).chain(negatives.iter().copied());
    let loss = score_contexts(
        output,
        &scratch.target,
        ids.clone(),
        &mut scratch.contexts,
        &mut scratch.coeffs,
        &mut scratch.scores,
        &mut scratch.grad,
    );
    for (id, &coeff) in ids.zip(scratch.coeffs.iter()) {
        output.apply(id, lr, coeff, &scratch.target);
    }
    input.apply(target, lr, 1.0, &scratch.grad);
    loss
}

/// One SGD step on a user adaptive matrix `A` with frozen background rows.
pub(crate) fn adaptive_step<A: RowStore>(
    layer: &mut A,
    input: &Matrix,
    output: &Matrix,
    scratch: &mut Scratch,
    target: usize,
    positive: usize,
    negatives: &[usize],
    lr: f32,
) -> LossValue<f64> {
    let h = input.cols();
    scratch.target.copy_from_slice(input.row(target));
    for r in 0..h {
        layer.read_row(r, &mut scratch.row);
        scratch.adapted[r] = kernel::dot(&scratch.row, &scratch.target);
    }
    let ids = std::iter::once(positive).chain(negatives.iter().copied());
    let loss = score_contexts(
        output,
        &scratch.adapted,
        ids,
        &mut scratch.contexts,
        &mut scratch.coeffs,
        &mut scratch.scores,
        &mut scratch.grad,
    );
    for r in 0..h {
        layer.apply(r, lr, scratch.grad[r], &scratch.target);
    }
    loss
}

/// What a training run updates per pair.
pub(crate) trait PairTrainer: Sync {
    fn dim(&self) -> usize;
    fn step(&self, scratch: &mut Scratch, target: usize, positive: usize, negatives: &[usize], lr: f32) -> LossValue<f64>;
    fn all_finite(&self) -> bool;
}

pub(crate) struct SgnsTrainer<'a> {
    pub input: &'a SharedMatrix,
    pub output: &'a SharedMatrix,
    pub dim: usize,
}

impl PairTrainer for SgnsTrainer<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn step(&self, scratch: &mut Scratch, target: usize, positive: usize, negatives: &[usize], lr: f32) -> LossValue<f64> {
        let (mut input, mut output) = (self.input, self.output);
        sgns_step(&mut input, &mut output, scratch, target, positive, negatives, lr)
    }

    fn all_finite(&self) -> bool {
        self.input.all_finite() && self.output.all_finite()
    }
}

pub(crate) struct LayerTrainer<'a> {
    pub layer: &'a SharedMatrix,
    pub input: &'a Matrix,
    pub output: &'a Matrix,
}

impl PairTrainer for LayerTrainer<'_> {
    fn dim(&self) -> usize {
        self.input.cols()
    }

    fn step(&self, scratch: &mut Scratch, target: usize, positive: usize, negatives: &[usize], lr: f32) -> LossValue<f64> {
        let mut layer = self.layer;
        adaptive_step(&mut layer, self.input, self.output, scratch, target, positive, negatives, lr)
    }

    fn all_finite(&self) -> bool {
        self.layer.all_finite()
    }
}

fn learning_rate(config: &TrainConfig, processed: u64, total: u64) -> f32 {
    match config.lr_schedule {
        LrSchedule::Constant => config.learning_rate,
        LrSchedule::Linear => {
            let frac = if total == 0 {
                1.0
            } else {
                1.0 - processed as f64 / total as f64
            };
            config.learning_rate * (frac as f32).max(MIN_LR_FRACTION)
        }
    }
}

/// Keep-probabilities for frequent-word subsampling with threshold `t`.
fn keep_probs(vocab: &Vocabulary, t: f64) -> Vec<f64> {
    let total: u64 = vocab.counts().iter().sum();
    vocab
        .counts()
        .iter()
        .map(|&c| {
            let f = c as f64 / total.max(1) as f64;
            if f <= 0.0 {
                1.0
            } else {
                (((f / t).sqrt() + 1.0) * t / f).min(1.0)
            }
        })
        .collect()
}

struct WorkerOut {
    records: Vec<Progress>,
    loss_sum: f64,
    pairs: u64,
    clamped: u64,
}

#[allow(clippy::too_many_arguments)]
fn run_worker<T: PairTrainer>(
    trainer: &T,
    corpus: &[Sentence],
    worker: usize,
    workers: usize,
    epoch: usize,
    config: &TrainConfig,
    keep: Option<&[f64]>,
    sampler: &mut NoiseSampler,
    processed: &AtomicU64,
    total: u64,
) -> Result<WorkerOut> {
    let mut scratch = Scratch::new(trainer.dim(), config.negatives);
    let mut negs = Vec::with_capacity(config.negatives);
    let mut kept = Vec::new();
    let mut out = WorkerOut {
        records: Vec::new(),
        loss_sum: 0.0,
        pairs: 0,
        clamped: 0,
    };
    let mut window_loss = 0.0;
    let mut window_pairs = 0u64;
    let mut lr = learning_rate(config, processed.load(Ordering::Relaxed), total);
    let mut failure = None;

    for sentence in corpus.iter().skip(worker).step_by(workers) {
        let tokens: &[usize] = match keep {
            Some(keep) => {
                kept.clear();
                for &t in &sentence.tokens {
                    if sampler.rng().random::<f64>() < keep[t] {
                        kept.push(t);
                    }
                }
                &kept
            }
            None => &sentence.tokens,
        };
        for_each_pair(tokens, config.window, |target, positive| {
            if failure.is_some() {
                return;
            }
            let done = processed.load(Ordering::Relaxed);
            lr = learning_rate(config, done, total);
            if let Err(e) = sampler.sample_negatives_into(config.negatives, &[target, positive], &mut negs) {
                failure = Some(e);
                return;
            }
            let loss = trainer.step(&mut scratch, target, positive, &negs, lr);
            processed.fetch_add(1, Ordering::Relaxed);
            out.loss_sum += loss.value;
            out.pairs += 1;
            out.clamped += loss.clamped as u64;
            window_loss += loss.value;
            window_pairs += 1;
            if worker == 0 && window_pairs == LOG_EVERY {
                out.records.push(Progress {
                    epoch,
                    pairs: processed.load(Ordering::Relaxed),
                    mean_loss: window_loss / window_pairs as f64,
                    lr,
                });
                window_loss = 0.0;
                window_pairs = 0;
            }
        });
        if let Some(e) = failure.take() {
            return Err(e);
        }
    }
    if worker == 0 && window_pairs > 0 {
        out.records.push(Progress {
            epoch,
            pairs: processed.load(Ordering::Relaxed),
            mean_loss: window_loss / window_pairs as f64,
            lr,
        });
    }
    Ok(out)
}

/// Runs `config.epochs` passes of pair-wise SGD over `corpus`.
pub(crate) fn drive<T: PairTrainer>(
    trainer: &T,
    corpus: &[Sentence],
    vocab: &Vocabulary,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&Progress),
) -> Result<TrainStats> {
    config.validate()?;
    if let Some(&bad) = corpus.iter().flat_map(|s| &s.tokens).find(|&&t| t >= vocab.len()) {
        return Err(Error::DimensionMismatch {
            expected: format!("token index < {}", vocab.len()),
            found: bad.to_string(),
        });
    }
    let workers = config.workers.max(1);
    let total = pairs_in_corpus(corpus, config.window) * config.epochs as u64;
    let base = NoiseSampler::new(vocab.noise_probs(), config.seed)?;
    let mut samplers: Vec<NoiseSampler> = (0..workers).map(|w| base.fork(config.seed, w as u64)).collect();
    let keep = config.subsample.map(|t| keep_probs(vocab, t));
    let processed = AtomicU64::new(0);
    let mut stats = TrainStats {
        epochs: config.epochs,
        ..TrainStats::default()
    };
    let mut loss_sum = 0.0;

    for epoch in 1..=config.epochs {
        let outs: Vec<Result<WorkerOut>> = if workers == 1 {
            vec![run_worker(
                trainer,
                corpus,
                0,
                1,
                epoch,
                config,
                keep.as_deref(),
                &mut samplers[0],
                &processed,
                total,
            )]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = samplers
                    .iter_mut()
                    .enumerate()
                    .map(|(w, sampler)| {
                        let keep = keep.as_deref();
                        let processed = &processed;
                        scope.spawn(move || {
                            run_worker(trainer, corpus, w, workers, epoch, config, keep, sampler, processed, total)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            })
        };
        for out in outs {
            let out = out?;
            for r in &out.records {
                sink(r);
            }
            loss_sum += out.loss_sum;
            stats.pairs += out.pairs;
            stats.clamped += out.clamped;
        }
        if !trainer.all_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
    }
    stats.mean_loss = if stats.pairs == 0 { 0.0 } else { loss_sum / stats.pairs as f64 };
    Ok(stats)
}

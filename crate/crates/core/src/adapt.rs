//! Per-user adaptation of a background model.
//!
//! Two routes produce a [`PersonalizedEmbedding`]: [`retrain`] fine-tunes a
//! copy of both background matrices on the user's corpus, while
//! [`train_adaptive_layer`] learns only an `h x h` matrix `A` placed between
//! the hidden and output layers, keeping `W` and `W'` frozen. The adapted
//! mapping is then `A · v` for every background input vector.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sgns::shared::SharedMatrix;
use crate::sgns::train::{self, LayerTrainer};
use crate::sgns::{
    adaptive_gradients_slices, init_model, train_epochs, EmbeddingModel, NoiseSampler, Progress, TrainConfig,
    TrainStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    NoBackground,
    BackgroundOnly,
    Retrain,
    AdaptiveLayer,
}

impl Provenance {
    pub const ALL: [Provenance; 4] = [
        Provenance::NoBackground,
        Provenance::BackgroundOnly,
        Provenance::Retrain,
        Provenance::AdaptiveLayer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::NoBackground => "no_background",
            Provenance::BackgroundOnly => "background_only",
            Provenance::Retrain => "retrain",
            Provenance::AdaptiveLayer => "adaptive_layer",
        }
    }

    /// Parameters updated while producing a mapping of this kind.
    pub fn trainable_parameters(self, vocab_size: usize, dim: usize) -> usize {
        match self {
            Provenance::NoBackground | Provenance::Retrain => 2 * vocab_size * dim,
            Provenance::AdaptiveLayer => dim * dim,
            Provenance::BackgroundOnly => 0,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Provenance::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown provenance {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerInit {
    #[default]
    Random,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveLayer {
    pub user_id: String,
    pub seed: u64,
    /// Row-major `h x h`.
    pub matrix: Matrix,
}

impl AdaptiveLayer {
    pub fn identity(user_id: impl Into<String>, dim: usize, seed: u64) -> Self {
        AdaptiveLayer {
            user_id: user_id.into(),
            seed,
            matrix: Matrix::identity(dim),
        }
    }

    /// Entries uniform in `[-0.5/h, 0.5/h)`.
    pub fn random(user_id: impl Into<String>, dim: usize, seed: u64) -> Self {
        let bound = 0.5 / dim as f32;
        let dist = Uniform::new(-bound, bound).expect("non-empty range");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dim * dim).map(|_| dist.sample(&mut rng)).collect();
        AdaptiveLayer {
            user_id: user_id.into(),
            seed,
            matrix: Matrix::from_vec(dim, dim, data),
        }
    }

    pub fn init(user_id: impl Into<String>, dim: usize, seed: u64, init: LayerInit) -> Self {
        match init {
            LayerInit::Random => Self::random(user_id, dim, seed),
            LayerInit::Identity => Self::identity(user_id, dim, seed),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn trainable_parameters(&self) -> usize {
        self.dim() * self.dim()
    }

    /// `A · v`
    pub fn apply(&self, v: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.dim()];
        self.matrix.matvec(v, &mut out);
        out
    }
}

/// A user's word mapping: the input vectors used as targets and the output
/// vectors used as contexts when scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedEmbedding {
    pub user_id: String,
    pub input: Matrix,
    pub output: Matrix,
    pub provenance: Provenance,
}

impl PersonalizedEmbedding {
    pub fn new(user_id: impl Into<String>, input: Matrix, output: Matrix, provenance: Provenance) -> Result<Self> {
        if input.shape() != output.shape() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", input.shape()),
                found: format!("{:?}", output.shape()),
            });
        }
        Ok(PersonalizedEmbedding {
            user_id: user_id.into(),
            input,
            output,
            provenance,
        })
    }

    pub fn from_model(user_id: impl Into<String>, model: EmbeddingModel, provenance: Provenance) -> Self {
        PersonalizedEmbedding {
            user_id: user_id.into(),
            input: model.input,
            output: model.output,
            provenance,
        }
    }

    /// The background model packaged unmodified.
    pub fn background_only(user_id: impl Into<String>, background: &EmbeddingModel) -> Self {
        Self::from_model(user_id, background.clone(), Provenance::BackgroundOnly)
    }

    pub fn vocab_size(&self) -> usize {
        self.input.rows()
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    pub fn trainable_parameters(&self) -> usize {
        self.provenance.trainable_parameters(self.vocab_size(), self.dim())
    }
}

fn check_vocab(background: &EmbeddingModel, vocab: &Vocabulary) -> Result<()> {
    if background.vocab_size() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} words", vocab.len()),
            found: format!("{} model rows", background.vocab_size()),
        });
    }
    Ok(())
}

fn check_layer(background: &EmbeddingModel, layer: &AdaptiveLayer) -> Result<()> {
    if layer.matrix.shape() != (background.dim(), background.dim()) {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0} adaptive layer", background.dim()),
            found: format!("{:?}", layer.matrix.shape()),
        });
    }
    Ok(())
}

/// Fine-tunes a copy of the full background model on the personal corpus.
pub fn retrain(
    user_id: &str,
    background: &EmbeddingModel,
    personal: &[Sentence],
    vocab: &Vocabulary,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&Progress),
) -> Result<(PersonalizedEmbedding, TrainStats)> {
    check_vocab(background, vocab)?;
    let mut model = background.clone();
    let stats = train_epochs(&mut model, personal, vocab, config, sink)?;
    Ok((PersonalizedEmbedding::from_model(user_id, model, Provenance::Retrain), stats))
}

/// Baseline trained from a fresh initialisation on the personal corpus only.
pub fn no_background(
    user_id: &str,
    personal: &[Sentence],
    vocab: &Vocabulary,
    dim: usize,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&Progress),
) -> Result<(PersonalizedEmbedding, TrainStats)> {
    let mut model = init_model(vocab.len(), dim, config.seed)?;
    let stats = train_epochs(&mut model, personal, vocab, config, sink)?;
    Ok((PersonalizedEmbedding::from_model(user_id, model, Provenance::NoBackground), stats))
}

/// `v'_context · (A · v_target)` on background vectors.
pub fn adapted_score(background: &EmbeddingModel, layer: &AdaptiveLayer, target: usize, context: usize) -> f32 {
    let adapted = layer.apply(background.input.row(target));
    crate::matrix::dot(background.output.row(context), &adapted)
}

/// Gradient of the negative-sampling loss with respect to `A`. The
/// background matrices receive no gradient.
pub fn adaptive_gradients(
    background: &EmbeddingModel,
    layer: &AdaptiveLayer,
    target: usize,
    positive: usize,
    negatives: &[usize],
) -> Matrix {
    let negs: Vec<&[f32]> = negatives.iter().map(|&i| background.output.row(i)).collect();
    let h = layer.dim();
    let g = adaptive_gradients_slices(
        layer.matrix.as_slice(),
        background.input.row(target),
        background.output.row(positive),
        &negs,
    );
    Matrix::from_vec(h, h, g)
}

/// One SGD step on `A` alone.
pub fn adaptive_sgd_step(
    background: &EmbeddingModel,
    layer: &mut AdaptiveLayer,
    target: usize,
    positive: usize,
    negatives: &[usize],
    lr: f32,
) -> f64 {
    let mut scratch = train::Scratch::new(background.dim(), negatives.len());
    train::adaptive_step(
        &mut layer.matrix,
        &background.input,
        &background.output,
        &mut scratch,
        target,
        positive,
        negatives,
        lr,
    )
    .value
}

/// Learns the user adaptive matrix with the same pair loop as background
/// training; only `A` is updated.
pub fn train_adaptive_layer(
    user_id: &str,
    background: &EmbeddingModel,
    personal: &[Sentence],
    vocab: &Vocabulary,
    config: &TrainConfig,
    init: LayerInit,
    sink: &mut dyn FnMut(&Progress),
) -> Result<(AdaptiveLayer, TrainStats)> {
    check_vocab(background, vocab)?;
    let mut layer = AdaptiveLayer::init(user_id, background.dim(), config.seed, init);
    let shared = SharedMatrix::from_matrix(&layer.matrix);
    let trainer = LayerTrainer {
        layer: &shared,
        input: &background.input,
        output: &background.output,
    };
    let stats = train::drive(&trainer, personal, vocab, config, sink);
    layer.matrix = shared.into_matrix(background.dim());
    Ok((layer, stats?))
}

/// Personalized vectors `A · v_i` for every word; output vectors copied.
pub fn export_personalized(background: &EmbeddingModel, layer: &AdaptiveLayer) -> Result<PersonalizedEmbedding> {
    check_layer(background, layer)?;
    let (v, h) = background.input.shape();
    let mut input = Matrix::zeros(v, h);
    for i in 0..v {
        layer.matrix.matvec(background.input.row(i), input.row_mut(i));
    }
    Ok(PersonalizedEmbedding {
        user_id: layer.user_id.clone(),
        input,
        output: background.output.clone(),
        provenance: Provenance::AdaptiveLayer,
    })
}

/// Mean negative-sampling loss of a mapping over every pair of a corpus,
/// with negatives drawn from a fixed seed so mappings can be compared.
pub fn mean_pair_loss(
    mapping: &PersonalizedEmbedding,
    corpus: &[Sentence],
    vocab: &Vocabulary,
    window: usize,
    negatives: usize,
    seed: u64,
) -> Result<f64> {
    let mut sampler = NoiseSampler::new(vocab.noise_probs(), seed)?;
    let mut negs = Vec::with_capacity(negatives);
    let mut total = 0.0;
    let mut n = 0u64;
    let mut failure = None;
    for s in corpus {
        crate::sgns::for_each_pair(&s.tokens, window, |t, c| {
            if failure.is_some() {
                return;
            }
            if let Err(e) = sampler.sample_negatives_into(negatives, &[t, c], &mut negs) {
                failure = Some(e);
                return;
            }
            let to64 = |r: &[f32]| r.iter().map(|&x| x as f64).collect::<Vec<_>>();
            let nv: Vec<Vec<f64>> = negs.iter().map(|&i| to64(mapping.output.row(i))).collect();
            let nr: Vec<&[f64]> = nv.iter().map(Vec::as_slice).collect();
            let l = crate::sgns::pair_loss_slices(&to64(mapping.input.row(t)), &to64(mapping.output.row(c)), &nr);
            total += l.value;
            n += 1;
        });
        if let Some(e) = failure.take() {
            return Err(e);
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

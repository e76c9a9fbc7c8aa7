//! Evaluation of personalized mappings.
//!
//! User prediction scores a document's skip-gram log-likelihood under each
//! user's mapping with a full softmax over the vocabulary, inverts with
//! Bayes' rule and ranks users by posterior. Sentence completion ranks all
//! words by cosine similarity to the mean of the remaining words.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::adapt::PersonalizedEmbedding;
use crate::corpus::{EvalDocument, Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::matrix::{cosine_f64, dot_f64, norm_f64};
use crate::sgns::for_each_pair;

/// Output rows per block in the partition computation.
const PARTITION_BLOCK: usize = 64;

/// Default sentence-completion cutoff.
pub const DEFAULT_CUTOFF: usize = 500;

const EMPTY_SLOT: u64 = u64::MAX;

/// `ln Σ exp(x_i)` over a stream, carried as a running max and a scaled sum.
#[derive(Debug, Clone, Copy)]
pub struct StreamingLogSumExp {
    max: f64,
    sum: f64,
}

impl Default for StreamingLogSumExp {
    fn default() -> Self {
        StreamingLogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl StreamingLogSumExp {
    pub fn push_block(&mut self, block: &[f64]) {
        let block_max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if block_max == f64::NEG_INFINITY {
            return;
        }
        if block_max > self.max {
            self.sum *= (self.max - block_max).exp();
            self.max = block_max;
        }
        let m = self.max;
        self.sum += block.iter().map(|&x| (x - m).exp()).sum::<f64>();
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let mut acc = StreamingLogSumExp::default();
    acc.push_block(values);
    acc.value()
}

/// Full-softmax scorer for one mapping with a lazily filled log-partition
/// cache. The cache tolerates concurrent population since every writer
/// stores the same value.
pub struct MappingScorer<'a> {
    mapping: &'a PersonalizedEmbedding,
    cache: Vec<AtomicU64>,
}

impl<'a> MappingScorer<'a> {
    pub fn new(mapping: &'a PersonalizedEmbedding) -> Self {
        MappingScorer {
            mapping,
            cache: (0..mapping.vocab_size()).map(|_| AtomicU64::new(EMPTY_SLOT)).collect(),
        }
    }

    pub fn mapping(&self) -> &'a PersonalizedEmbedding {
        self.mapping
    }

    pub fn user_id(&self) -> &'a str {
        &self.mapping.user_id
    }

    /// `v'_context · v_target` in `f64`.
    pub fn score(&self, target: usize, context: usize) -> f64 {
        dot_f64(self.mapping.output.row(context), self.mapping.input.row(target))
    }

    /// `ln Σ_i exp(v'_i · v_target)`.
    pub fn log_partition(&self, target: usize) -> f64 {
        let slot = &self.cache[target];
        let bits = slot.load(Ordering::Relaxed);
        if bits != EMPTY_SLOT {
            return f64::from_bits(bits);
        }
        let value = self.compute_log_partition(target);
        slot.store(value.to_bits(), Ordering::Relaxed);
        value
    }

    fn compute_log_partition(&self, target: usize) -> f64 {
        let v = self.mapping.input.row(target);
        let out = &self.mapping.output;
        let mut acc = StreamingLogSumExp::default();
        let mut block = Vec::with_capacity(PARTITION_BLOCK);
        let mut start = 0;
        while start < out.rows() {
            let end = (start + PARTITION_BLOCK).min(out.rows());
            block.clear();
            block.extend((start..end).map(|i| dot_f64(out.row(i), v)));
            acc.push_block(&block);
            start = end;
        }
        acc.value()
    }

    /// `ln p(context | target)` under the full softmax.
    pub fn log_prob(&self, target: usize, context: usize) -> f64 {
        self.score(target, context) - self.log_partition(target)
    }

    /// Softmax over all words given a target.
    pub fn context_distribution(&self, target: usize) -> Vec<f64> {
        let z = self.log_partition(target);
        (0..self.mapping.vocab_size())
            .map(|i| (self.score(target, i) - z).exp())
            .collect()
    }

    pub fn sentence_loglik(&self, sentence: &Sentence, window: usize) -> f64 {
        let mut total = 0.0;
        for_each_pair(&sentence.tokens, window, |t, c| total += self.log_prob(t, c));
        total
    }

    pub fn doc_loglik(&self, document: &EvalDocument, window: usize) -> f64 {
        document.sentences.iter().map(|s| self.sentence_loglik(s, window)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPriorTable {
    priors: BTreeMap<String, f64>,
}

impl UserPriorTable {
    pub fn uniform<S: AsRef<str>>(users: &[S]) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::UserSetMismatch("no users".into()));
        }
        let p = 1.0 / users.len() as f64;
        Ok(UserPriorTable {
            priors: users.iter().map(|u| (u.as_ref().to_owned(), p)).collect(),
        })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.values().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidConfig("prior weights must be finite and non-negative".into()));
        }
        let z: f64 = weights.values().sum();
        if z.is_nan() || z <= 0.0 {
            return Err(Error::InvalidConfig("prior weights sum to zero".into()));
        }
        Ok(UserPriorTable {
            priors: weights.into_iter().map(|(u, w)| (u, w / z)).collect(),
        })
    }

    pub fn get(&self, user: &str) -> Option<f64> {
        self.priors.get(user).copied()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.priors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.priors.iter().map(|(u, &p)| (u.as_str(), p))
    }

    /// Multiplies every prior by `factor` without renormalizing.
    pub fn scaled(&self, factor: f64) -> Self {
        UserPriorTable {
            priors: self.priors.iter().map(|(u, &p)| (u.clone(), p * factor)).collect(),
        }
    }
}

/// `p(u | D)` keyed by user id.
pub type Posterior = BTreeMap<String, f64>;

/// Posterior over users for one document:
/// `p(u|D) ∝ exp(ln p_{M_u}(D) + ln π_u)`, normalized in log space.
pub fn user_posterior(
    document: &EvalDocument,
    scorers: &[MappingScorer<'_>],
    priors: &UserPriorTable,
    window: usize,
) -> Result<Posterior> {
    if scorers.is_empty() {
        return Err(Error::UserSetMismatch("no mappings".into()));
    }
    let mapping_users: BTreeSet<&str> = scorers.iter().map(|s| s.user_id()).collect();
    let prior_users: BTreeSet<&str> = priors.users().collect();
    if mapping_users != prior_users || mapping_users.len() != scorers.len() {
        return Err(Error::UserSetMismatch(format!(
            "mappings {mapping_users:?} vs priors {prior_users:?}"
        )));
    }
    let log_joint: Vec<f64> = scorers
        .iter()
        .map(|s| s.doc_loglik(document, window) + priors.get(s.user_id()).unwrap_or(0.0).ln())
        .collect();
    let z = log_sum_exp(&log_joint);
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("posterior normalizer for {}", document.id)));
    }
    Ok(scorers
        .iter()
        .zip(log_joint)
        .map(|(s, lj)| (s.user_id().to_owned(), (lj - z).exp()))
        .collect())
}

/// Users in descending posterior order; ties broken by ascending id.
pub fn ranked_users(posterior: &Posterior) -> Vec<(&str, f64)> {
    let mut ranked: Vec<(&str, f64)> = posterior.iter().map(|(u, &p)| (u.as_str(), p)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
}

/// Returns the argmax user and the 1-based rank of `truth`, or `None` when
/// `truth` is not in the posterior.
pub fn predict_user(posterior: &Posterior, truth: &str) -> Option<(String, usize)> {
    let ranked = ranked_users(posterior);
    let predicted = ranked.first()?.0.to_owned();
    let rank = ranked.iter().position(|(u, _)| *u == truth)? + 1;
    Some((predicted, rank))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub document_id: String,
    pub true_user: String,
    pub predicted: String,
    pub rank: usize,
    pub posterior: Posterior,
}

/// Scores every document against every mapping, in parallel over documents.
pub fn predict_documents(
    documents: &[EvalDocument],
    scorers: &[MappingScorer<'_>],
    priors: &UserPriorTable,
    window: usize,
    workers: usize,
) -> Result<Vec<PredictionResult>> {
    let predict_one = |doc: &EvalDocument| -> Result<PredictionResult> {
        let posterior = user_posterior(doc, scorers, priors, window)?;
        let (predicted, rank) = predict_user(&posterior, &doc.user_id)
            .ok_or_else(|| Error::UserSetMismatch(format!("true user {} has no mapping", doc.user_id)))?;
        Ok(PredictionResult {
            document_id: doc.id.clone(),
            true_user: doc.user_id.clone(),
            predicted,
            rank,
            posterior,
        })
    };
    let workers = workers.max(1);
    if workers == 1 || documents.len() < 2 {
        return documents.iter().map(predict_one).collect();
    }
    let chunk = documents.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = documents
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(predict_one).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(documents.len());
        for h in handles {
            out.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPredictionSummary {
    pub documents: usize,
    pub accuracy: f64,
    pub mrr: f64,
}

/// Accuracy is the fraction of rank-1 items; MRR is the mean of `1/rank`.
pub fn score_ranks(ranks: &[usize]) -> Result<UserPredictionSummary> {
    if ranks.is_empty() {
        return Err(Error::EmptyResults);
    }
    let n = ranks.len() as f64;
    let hits = ranks.iter().filter(|&&r| r == 1).count() as f64;
    let rr: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum();
    Ok(UserPredictionSummary {
        documents: ranks.len(),
        accuracy: hits / n,
        mrr: rr / n,
    })
}

pub fn score_user_prediction(results: &[PredictionResult]) -> Result<UserPredictionSummary> {
    score_ranks(&results.iter().map(|r| r.rank).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSummary {
    pub sentences: usize,
    pub cutoff: usize,
    pub within_cutoff: usize,
    /// Percentage of items with rank `<= cutoff`.
    pub top_pct: f64,
    /// Mean reciprocal rank over the within-cutoff items only.
    pub mrr_within: f64,
    /// `false` when no item is within the cutoff; `mrr_within` is then 0.
    pub mrr_within_defined: bool,
}

pub fn score_sentence_completion(ranks: &[usize], cutoff: usize) -> Result<CompletionSummary> {
    if ranks.is_empty() {
        return Err(Error::EmptyResults);
    }
    let within: Vec<usize> = ranks.iter().copied().filter(|&r| r <= cutoff).collect();
    let defined = !within.is_empty();
    let mrr_within = if defined {
        within.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / within.len() as f64
    } else {
        0.0
    };
    Ok(CompletionSummary {
        sentences: ranks.len(),
        cutoff,
        within_cutoff: within.len(),
        top_pct: within.len() as f64 / ranks.len() as f64 * 100.0,
        mrr_within,
        mrr_within_defined: defined,
    })
}

/// Both task summaries of one evaluation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub user_prediction: Option<UserPredictionSummary>,
    pub sentence_completion: Option<CompletionSummary>,
}

/// Cosine ranking over the input vectors of one mapping, with word norms
/// precomputed.
pub struct SimilarityIndex<'a> {
    mapping: &'a PersonalizedEmbedding,
    norms: Vec<f64>,
}

impl<'a> SimilarityIndex<'a> {
    pub fn new(mapping: &'a PersonalizedEmbedding) -> Self {
        let norms = (0..mapping.vocab_size()).map(|i| norm_f64(mapping.input.row(i))).collect();
        SimilarityIndex { mapping, norms }
    }

    /// Mean of the input vectors of `tokens`.
    pub fn query(&self, tokens: &[usize]) -> Vec<f64> {
        let h = self.mapping.dim();
        let mut q = vec![0.0; h];
        for &t in tokens {
            for (qi, &x) in q.iter_mut().zip(self.mapping.input.row(t)) {
                *qi += x as f64;
            }
        }
        let n = tokens.len().max(1) as f64;
        q.iter_mut().for_each(|x| *x /= n);
        q
    }

    pub fn cosines(&self, query: &[f64]) -> Result<Vec<f64>> {
        let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
        if qn == 0.0 {
            return Err(Error::DegenerateQuery);
        }
        Ok((0..self.mapping.vocab_size())
            .map(|i| {
                if self.norms[i] == 0.0 {
                    return 0.0;
                }
                let d: f64 = self.mapping.input.row(i).iter().zip(query).map(|(&x, &q)| x as f64 * q).sum();
                d / (qn * self.norms[i])
            })
            .collect())
    }

    /// 1-based rank of `answer` among all words by descending cosine to the
    /// remainder's mean vector; ties go to the smaller word index.
    pub fn rank(&self, answer: usize, remainder: &Sentence) -> Result<usize> {
        if remainder.is_empty() {
            return Err(Error::DegenerateQuery);
        }
        let cos = self.cosines(&self.query(&remainder.tokens))?;
        let target = cos[answer];
        let ahead = cos
            .iter()
            .enumerate()
            .filter(|&(i, &c)| c > target || (c == target && i < answer))
            .count();
        Ok(ahead + 1)
    }
}

pub fn complete_sentence(mapping: &PersonalizedEmbedding, scooped: usize, remainder: &Sentence) -> Result<usize> {
    SimilarityIndex::new(mapping).rank(scooped, remainder)
}

/// Mean cosine similarity of `word` to the positive and to the negative
/// anchor sets.
pub fn word_affinity(
    mapping: &PersonalizedEmbedding,
    vocab: &Vocabulary,
    word: &str,
    positive: &[String],
    negative: &[String],
) -> Result<(f64, f64)> {
    let w = vocab.get(word).ok_or_else(|| Error::UnknownWord(word.to_owned()))?;
    let pos = anchor_indices(vocab, positive)?;
    let neg = anchor_indices(vocab, negative)?;
    Ok((mean_cosine(mapping, w, &pos), mean_cosine(mapping, w, &neg)))
}

fn anchor_indices(vocab: &Vocabulary, anchors: &[String]) -> Result<Vec<usize>> {
    anchors
        .iter()
        .map(|a| vocab.get(a).ok_or_else(|| Error::UnknownAnchor(a.clone())))
        .collect()
}

fn mean_cosine(mapping: &PersonalizedEmbedding, word: usize, anchors: &[usize]) -> f64 {
    if anchors.is_empty() {
        return 0.0;
    }
    let v = mapping.input.row(word);
    anchors.iter().map(|&a| cosine_f64(v, mapping.input.row(a))).sum::<f64>() / anchors.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityRow {
    pub word: String,
    pub positive: f64,
    pub negative: f64,
}

impl AffinityRow {
    pub fn margin(&self) -> f64 {
        self.positive - self.negative
    }
}

/// Affinities of `words` sorted by descending `positive - negative`, ties
/// by word.
pub fn affinity_report(
    mapping: &PersonalizedEmbedding,
    vocab: &Vocabulary,
    words: &[String],
    positive: &[String],
    negative: &[String],
) -> Result<Vec<AffinityRow>> {
    let mut rows = words
        .iter()
        .map(|w| {
            let (p, n) = word_affinity(mapping, vocab, w, positive, negative)?;
            Ok(AffinityRow {
                word: w.clone(),
                positive: p,
                negative: n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.margin().total_cmp(&a.margin()).then_with(|| a.word.cmp(&b.word)));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::Provenance;
    use crate::matrix::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mapping(user: &str, v: usize, h: usize, seed: u64) -> PersonalizedEmbedding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |n| (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>();
        PersonalizedEmbedding::new(
            user,
            Matrix::from_vec(v, h, gen(v * h)),
            Matrix::from_vec(v, h, gen(v * h)),
            Provenance::Retrain,
        )
        .unwrap()
    }

    fn zero_mapping(v: usize, h: usize) -> PersonalizedEmbedding {
        PersonalizedEmbedding::new("z", Matrix::zeros(v, h), Matrix::zeros(v, h), Provenance::Retrain).unwrap()
    }

    #[test]
    fn partition_examples() {
        let m = zero_mapping(2, 3);
        let s = MappingScorer::new(&m);
        assert!((s.log_partition(0) - 2f64.ln()).abs() < 1e-15);

        let m = PersonalizedEmbedding::new(
            "u",
            Matrix::from_vec(2, 1, vec![1.0, 0.0]),
            Matrix::from_vec(2, 1, vec![10.0, 0.0]),
            Provenance::Retrain,
        )
        .unwrap();
        let s = MappingScorer::new(&m);
        assert!((s.log_partition(0) - (10.0 + (-10f64).exp().ln_1p())).abs() < 1e-12);
        assert!((s.log_partition(0) - 10.0000454).abs() < 1e-7);
        // cached value is returned unchanged
        assert_eq!(s.log_partition(0).to_bits(), s.log_partition(0).to_bits());
    }

    #[test]
    fn streaming_lse_handles_blocks_and_extremes() {
        let mut acc = StreamingLogSumExp::default();
        acc.push_block(&[0.0, 1.0]);
        acc.push_block(&[1000.0]);
        acc.push_block(&[-1000.0, 2.0]);
        assert!((acc.value() - 1000.0).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn sentence_examples() {
        let m = zero_mapping(2, 4);
        let s = MappingScorer::new(&m);
        let ll = s.sentence_loglik(&Sentence::new(vec![0, 1]), 1);
        assert!((ll + 2.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(s.sentence_loglik(&Sentence::new(vec![1]), 3), 0.0);
        assert_eq!(s.sentence_loglik(&Sentence::default(), 3), 0.0);
    }

    #[test]
    fn doc_additivity() {
        let m = mapping("u", 8, 3, 1);
        let s = MappingScorer::new(&m);
        let sent = Sentence::new(vec![1, 2, 3, 1]);
        let one = EvalDocument { id: "d".into(), user_id: "u".into(), sentences: vec![sent.clone()] };
        assert_eq!(s.doc_loglik(&one, 2), s.sentence_loglik(&sent, 2));
        let two = EvalDocument { sentences: vec![sent.clone(), sent.clone()], ..one.clone() };
        assert!((s.doc_loglik(&two, 2) - 2.0 * s.doc_loglik(&one, 2)).abs() < 1e-12);
    }

    #[test]
    fn posterior_examples() {
        let doc = EvalDocument { id: "d".into(), user_id: "a".into(), sentences: vec![Sentence::new(vec![0, 1, 2])] };
        let a = mapping("a", 5, 3, 2);
        let scorers = [MappingScorer::new(&a)];
        let post = user_posterior(&doc, &scorers, &UserPriorTable::uniform(&["a"]).unwrap(), 1).unwrap();
        assert!((post["a"] - 1.0).abs() < 1e-12);

        let b = PersonalizedEmbedding { user_id: "b".into(), ..a.clone() };
        let c = PersonalizedEmbedding { user_id: "c".into(), ..a.clone() };
        let scorers = [MappingScorer::new(&a), MappingScorer::new(&b), MappingScorer::new(&c)];
        let priors = UserPriorTable::uniform(&["a", "b", "c"]).unwrap();
        let post = user_posterior(&doc, &scorers, &priors, 1).unwrap();
        for p in post.values() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(predict_user(&post, "c"), Some(("a".into(), 3)));

        let wrong = UserPriorTable::uniform(&["a", "x", "c"]).unwrap();
        assert!(matches!(user_posterior(&doc, &scorers, &wrong, 1), Err(Error::UserSetMismatch(_))));
    }

    #[test]
    fn prediction_rules() {
        let post: Posterior = [("A".to_string(), 0.7), ("B".to_string(), 0.3)].into();
        assert_eq!(predict_user(&post, "B"), Some(("A".into(), 2)));
        let tie: Posterior = [("B".to_string(), 0.5), ("A".to_string(), 0.5)].into();
        assert_eq!(predict_user(&tie, "B"), Some(("A".into(), 2)));
        assert_eq!(predict_user(&tie, "Z"), None);
    }

    #[test]
    fn metric_arithmetic() {
        let s = score_ranks(&[1, 1, 1]).unwrap();
        assert_eq!((s.accuracy, s.mrr), (1.0, 1.0));
        let s = score_ranks(&[1, 2, 4]).unwrap();
        assert!((s.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.mrr - 1.75 / 3.0).abs() < 1e-15);
        assert!(matches!(score_ranks(&[]), Err(Error::EmptyResults)));
    }

    #[test]
    fn completion_metrics() {
        let s = score_sentence_completion(&[1, 600], 500).unwrap();
        assert_eq!((s.top_pct, s.mrr_within, s.mrr_within_defined), (50.0, 1.0, true));
        let s = score_sentence_completion(&[501, 900], 500).unwrap();
        assert_eq!((s.top_pct, s.mrr_within, s.mrr_within_defined), (0.0, 0.0, false));
        assert!(score_sentence_completion(&[], 500).is_err());
    }

    #[test]
    fn completion_rank_examples() {
        // word 2 is the only vector collinear with the mean of words 0 and 1
        let m = PersonalizedEmbedding::new(
            "u",
            Matrix::from_vec(4, 2, vec![1.0, 0.0, 0.0, 1.0, 3.0, 3.0, 1.0, -1.0]),
            Matrix::zeros(4, 2),
            Provenance::Retrain,
        )
        .unwrap();
        let rest = Sentence::new(vec![0, 1]);
        assert_eq!(complete_sentence(&m, 2, &rest).unwrap(), 1);
        let mut doubled = m.clone();
        doubled.input.scale(2.0);
        for w in 0..4 {
            assert_eq!(complete_sentence(&m, w, &rest).unwrap(), complete_sentence(&doubled, w, &rest).unwrap());
        }
        // cos(w0) == cos(w1): the smaller index ranks first
        assert_eq!(complete_sentence(&m, 0, &rest).unwrap(), 2);
        assert_eq!(complete_sentence(&m, 1, &rest).unwrap(), 3);
        let z = zero_mapping(3, 2);
        assert!(matches!(complete_sentence(&z, 0, &Sentence::new(vec![1])), Err(Error::DegenerateQuery)));
    }

    #[test]
    fn affinity_examples() {
        let vocab = Vocabulary::from_counts(
            ["w", "p", "n", "q"].map(String::from).to_vec(),
            vec![1, 1, 1, 1],
        )
        .unwrap();
        let m = PersonalizedEmbedding::new(
            "u",
            Matrix::from_vec(4, 2, vec![1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, -3.0]),
            Matrix::zeros(4, 2),
            Provenance::Retrain,
        )
        .unwrap();
        let (p, n) = word_affinity(&m, &vocab, "w", &["p".into()], &["n".into(), "q".into()]).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert_eq!(n, 0.0);
        assert!(matches!(
            word_affinity(&m, &vocab, "w", &["zzz".into()], &[]),
            Err(Error::UnknownAnchor(_))
        ));
        let rows = affinity_report(&m, &vocab, &["n".into(), "w".into()], &["p".into()], &["n".into()]).unwrap();
        assert_eq!(rows[0].word, "w");
    }
}

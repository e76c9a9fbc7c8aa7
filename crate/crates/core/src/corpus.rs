//! Corpus ingestion: tokenization, the fixed lexicon, per-user splits,
//! TF-IDF scooping and evaluation documents.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent applied to unigram counts to form the negative-sampling law.
pub const NOISE_POWER: f64 = 0.75;

/// Default maximum number of sentences in an evaluation document.
pub const MAX_DOC_SENTENCES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMode {
    /// Whitespace split only; the input is already word-segmented.
    #[default]
    Presegmented,
    /// Whitespace split, then every CJK codepoint becomes its own token.
    Fallback,
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3000..=0x303F     // CJK symbols and punctuation
        | 0x3040..=0x30FF   // kana
        | 0x3400..=0x4DBF   // ext A
        | 0x4E00..=0x9FFF   // unified ideographs
        | 0xAC00..=0xD7AF   // hangul syllables
        | 0xF900..=0xFAFF   // compatibility ideographs
        | 0xFF00..=0xFF60   // fullwidth punctuation
        | 0x20000..=0x2FA1F)
}

/// Splits a line into surface tokens.
///
/// In [`SegmentMode::Fallback`] each maximal run of CJK codepoints is broken
/// into single characters while non-CJK runs are kept intact, so
/// `"我愛coffee"` becomes `["我", "愛", "coffee"]`.
pub fn tokenize(line: &str, mode: SegmentMode) -> Vec<&str> {
    let words = line.split_whitespace();
    match mode {
        SegmentMode::Presegmented => words.collect(),
        SegmentMode::Fallback => {
            let mut out = Vec::new();
            for word in words {
                let mut run_start: Option<usize> = None;
                for (i, c) in word.char_indices() {
                    if is_cjk(c) {
                        if let Some(s) = run_start.take() {
                            out.push(&word[s..i]);
                        }
                        out.push(&word[i..i + c.len_utf8()]);
                    } else if run_start.is_none() {
                        run_start = Some(i);
                    }
                }
                if let Some(s) = run_start {
                    out.push(&word[s..]);
                }
            }
            out
        }
    }
}

/// A sentence as indices into a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<usize>,
    /// Token count before out-of-lexicon words were dropped.
    pub raw_length: usize,
}

impl Sentence {
    pub fn new(tokens: Vec<usize>) -> Self {
        let raw_length = tokens.len();
        Sentence { tokens, raw_length }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// The fixed lexicon with counts and the powered noise distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    noise_probs: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from words already in index order.
    pub fn from_counts(words: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptyVocabulary { min_count: 0 });
        }
        if words.len() != counts.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} counts", words.len()),
                found: format!("{} counts", counts.len()),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate word {w:?} in vocabulary")));
            }
        }
        let noise_probs = noise_distribution(&counts);
        Ok(Vocabulary {
            words,
            counts,
            noise_probs,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn noise_probs(&self) -> &[f64] {
        &self.noise_probs
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Maps surface tokens to indices, dropping out-of-lexicon words.
    pub fn index_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> Sentence {
        Sentence {
            tokens: tokens.iter().filter_map(|t| self.get(t.as_ref())).collect(),
            raw_length: tokens.len(),
        }
    }
}

fn noise_distribution(counts: &[u64]) -> Vec<f64> {
    let powered: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(NOISE_POWER)).collect();
    let z: f64 = powered.iter().sum();
    if z == 0.0 {
        return vec![0.0; counts.len()];
    }
    powered.into_iter().map(|p| p / z).collect()
}

/// Counts words over a token stream and keeps those with frequency
/// `>= min_count`. Indices follow descending frequency; ties keep first
/// occurrence order.
pub fn build_vocab<I, S, T>(sentences: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[T]>,
    T: AsRef<str>,
{
    let mut first_seen: HashMap<String, (usize, u64)> = HashMap::new();
    for sentence in sentences {
        for tok in sentence.as_ref() {
            let next = first_seen.len();
            first_seen
                .entry(tok.as_ref().to_owned())
                .or_insert((next, 0))
                .1 += 1;
        }
    }
    let mut entries: Vec<(String, usize, u64)> = first_seen
        .into_iter()
        .filter(|(_, (_, c))| *c >= min_count.max(1) as u64)
        .map(|(w, (order, c))| (w, order, c))
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyVocabulary { min_count });
    }
    entries.sort_by(|a, b| b.2.cmp(&a.2).then(a.1.cmp(&b.1)));
    let (words, counts) = entries.into_iter().map(|(w, _, c)| (w, c)).unzip();
    Vocabulary::from_counts(words, counts)
}

/// Maps every raw sentence through the lexicon.
pub fn index_corpus<S, T>(raw: &[S], vocab: &Vocabulary) -> Vec<Sentence>
where
    S: AsRef<[T]>,
    T: AsRef<str>,
{
    raw.iter().map(|s| vocab.index_sentence(s.as_ref())).collect()
}

/// Half-open sentence ranges of a per-user split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    /// First 3/5 train, next 1/5 validation, remainder test.
    pub fn by_order(n: usize) -> Self {
        let train_end = n * 3 / 5;
        let val_end = train_end + n / 5;
        SplitRanges {
            train: 0..train_end,
            validation: train_end..val_end,
            test: val_end..n,
        }
    }

    /// Checks that the ranges tile `0..n` in train, validation, test order.
    pub fn validate(&self, n: usize) -> Result<()> {
        let ok = self.train.start == 0
            && self.train.start <= self.train.end
            && self.train.end == self.validation.start
            && self.validation.start <= self.validation.end
            && self.validation.end == self.test.start
            && self.test.start <= self.test.end
            && self.test.end == n;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "split ranges {self:?} do not tile 0..{n}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserCorpus {
    pub user_id: String,
    pub train: Vec<Sentence>,
    pub validation: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

impl UserCorpus {
    pub fn from_ranges(user_id: impl Into<String>, sentences: Vec<Sentence>, ranges: &SplitRanges) -> Result<Self> {
        ranges.validate(sentences.len())?;
        let mut rest = sentences;
        let test = rest.split_off(ranges.test.start);
        let validation = rest.split_off(ranges.validation.start);
        Ok(UserCorpus {
            user_id: user_id.into(),
            train: rest,
            validation,
            test,
        })
    }

    pub fn split_by_order(user_id: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        let ranges = SplitRanges::by_order(sentences.len());
        Self::from_ranges(user_id, sentences, &ranges).expect("by_order ranges always tile")
    }
}

/// `idf(w) = ln(N / (1 + df(w)))` over a set of sentences, where `df` counts
/// sentences containing `w`.
pub fn inverse_document_frequency(sentences: &[Sentence], vocab_size: usize) -> Vec<f64> {
    let mut df = vec![0u64; vocab_size];
    let mut seen = vec![usize::MAX; vocab_size];
    for (si, s) in sentences.iter().enumerate() {
        for &t in &s.tokens {
            if seen[t] != si {
                seen[t] = si;
                df[t] += 1;
            }
        }
    }
    let n = sentences.len() as f64;
    df.into_iter().map(|d| (n / (1.0 + d as f64)).ln()).collect()
}

/// Removes the word with maximal `tf * idf` from the sentence.
///
/// Ties go to the earliest position. Every occurrence of the scooped word is
/// removed from the remainder.
pub fn tfidf_scoop(sentence: &Sentence, idf: &[f64]) -> Result<(usize, Sentence)> {
    if sentence.len() < 2 {
        return Err(Error::TooShort { len: sentence.len() });
    }
    let mut tf: HashMap<usize, usize> = HashMap::new();
    for &t in &sentence.tokens {
        *tf.entry(t).or_default() += 1;
    }
    let mut best = sentence.tokens[0];
    let mut best_score = f64::NEG_INFINITY;
    for &t in &sentence.tokens {
        let score = tf[&t] as f64 * idf[t];
        if score > best_score {
            best = t;
            best_score = score;
        }
    }
    let tokens: Vec<usize> = sentence.tokens.iter().copied().filter(|&t| t != best).collect();
    let removed = sentence.len() - tokens.len();
    Ok((
        best,
        Sentence {
            tokens,
            raw_length: sentence.raw_length.saturating_sub(removed),
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalDocument {
    pub id: String,
    pub user_id: String,
    pub sentences: Vec<Sentence>,
}

/// Greedy in-order chunking of a user's test sentences into documents of at
/// most `max_sentences` sentences.
pub fn split_documents(user_id: &str, sentences: &[Sentence], max_sentences: usize) -> Vec<EvalDocument> {
    let max = max_sentences.max(1);
    sentences
        .chunks(max)
        .enumerate()
        .map(|(k, chunk)| EvalDocument {
            id: format!("{user_id}#{k}"),
            user_id: user_id.to_owned(),
            sentences: chunk.to_vec(),
        })
        .collect()
}

//! Synthetic corpora with known per-user structure.
//!
//! The lexicon is split into topic word classes, positive and negative
//! sentiment words, and general filler words. Every sentence draws one
//! topic from its author's bias; its words come from that topic, from a
//! sentiment class, or from the filler class. Authors pair their favored
//! topics with positive sentiment, so each user's context distributions
//! differ from the pooled background.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use pvec_core::format::{format_anchors, write_atomic, AnchorSet};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub users: usize,
    pub vocab_size: usize,
    pub topics: usize,
    /// Topics each author favors.
    pub favored_topics: usize,
    /// Probability mass on the favored topics; the rest is spread evenly.
    pub favored_mass: f64,
    /// Explicit per-user topic biases, overriding the favored pattern.
    pub user_bias: Option<Vec<Vec<f64>>>,
    /// Words per sentiment class (positive and negative each).
    pub sentiment_words: usize,
    pub general_words: usize,
    /// `p(positive | favored topic)`; unfavored topics are neutral.
    pub sentiment_affinity: f64,
    pub topic_word_prob: f64,
    pub sentiment_word_prob: f64,
    pub sentences_per_user: usize,
    pub background_authors: usize,
    pub background_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 5,
            vocab_size: 300,
            topics: 10,
            favored_topics: 2,
            favored_mass: 0.8,
            user_bias: None,
            sentiment_words: 10,
            general_words: 40,
            sentiment_affinity: 0.9,
            topic_word_prob: 0.55,
            sentiment_word_prob: 0.2,
            sentences_per_user: 500,
            background_authors: 50,
            background_sentences: 5000,
            min_len: 6,
            max_len: 14,
            seed: 1,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Usage(format!("invalid synthetic spec: {}", msg.into()))
}

impl SyntheticSpec {
    pub fn topic_word_count(&self) -> usize {
        self.vocab_size
            .saturating_sub(2 * self.sentiment_words + self.general_words)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.topics == 0 {
            return Err(invalid("users and topics must be >= 1"));
        }
        if self.topic_word_count() < self.topics {
            return Err(invalid("vocab_size leaves fewer than one word per topic"));
        }
        if self.sentiment_words == 0 || self.general_words == 0 {
            return Err(invalid("sentiment_words and general_words must be >= 1"));
        }
        if self.favored_topics == 0 || self.favored_topics > self.topics {
            return Err(invalid("favored_topics must be in 1..=topics"));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.favored_mass) || !unit(self.sentiment_affinity) {
            return Err(invalid("favored_mass and sentiment_affinity must be in [0, 1]"));
        }
        if !unit(self.topic_word_prob)
            || !unit(self.sentiment_word_prob)
            || self.topic_word_prob + self.sentiment_word_prob > 1.0
        {
            return Err(invalid("word-class probabilities must be in [0, 1] and sum to at most 1"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(invalid("need 1 <= min_len <= max_len"));
        }
        if let Some(bias) = &self.user_bias {
            if bias.len() != self.users {
                return Err(invalid("user_bias needs one row per user"));
            }
            for row in bias {
                let s: f64 = row.iter().sum();
                if row.len() != self.topics || row.iter().any(|&p| p.is_nan() || p < 0.0) || (s - 1.0).abs() > 1e-9 {
                    return Err(invalid("each user_bias row must be a distribution over topics"));
                }
            }
        }
        Ok(())
    }

    pub fn user_id(&self, u: usize) -> String {
        format!("user{u:02}")
    }

    fn default_favored(&self, u: usize) -> Vec<usize> {
        (0..self.favored_topics)
            .map(|k| (u * self.favored_topics + k) % self.topics)
            .collect()
    }

    fn bias_from_favored(&self, favored: &[usize]) -> Vec<f64> {
        let rest = self.topics - favored.len();
        let other = if rest == 0 {
            0.0
        } else {
            (1.0 - self.favored_mass) / rest as f64
        };
        let fav = if rest == 0 {
            1.0 / favored.len() as f64
        } else {
            self.favored_mass / favored.len() as f64
        };
        (0..self.topics)
            .map(|z| if favored.contains(&z) { fav } else { other })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Author {
    pub id: String,
    pub bias: Vec<f64>,
    pub favored: Vec<usize>,
}

/// Sidecar describing how the corpora were generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub topic_words: Vec<Vec<String>>,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
    pub general_words: Vec<String>,
    pub users: Vec<Author>,
    /// Topic of every line of each user file.
    pub sentence_topics: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub background: Vec<String>,
    pub users: Vec<(String, Vec<String>)>,
    pub truth: GroundTruth,
}

struct Lexicon {
    topics: Vec<Vec<String>>,
    positive: Vec<String>,
    negative: Vec<String>,
    general: Vec<String>,
}

impl Lexicon {
    fn new(spec: &SyntheticSpec) -> Self {
        let total = spec.topic_word_count();
        let per = total / spec.topics;
        let extra = total % spec.topics;
        let topics = (0..spec.topics)
            .map(|z| {
                let n = per + usize::from(z < extra);
                (0..n).map(|i| format!("t{z}w{i}")).collect()
            })
            .collect();
        Lexicon {
            topics,
            positive: (0..spec.sentiment_words).map(|i| format!("pos{i}")).collect(),
            negative: (0..spec.sentiment_words).map(|i| format!("neg{i}")).collect(),
            general: (0..spec.general_words).map(|i| format!("gen{i}")).collect(),
        }
    }
}

/// Zipf-like weights `1 / (rank + 1)`.
fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / (r as f64 + 1.0))).expect("non-empty class")
}

struct SentenceSampler<'a> {
    spec: &'a SyntheticSpec,
    lex: &'a Lexicon,
    topic_zipf: Vec<WeightedIndex<f64>>,
    general_zipf: WeightedIndex<f64>,
}

impl SentenceSampler<'_> {
    fn sentence(&self, author: &Author, topics: &WeightedIndex<f64>, rng: &mut ChaCha8Rng) -> (usize, String) {
        let z = topics.sample(rng);
        let p_pos = if author.favored.contains(&z) {
            self.spec.sentiment_affinity
        } else {
            0.5
        };
        let sentiment = if rng.random::<f64>() < p_pos {
            &self.lex.positive
        } else {
            &self.lex.negative
        };
        let len = rng.random_range(self.spec.min_len..=self.spec.max_len);
        let words: Vec<&str> = (0..len)
            .map(|_| {
                let r: f64 = rng.random();
                if r < self.spec.topic_word_prob {
                    self.lex.topics[z][self.topic_zipf[z].sample(rng)].as_str()
                } else if r < self.spec.topic_word_prob + self.spec.sentiment_word_prob {
                    sentiment[rng.random_range(0..sentiment.len())].as_str()
                } else {
                    self.lex.general[self.general_zipf.sample(rng)].as_str()
                }
            })
            .collect();
        (z, words.join(" "))
    }
}

/// Generates the background pool and every user's corpus. Deterministic in
/// `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let lex = Lexicon::new(spec);
    let sampler = SentenceSampler {
        spec,
        lex: &lex,
        topic_zipf: lex.topics.iter().map(|t| zipf(t.len())).collect(),
        general_zipf: zipf(lex.general.len()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let users: Vec<Author> = (0..spec.users)
        .map(|u| {
            let (bias, favored) = match &spec.user_bias {
                Some(rows) => {
                    let bias = rows[u].clone();
                    let mut order: Vec<usize> = (0..spec.topics).collect();
                    order.sort_by(|&a, &b| bias[b].total_cmp(&bias[a]).then(a.cmp(&b)));
                    order.truncate(spec.favored_topics);
                    order.sort_unstable();
                    (bias, order)
                }
                None => {
                    let favored = spec.default_favored(u);
                    (spec.bias_from_favored(&favored), favored)
                }
            };
            Author {
                id: spec.user_id(u),
                bias,
                favored,
            }
        })
        .collect();

    let background_authors: Vec<Author> = (0..spec.background_authors.max(1))
        .map(|a| {
            let mut favored = index::sample(&mut rng, spec.topics, spec.favored_topics).into_vec();
            favored.sort_unstable();
            Author {
                id: format!("bg{a}"),
                bias: spec.bias_from_favored(&favored),
                favored,
            }
        })
        .collect();

    let mut background = Vec::with_capacity(spec.background_sentences);
    let bg_mix: Vec<WeightedIndex<f64>> = background_authors
        .iter()
        .map(|a| WeightedIndex::new(&a.bias).expect("valid bias"))
        .collect();
    for i in 0..spec.background_sentences {
        let a = i % background_authors.len();
        background.push(sampler.sentence(&background_authors[a], &bg_mix[a], &mut rng).1);
    }

    let mut user_lines = Vec::with_capacity(users.len());
    let mut sentence_topics = BTreeMap::new();
    for author in &users {
        let mix = WeightedIndex::new(&author.bias).map_err(|e| invalid(e.to_string()))?;
        let (topics, lines): (Vec<usize>, Vec<String>) = (0..spec.sentences_per_user)
            .map(|_| sampler.sentence(author, &mix, &mut rng))
            .unzip();
        sentence_topics.insert(author.id.clone(), topics);
        user_lines.push((author.id.clone(), lines));
    }

    Ok(SyntheticCorpus {
        background,
        users: user_lines,
        truth: GroundTruth {
            spec: spec.clone(),
            topic_words: lex.topics.clone(),
            positive_words: lex.positive.clone(),
            negative_words: lex.negative.clone(),
            general_words: lex.general.clone(),
            users,
            sentence_topics,
        },
    })
}

fn lines_to_text(lines: &[String]) -> String {
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

/// Writes `background.txt`, `users/<id>.txt`, `truth.json` and an anchor
/// file pairing the sentiment classes with each user's top favored words.
pub fn write_corpus(corpus: &SyntheticCorpus, out: &Path) -> Result<()> {
    let users_dir = out.join("users");
    std::fs::create_dir_all(&users_dir).map_err(|e| CliError::io(&users_dir, e))?;
    write_atomic(&out.join("background.txt"), lines_to_text(&corpus.background).as_bytes())?;
    for (id, lines) in &corpus.users {
        write_atomic(&users_dir.join(format!("{id}.txt")), lines_to_text(lines).as_bytes())?;
    }
    let truth = serde_json::to_string_pretty(&corpus.truth).map_err(|e| CliError::io(out, e))?;
    write_atomic(&out.join("truth.json"), truth.as_bytes())?;

    let t = &corpus.truth;
    let probe: Vec<String> = t
        .users
        .iter()
        .flat_map(|u| u.favored.iter().map(|&z| t.topic_words[z][0].clone()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let anchors = vec![
        AnchorSet {
            label: "positive".into(),
            words: t.positive_words.iter().take(3).cloned().collect(),
        },
        AnchorSet {
            label: "negative".into(),
            words: t.negative_words.iter().take(3).cloned().collect(),
        },
        AnchorSet {
            label: "probe".into(),
            words: probe,
        },
    ];
    write_atomic(&out.join("anchors.txt"), format_anchors(&anchors).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            sentences_per_user: 50,
            background_sentences: 100,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.background, b.background);
        assert_eq!(a.users, b.users);
        let c = generate(&SyntheticSpec { seed: 2, ..small() }).unwrap();
        assert_ne!(a.users, c.users);
    }

    #[test]
    fn lexicon_has_requested_size() {
        let spec = small();
        let lex = Lexicon::new(&spec);
        let n = lex.topics.iter().map(Vec::len).sum::<usize>() + lex.positive.len() * 2 + lex.general.len();
        assert_eq!(n, spec.vocab_size);
    }

    #[test]
    fn degenerate_bias_emits_one_topic() {
        let mut bias = vec![vec![0.0; 10]; 5];
        for row in &mut bias {
            row[0] = 1.0;
        }
        let spec = SyntheticSpec { user_bias: Some(bias), ..small() };
        let c = generate(&spec).unwrap();
        for (_, lines) in &c.users {
            for w in lines.iter().flat_map(|l| l.split(' ')) {
                assert!(!w.starts_with('t') || w.starts_with("t0w"), "{w}");
            }
        }
        assert!(c.truth.sentence_topics.values().flatten().all(|&z| z == 0));
    }

    #[test]
    fn favored_topics_are_disjoint_by_default() {
        let c = generate(&small()).unwrap();
        let fav: Vec<Vec<usize>> = c.truth.users.iter().map(|u| u.favored.clone()).collect();
        assert_eq!(fav, [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]]);
        for u in &c.truth.users {
            assert!((u.bias.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn topic_frequencies_match_bias() {
        // about 10k tokens per user at mean length 10
        let spec = SyntheticSpec { sentences_per_user: 1000, ..small() };
        let c = generate(&spec).unwrap();
        for u in &c.truth.users {
            let topics = &c.truth.sentence_topics[&u.id];
            let n = topics.len() as f64;
            for (z, &p) in u.bias.iter().enumerate() {
                let count = topics.iter().filter(|&&t| t == z).count() as f64;
                let sigma = (n * p * (1.0 - p)).sqrt();
                assert!((count - n * p).abs() <= 3.0 * sigma, "user {} topic {z}: {count} vs {}", u.id, n * p);
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SyntheticSpec { vocab_size: 50, ..small() }).is_err());
        assert!(generate(&SyntheticSpec { min_len: 0, ..small() }).is_err());
        assert!(generate(&SyntheticSpec { user_bias: Some(vec![vec![0.5; 10]; 5]), ..small() }).is_err());
        assert!(generate(&SyntheticSpec { favored_topics: 11, ..small() }).is_err());
    }

    #[test]
    fn written_files_are_identical_across_runs() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_corpus(&generate(&small()).unwrap(), d1.path()).unwrap();
        write_corpus(&generate(&small()).unwrap(), d2.path()).unwrap();
        for f in ["background.txt", "users/user03.txt", "truth.json", "anchors.txt"] {
            assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
        }
    }
}

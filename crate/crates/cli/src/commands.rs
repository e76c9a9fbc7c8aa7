//! The pipeline stages behind each subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use pvec_core::adapt::{self, export_personalized, train_adaptive_layer, LayerInit};
use pvec_core::corpus::{
    build_vocab, index_corpus, inverse_document_frequency, split_documents, tfidf_scoop, SegmentMode, UserCorpus,
};
use pvec_core::eval::{
    affinity_report, predict_documents, score_sentence_completion, score_user_prediction, AffinityRow,
    CompletionSummary, MappingScorer, PredictionResult, SimilarityIndex, UserPredictionSummary, UserPriorTable,
};
use pvec_core::format::{self, write_atomic};
use pvec_core::sgns::{pairs_in_corpus, train_background, Progress, TrainConfig, TrainStats};
use pvec_core::{Error as CoreError, PersonalizedEmbedding, Provenance};

use crate::data::{self, DirLock, BACKGROUND_FILE, MANIFEST_FILE, TRAIN_LOG_FILE, VOCAB_FILE};
use crate::error::{CliError, Result};
use crate::synth::{self, SyntheticSpec};

fn numeric(e: CoreError) -> CliError {
    match e {
        CoreError::NonFinite(m) => CliError::Numerical(m),
        other => CliError::Core(other),
    }
}

fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn log_text(lines: &[Progress]) -> String {
    lines.iter().map(|p| format!("{p}\n")).collect()
}

#[derive(Debug, Clone)]
pub struct BackgroundJob {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub dim: usize,
    pub min_count: usize,
    pub segment: SegmentMode,
    pub train: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct BackgroundOutput {
    pub vocab_size: usize,
    pub dim: usize,
    pub stats: TrainStats,
}

pub fn cmd_train_background(job: &BackgroundJob) -> Result<BackgroundOutput> {
    data::require_exists(&job.corpus, "corpus")?;
    let raw = data::read_corpus_lines(&job.corpus, job.segment)?;
    let _lock = DirLock::acquire(&job.out)?;
    let vocab = build_vocab(&raw, job.min_count)?;
    let corpus = index_corpus(&raw, &vocab);
    info!(
        "background corpus: {} sentences, {} words in lexicon",
        corpus.len(),
        vocab.len()
    );
    let mut log = Vec::new();
    let (model, stats) = train_background(&corpus, &vocab, job.dim, &job.train, &mut |p| {
        info!("{p}");
        log.push(p.clone());
    })
    .map_err(numeric)?;
    format::write_vocab(&job.out.join(VOCAB_FILE), &vocab)?;
    format::write_embedding_pair(&job.out.join(BACKGROUND_FILE), vocab.words(), &model.input, &model.output)?;
    write_atomic(&job.out.join(TRAIN_LOG_FILE), log_text(&log).as_bytes())?;
    Ok(BackgroundOutput {
        vocab_size: vocab.len(),
        dim: job.dim,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptMode {
    /// Fine-tune both background matrices.
    Retrain,
    /// Learn the user adaptive layer only.
    Layer,
    /// Train from scratch on the personal corpus.
    Scratch,
    /// Use the background model unchanged.
    Background,
}

impl AdaptMode {
    pub fn provenance(self) -> Provenance {
        match self {
            AdaptMode::Retrain => Provenance::Retrain,
            AdaptMode::Layer => Provenance::AdaptiveLayer,
            AdaptMode::Scratch => Provenance::NoBackground,
            AdaptMode::Background => Provenance::BackgroundOnly,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptJob {
    pub background: PathBuf,
    pub users_dir: PathBuf,
    pub out: PathBuf,
    pub mode: AdaptMode,
    pub init: LayerInit,
    pub segment: SegmentMode,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestUser {
    pub user_id: String,
    pub provenance: Provenance,
    pub trainable_parameters: usize,
    pub embedding: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    pub train_sentences: usize,
    pub train_pairs: u64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUser {
    pub user_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub background: PathBuf,
    pub mode: AdaptMode,
    pub vocab_size: usize,
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    pub users: Vec<ManifestUser>,
    pub skipped: Vec<SkippedUser>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = format::read_text(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::io(&path, e))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        write_atomic(&path, &to_json(self, &path)?)?;
        Ok(())
    }
}

/// FNV-1a, used to derive distinct per-user seeds.
fn user_seed(base: u64, user_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in user_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    base ^ h
}

/// Runs `f` over `items` with up to `workers` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every item processed"))
        .collect()
}

enum UserOutcome {
    Done(ManifestUser),
    Skipped(SkippedUser),
}

fn adapt_one(job: &AdaptJob, bg: &data::BackgroundModel, file: &data::UserFile) -> Result<UserOutcome> {
    let corpus = data::load_user(file, &bg.vocab, job.segment)?;
    let uid = corpus.user_id.clone();
    let config = TrainConfig {
        seed: user_seed(job.train.seed, &uid),
        workers: 1,
        ..job.train.clone()
    };
    let pairs = pairs_in_corpus(&corpus.train, config.window);
    if pairs == 0 && job.mode != AdaptMode::Background {
        return Ok(UserOutcome::Skipped(SkippedUser {
            user_id: uid,
            reason: "training split has no in-lexicon word pairs".into(),
        }));
    }
    let mut log = Vec::new();
    let mut sink = |p: &Progress| log.push(p.clone());
    let background = &bg.model;
    let (mapping, layer, stats) = match job.mode {
        AdaptMode::Retrain => {
            let (m, s) = adapt::retrain(&uid, background, &corpus.train, &bg.vocab, &config, &mut sink).map_err(numeric)?;
            (m, None, s)
        }
        AdaptMode::Scratch => {
            let (m, s) = adapt::no_background(&uid, &corpus.train, &bg.vocab, background.dim(), &config, &mut sink)
                .map_err(numeric)?;
            (m, None, s)
        }
        AdaptMode::Layer => {
            let (layer, s) = train_adaptive_layer(&uid, background, &corpus.train, &bg.vocab, &config, job.init, &mut sink)
                .map_err(numeric)?;
            (export_personalized(background, &layer)?, Some(layer), s)
        }
        AdaptMode::Background => (
            PersonalizedEmbedding::background_only(&uid, background),
            None,
            TrainStats::default(),
        ),
    };
    let embedding = format!("{uid}.vec");
    format::write_embedding_pair(&job.out.join(&embedding), bg.vocab.words(), &mapping.input, &mapping.output)?;
    let layer_file = match &layer {
        Some(l) => {
            let name = format!("{uid}.layer");
            format::write_layer(&job.out.join(&name), l)?;
            Some(name)
        }
        None => None,
    };
    if !log.is_empty() {
        write_atomic(&job.out.join(format!("{uid}.log")), log_text(&log).as_bytes())?;
    }
    info!("adapted {uid}: {} pairs/epoch, mean loss {:.4}", pairs, stats.mean_loss);
    Ok(UserOutcome::Done(ManifestUser {
        user_id: uid,
        provenance: mapping.provenance,
        trainable_parameters: mapping.trainable_parameters(),
        embedding,
        layer: layer_file,
        train_sentences: corpus.train.len(),
        train_pairs: stats.pairs,
        mean_loss: stats.mean_loss,
    }))
}

/// Produces one mapping per user file. Users are adapted in parallel; each
/// user's training runs single-threaded so results do not depend on the
/// worker count.
pub fn cmd_adapt(job: &AdaptJob) -> Result<Manifest> {
    data::require_exists(&job.background, "background model directory")?;
    data::require_exists(&job.users_dir, "users directory")?;
    let bg = data::load_background(&job.background)?;
    let users = data::list_users(&job.users_dir)?;
    if users.is_empty() {
        return Err(CliError::Usage(format!("no user files in {}", job.users_dir.display())));
    }
    let _lock = DirLock::acquire(&job.out)?;
    format::write_vocab(&job.out.join(VOCAB_FILE), &bg.vocab)?;

    let outcomes = parallel_map(&users, job.train.workers, |u| adapt_one(job, &bg, u));
    let mut manifest = Manifest {
        background: job.background.clone(),
        mode: job.mode,
        vocab_size: bg.vocab.len(),
        dim: bg.model.dim(),
        window: job.train.window,
        negatives: job.train.negatives,
        epochs: job.train.epochs,
        seed: job.train.seed,
        users: Vec::new(),
        skipped: Vec::new(),
    };
    for outcome in outcomes {
        match outcome? {
            UserOutcome::Done(u) => manifest.users.push(u),
            UserOutcome::Skipped(s) => {
                warn!("skipping {}: {}", s.user_id, s.reason);
                manifest.skipped.push(s);
            }
        }
    }
    manifest.write(&job.out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    UserPred,
    SentComp,
    Both,
}

impl Task {
    fn user_pred(self) -> bool {
        matches!(self, Task::UserPred | Task::Both)
    }

    fn sent_comp(self) -> bool {
        matches!(self, Task::SentComp | Task::Both)
    }
}

#[derive(Debug, Clone)]
pub struct EvalJob {
    pub models: PathBuf,
    pub users_dir: PathBuf,
    pub out: PathBuf,
    pub task: Task,
    pub cutoff: usize,
    pub max_doc_sentences: usize,
    pub priors: Option<PathBuf>,
    /// Falls back to the window recorded in the manifest.
    pub window: Option<usize>,
    pub workers: usize,
    pub segment: SegmentMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPredictionReport {
    pub task: String,
    pub window: usize,
    pub max_doc_sentences: usize,
    pub summary: UserPredictionSummary,
    pub items: Vec<PredictionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionItem {
    pub user_id: String,
    /// Position within the user's test split.
    pub test_index: usize,
    pub scooped: String,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionReport {
    pub task: String,
    pub summary: CompletionSummary,
    /// Test sentences with fewer than 2 in-lexicon tokens.
    pub excluded_short: usize,
    /// Remainders whose mean vector has zero norm.
    pub degenerate: usize,
    pub items: Vec<CompletionItem>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOutput {
    pub user_prediction: Option<UserPredictionReport>,
    pub sentence_completion: Option<CompletionReport>,
}

pub const USER_PRED_JSON: &str = "user_prediction.json";
pub const USER_PRED_TSV: &str = "user_prediction.tsv";
pub const SENT_COMP_JSON: &str = "sentence_completion.json";
pub const SENT_COMP_TSV: &str = "sentence_completion.tsv";

pub fn user_prediction_tsv(report: &UserPredictionReport) -> String {
    let mut s = String::from("document_id\ttrue_user\tpredicted\trank\treciprocal_rank\n");
    for r in &report.items {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.document_id,
            r.true_user,
            r.predicted,
            r.rank,
            1.0 / r.rank as f64
        ));
    }
    s
}

pub fn completion_tsv(report: &CompletionReport) -> String {
    let mut s = String::from("user_id\ttest_index\tscooped\trank\twithin_cutoff\n");
    for it in &report.items {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            it.user_id,
            it.test_index,
            it.scooped,
            it.rank,
            it.rank <= report.summary.cutoff
        ));
    }
    s
}

struct LoadedMappings {
    vocab: pvec_core::Vocabulary,
    manifest: Manifest,
    mappings: Vec<PersonalizedEmbedding>,
}

fn load_mappings(models: &Path) -> Result<LoadedMappings> {
    data::require_exists(models, "models directory")?;
    let manifest = Manifest::read(models)?;
    let vocab = format::read_vocab(&models.join(VOCAB_FILE))?;
    let mappings = manifest
        .users
        .iter()
        .map(|u| {
            let path = models.join(&u.embedding);
            data::require_exists(&path, &format!("mapping for {}", u.user_id))?;
            data::load_mapping(&path, &u.user_id, u.provenance, &vocab)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedMappings {
        vocab,
        manifest,
        mappings,
    })
}

fn completion_for_user(
    corpus: &UserCorpus,
    mapping: &PersonalizedEmbedding,
    vocab: &pvec_core::Vocabulary,
) -> Result<(Vec<CompletionItem>, usize, usize)> {
    let idf = inverse_document_frequency(&corpus.test, vocab.len());
    let index = SimilarityIndex::new(mapping);
    let mut items = Vec::new();
    let (mut short, mut degenerate) = (0, 0);
    for (i, s) in corpus.test.iter().enumerate() {
        let (scooped, rest) = match tfidf_scoop(s, &idf) {
            Ok(x) => x,
            Err(CoreError::TooShort { .. }) => {
                short += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match index.rank(scooped, &rest) {
            Ok(rank) => items.push(CompletionItem {
                user_id: corpus.user_id.clone(),
                test_index: i,
                scooped: vocab.word(scooped).to_owned(),
                rank,
            }),
            Err(CoreError::DegenerateQuery) => degenerate += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok((items, short, degenerate))
}

/// Runs the selected evaluation tasks over every user with a mapping and
/// writes JSON and TSV reports.
pub fn cmd_eval(job: &EvalJob) -> Result<EvalOutput> {
    data::require_exists(&job.users_dir, "users directory")?;
    let loaded = load_mappings(&job.models)?;
    let window = job.window.unwrap_or(loaded.manifest.window);
    let files = data::list_users(&job.users_dir)?;
    let mut corpora = Vec::new();
    for m in &loaded.mappings {
        let file = files
            .iter()
            .find(|f| f.user_id == m.user_id)
            .ok_or_else(|| CliError::Usage(format!("no corpus file for mapped user {}", m.user_id)))?;
        corpora.push(data::load_user(file, &loaded.vocab, job.segment)?);
    }
    for f in &files {
        if !loaded.mappings.iter().any(|m| m.user_id == f.user_id) {
            warn!("user {} has no mapping and is not evaluated", f.user_id);
        }
    }
    let _lock = DirLock::acquire(&job.out)?;
    let mut output = EvalOutput::default();

    if job.task.user_pred() {
        let user_ids: Vec<&str> = loaded.mappings.iter().map(|m| m.user_id.as_str()).collect();
        let priors = match &job.priors {
            Some(p) => {
                data::require_exists(p, "priors file")?;
                UserPriorTable::from_weights(format::parse_priors(&format::read_text(p)?, p)?)?
            }
            None => UserPriorTable::uniform(&user_ids)?,
        };
        let documents: Vec<_> = corpora
            .iter()
            .flat_map(|c| split_documents(&c.user_id, &c.test, job.max_doc_sentences))
            .collect();
        let scorers: Vec<MappingScorer> = loaded.mappings.iter().map(MappingScorer::new).collect();
        let items = predict_documents(&documents, &scorers, &priors, window, job.workers).map_err(numeric)?;
        let report = UserPredictionReport {
            task: "user-pred".into(),
            window,
            max_doc_sentences: job.max_doc_sentences,
            summary: score_user_prediction(&items)?,
            items,
        };
        let path = job.out.join(USER_PRED_JSON);
        write_atomic(&path, &to_json(&report, &path)?)?;
        write_atomic(&job.out.join(USER_PRED_TSV), user_prediction_tsv(&report).as_bytes())?;
        info!(
            "user prediction: {} documents, accuracy {:.4}, MRR {:.4}",
            report.summary.documents, report.summary.accuracy, report.summary.mrr
        );
        output.user_prediction = Some(report);
    }

    if job.task.sent_comp() {
        let pairs: Vec<(&UserCorpus, &PersonalizedEmbedding)> = corpora.iter().zip(&loaded.mappings).collect();
        let per_user = parallel_map(&pairs, job.workers, |(c, m)| completion_for_user(c, m, &loaded.vocab));
        let mut items = Vec::new();
        let (mut short, mut degenerate) = (0, 0);
        for r in per_user {
            let (it, s, d) = r?;
            items.extend(it);
            short += s;
            degenerate += d;
        }
        let ranks: Vec<usize> = items.iter().map(|i| i.rank).collect();
        let report = CompletionReport {
            task: "sent-comp".into(),
            summary: score_sentence_completion(&ranks, job.cutoff)?,
            excluded_short: short,
            degenerate,
            items,
        };
        let path = job.out.join(SENT_COMP_JSON);
        write_atomic(&path, &to_json(&report, &path)?)?;
        write_atomic(&job.out.join(SENT_COMP_TSV), completion_tsv(&report).as_bytes())?;
        info!(
            "sentence completion: {} sentences, {:.2}% within top {}, MRR within {:.4}",
            report.summary.sentences, report.summary.top_pct, job.cutoff, report.summary.mrr_within
        );
        output.sentence_completion = Some(report);
    }
    Ok(output)
}

#[derive(Debug, Clone)]
pub struct ProbeJob {
    pub models: PathBuf,
    pub anchors: PathBuf,
    pub out: PathBuf,
    /// Words to probe; defaults to the anchor file's `probe` set, else the
    /// whole lexicon.
    pub words: Option<Vec<String>>,
    /// Also report the unadapted background mapping.
    pub include_background: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutput {
    /// Rows per mapping label, in report order.
    pub tables: BTreeMap<String, Vec<AffinityRow>>,
}

pub const AFFINITY_FILE: &str = "affinity.txt";

fn anchor_words(sets: &[format::AnchorSet], label: &str) -> Option<Vec<String>> {
    sets.iter().find(|s| s.label == label).map(|s| s.words.clone())
}

/// Ranks probe words by their positive-minus-negative anchor affinity under
/// every mapping and writes a text report.
pub fn cmd_probe(job: &ProbeJob) -> Result<ProbeOutput> {
    data::require_exists(&job.anchors, "anchor file")?;
    let loaded = load_mappings(&job.models)?;
    let sets = format::parse_anchors(&format::read_text(&job.anchors)?, &job.anchors)?;
    let positive = anchor_words(&sets, "positive")
        .ok_or_else(|| CliError::Usage("anchor file needs a \"positive:\" line".into()))?;
    let negative = anchor_words(&sets, "negative")
        .ok_or_else(|| CliError::Usage("anchor file needs a \"negative:\" line".into()))?;
    let words = job
        .words
        .clone()
        .or_else(|| anchor_words(&sets, "probe"))
        .unwrap_or_else(|| loaded.vocab.words().to_vec());

    let mut labelled: Vec<(String, PersonalizedEmbedding)> =
        loaded.mappings.into_iter().map(|m| (m.user_id.clone(), m)).collect();
    if job.include_background {
        let bg = data::load_background(&loaded.manifest.background)?;
        labelled.push((
            "background".into(),
            PersonalizedEmbedding::background_only("background", &bg.model),
        ));
    }

    let mut tables = BTreeMap::new();
    let mut text = String::new();
    for (label, mapping) in &labelled {
        let rows = affinity_report(mapping, &loaded.vocab, &words, &positive, &negative)?;
        text.push_str(&format!("# mapping={label} provenance={}\n", mapping.provenance));
        text.push_str("word\tpositive\tnegative\tmargin\n");
        for r in &rows {
            text.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\n",
                r.word,
                r.positive,
                r.negative,
                r.margin()
            ));
        }
        text.push('\n');
        tables.insert(label.clone(), rows);
    }
    data::ensure_dir(&job.out)?;
    write_atomic(&job.out.join(AFFINITY_FILE), text.as_bytes())?;
    Ok(ProbeOutput { tables })
}

#[derive(Debug, Clone)]
pub struct SynthJob {
    pub out: PathBuf,
    pub spec: SyntheticSpec,
}

pub fn cmd_synth(job: &SynthJob) -> Result<synth::GroundTruth> {
    let corpus = synth::generate(&job.spec)?;
    let _lock = DirLock::acquire(&job.out)?;
    synth::write_corpus(&corpus, &job.out)?;
    Ok(corpus.truth)
}

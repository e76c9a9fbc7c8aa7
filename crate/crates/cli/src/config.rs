//! Command-line flags and TOML experiment files. Flags take precedence over
//! the config file, which takes precedence over built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use pvec_core::corpus::SegmentMode;
use pvec_core::eval::DEFAULT_CUTOFF;
use pvec_core::corpus::MAX_DOC_SENTENCES;
use pvec_core::{LayerInit, TrainConfig};

use crate::commands::{AdaptJob, AdaptMode, BackgroundJob, EvalJob, ProbeJob, SynthJob, Task};
use crate::error::{CliError, Result};
use crate::synth::SyntheticSpec;

pub const DEFAULT_DIM: usize = 100;
pub const DEFAULT_MIN_COUNT: usize = 1;
pub const DEFAULT_BACKGROUND_EPOCHS: usize = 5;
pub const DEFAULT_ADAPT_EPOCHS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "pvec", version, about = "Personalized word vectors from a background model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train background word vectors on a large corpus.
    TrainBackground(TrainBackgroundArgs),
    /// Produce one personalized mapping per user corpus.
    Adapt(AdaptArgs),
    /// Run user prediction and/or sentence completion.
    Eval(EvalArgs),
    /// Generate a synthetic background corpus and user corpora.
    Synth(SynthArgs),
    /// Report word affinities to positive and negative anchor words.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Retrain,
    Layer,
    Scratch,
    #[value(alias = "none")]
    #[serde(alias = "none")]
    Background,
}

impl From<ModeArg> for AdaptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Retrain => AdaptMode::Retrain,
            ModeArg::Layer => AdaptMode::Layer,
            ModeArg::Scratch => AdaptMode::Scratch,
            ModeArg::Background => AdaptMode::Background,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Random,
    Identity,
}

impl From<InitArg> for LayerInit {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Random => LayerInit::Random,
            InitArg::Identity => LayerInit::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskArg {
    UserPred,
    SentComp,
    Both,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::UserPred => Task::UserPred,
            TaskArg::SentComp => Task::SentComp,
            TaskArg::Both => Task::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentArg {
    /// Tokens are separated by whitespace.
    Presegmented,
    /// Runs of CJK characters are split into single characters.
    Fallback,
}

impl From<SegmentArg> for SegmentMode {
    fn from(s: SegmentArg) -> Self {
        match s {
            SegmentArg::Presegmented => SegmentMode::Presegmented,
            SegmentArg::Fallback => SegmentMode::Fallback,
        }
    }
}

/// Training hyperparameters shared by `train-background` and `adapt`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Frequent-word subsampling threshold.
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long, value_enum)]
    pub segment: Option<SegmentArg>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainBackgroundArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AdaptArgs {
    /// Directory written by `train-background`.
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long)]
    pub users_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory written by `adapt`.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub users_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub max_doc_sentences: Option<usize>,
    #[arg(long)]
    pub priors: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub segment: Option<SegmentArg>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub sentences_per_user: Option<usize>,
    #[arg(long)]
    pub background_sentences: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated words to probe.
    #[arg(long, value_delimiter = ',')]
    pub words: Option<Vec<String>>,
    /// Also report the unadapted background model.
    #[arg(long)]
    pub include_background: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` TOML file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub background: Option<PathBuf>,
    pub users_dir: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dim: Option<usize>,
    pub min_count: Option<usize>,
    pub window: Option<usize>,
    pub negatives: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f32>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub subsample: Option<f64>,
    pub segment: Option<SegmentArg>,
    pub mode: Option<ModeArg>,
    pub init: Option<InitArg>,
    pub task: Option<TaskArg>,
    pub cutoff: Option<usize>,
    pub max_doc_sentences: Option<usize>,
    pub priors: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub synth: Option<SyntheticSpec>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text, p)
            }
        }
    }
}

fn required(flag: Option<PathBuf>, file: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(file)
        .ok_or_else(|| CliError::Usage(format!("--{name} is required")))
}

fn train_config(args: &TrainArgs, file: &ExperimentConfig, default_epochs: usize) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let config = TrainConfig {
        window: args.window.or(file.window).unwrap_or(d.window),
        negatives: args.negatives.or(file.negatives).unwrap_or(d.negatives),
        epochs: args.epochs.or(file.epochs).unwrap_or(default_epochs),
        learning_rate: args.lr.or(file.lr).unwrap_or(d.learning_rate),
        lr_schedule: d.lr_schedule,
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        workers: args.workers.or(file.workers).unwrap_or(d.workers),
        subsample: args.subsample.or(file.subsample).or(d.subsample),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn segment(flag: Option<SegmentArg>, file: &ExperimentConfig) -> SegmentMode {
    flag.or(file.segment).map(Into::into).unwrap_or_default()
}

fn positive(value: usize, name: &str) -> Result<usize> {
    if value == 0 {
        Err(CliError::Usage(format!("--{name} must be positive")))
    } else {
        Ok(value)
    }
}

impl TrainBackgroundArgs {
    pub fn resolve(self) -> Result<BackgroundJob> {
        let file = ExperimentConfig::load(self.train.config.as_deref())?;
        Ok(BackgroundJob {
            train: train_config(&self.train, &file, DEFAULT_BACKGROUND_EPOCHS)?,
            corpus: required(self.corpus, file.corpus.clone(), "corpus")?,
            out: required(self.out, file.out.clone(), "out")?,
            dim: positive(self.dim.or(file.dim).unwrap_or(DEFAULT_DIM), "dim")?,
            min_count: self.min_count.or(file.min_count).unwrap_or(DEFAULT_MIN_COUNT),
            segment: segment(self.train.segment, &file),
        })
    }
}

impl AdaptArgs {
    pub fn resolve(self) -> Result<AdaptJob> {
        let file = ExperimentConfig::load(self.train.config.as_deref())?;
        Ok(AdaptJob {
            train: train_config(&self.train, &file, DEFAULT_ADAPT_EPOCHS)?,
            background: required(self.background, file.background.clone(), "background")?,
            users_dir: required(self.users_dir, file.users_dir.clone(), "users-dir")?,
            out: required(self.out, file.out.clone(), "out")?,
            mode: self.mode.or(file.mode).unwrap_or(ModeArg::Layer).into(),
            init: self.init.or(file.init).unwrap_or(InitArg::Random).into(),
            segment: segment(self.train.segment, &file),
        })
    }
}

impl EvalArgs {
    pub fn resolve(self) -> Result<EvalJob> {
        let file = ExperimentConfig::load(self.config.as_deref())?;
        let window = self.window.or(file.window);
        if window == Some(0) {
            return Err(CliError::Usage("--window must be positive".into()));
        }
        Ok(EvalJob {
            models: required(self.models, file.models.clone(), "models")?,
            users_dir: required(self.users_dir, file.users_dir.clone(), "users-dir")?,
            out: required(self.out, file.out.clone(), "out")?,
            task: self.task.or(file.task).unwrap_or(TaskArg::Both).into(),
            cutoff: positive(self.cutoff.or(file.cutoff).unwrap_or(DEFAULT_CUTOFF), "cutoff")?,
            max_doc_sentences: positive(
                self.max_doc_sentences
                    .or(file.max_doc_sentences)
                    .unwrap_or(MAX_DOC_SENTENCES),
                "max-doc-sentences",
            )?,
            priors: self.priors.or(file.priors.clone()),
            window,
            workers: positive(self.workers.or(file.workers).unwrap_or(1), "workers")?,
            segment: segment(self.segment, &file),
        })
    }
}

impl SynthArgs {
    pub fn resolve(self) -> Result<SynthJob> {
        let file = ExperimentConfig::load(self.config.as_deref())?;
        let mut spec = file.synth.clone().unwrap_or_default();
        if let Some(v) = self.users {
            spec.users = v;
        }
        if let Some(v) = self.vocab_size {
            spec.vocab_size = v;
        }
        if let Some(v) = self.topics {
            spec.topics = v;
        }
        if let Some(v) = self.sentences_per_user {
            spec.sentences_per_user = v;
        }
        if let Some(v) = self.background_sentences {
            spec.background_sentences = v;
        }
        if let Some(v) = self.seed.or(file.seed) {
            spec.seed = v;
        }
        spec.validate()?;
        Ok(SynthJob {
            out: required(self.out, file.out.clone(), "out")?,
            spec,
        })
    }
}

impl ProbeArgs {
    pub fn resolve(self) -> Result<ProbeJob> {
        let file = ExperimentConfig::load(self.config.as_deref())?;
        Ok(ProbeJob {
            models: required(self.models, file.models.clone(), "models")?,
            anchors: required(self.anchors, file.anchors.clone(), "anchors")?,
            out: required(self.out, file.out.clone(), "out")?,
            words: self.words,
            include_background: self.include_background,
        })
    }
}

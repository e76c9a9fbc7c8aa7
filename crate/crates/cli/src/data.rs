//! Reading corpus files, user directories and saved models.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use pvec_core::corpus::{tokenize, SegmentMode, Sentence, SplitRanges, UserCorpus, Vocabulary};
use pvec_core::format;
use pvec_core::{EmbeddingModel, PersonalizedEmbedding, Provenance};

use crate::error::{CliError, Result};

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const BACKGROUND_FILE: &str = "background.vec";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLIT_SUFFIX: &str = "split";
const LOCK_FILE: &str = ".pvec.lock";

/// Every line of a corpus file, tokenized. Blank lines stay as empty
/// sentences so line ranges keep their meaning.
pub fn read_corpus_lines(path: &Path, mode: SegmentMode) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| tokenize(l, mode).into_iter().map(str::to_owned).collect())
        .collect())
}

/// A user file found under the users directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserFile {
    pub user_id: String,
    pub path: PathBuf,
    pub split: Option<PathBuf>,
}

/// Lists user corpus files sorted by user id. The user id is the file stem;
/// `<stem>.split` files are split manifests, not corpora.
pub fn list_users(dir: &Path) -> Result<Vec<UserFile>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut users = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || !path.is_file() {
            continue;
        }
        if path.extension().is_some_and(|e| e == SPLIT_SUFFIX) {
            continue;
        }
        let user_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(name);
        let split = dir.join(format!("{user_id}.{SPLIT_SUFFIX}"));
        users.push(UserFile {
            user_id,
            path,
            split: split.is_file().then_some(split),
        });
    }
    users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    for pair in users.windows(2) {
        if pair[0].user_id == pair[1].user_id {
            return Err(CliError::Usage(format!(
                "two files map to user id {:?} in {}",
                pair[0].user_id,
                dir.display()
            )));
        }
    }
    Ok(users)
}

pub fn load_user(file: &UserFile, vocab: &Vocabulary, mode: SegmentMode) -> Result<UserCorpus> {
    let raw = read_corpus_lines(&file.path, mode)?;
    let sentences: Vec<Sentence> = raw.iter().map(|s| vocab.index_sentence(s)).collect();
    let ranges = match &file.split {
        Some(p) => format::parse_split(&format::read_text(p)?, p)?,
        None => SplitRanges::by_order(sentences.len()),
    };
    Ok(UserCorpus::from_ranges(&file.user_id, sentences, &ranges)?)
}

pub struct BackgroundModel {
    pub vocab: Vocabulary,
    pub model: EmbeddingModel,
}

pub fn load_background(dir: &Path) -> Result<BackgroundModel> {
    let vocab = format::read_vocab(&dir.join(VOCAB_FILE))?;
    let path = dir.join(BACKGROUND_FILE);
    let (words, input, output) = format::read_embedding_pair(&path)?;
    if words != vocab.words() {
        return Err(CliError::io(&path, "embedding words do not match the vocabulary"));
    }
    Ok(BackgroundModel {
        vocab,
        model: EmbeddingModel::new(input, output)?,
    })
}

pub fn load_mapping(path: &Path, user_id: &str, provenance: Provenance, vocab: &Vocabulary) -> Result<PersonalizedEmbedding> {
    let (words, input, output) = format::read_embedding_pair(path)?;
    if words != vocab.words() {
        return Err(CliError::io(path, "embedding words do not match the vocabulary"));
    }
    Ok(PersonalizedEmbedding::new(user_id, input, output, provenance)?)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::io(path, format!("{what} does not exist")))
    }
}

/// Exclusive claim on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        ensure_dir(dir)?;
        let path = dir.join(LOCK_FILE);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    CliError::io(&path, "output directory is locked by another run")
                } else {
                    CliError::io(&path, e)
                }
            })?;
        Ok(DirLock { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

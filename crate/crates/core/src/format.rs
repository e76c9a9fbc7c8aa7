//! Text file formats and atomic file writes.
//!
//! * embeddings: `V h` header, then `word f_1 .. f_h` per line; output
//!   vectors go to a companion file with an `.out` suffix
//! * vocabulary: `word<TAB>count` per line in index order
//! * adaptive layer: `# user_id=<id> seed=<n>`, then `h h`, then `h` rows
//! * split manifest: `train|validation|test <start> <end>` half-open line ranges
//! * anchors: `label: word word ...`
//! * priors: `user_id weight`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::adapt::AdaptiveLayer;
use crate::corpus::{SplitRanges, Vocabulary};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Path of the output-vector companion file.
pub fn output_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".out");
    PathBuf::from(s)
}

pub fn format_embeddings(words: &[String], vectors: &Matrix) -> String {
    let mut out = String::with_capacity(vectors.rows() * (vectors.cols() * 12 + 16));
    let _ = writeln!(out, "{} {}", vectors.rows(), vectors.cols());
    for (i, w) in words.iter().enumerate() {
        out.push_str(w);
        for x in vectors.row(i) {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<(Vec<String>, Matrix)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let mut dims = header.split_whitespace().map(str::parse::<usize>);
    let (v, h) = match (dims.next(), dims.next(), dims.next()) {
        (Some(Ok(v)), Some(Ok(h)), None) => (v, h),
        _ => return Err(Error::parse(path, 1, format!("bad header {header:?}, expected \"V h\""))),
    };
    let mut words = Vec::with_capacity(v);
    let mut data = Vec::with_capacity(v * h);
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        if word.is_empty() {
            return Err(Error::parse(path, i + 1, "empty word"));
        }
        let before = data.len();
        for f in fields {
            let x: f32 = f
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad float {f:?}")))?;
            data.push(x);
        }
        if data.len() - before != h {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {h} components, found {}", data.len() - before),
            ));
        }
        words.push(word.to_owned());
    }
    if words.len() != v {
        return Err(Error::parse(path, 1, format!("header says {v} words, found {}", words.len())));
    }
    Ok((words, Matrix::from_vec(v, h, data)))
}

pub fn write_embeddings(path: &Path, words: &[String], vectors: &Matrix) -> Result<()> {
    write_atomic(path, format_embeddings(words, vectors).as_bytes())
}

pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, Matrix)> {
    parse_embeddings(&read_text(path)?, path)
}

/// Writes input vectors to `path` and output vectors to `path.out`.
pub fn write_embedding_pair(path: &Path, words: &[String], input: &Matrix, output: &Matrix) -> Result<()> {
    write_embeddings(path, words, input)?;
    write_embeddings(&output_path(path), words, output)
}

/// Reads both files and checks that their word lists agree.
pub fn read_embedding_pair(path: &Path) -> Result<(Vec<String>, Matrix, Matrix)> {
    let (words, input) = read_embeddings(path)?;
    let out_path = output_path(path);
    let (out_words, output) = read_embeddings(&out_path)?;
    if out_words != words || output.shape() != input.shape() {
        return Err(Error::parse(out_path, 1, "output vectors do not match the input file"));
    }
    Ok((words, input, output))
}

pub fn format_vocab(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (w, c) in vocab.words().iter().zip(vocab.counts()) {
        let _ = writeln!(out, "{w}\t{c}");
    }
    out
}

pub fn parse_vocab(text: &str, path: &Path) -> Result<Vocabulary> {
    let mut words = Vec::new();
    let mut counts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (w, c) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected word<TAB>count"))?;
        let c: u64 = c.parse().map_err(|_| Error::parse(path, i + 1, format!("bad count {c:?}")))?;
        words.push(w.to_owned());
        counts.push(c);
    }
    Vocabulary::from_counts(words, counts).map_err(|e| match e {
        Error::EmptyVocabulary { .. } => Error::parse(path, 1, "empty vocabulary"),
        other => other,
    })
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write_atomic(path, format_vocab(vocab).as_bytes())
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    parse_vocab(&read_text(path)?, path)
}

pub fn format_layer(layer: &AdaptiveLayer) -> String {
    let h = layer.dim();
    let mut out = format!("# user_id={} seed={}\n{h} {h}\n", layer.user_id, layer.seed);
    for r in 0..h {
        let row: Vec<String> = layer.matrix.row(r).iter().map(|x| x.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_layer(text: &str, path: &Path) -> Result<AdaptiveLayer> {
    let mut user_id = String::new();
    let mut seed = 0u64;
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(comment) = line.strip_prefix('#') {
            for kv in comment.split_whitespace() {
                match kv.split_once('=') {
                    Some(("user_id", v)) => user_id = v.to_owned(),
                    Some(("seed", v)) => {
                        seed = v.parse().map_err(|_| Error::parse(path, i + 1, format!("bad seed {v:?}")))?
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match dim {
            None => {
                let d: Vec<&str> = line.split_whitespace().collect();
                match d.as_slice() {
                    [a, b] if a == b => {
                        dim = Some(a.parse().map_err(|_| Error::parse(path, i + 1, "bad dimension"))?);
                    }
                    _ => return Err(Error::parse(path, i + 1, "expected \"h h\" header")),
                }
            }
            Some(h) => {
                let before = data.len();
                for f in line.split_whitespace() {
                    data.push(
                        f.parse::<f32>()
                            .map_err(|_| Error::parse(path, i + 1, format!("bad float {f:?}")))?,
                    );
                }
                if data.len() - before != h {
                    return Err(Error::parse(path, i + 1, format!("expected {h} entries per row")));
                }
            }
        }
    }
    let h = dim.ok_or_else(|| Error::parse(path, 1, "missing \"h h\" header"))?;
    if data.len() != h * h {
        return Err(Error::parse(path, 1, format!("expected {h} rows, found {}", data.len() / h.max(1))));
    }
    Ok(AdaptiveLayer {
        user_id,
        seed,
        matrix: Matrix::from_vec(h, h, data),
    })
}

pub fn write_layer(path: &Path, layer: &AdaptiveLayer) -> Result<()> {
    write_atomic(path, format_layer(layer).as_bytes())
}

pub fn read_layer(path: &Path) -> Result<AdaptiveLayer> {
    parse_layer(&read_text(path)?, path)
}

pub fn format_split(ranges: &SplitRanges) -> String {
    format!(
        "train {} {}\nvalidation {} {}\ntest {} {}\n",
        ranges.train.start,
        ranges.train.end,
        ranges.validation.start,
        ranges.validation.end,
        ranges.test.start,
        ranges.test.end
    )
}

pub fn parse_split(text: &str, path: &Path) -> Result<SplitRanges> {
    let mut found: BTreeMap<&str, std::ops::Range<usize>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => continue,
            [name @ ("train" | "validation" | "test"), a, b] => {
                let a = a.parse().map_err(|_| Error::parse(path, i + 1, "bad range start"))?;
                let b = b.parse().map_err(|_| Error::parse(path, i + 1, "bad range end"))?;
                found.insert(name, a..b);
            }
            _ => return Err(Error::parse(path, i + 1, "expected \"<split> <start> <end>\"")),
        }
    }
    let mut take = |k: &str| {
        found
            .remove(k)
            .ok_or_else(|| Error::parse(path, 1, format!("missing {k} range")))
    };
    Ok(SplitRanges {
        train: take("train")?,
        validation: take("validation")?,
        test: take("test")?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSet {
    pub label: String,
    pub words: Vec<String>,
}

pub fn format_anchors(sets: &[AnchorSet]) -> String {
    sets.iter()
        .map(|s| format!("{}: {}\n", s.label, s.words.join(" ")))
        .collect()
}

pub fn parse_anchors(text: &str, path: &Path) -> Result<Vec<AnchorSet>> {
    let mut sets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, words) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(path, i + 1, "expected \"label: word word ...\""))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::parse(path, i + 1, "empty label"));
        }
        sets.push(AnchorSet {
            label: label.to_owned(),
            words: words.split_whitespace().map(str::to_owned).collect(),
        });
    }
    Ok(sets)
}

pub fn format_priors(priors: &BTreeMap<String, f64>) -> String {
    priors.iter().map(|(u, p)| format!("{u} {p}\n")).collect()
}

/// Raw prior weights; normalization happens in `UserPriorTable::from_weights`.
pub fn parse_priors(text: &str, path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => continue,
            [u, w] => {
                let w: f64 = w.parse().map_err(|_| Error::parse(path, i + 1, format!("bad weight {w:?}")))?;
                out.insert((*u).to_owned(), w);
            }
            _ => return Err(Error::parse(path, i + 1, "expected \"user_id weight\"")),
        }
    }
    Ok(out)
}

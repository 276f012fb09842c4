//! Sample and dataset types, on-disk formats and the seeded train/test split.
//!
//! Text samples live in JSON Lines files, one object per line. Logit samples
//! use a small little-endian binary container (`MIAL`), one sample per file;
//! a logit dataset is a directory of such files read in file-name order.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

/// Magic bytes opening every logit container.
pub const LOGIT_MAGIC: &[u8; 4] = b"MIAL";
/// The only container version this crate reads or writes.
pub const LOGIT_FORMAT_VERSION: u32 = 1;
/// File extension used for logit containers inside a dataset directory.
pub const LOGIT_EXTENSION: &str = "mial";

const TEXT_KEYS: [&str; 6] = [
    "id",
    "label",
    "original_text",
    "prefix",
    "ground_truth_suffix",
    "suffix_generations",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: missing key `{key}`")]
    MissingKey { line: usize, key: &'static str },
    #[error("line {line}: unexpected key `{key}`")]
    UnexpectedKey { line: usize, key: String },
    #[error("line {line}: key `{key}` must be {expected}")]
    WrongType {
        line: usize,
        key: &'static str,
        expected: &'static str,
    },
    #[error("line {line}: `suffix_generations` is empty")]
    EmptyGenerations { line: usize },
    #[error("line {line}: `{key}` has no whitespace tokens")]
    EmptyField { line: usize, key: &'static str },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("bad magic bytes {0:?}, expected \"MIAL\"")]
    BadMagic([u8; 4]),
    #[error("unsupported logit container version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated logit container: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after logit container")]
    TrailingBytes(usize),
    #[error("invalid logit shape L={rows}, V={vocab} (need L >= 1, V >= 2)")]
    BadShape { rows: usize, vocab: usize },
    #[error("logit matrix has {got} values, expected {expected}")]
    LogitCount { got: usize, expected: usize },
    #[error("true_tokens has length {got}, expected L={expected}")]
    TokenCount { got: usize, expected: usize },
    #[error("true token {token} at position {position} is outside the vocabulary (V={vocab})")]
    TokenOutOfRange {
        position: usize,
        token: u32,
        vocab: usize,
    },
    #[error("non-finite logit at position {position}, index {index}")]
    NonFiniteLogit { position: usize, index: usize },
    #[error("invalid label byte {0}, expected 0 or 1")]
    BadLabel(u8),
    #[error("sample id is not valid UTF-8")]
    InvalidUtf8,
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("no `.{LOGIT_EXTENSION}` files in {0}")]
    EmptyLogitDir(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Membership flag of a sample. Serialized as the integer 1 (member) or 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Membership {
    Member,
    NonMember,
}

impl Membership {
    pub fn is_member(self) -> bool {
        matches!(self, Membership::Member)
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            1 => Some(Membership::Member),
            0 => Some(Membership::NonMember),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Membership::Member => 1,
            Membership::NonMember => 0,
        }
    }
}

impl Serialize for Membership {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.bit())
    }
}

impl<'de> Deserialize<'de> for Membership {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let bit = u8::deserialize(deserializer)?;
        Membership::from_bit(bit)
            .ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {bit}")))
    }
}

/// One black-box instance: a target text split into prefix and suffix, plus
/// the continuations the target model sampled from the prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    pub label: Membership,
    pub original_text: String,
    pub prefix: String,
    pub ground_truth_suffix: String,
    pub suffix_generations: Vec<String>,
}

impl TextSample {
    pub fn suffix_tokens(&self) -> Vec<&str> {
        tokenize(&self.ground_truth_suffix)
    }

    pub fn generation_tokens(&self) -> Vec<Vec<&str>> {
        self.suffix_generations.iter().map(|g| tokenize(g)).collect()
    }
}

/// Whitespace tokenization used by every text signal.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Splits `text` into a prefix holding `floor(0.7 * n)` whitespace tokens and
/// a suffix holding the rest. Returns `None` if either side would be empty.
///
/// Only meant for synthesizing datasets; loaded samples keep their own split.
pub fn split_prefix_suffix(text: &str) -> Option<(String, String)> {
    let tokens = tokenize(text);
    let cut = tokens.len() * 7 / 10;
    if cut == 0 || cut == tokens.len() {
        return None;
    }
    Some((tokens[..cut].join(" "), tokens[cut..].join(" ")))
}

/// One gray-box instance: an `L x V` logit matrix (row-major `f32`, kept at
/// the precision it was stored with) and the true next token per position.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSample {
    id: String,
    rows: usize,
    vocab: usize,
    logits: Vec<f32>,
    true_tokens: Vec<u32>,
    label: Membership,
}

impl LogitSample {
    pub fn new(
        id: impl Into<String>,
        rows: usize,
        vocab: usize,
        logits: Vec<f32>,
        true_tokens: Vec<u32>,
        label: Membership,
    ) -> Result<Self, DataError> {
        if rows < 1 || vocab < 2 {
            return Err(DataError::BadShape { rows, vocab });
        }
        if logits.len() != rows * vocab {
            return Err(DataError::LogitCount {
                got: logits.len(),
                expected: rows * vocab,
            });
        }
        if true_tokens.len() != rows {
            return Err(DataError::TokenCount {
                got: true_tokens.len(),
                expected: rows,
            });
        }
        if let Some(flat) = logits.iter().position(|z| !z.is_finite()) {
            return Err(DataError::NonFiniteLogit {
                position: flat / vocab,
                index: flat % vocab,
            });
        }
        for (position, &token) in true_tokens.iter().enumerate() {
            if token as usize >= vocab {
                return Err(DataError::TokenOutOfRange {
                    position,
                    token,
                    vocab,
                });
            }
        }
        Ok(Self {
            id: id.into(),
            rows,
            vocab,
            logits,
            true_tokens,
            label,
        })
    }

    /// Builds a sample from nested rows; all rows must share one length.
    pub fn from_rows(
        id: impl Into<String>,
        rows: &[Vec<f32>],
        true_tokens: Vec<u32>,
        label: Membership,
    ) -> Result<Self, DataError> {
        let vocab = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != vocab) {
            return Err(DataError::BadShape {
                rows: rows.len(),
                vocab,
            });
        }
        let logits = rows.iter().flatten().copied().collect();
        Self::new(id, rows.len(), vocab, logits, true_tokens, label)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Membership {
        self.label
    }

    /// Number of sequence positions `L`.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Vocabulary size `V`.
    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn logits(&self) -> &[f32] {
        &self.logits
    }

    pub fn row(&self, position: usize) -> &[f32] {
        &self.logits[position * self.vocab..(position + 1) * self.vocab]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.logits.chunks_exact(self.vocab)
    }

    pub fn true_tokens(&self) -> &[u32] {
        &self.true_tokens
    }

    /// Same sample with a different label; used for label-shuffled controls.
    pub fn with_label(mut self, label: Membership) -> Self {
        self.label = label;
        self
    }
}

/// One signal score joined to the sample's id and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub score: f64,
    pub label: Membership,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Text,
    Logit,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Text => "text",
            DatasetKind::Logit => "logit",
        })
    }
}

/// An ordered, homogeneous collection of samples with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Text(Vec<TextSample>),
    Logit(Vec<LogitSample>),
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(DataError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

impl Dataset {
    pub fn text(samples: Vec<TextSample>) -> Result<Self, DataError> {
        check_unique(samples.iter().map(|s| s.id.as_str()))?;
        Ok(Dataset::Text(samples))
    }

    pub fn logit(samples: Vec<LogitSample>) -> Result<Self, DataError> {
        check_unique(samples.iter().map(|s| s.id()))?;
        Ok(Dataset::Logit(samples))
    }

    pub fn kind(&self) -> DatasetKind {
        match self {
            Dataset::Text(_) => DatasetKind::Text,
            Dataset::Logit(_) => DatasetKind::Logit,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Text(s) => s.len(),
            Dataset::Logit(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Dataset::Text(s) => s.iter().map(|x| x.id.as_str()).collect(),
            Dataset::Logit(s) => s.iter().map(|x| x.id()).collect(),
        }
    }

    pub fn labels(&self) -> Vec<Membership> {
        match self {
            Dataset::Text(s) => s.iter().map(|x| x.label).collect(),
            Dataset::Logit(s) => s.iter().map(|x| x.label()).collect(),
        }
    }

    /// Keeps the samples at `indices`, in that order.
    fn select(&self, indices: &[usize]) -> Dataset {
        match self {
            Dataset::Text(s) => Dataset::Text(indices.iter().map(|&i| s[i].clone()).collect()),
            Dataset::Logit(s) => Dataset::Logit(indices.iter().map(|&i| s[i].clone()).collect()),
        }
    }
}

fn take_string(
    obj: &mut Map<String, Value>,
    line: usize,
    key: &'static str,
) -> Result<String, DataError> {
    match obj.remove(key) {
        None => Err(DataError::MissingKey { line, key }),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(DataError::WrongType {
            line,
            key,
            expected: "a string",
        }),
    }
}

fn parse_text_line(text: &str, line: usize) -> Result<TextSample, DataError> {
    let value: Value =
        serde_json::from_str(text).map_err(|source| DataError::Json { line, source })?;
    let Value::Object(mut obj) = value else {
        return Err(DataError::Json {
            line,
            source: serde::de::Error::custom("expected a JSON object"),
        });
    };
    if let Some(extra) = obj.keys().find(|k| !TEXT_KEYS.contains(&k.as_str())) {
        return Err(DataError::UnexpectedKey {
            line,
            key: extra.clone(),
        });
    }
    let id = take_string(&mut obj, line, "id")?;
    let label = match obj.remove("label") {
        None => return Err(DataError::MissingKey { line, key: "label" }),
        Some(v) => v
            .as_u64()
            .and_then(|b| u8::try_from(b).ok())
            .and_then(Membership::from_bit)
            .ok_or(DataError::WrongType {
                line,
                key: "label",
                expected: "the integer 0 or 1",
            })?,
    };
    let original_text = take_string(&mut obj, line, "original_text")?;
    let prefix = take_string(&mut obj, line, "prefix")?;
    let ground_truth_suffix = take_string(&mut obj, line, "ground_truth_suffix")?;
    let generations = match obj.remove("suffix_generations") {
        None => {
            return Err(DataError::MissingKey {
                line,
                key: "suffix_generations",
            })
        }
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err(DataError::WrongType {
                    line,
                    key: "suffix_generations",
                    expected: "an array of strings",
                }),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => {
            return Err(DataError::WrongType {
                line,
                key: "suffix_generations",
                expected: "an array of strings",
            })
        }
    };
    if generations.is_empty() {
        return Err(DataError::EmptyGenerations { line });
    }
    if tokenize(&prefix).is_empty() {
        return Err(DataError::EmptyField { line, key: "prefix" });
    }
    if tokenize(&ground_truth_suffix).is_empty() {
        return Err(DataError::EmptyField {
            line,
            key: "ground_truth_suffix",
        });
    }
    Ok(TextSample {
        id,
        label,
        original_text,
        prefix,
        ground_truth_suffix,
        suffix_generations: generations,
    })
}

/// Reads a JSON Lines file of text samples, preserving file order. Blank
/// lines are skipped; errors carry 1-based line numbers.
pub fn load_text_samples(path: &Path) -> Result<Dataset, DataError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut samples = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line_text = line.map_err(io_err(path))?;
        if line_text.trim().is_empty() {
            continue;
        }
        samples.push(parse_text_line(&line_text, index + 1)?);
    }
    Dataset::text(samples)
}

pub fn write_text_samples(path: &Path, samples: &[TextSample]) -> Result<(), DataError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for sample in samples {
        let line = serde_json::to_string(sample).expect("text samples always serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Encodes a sample as a `MIAL` container.
pub fn encode_logit_sample(sample: &LogitSample) -> Vec<u8> {
    let id = sample.id.as_bytes();
    let mut buf =
        Vec::with_capacity(16 + 4 * sample.logits.len() + 4 * sample.rows + 5 + id.len());
    buf.extend_from_slice(LOGIT_MAGIC);
    buf.extend_from_slice(&LOGIT_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(sample.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(sample.vocab as u32).to_le_bytes());
    for z in &sample.logits {
        buf.extend_from_slice(&z.to_le_bytes());
    }
    for t in &sample.true_tokens {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    buf.push(sample.label.bit());
    buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
    buf.extend_from_slice(id);
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let available = self.bytes.len() - self.offset;
        if n > available {
            return Err(DataError::Truncated {
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes a `MIAL` container. Float bit patterns are preserved exactly.
pub fn decode_logit_sample(bytes: &[u8]) -> Result<LogitSample, DataError> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if &magic != LOGIT_MAGIC {
        return Err(DataError::BadMagic(magic));
    }
    let version = cur.u32()?;
    if version != LOGIT_FORMAT_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let rows = cur.u32()? as usize;
    let vocab = cur.u32()? as usize;
    if rows < 1 || vocab < 2 {
        return Err(DataError::BadShape { rows, vocab });
    }
    let count = rows
        .checked_mul(vocab)
        .and_then(|n| n.checked_mul(4))
        .ok_or(DataError::BadShape { rows, vocab })?;
    let logits = cur
        .take(count)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let tokens = cur
        .take(rows * 4)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let label_byte = cur.take(1)?[0];
    let label = Membership::from_bit(label_byte).ok_or(DataError::BadLabel(label_byte))?;
    let id_len = cur.u32()? as usize;
    let id = std::str::from_utf8(cur.take(id_len)?)
        .map_err(|_| DataError::InvalidUtf8)?
        .to_string();
    let trailing = bytes.len() - cur.offset;
    if trailing != 0 {
        return Err(DataError::TrailingBytes(trailing));
    }
    LogitSample::new(id, rows, vocab, logits, tokens, label)
}

pub fn load_logit_sample(path: &Path) -> Result<LogitSample, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_logit_sample(&bytes)
}

pub fn write_logit_sample(path: &Path, sample: &LogitSample) -> Result<(), DataError> {
    fs::write(path, encode_logit_sample(sample)).map_err(io_err(path))
}

/// Loads every `.mial` file in `dir`, ordered by file name.
pub fn load_logit_dir(dir: &Path) -> Result<Dataset, DataError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == LOGIT_EXTENSION) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(DataError::EmptyLogitDir(dir.to_path_buf()));
    }
    paths.sort();
    let samples = paths
        .iter()
        .map(|p| load_logit_sample(p))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::logit(samples)
}

/// Writes each sample to `dir/<index>.mial` with a zero-padded index so the
/// file-name order matches the dataset order.
pub fn write_logit_dir(dir: &Path, samples: &[LogitSample]) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, sample) in samples.iter().enumerate() {
        write_logit_sample(&dir.join(format!("{i:06}.{LOGIT_EXTENSION}")), sample)?;
    }
    Ok(())
}

/// Loads a text dataset from a `.jsonl` file or a logit dataset from a
/// directory of containers.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    if path.is_dir() {
        load_logit_dir(path)
    } else {
        load_text_samples(path)
    }
}

/// Seeded shuffle, then the first `ceil(n / 2)` samples become the train
/// split and the rest the test split.
pub fn split_dataset(data: &Dataset, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let n = data.len();
    if n < 2 {
        return Err(DataError::TooFewSamples(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = n.div_ceil(2);
    Ok((data.select(&order[..cut]), data.select(&order[cut..])))
}

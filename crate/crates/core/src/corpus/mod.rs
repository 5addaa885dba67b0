//! Parallel corpus ingestion and edit-operation labeling.
//!
//! A corpus is a pair file (`complex<TAB>simple`, one pair per line) plus an
//! alignment file holding one line of space-separated `i-j` links per pair.
//! Every token of a pair receives exactly one [`EditOp`].

mod tokenize;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tokenize::{is_punctuation, normalize_arabic, tokenize};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("pair file has {pairs} lines but alignment file has {alignments} lines")]
    LineCountMismatch { pairs: usize, alignments: usize },
    #[error("line {line}: expected `complex<TAB>simple`")]
    MalformedPair { line: usize },
    #[error("line {line}: malformed alignment link `{token}`")]
    MalformedLink { line: usize, token: String },
    #[error(
        "line {line}: link {src}-{tgt} out of bounds for sentences of {src_len} and {tgt_len} tokens"
    )]
    LinkOutOfBounds {
        line: usize,
        src: usize,
        tgt: usize,
        src_len: usize,
        tgt_len: usize,
    },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_tag: Option<String>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text, false);
        Self {
            id: id.into(),
            text,
            tokens,
            level_tag: None,
        }
    }

    pub fn from_tokens(id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            id: id.into(),
            text: tokens.join(" "),
            tokens,
            level_tag: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AlignmentLink {
    pub src: usize,
    pub tgt: usize,
}

impl AlignmentLink {
    pub fn new(src: usize, tgt: usize) -> Self {
        Self { src, tgt }
    }
}

impl fmt::Display for AlignmentLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EditKind {
    Delete,
    Add,
    Replace,
    Rewrite,
}

impl EditKind {
    pub const ALL: [EditKind; 4] = [
        EditKind::Delete,
        EditKind::Add,
        EditKind::Replace,
        EditKind::Rewrite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::Delete => "DELETE",
            EditKind::Add => "ADD",
            EditKind::Replace => "REPLACE",
            EditKind::Rewrite => "REWRITE",
        }
    }
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled token (or token pair). `src` indexes the complex sentence,
/// `tgt` the simple one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt: Option<usize>,
}

impl EditOp {
    pub fn delete(src: usize) -> Self {
        Self {
            kind: EditKind::Delete,
            src: Some(src),
            tgt: None,
        }
    }

    pub fn add(tgt: usize) -> Self {
        Self {
            kind: EditKind::Add,
            src: None,
            tgt: Some(tgt),
        }
    }

    pub fn replace(src: usize, tgt: usize) -> Self {
        Self {
            kind: EditKind::Replace,
            src: Some(src),
            tgt: Some(tgt),
        }
    }

    pub fn rewrite(src: usize, tgt: usize) -> Self {
        Self {
            kind: EditKind::Rewrite,
            src: Some(src),
            tgt: Some(tgt),
        }
    }

    /// Ordering key: by source index, then target index; ADD ops (no source)
    /// sort after everything else.
    fn sort_key(&self) -> (usize, usize) {
        (
            self.src.unwrap_or(usize::MAX),
            self.tgt.unwrap_or(usize::MAX),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub complex: Sentence,
    pub simple: Sentence,
    pub links: Vec<AlignmentLink>,
    #[serde(default)]
    pub ops: Vec<EditOp>,
}

impl SentencePair {
    /// Builds a pair, checking every link against the token counts. `line` is
    /// only used for error reporting.
    pub fn new(
        complex: Sentence,
        simple: Sentence,
        links: Vec<AlignmentLink>,
        line: usize,
    ) -> Result<Self, CorpusError> {
        let (src_len, tgt_len) = (complex.tokens.len(), simple.tokens.len());
        if let Some(bad) = links.iter().find(|l| l.src >= src_len || l.tgt >= tgt_len) {
            return Err(CorpusError::LinkOutOfBounds {
                line,
                src: bad.src,
                tgt: bad.tgt,
                src_len,
                tgt_len,
            });
        }
        Ok(Self {
            complex,
            simple,
            links,
            ops: Vec::new(),
        })
    }

    /// Labels the pair in place and returns it.
    pub fn labeled(mut self, normalize: bool) -> Self {
        self.ops = label_edit_operations(&self, normalize);
        self
    }

    pub fn op_counts(&self) -> BTreeMap<EditKind, usize> {
        let mut counts: BTreeMap<EditKind, usize> = EditKind::ALL.iter().map(|k| (*k, 0)).collect();
        for op in &self.ops {
            *counts.entry(op.kind).or_default() += 1;
        }
        counts
    }
}

/// Parses one alignment line such as `0-0 1-2`.
pub fn parse_alignment_line(line: &str, line_no: usize) -> Result<Vec<AlignmentLink>, CorpusError> {
    line.split_whitespace()
        .map(|token| {
            let malformed = || CorpusError::MalformedLink {
                line: line_no,
                token: token.to_string(),
            };
            let (s, t) = token.split_once('-').ok_or_else(malformed)?;
            let src = s.parse().map_err(|_| malformed())?;
            let tgt = t.parse().map_err(|_| malformed())?;
            Ok(AlignmentLink { src, tgt })
        })
        .collect()
}

fn strip_bom(text: &str) -> &str {
    text.strip_prefix('\u{FEFF}').unwrap_or(text)
}

/// Parses pair and alignment file contents. Ops are left empty.
pub fn parse_parallel_corpus(pairs: &str, alignments: &str) -> Result<Vec<SentencePair>, CorpusError> {
    let pair_lines: Vec<&str> = strip_bom(pairs).lines().collect();
    let align_lines: Vec<&str> = strip_bom(alignments).lines().collect();
    if pair_lines.len() != align_lines.len() {
        return Err(CorpusError::LineCountMismatch {
            pairs: pair_lines.len(),
            alignments: align_lines.len(),
        });
    }

    pair_lines
        .iter()
        .zip(&align_lines)
        .enumerate()
        .map(|(i, (pair_line, align_line))| {
            let line = i + 1;
            let (complex, simple) = pair_line
                .split_once('\t')
                .ok_or(CorpusError::MalformedPair { line })?;
            let mut complex = Sentence::new(format!("{line}-complex"), complex);
            let mut simple = Sentence::new(format!("{line}-simple"), simple);
            complex.level_tag = Some("C".into());
            simple.level_tag = Some("A+B".into());
            let links = parse_alignment_line(align_line, line)?;
            SentencePair::new(complex, simple, links, line)
        })
        .collect()
}

pub fn load_parallel_corpus(
    pairs_path: &Path,
    alignments_path: &Path,
) -> Result<Vec<SentencePair>, CorpusError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| CorpusError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    parse_parallel_corpus(&read(pairs_path)?, &read(alignments_path)?)
}

/// Derives one edit operation per token.
///
/// Links are de-duplicated and visited in `(src, tgt)` order. A link is
/// labeled only when neither endpoint was claimed by an earlier link, so each
/// token ends up in exactly one op. Complex tokens left unclaimed become
/// DELETE, simple tokens left unclaimed become ADD. Claimed pairs are REWRITE
/// when the surfaces match (after optional normalization) and REPLACE
/// otherwise.
pub fn label_edit_operations(pair: &SentencePair, normalize: bool) -> Vec<EditOp> {
    let src_tokens = &pair.complex.tokens;
    let tgt_tokens = &pair.simple.tokens;
    let mut src_claimed = vec![false; src_tokens.len()];
    let mut tgt_claimed = vec![false; tgt_tokens.len()];
    let mut ops = Vec::with_capacity(src_tokens.len() + tgt_tokens.len());

    let links: BTreeSet<AlignmentLink> = pair.links.iter().copied().collect();
    for link in links {
        if src_claimed[link.src] || tgt_claimed[link.tgt] {
            continue;
        }
        src_claimed[link.src] = true;
        tgt_claimed[link.tgt] = true;
        let same = if normalize {
            normalize_arabic(&src_tokens[link.src]) == normalize_arabic(&tgt_tokens[link.tgt])
        } else {
            src_tokens[link.src] == tgt_tokens[link.tgt]
        };
        ops.push(if same {
            EditOp::rewrite(link.src, link.tgt)
        } else {
            EditOp::replace(link.src, link.tgt)
        });
    }

    ops.extend(
        src_claimed
            .iter()
            .enumerate()
            .filter(|(_, claimed)| !**claimed)
            .map(|(i, _)| EditOp::delete(i)),
    );
    ops.extend(
        tgt_claimed
            .iter()
            .enumerate()
            .filter(|(_, claimed)| !**claimed)
            .map(|(j, _)| EditOp::add(j)),
    );
    ops.sort_by_key(EditOp::sort_key);
    ops
}

/// Corpus-level operation counts. `percentages` is absent for an empty corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationStats {
    pub counts: BTreeMap<EditKind, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentages: Option<BTreeMap<EditKind, f64>>,
}

impl OperationStats {
    pub fn from_counts(mut counts: BTreeMap<EditKind, usize>) -> Self {
        for kind in EditKind::ALL {
            counts.entry(kind).or_insert(0);
        }
        let total: usize = counts.values().sum();
        let percentages = (total > 0).then(|| {
            counts
                .iter()
                .map(|(k, c)| (*k, *c as f64 / total as f64))
                .collect()
        });
        Self { counts, percentages }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, kind: EditKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn percentage(&self, kind: EditKind) -> Option<f64> {
        self.percentages.as_ref().and_then(|p| p.get(&kind).copied())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("stats serialize")
    }

    /// CSV with header `operation,count,percentage`; the percentage column is
    /// a fraction in `[0, 1]` and empty when undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("operation,count,percentage\n");
        for kind in EditKind::ALL {
            let pct = self
                .percentage(kind)
                .map(|p| format!("{p:.6}"))
                .unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", kind, self.count(kind), pct));
        }
        out
    }
}

pub fn operation_distribution(pairs: &[SentencePair]) -> OperationStats {
    let mut counts = BTreeMap::new();
    for pair in pairs {
        for op in &pair.ops {
            *counts.entry(op.kind).or_insert(0) += 1;
        }
    }
    OperationStats::from_counts(counts)
}

/// Seeded shuffle split. The train side receives `round(n * fraction)` items;
/// both sides keep the input order.
pub fn split_corpus<T: Clone>(
    items: &[T],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(train_fraction));
    }
    let n = items.len();
    let train_n = (n as f64 * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut in_train = vec![false; n];
    for &i in &order[..train_n] {
        in_train[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(train_n), Vec::with_capacity(n - train_n));
    for (item, is_train) in items.iter().zip(in_train) {
        if is_train {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok((train, test))
}

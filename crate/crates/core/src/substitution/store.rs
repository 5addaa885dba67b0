use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::BufRead;
use std::path::Path;

use super::{cosine_from_parts, rank_order, SubstitutionError};

/// Read-only word-vector table loaded from the text format
/// `<vocab_size> <dim>` followed by `word v1 .. v_dim` lines.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    id: String,
    dimension: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    norms: Vec<f64>,
    skipped_lines: usize,
}

impl EmbeddingStore {
    pub fn new(id: impl Into<String>, dimension: usize) -> Self {
        Self {
            id: id.into(),
            dimension,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            norms: Vec::new(),
            skipped_lines: 0,
        }
    }

    /// Adds a vector; returns false (and stores nothing) when the word is
    /// already present or the dimension is wrong.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> bool {
        if vector.len() != self.dimension || self.index.contains_key(word) {
            return false;
        }
        let norm = vector.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.data.extend_from_slice(vector);
        self.norms.push(norm);
        true
    }

    pub fn parse(id: impl Into<String>, reader: impl BufRead) -> Result<Self, SubstitutionError> {
        let mut lines = reader.lines();
        let io = |source| SubstitutionError::Io {
            path: "<vectors>".into(),
            source,
        };
        let header = lines.next().transpose().map_err(io)?.unwrap_or_default();
        let header = header.trim_start_matches('\u{FEFF}').trim().to_string();
        let mut fields = header.split_whitespace();
        let (vocab, dimension) = match (fields.next(), fields.next(), fields.next()) {
            (Some(v), Some(d), None) => match (v.parse::<usize>(), d.parse::<usize>()) {
                (Ok(v), Ok(d)) if d > 0 => (v, d),
                _ => return Err(SubstitutionError::Header(header)),
            },
            _ => return Err(SubstitutionError::Header(header)),
        };

        let mut store = Self::new(id, dimension);
        let mut buf = Vec::with_capacity(dimension);
        for line in lines {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ').filter(|s| !s.is_empty());
            let Some(word) = parts.next() else {
                store.skipped_lines += 1;
                continue;
            };
            buf.clear();
            let parsed = parts.try_for_each(|p| {
                p.trim().parse::<f32>().map(|x| buf.push(x)).map_err(|_| ())
            });
            if parsed.is_err() || buf.iter().any(|x| !x.is_finite()) || !store.insert(word, &buf) {
                store.skipped_lines += 1;
            }
        }
        if store.skipped_lines > 0 {
            log::warn!("skipped {} malformed vector lines", store.skipped_lines);
        }
        if store.len() != vocab {
            log::warn!("vector header announces {vocab} words, loaded {}", store.len());
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, SubstitutionError> {
        let file = std::fs::File::open(path).map_err(|source| SubstitutionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "vectors".into());
        Self::parse(id, std::io::BufReader::new(file))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Lines dropped while parsing (bad numbers, wrong dimension, duplicates).
    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    fn dot(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }

    /// Cosine similarity of two stored words, `None` if either is missing.
    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        let (&i, &j) = (self.index.get(a)?, self.index.get(b)?);
        Some(cosine_from_parts(self.dot(i, j), self.norms[i], self.norms[j]))
    }

    /// The `k` words most similar to `word` (itself excluded), best first,
    /// ties broken by ascending surface. `None` if `word` is not stored.
    pub fn nearest(&self, word: &str, k: usize) -> Option<Vec<(String, f64)>> {
        let &target = self.index.get(word)?;
        if k == 0 {
            return Some(Vec::new());
        }
        let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k + 1);
        for i in (0..self.words.len()).filter(|&i| i != target) {
            let denom = self.norms[i] * self.norms[target];
            let score = if denom == 0.0 {
                0.0
            } else {
                (self.dot(i, target) / denom).clamp(-1.0, 1.0)
            };
            let entry = Ranked {
                score,
                word: &self.words[i],
            };
            if heap.len() < k {
                heap.push(entry);
            } else if heap.peek().is_some_and(|worst| entry < *worst) {
                heap.pop();
                heap.push(entry);
            }
        }
        Some(
            heap.into_sorted_vec()
                .into_iter()
                .map(|r| (r.word.to_string(), r.score))
                .collect(),
        )
    }
}

/// Heap entry ordered so that better-ranked entries compare as smaller.
struct Ranked<'a> {
    score: f64,
    word: &'a str,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(self.score, self.word, other.score, other.word)
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

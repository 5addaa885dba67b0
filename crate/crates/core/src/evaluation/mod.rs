//! Embedding-similarity scoring, report tables, F1 distributions, changed
//! word counts and manual label aggregation.
//!
//! Sentence pairs are scored by greedy matching: every token is matched to
//! its most similar token on the other side (cosine over contextual
//! embeddings), precision averages over the candidate, recall over the
//! reference. There is no idf weighting.

mod manual;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{EncoderProvider, ProviderError};
use crate::selection::{SimplificationResult, Variant};
use crate::substitution::cosine_from_parts;

pub use manual::{aggregate_manual, parse_manual_labels, ManualCount, ManualDistribution, ManualLabel, ManualScheme};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("score undefined: the {side} side has no tokens")]
    EmptySide { side: &'static str },
    #[error("embedding dimensions differ: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("baseline must be below 1, got {0}")]
    BadBaseline(f64),
    #[error("token lists differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("line {line}: {message}")]
    Label { line: u64, message: String },
    #[error("labels mix schemes `{expected}` and `{found}`")]
    MixedSchemes { expected: ManualScheme, found: ManualScheme },
    #[error("sentence {sentence_id}: {source}")]
    Provider {
        sentence_id: String,
        #[source]
        source: ProviderError,
    },
}

/// One vector per token, all of the same dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbeddings {
    #[serde(default)]
    pub sentence_id: String,
    pub matrix: Vec<Vec<f64>>,
}

impl TokenEmbeddings {
    pub fn new(matrix: Vec<Vec<f64>>) -> Self {
        Self {
            sentence_id: String::new(),
            matrix,
        }
    }

    pub fn with_id(mut self, sentence_id: impl Into<String>) -> Self {
        self.sentence_id = sentence_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.matrix.first().map(Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ScoreTriple {
    /// Builds the triple with F1 as the harmonic mean of `p` and `r`.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }

    pub const ONES: ScoreTriple = ScoreTriple {
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
    };
}

/// `2pr / (p + r)`, or 0 when `p + r <= 0`.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    let sum = p + r;
    if sum <= 0.0 {
        return 0.0;
    }
    let f = 2.0 * (p * r) / sum;
    if p >= 0.0 && r >= 0.0 {
        // keep rounding from stepping outside [min, max]
        f.clamp(p.min(r), p.max(r))
    } else {
        f
    }
}

fn check_dimension(e: &TokenEmbeddings, expected: usize) -> Result<(), EvaluationError> {
    match e.matrix.iter().find(|row| row.len() != expected) {
        Some(row) => Err(EvaluationError::DimensionMismatch {
            expected,
            found: row.len(),
        }),
        None => Ok(()),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Greedy-matching precision, recall and F1 of `candidate` against
/// `reference`.
pub fn greedy_match_score(
    candidate: &TokenEmbeddings,
    reference: &TokenEmbeddings,
) -> Result<ScoreTriple, EvaluationError> {
    if candidate.is_empty() {
        return Err(EvaluationError::EmptySide { side: "candidate" });
    }
    if reference.is_empty() {
        return Err(EvaluationError::EmptySide { side: "reference" });
    }
    let dim = candidate.matrix[0].len();
    check_dimension(candidate, dim)?;
    check_dimension(reference, dim)?;

    let cand_norms: Vec<f64> = candidate.matrix.iter().map(|v| norm(v)).collect();
    let ref_norms: Vec<f64> = reference.matrix.iter().map(|v| norm(v)).collect();
    let mut row_best = vec![f64::NEG_INFINITY; candidate.len()];
    let mut col_best = vec![f64::NEG_INFINITY; reference.len()];
    for (i, x) in candidate.matrix.iter().enumerate() {
        for (j, y) in reference.matrix.iter().enumerate() {
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            let sim = cosine_from_parts(dot, cand_norms[i], ref_norms[j]);
            row_best[i] = row_best[i].max(sim);
            col_best[j] = col_best[j].max(sim);
        }
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(ScoreTriple::from_pr(mean(&row_best), mean(&col_best)))
}

/// Affine baseline rescaling `(s - b) / (1 - b)`.
pub fn rescale(score: f64, baseline: f64) -> Result<f64, EvaluationError> {
    if baseline.is_nan() || baseline >= 1.0 {
        return Err(EvaluationError::BadBaseline(baseline));
    }
    Ok((score - baseline) / (1.0 - baseline))
}

/// Rescales each component independently.
pub fn rescale_triple(t: ScoreTriple, baseline: f64) -> Result<ScoreTriple, EvaluationError> {
    Ok(ScoreTriple {
        precision: rescale(t.precision, baseline)?,
        recall: rescale(t.recall, baseline)?,
        f1: rescale(t.f1, baseline)?,
    })
}

/// Which sentence plays candidate and which plays reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonMode {
    /// Candidate: original complex sentence; reference: gold simple sentence.
    OriginalTarget,
    /// Candidate: generated sentence; reference: original sentence.
    GeneratedOriginal,
    /// Candidate: generated sentence; reference: gold simple sentence.
    GeneratedTarget,
    /// Candidate: a system variant's output; reference: gold simple sentence.
    TargetSystemVariant(Variant),
}

impl ComparisonMode {
    pub const GENERATIVE: [ComparisonMode; 3] = [
        ComparisonMode::OriginalTarget,
        ComparisonMode::GeneratedOriginal,
        ComparisonMode::GeneratedTarget,
    ];

    /// Classification rows in report order.
    pub const CLASSIFICATION: [ComparisonMode; 3] = [
        ComparisonMode::TargetSystemVariant(Variant::Embedding),
        ComparisonMode::TargetSystemVariant(Variant::Mlm),
        ComparisonMode::TargetSystemVariant(Variant::Combined),
    ];

    /// Row label used in rendered reports.
    pub fn label(self) -> &'static str {
        match self {
            ComparisonMode::OriginalTarget => "Original/Target",
            ComparisonMode::GeneratedOriginal => "Generated/Original",
            ComparisonMode::GeneratedTarget => "Generated/Target",
            ComparisonMode::TargetSystemVariant(Variant::Embedding) => "Target/fastText",
            ComparisonMode::TargetSystemVariant(Variant::Mlm) => "Target /BERT",
            ComparisonMode::TargetSystemVariant(Variant::Combined) => "Target / Combined",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::GENERATIVE
            .into_iter()
            .chain(Self::CLASSIFICATION)
            .find(|m| m.label() == label)
    }
}

impl fmt::Display for ComparisonMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One report line. `scores` is `None` when the row could not be computed
/// (for example a variant missing from the system outputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub comparison: ComparisonMode,
    pub encoder: String,
    pub scores: Option<ScoreTriple>,
    /// Baseline applied to `scores` and `per_sentence`; 0 means raw scores.
    pub baseline: f64,
    #[serde(default)]
    pub per_sentence: Vec<ScoreTriple>,
    /// Instances left out because one side had no tokens.
    #[serde(default)]
    pub skipped: usize,
}

/// Averages P and R over instances; F1 is recomputed from the means.
pub fn aggregate_scores(per_sentence: &[ScoreTriple]) -> Option<ScoreTriple> {
    if per_sentence.is_empty() {
        return None;
    }
    let n = per_sentence.len() as f64;
    let p = per_sentence.iter().map(|t| t.precision).sum::<f64>() / n;
    let r = per_sentence.iter().map(|t| t.recall).sum::<f64>() / n;
    Some(ScoreTriple::from_pr(p, r))
}

/// Gold simple sentence plus whatever variants the system produced for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationInstance {
    pub sentence_id: String,
    pub target: Vec<String>,
    pub outputs: BTreeMap<Variant, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeInstance {
    pub sentence_id: String,
    pub original: Vec<String>,
    pub generated: Vec<String>,
    pub target: Vec<String>,
}

/// Embeds token lists, reusing results for repeated lists.
struct EmbeddingCache<'a> {
    encoder: &'a dyn EncoderProvider,
    seen: BTreeMap<Vec<String>, TokenEmbeddings>,
}

impl<'a> EmbeddingCache<'a> {
    fn new(encoder: &'a dyn EncoderProvider) -> Self {
        Self {
            encoder,
            seen: BTreeMap::new(),
        }
    }

    fn get(&mut self, sentence_id: &str, tokens: &[String]) -> Result<&TokenEmbeddings, EvaluationError> {
        if !self.seen.contains_key(tokens) {
            let e = self
                .encoder
                .embed_tokens(tokens)
                .map_err(|source| EvaluationError::Provider {
                    sentence_id: sentence_id.to_string(),
                    source,
                })?;
            self.seen.insert(tokens.to_vec(), e.with_id(sentence_id));
        }
        Ok(&self.seen[tokens])
    }
}

fn score_rows<'i>(
    comparisons: &[ComparisonMode],
    pairs: impl Fn(ComparisonMode) -> Vec<Option<(&'i str, &'i [String], &'i [String])>>,
    encoder: &dyn EncoderProvider,
    baseline: f64,
) -> Result<Vec<ReportRow>, EvaluationError> {
    rescale(0.0, baseline)?;
    let mut cache = EmbeddingCache::new(encoder);
    let mut rows = Vec::new();
    for &mode in comparisons {
        let items = pairs(mode);
        let mut row = ReportRow {
            comparison: mode,
            encoder: encoder.id().to_string(),
            scores: None,
            baseline,
            per_sentence: Vec::new(),
            skipped: 0,
        };
        if items.is_empty() || items.iter().any(Option::is_none) {
            log::warn!("{mode} for encoder {}: outputs missing, row left absent", encoder.id());
            rows.push(row);
            continue;
        }
        let mut raw = Vec::new();
        for (id, cand, reference) in items.into_iter().flatten() {
            if cand.is_empty() || reference.is_empty() {
                log::warn!("{mode}: sentence {id} has an empty side; skipped");
                row.skipped += 1;
                continue;
            }
            let c = cache.get(id, cand)?.clone();
            let r = cache.get(id, reference)?;
            raw.push(greedy_match_score(&c, r)?);
        }
        row.scores = aggregate_scores(&raw).map(|t| rescale_triple(t, baseline)).transpose()?;
        row.per_sentence = raw
            .into_iter()
            .map(|t| rescale_triple(t, baseline))
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Scores each system variant against the gold simple sentence. A variant
/// missing from any instance yields an absent row.
pub fn evaluate_classification(
    instances: &[ClassificationInstance],
    encoder: &dyn EncoderProvider,
    baseline: f64,
) -> Result<Vec<ReportRow>, EvaluationError> {
    score_rows(
        &ComparisonMode::CLASSIFICATION,
        |mode| {
            let ComparisonMode::TargetSystemVariant(v) = mode else {
                unreachable!("classification modes only")
            };
            instances
                .iter()
                .map(|inst| {
                    inst.outputs
                        .get(&v)
                        .map(|out| (inst.sentence_id.as_str(), out.as_slice(), inst.target.as_slice()))
                })
                .collect()
        },
        encoder,
        baseline,
    )
}

/// Original/Target, Generated/Original and Generated/Target rows.
pub fn evaluate_generative(
    instances: &[GenerativeInstance],
    encoder: &dyn EncoderProvider,
    baseline: f64,
) -> Result<Vec<ReportRow>, EvaluationError> {
    score_rows(
        &ComparisonMode::GENERATIVE,
        |mode| {
            instances
                .iter()
                .map(|inst| {
                    let (c, r) = match mode {
                        ComparisonMode::OriginalTarget => (&inst.original, &inst.target),
                        ComparisonMode::GeneratedOriginal => (&inst.generated, &inst.original),
                        ComparisonMode::GeneratedTarget => (&inst.generated, &inst.target),
                        ComparisonMode::TargetSystemVariant(_) => unreachable!("generative modes only"),
                    };
                    Some((inst.sentence_id.as_str(), c.as_slice(), r.as_slice()))
                })
                .collect()
        },
        encoder,
        baseline,
    )
}

/// CSV with header `comparison,encoder,precision,recall,f1`; absent rows
/// have empty score cells.
pub fn render_report_csv(rows: &[ReportRow], decimals: usize) -> String {
    let mut out = String::from("comparison,encoder,precision,recall,f1\n");
    for row in rows {
        let cells = match row.scores {
            Some(t) => format!(
                "{:.d$},{:.d$},{:.d$}",
                t.precision,
                t.recall,
                t.f1,
                d = decimals
            ),
            None => ",,".to_string(),
        };
        out.push_str(&format!(
            "{},{},{}\n",
            csv_cell(row.comparison.label()),
            csv_cell(&row.encoder),
            cells
        ));
    }
    out
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Average of per-sentence F1, the aggregation common BERTScore tooling
/// reports. Usually a little below the harmonic mean of the averaged P and R.
pub fn mean_sentence_f1(per_sentence: &[ScoreTriple]) -> Option<f64> {
    (!per_sentence.is_empty()).then(|| per_sentence.iter().map(|t| t.f1).sum::<f64>() / per_sentence.len() as f64)
}

/// JSON mirror of [`render_report_csv`] plus the per-sentence F1 average;
/// per-sentence scores themselves are left out.
pub fn render_report_json(rows: &[ReportRow]) -> serde_json::Value {
    serde_json::Value::Array(
        rows.iter()
            .map(|row| {
                serde_json::json!({
                    "comparison": row.comparison.label(),
                    "encoder": row.encoder,
                    "precision": row.scores.map(|t| t.precision),
                    "recall": row.scores.map(|t| t.recall),
                    "f1": row.scores.map(|t| t.f1),
                    "mean_sentence_f1": mean_sentence_f1(&row.per_sentence),
                    "rescaled": row.baseline != 0.0,
                    "baseline": row.baseline,
                    "instances": row.per_sentence.len(),
                    "skipped": row.skipped,
                })
            })
            .collect(),
    )
}

pub const HISTOGRAM_BINS: usize = 20;
pub const BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkewSign {
    Negative,
    Symmetric,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Distribution {
    pub bins: Vec<HistogramBin>,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sign of the sample skewness (third standardized moment).
    pub skew: SkewSign,
}

/// Bin index for a score; values outside `[0, 1]` go to the end bins and
/// 1.0 lands in the top bin.
pub fn bin_index(value: f64) -> usize {
    let idx = (value * HISTOGRAM_BINS as f64 + 1e-9).floor();
    if idx.is_nan() || idx < 0.0 {
        0
    } else {
        (idx as usize).min(HISTOGRAM_BINS - 1)
    }
}

/// Histogram of per-sentence F1 over fixed bins of width 0.05. `None` for an
/// empty input.
pub fn f1_distribution(triples: &[ScoreTriple]) -> Option<F1Distribution> {
    if triples.is_empty() {
        return None;
    }
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|k| HistogramBin {
            low: k as f64 / HISTOGRAM_BINS as f64,
            high: (k + 1) as f64 / HISTOGRAM_BINS as f64,
            count: 0,
        })
        .collect();
    let mut values: Vec<f64> = triples.iter().map(|t| t.f1).collect();
    for v in &values {
        bins[bin_index(*v)].count += 1;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    let median = if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    };
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let skew = if m2 <= 1e-24 {
        SkewSign::Symmetric
    } else {
        let g1 = m3 / m2.powf(1.5);
        if g1 > 1e-9 {
            SkewSign::Positive
        } else if g1 < -1e-9 {
            SkewSign::Negative
        } else {
            SkewSign::Symmetric
        }
    };
    Some(F1Distribution {
        bins,
        n: triples.len(),
        mean,
        median,
        skew,
    })
}

/// CSV with header `bin_low,bin_high,count`.
pub fn render_histogram_csv(dist: &F1Distribution) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    for b in &dist.bins {
        out.push_str(&format!("{:.2},{:.2},{}\n", b.low, b.high, b.count));
    }
    out
}

/// Positions where the two token lists differ.
pub fn changed_word_count(input: &[String], variant: &[String]) -> Result<usize, EvaluationError> {
    if input.len() != variant.len() {
        return Err(EvaluationError::LengthMismatch {
            left: input.len(),
            right: variant.len(),
        });
    }
    Ok(input.iter().zip(variant).filter(|(a, b)| a != b).count())
}

/// Corpus-level changed-word totals per variant.
pub fn changed_words_by_variant(results: &[SimplificationResult]) -> Result<BTreeMap<Variant, usize>, EvaluationError> {
    let mut totals = BTreeMap::new();
    for result in results {
        for (variant, output) in &result.variants {
            *totals.entry(*variant).or_insert(0) += changed_word_count(&result.input, &output.tokens)?;
        }
    }
    Ok(totals)
}

/// CSV with header `variant,changed_words`.
pub fn render_changed_words_csv(totals: &BTreeMap<Variant, usize>) -> String {
    let mut out = String::from("variant,changed_words\n");
    for (v, n) in totals {
        out.push_str(&format!("{v},{n}\n"));
    }
    out
}

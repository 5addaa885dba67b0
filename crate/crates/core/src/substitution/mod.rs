//! Substitution generation and ranking.
//!
//! Candidates come from two sources: a masked language model queried with the
//! sentence pair `[CLS] original [SEP] masked [SEP]`, and nearest neighbours
//! in a word-vector store. MLM candidates can be re-ranked by their cosine
//! similarity to the target word.

mod store;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwi::Token;
use crate::providers::{validate_mlm_rows, MaskedLmProvider, ProviderError};

pub use store::EmbeddingStore;

pub const MASK_TOKEN: &str = "[MASK]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
/// Prefix marking a WordPiece continuation fragment.
pub const SUBWORD_MARKER: &str = "##";
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Error)]
pub enum SubstitutionError {
    #[error("target index {index} out of range for a sentence of {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("failed to read vectors {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad vector file header `{0}`: expected `<vocab_size> <dim>`")]
    Header(String),
}

/// Masked-LM input for one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmQuery {
    pub original: Vec<String>,
    pub masked: Vec<String>,
    pub target_index: usize,
    pub rendered: String,
}

pub fn build_mlm_query(tokens: &[String], target_index: usize) -> Result<MlmQuery, SubstitutionError> {
    if target_index >= tokens.len() {
        return Err(SubstitutionError::IndexOutOfRange {
            index: target_index,
            len: tokens.len(),
        });
    }
    let mut masked = tokens.to_vec();
    masked[target_index] = MASK_TOKEN.to_string();
    let rendered = std::iter::once(CLS_TOKEN)
        .chain(tokens.iter().map(String::as_str))
        .chain(std::iter::once(SEP_TOKEN))
        .chain(masked.iter().map(String::as_str))
        .chain(std::iter::once(SEP_TOKEN))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(MlmQuery {
        original: tokens.to_vec(),
        masked,
        target_index,
        rendered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Mlm,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateFlag {
    /// The provider's unknown-token literal.
    Unk,
    /// A `##` continuation fragment.
    Subword,
    /// Missing from the embedding store during re-ranking.
    Oov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub surface: String,
    /// MLM probability or cosine similarity, depending on the list.
    pub score: f64,
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<CandidateFlag>,
    /// The original MLM probability, kept after re-ranking replaced `score`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlm_probability: Option<f64>,
}

impl Candidate {
    pub fn has(&self, flag: CandidateFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Candidates for one target from one provider, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub target: Token,
    pub provider_id: String,
    pub candidates: Vec<Candidate>,
    pub k: usize,
}

impl CandidateList {
    pub fn empty(target: Token, provider_id: impl Into<String>, k: usize) -> Self {
        Self {
            target,
            provider_id: provider_id.into(),
            candidates: Vec::new(),
            k,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.surface.as_str()).collect()
    }
}

/// Cosine similarity in `[-1, 1]`; 0 when either vector has zero norm.
pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64, SubstitutionError> {
    if u.len() != v.len() {
        return Err(SubstitutionError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in u.iter().zip(v) {
        let (a, b): (f64, f64) = ((*a).into(), (*b).into());
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    Ok(cosine_from_parts(dot, nu.sqrt(), nv.sqrt()))
}

pub(crate) fn cosine_from_parts(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    if norm_u == 0.0 || norm_v == 0.0 {
        log::warn!("cosine of a zero vector; returning 0");
        return 0.0;
    }
    (dot / (norm_u * norm_v)).clamp(-1.0, 1.0)
}

/// Queries the masked LM and flags unknown-token and subword candidates.
/// Provider order is preserved.
pub fn mlm_candidates(
    provider: &dyn MaskedLmProvider,
    query: &MlmQuery,
    k: usize,
    target: &Token,
) -> Result<CandidateList, ProviderError> {
    let rows = provider.top_k(query, k)?;
    validate_mlm_rows(provider.id(), &rows, k)?;
    let unk = provider.unknown_token();
    let candidates = rows
        .into_iter()
        .map(|row| {
            let mut flags = BTreeSet::new();
            if row.surface == unk {
                flags.insert(CandidateFlag::Unk);
            }
            if row.surface.starts_with(SUBWORD_MARKER) {
                flags.insert(CandidateFlag::Subword);
            }
            Candidate {
                surface: row.surface,
                score: row.probability,
                source: CandidateSource::Mlm,
                flags,
                mlm_probability: None,
            }
        })
        .collect();
    Ok(CandidateList {
        target: target.clone(),
        provider_id: provider.id().to_string(),
        candidates,
        k,
    })
}

/// Descending score, then ascending surface.
pub(crate) fn rank_order(a_score: f64, a_word: &str, b_score: f64, b_word: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_word.cmp(b_word))
}

/// The `k` nearest store words to the target, excluding the target itself.
pub fn embedding_candidates(store: &EmbeddingStore, target: &Token, k: usize) -> CandidateList {
    let candidates = match store.nearest(&target.surface, k) {
        Some(neighbours) => neighbours
            .into_iter()
            .map(|(surface, score)| Candidate {
                surface,
                score,
                source: CandidateSource::Embedding,
                flags: BTreeSet::new(),
                mlm_probability: None,
            })
            .collect(),
        None => {
            log::warn!("`{}` is not in the embedding store", target.surface);
            Vec::new()
        }
    };
    CandidateList {
        target: target.clone(),
        provider_id: store.id().to_string(),
        candidates,
        k,
    }
}

/// Rescores every candidate with its cosine similarity to the target and
/// re-sorts. Candidates missing from the store score 0 and get the OOV flag;
/// equal scores keep their incoming order.
pub fn rerank_by_similarity(list: &CandidateList, target_surface: &str, store: &EmbeddingStore) -> CandidateList {
    if !store.contains(target_surface) {
        log::warn!("re-rank target `{target_surface}` is not in the embedding store");
    }
    let mut candidates: Vec<Candidate> = list
        .candidates
        .iter()
        .map(|c| {
            let mut out = c.clone();
            out.mlm_probability = match c.source {
                CandidateSource::Mlm => c.mlm_probability.or(Some(c.score)),
                CandidateSource::Embedding => c.mlm_probability,
            };
            match store.similarity(&c.surface, target_surface) {
                Some(sim) => out.score = sim,
                None => {
                    out.score = 0.0;
                    if !store.contains(&c.surface) {
                        out.flags.insert(CandidateFlag::Oov);
                    }
                }
            }
            out
        })
        .collect();
    candidates.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
    CandidateList {
        target: list.target.clone(),
        provider_id: list.provider_id.clone(),
        candidates,
        k: list.k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::MlmRow;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn mlm_query_rendering() {
        let tokens = crate::corpus::tokenize("تتطلب من هيئة المحكمة وجوب تحديد الحقوق", false);
        let q = build_mlm_query(&tokens, 4).unwrap();
        assert_eq!(
            q.rendered,
            "[CLS] تتطلب من هيئة المحكمة وجوب تحديد الحقوق [SEP] تتطلب من هيئة المحكمة [MASK] تحديد الحقوق [SEP]"
        );
        assert_eq!(
            build_mlm_query(&toks(&["w"]), 0).unwrap().rendered,
            "[CLS] w [SEP] [MASK] [SEP]"
        );
        assert!(build_mlm_query(&toks(&["a", "b", "c"]), 5).is_err());
    }

    struct Fixed(Vec<MlmRow>);

    impl MaskedLmProvider for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }
        fn top_k(&self, _q: &MlmQuery, k: usize) -> Result<Vec<MlmRow>, ProviderError> {
            Ok(self.0.iter().take(k).cloned().collect())
        }
    }

    fn rows(items: &[(&str, f64)]) -> Vec<MlmRow> {
        items
            .iter()
            .map(|(s, p)| MlmRow { surface: s.to_string(), probability: *p })
            .collect()
    }

    #[test]
    fn mlm_flags_and_truncation() {
        let provider = Fixed(rows(&[("ضرورة", 0.31), ("وجوب", 0.22), ("[UNK]", 0.05), ("##طلب", 0.01)]));
        let q = build_mlm_query(&toks(&["a", "b"]), 0).unwrap();
        let target = Token::bare("a", 0);
        let list = mlm_candidates(&provider, &q, 3, &target).unwrap();
        assert_eq!(list.len(), 3);
        assert!(list.candidates[2].has(CandidateFlag::Unk));
        assert!(!list.candidates[0].has(CandidateFlag::Unk));

        let list = mlm_candidates(&provider, &q, 10, &target).unwrap();
        assert_eq!(list.len(), 4);
        assert!(list.candidates[3].has(CandidateFlag::Subword));
        assert_eq!(list.provider_id, "fixed");

        let empty = Fixed(vec![]);
        assert!(mlm_candidates(&empty, &q, 10, &target).unwrap().is_empty());

        let rising = Fixed(rows(&[("a", 0.3), ("b", 0.5)]));
        assert!(matches!(
            mlm_candidates(&rising, &q, 10, &target),
            Err(ProviderError::Protocol { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap() - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
        assert!((cosine(&[1.0f32, 2.0], &[2.0f32, 4.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    fn store(text: &str) -> EmbeddingStore {
        EmbeddingStore::parse("vec", text.as_bytes()).unwrap()
    }

    #[test]
    fn embedding_neighbours() {
        let s = store("4 2\nt 1 0\ntwin 1 0\nnear 1 0.5\nfar 0 1\n");
        let list = embedding_candidates(&s, &Token::bare("t", 0), 3);
        assert_eq!(list.surfaces(), vec!["twin", "near", "far"]);
        assert!((list.candidates[0].score - 1.0).abs() < 1e-12);

        let oov = embedding_candidates(&s, &Token::bare("missing", 0), 3);
        assert!(oov.is_empty());
    }

    #[test]
    fn rerank_examples() {
        // target (1,2,2); a=(2,1,2) → 8/9, b=(1,2,2) → 1, c=(0,0,1) → 2/3
        let s = store("4 3\nt 1 2 2\na 2 1 2\nb 1 2 2\nc 0 0 1\n");
        let list = CandidateList {
            target: Token::bare("t", 0),
            provider_id: "mlm".into(),
            k: 10,
            candidates: ["c", "a", "t", "b"]
                .iter()
                .enumerate()
                .map(|(i, w)| Candidate {
                    surface: w.to_string(),
                    score: 0.4 - 0.1 * i as f64,
                    source: CandidateSource::Mlm,
                    flags: BTreeSet::new(),
                    mlm_probability: None,
                })
                .collect(),
        };
        let out = rerank_by_similarity(&list, "t", &s);
        assert_eq!(out.surfaces(), vec!["t", "b", "a", "c"]);
        assert!((out.candidates[0].score - 1.0).abs() < 1e-12);
        assert!((out.candidates[2].score - 8.0 / 9.0).abs() < 1e-12);
        assert!((out.candidates[3].score - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(out.candidates[3].mlm_probability, Some(0.4));

        let mut oov = list.clone();
        for (c, w) in oov.candidates.iter_mut().zip(["x", "y", "z", "w"]) {
            c.surface = w.into();
        }
        let out = rerank_by_similarity(&oov, "t", &s);
        assert_eq!(out.surfaces(), vec!["x", "y", "z", "w"]);
        assert!(out.candidates.iter().all(|c| c.score == 0.0 && c.has(CandidateFlag::Oov)));
    }

    proptest! {
        #[test]
        fn rendered_query_reparses(words in prop::collection::vec("[a-z]{1,5}", 1..10), idx in any::<prop::sample::Index>()) {
            let i = idx.index(words.len());
            let q = build_mlm_query(&words, i).unwrap();
            let parts: Vec<&str> = q.rendered.split(' ').collect();
            prop_assert_eq!(parts[0], CLS_TOKEN);
            prop_assert_eq!(*parts.last().unwrap(), SEP_TOKEN);
            let sep = parts.iter().position(|p| *p == SEP_TOKEN).unwrap();
            prop_assert_eq!(&parts[1..sep], &words.iter().map(String::as_str).collect::<Vec<_>>()[..]);
            prop_assert_eq!(&parts[sep + 1..parts.len() - 1], &q.masked.iter().map(String::as_str).collect::<Vec<_>>()[..]);
            for (j, (o, m)) in q.original.iter().zip(&q.masked).enumerate() {
                prop_assert_eq!(o == m, j != i);
            }
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            u in prop::collection::vec(-10.0f64..10.0, 1..20),
            seed in prop::collection::vec(-10.0f64..10.0, 20),
            alpha in 0.01f64..100.0,
        ) {
            let v = &seed[..u.len()];
            let c = cosine(&u, v).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert!((c - cosine(v, &u).unwrap()).abs() <= 1e-12);
            let scaled: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            prop_assert!((c - cosine(&scaled, v).unwrap()).abs() <= 1e-9);
        }
    }
}

//! Substitute selection and sentence simplification.
//!
//! Rule 1 gates the masked-LM list: an empty list or an unknown-token top
//! candidate sends the decision to the embedding list. Rules 2 and 3 filter
//! candidates (lemma/POS/number agreement, then CEFR level no harder than the
//! target). Rule 4 never filters by default; it stamps the chosen substitute
//! as gloss-confirmed or unconfirmed.
//!
//! Three variants are produced per sentence:
//!
//! * `mlm`: masked-LM list in probability order, no fallback.
//! * `embedding`: nearest-neighbour list only.
//! * `combined`: Rule 1 picks the seed list; a surviving masked-LM list is
//!   re-ranked by cosine similarity to the target before filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cwi::{CefrLevel, CefrLexicon, TargetQueue, Token};
use crate::providers::{MaskedLmProvider, MorphAnalysis, MorphologyProvider, ProviderError};
use crate::substitution::{
    build_mlm_query, embedding_candidates, mlm_candidates, rerank_by_similarity, Candidate,
    CandidateFlag, CandidateList, EmbeddingStore,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mlm,
    Embedding,
    Combined,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Mlm, Variant::Embedding, Variant::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mlm => "mlm",
            Variant::Embedding => "embedding",
            Variant::Combined => "combined",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mlm" | "bert" => Ok(Variant::Mlm),
            "embedding" | "fasttext" => Ok(Variant::Embedding),
            "combined" => Ok(Variant::Combined),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStep {
    pub rule: RuleId,
    pub input_size: usize,
    pub output_size: usize,
    pub verdict: String,
}

/// Rule outcomes for one target within one variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub target_index: usize,
    pub steps: Vec<RuleStep>,
}

impl RuleTrace {
    fn new(target_index: usize) -> Self {
        Self {
            target_index,
            steps: Vec::new(),
        }
    }

    fn push(&mut self, rule: RuleId, input_size: usize, output_size: usize, verdict: impl Into<String>) {
        self.steps.push(RuleStep {
            rule,
            input_size,
            output_size,
            verdict: verdict.into(),
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Confidence {
    GlossConfirmed,
    Unconfirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub target_index: usize,
    pub original_surface: String,
    pub substitute_surface: String,
    pub source: Variant,
    pub confidence: Confidence,
    /// Cosine similarity between substitute and target in the vector store;
    /// 0 when either word is missing.
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule1Verdict {
    #[serde(rename = "use-mlm")]
    UseMlm,
    #[serde(rename = "fallback-embedding")]
    FallbackEmbedding,
}

/// A candidate that passed Rule 2, with its morphology and (after Rule 3)
/// its CEFR level.
#[derive(Debug, Clone, PartialEq)]
pub struct Vetted {
    pub candidate: Candidate,
    pub analysis: MorphAnalysis,
    pub level: Option<CefrLevel>,
}

/// Shared resources for selection.
pub struct SelectionContext<'a> {
    pub morph: &'a dyn MorphologyProvider,
    pub lexicon: &'a CefrLexicon,
    pub store: &'a EmbeddingStore,
    /// Turns Rule 4 into a filter.
    pub require_gloss: bool,
}

/// Drops `##` fragments; they never reach the rules.
pub fn strip_subwords(list: &CandidateList) -> CandidateList {
    CandidateList {
        candidates: list
            .candidates
            .iter()
            .filter(|c| !c.has(CandidateFlag::Subword))
            .cloned()
            .collect(),
        ..list.clone()
    }
}

/// Expects subword fragments to be removed already.
pub fn rule1_unk_fallback(mlm: &CandidateList) -> Rule1Verdict {
    match mlm.top() {
        Some(top) if !top.has(CandidateFlag::Unk) => Rule1Verdict::UseMlm,
        _ => Rule1Verdict::FallbackEmbedding,
    }
}

/// Keeps candidates whose lemma differs from the target's and whose POS and
/// number agree with it. A candidate identical to the target surface counts
/// as sharing its lemma. Candidates the analyzer fails on are dropped; only a
/// transport failure (the analyzer being unreachable) is returned as an
/// error.
pub fn rule2_lemma_pos_filter(
    candidates: &[Candidate],
    target: &Token,
    morph: &dyn MorphologyProvider,
) -> Result<Vec<Vetted>, ProviderError> {
    let mut kept = Vec::new();
    for candidate in candidates {
        let analysis = match morph.analyze(std::slice::from_ref(&candidate.surface)) {
            Ok(mut a) if a.len() == 1 => a.remove(0),
            Ok(_) => {
                log::warn!("no single analysis for candidate `{}`; dropped", candidate.surface);
                continue;
            }
            Err(e @ ProviderError::Transport { .. }) => return Err(e),
            Err(e) => {
                log::warn!("analysis of candidate `{}` failed ({e}); dropped", candidate.surface);
                continue;
            }
        };
        let same_lemma = candidate.surface == target.surface || analysis.lemma == target.lemma;
        let agrees = analysis.pos == target.pos && analysis.number.agrees_with(target.number);
        if !same_lemma && agrees {
            kept.push(Vetted {
                candidate: candidate.clone(),
                analysis,
                level: None,
            });
        }
    }
    Ok(kept)
}

/// Keeps candidates no harder than the target. Levels come from the lexicon
/// (surface, then lemma, then the default level); an unresolved target level
/// also takes the default.
pub fn rule3_level_filter(candidates: Vec<Vetted>, target: &Token, lexicon: &CefrLexicon) -> Vec<Vetted> {
    let ceiling = target.level.or(lexicon.default_level);
    candidates
        .into_iter()
        .filter_map(|mut v| {
            let level = lexicon.level_of(&v.candidate.surface, Some(&v.analysis.lemma));
            v.level = Some(level);
            (level <= ceiling).then_some(v)
        })
        .collect()
}

fn normalize_gloss(gloss: &str) -> String {
    gloss
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn gloss_set<'a>(glosses: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
    glosses
        .into_iter()
        .map(|g| normalize_gloss(g))
        .filter(|g| !g.is_empty())
        .collect()
}

/// Confirmed when the normalized gloss sets share at least one full gloss.
pub fn rule4_gloss_confidence(candidate: &MorphAnalysis, target: &Token) -> Confidence {
    let ours = gloss_set(&candidate.glosses);
    let theirs = gloss_set(&target.glosses);
    if ours.intersection(&theirs).next().is_some() {
        Confidence::GlossConfirmed
    } else {
        Confidence::Unconfirmed
    }
}

/// Decision for one target in one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub replacement: Option<Replacement>,
    pub substitute_level: Option<CefrLevel>,
    pub trace: RuleTrace,
}

fn filter_and_pick(
    variant: Variant,
    seed: &[Candidate],
    target: &Token,
    ctx: &SelectionContext<'_>,
    mut trace: RuleTrace,
) -> Result<Decision, ProviderError> {
    let usable: Vec<Candidate> = seed
        .iter()
        .filter(|c| !c.has(CandidateFlag::Unk) && !c.has(CandidateFlag::Subword))
        .cloned()
        .collect();
    let after_r2 = rule2_lemma_pos_filter(&usable, target, ctx.morph)?;
    trace.push(
        RuleId::R2,
        usable.len(),
        after_r2.len(),
        format!("kept {} of {}", after_r2.len(), usable.len()),
    );
    let r3_in = after_r2.len();
    let mut survivors = rule3_level_filter(after_r2, target, ctx.lexicon);
    trace.push(
        RuleId::R3,
        r3_in,
        survivors.len(),
        format!("kept {} of {}", survivors.len(), r3_in),
    );

    let r4_in = survivors.len();
    if ctx.require_gloss {
        survivors.retain(|v| rule4_gloss_confidence(&v.analysis, target) == Confidence::GlossConfirmed);
    }
    let Some(chosen) = survivors.into_iter().next() else {
        trace.push(RuleId::R4, r4_in, 0, "keep-original");
        return Ok(Decision {
            replacement: None,
            substitute_level: None,
            trace,
        });
    };
    let confidence = rule4_gloss_confidence(&chosen.analysis, target);
    trace.push(
        RuleId::R4,
        r4_in,
        1,
        match confidence {
            Confidence::GlossConfirmed => "gloss-confirmed",
            Confidence::Unconfirmed => "unconfirmed",
        },
    );
    let surface = chosen.candidate.surface;
    Ok(Decision {
        replacement: Some(Replacement {
            target_index: target.index,
            similarity: ctx.store.similarity(&surface, &target.surface).unwrap_or(0.0),
            original_surface: target.surface.clone(),
            substitute_surface: surface,
            source: variant,
            confidence,
        }),
        substitute_level: chosen.level,
        trace,
    })
}

/// Runs one variant's rule chain for one target. `mlm` is the raw provider
/// list (ignored by the embedding variant).
pub fn select_for_variant(
    variant: Variant,
    target: &Token,
    mlm: &CandidateList,
    emb: &CandidateList,
    ctx: &SelectionContext<'_>,
) -> Result<Decision, ProviderError> {
    let mut trace = RuleTrace::new(target.index);
    if variant == Variant::Embedding {
        return filter_and_pick(variant, &emb.candidates, target, ctx, trace);
    }

    let mlm = strip_subwords(mlm);
    let verdict = rule1_unk_fallback(&mlm);
    let label = match verdict {
        Rule1Verdict::UseMlm => "use-mlm",
        Rule1Verdict::FallbackEmbedding => "fallback-embedding",
    };
    match (variant, verdict) {
        (Variant::Mlm, Rule1Verdict::UseMlm) => {
            trace.push(RuleId::R1, mlm.len(), mlm.len(), label);
            filter_and_pick(variant, &mlm.candidates, target, ctx, trace)
        }
        (Variant::Mlm, Rule1Verdict::FallbackEmbedding) => {
            trace.push(RuleId::R1, mlm.len(), 0, label);
            Ok(Decision {
                replacement: None,
                substitute_level: None,
                trace,
            })
        }
        (_, Rule1Verdict::UseMlm) => {
            trace.push(RuleId::R1, mlm.len(), mlm.len(), label);
            let reranked = rerank_by_similarity(&mlm, &target.surface, ctx.store);
            filter_and_pick(variant, &reranked.candidates, target, ctx, trace)
        }
        (_, Rule1Verdict::FallbackEmbedding) => {
            trace.push(RuleId::R1, mlm.len(), emb.len(), label);
            filter_and_pick(variant, &emb.candidates, target, ctx, trace)
        }
    }
}

/// Decisions for all three variants from the same pair of lists.
pub fn select_substitute(
    target: &Token,
    mlm: &CandidateList,
    emb: &CandidateList,
    ctx: &SelectionContext<'_>,
) -> Result<BTreeMap<Variant, Decision>, ProviderError> {
    Variant::ALL
        .iter()
        .map(|v| Ok((*v, select_for_variant(*v, target, mlm, emb, ctx)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantStatus {
    Complete,
    /// A provider failed; only the targets before the failure were processed.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutput {
    pub tokens: Vec<String>,
    pub replacements: Vec<Replacement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<RuleTrace>,
    /// Hardest remaining level over word tokens.
    pub readability: Option<CefrLevel>,
    pub status: VariantStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplificationResult {
    pub sentence_id: String,
    pub input: Vec<String>,
    pub variants: BTreeMap<Variant, VariantOutput>,
}

impl SimplificationResult {
    pub fn is_partial(&self) -> bool {
        self.variants.values().any(|v| v.status == VariantStatus::Partial)
    }
}

/// Everything `simplify_sentence` needs beyond the sentence itself.
pub struct PipelineContext<'a> {
    pub selection: SelectionContext<'a>,
    pub mlm: &'a dyn MaskedLmProvider,
    pub k: usize,
}

fn readability(tokens: &[Token], levels: &[CefrLevel]) -> Option<CefrLevel> {
    tokens
        .iter()
        .zip(levels)
        .filter(|(t, _)| t.surface.chars().any(char::is_alphabetic))
        .map(|(_, l)| *l)
        .filter(|l| l.is_known())
        .max_by_key(|l| l.rank())
}

/// Simplifies one sentence, target by target, hardest first. Within a
/// variant substitutions accumulate: the masked-LM query for a later target
/// sees the earlier substitutions.
pub fn simplify_sentence(
    sentence_id: &str,
    tokens: &[Token],
    queue: &TargetQueue,
    ctx: &PipelineContext<'_>,
    variants: &[Variant],
) -> SimplificationResult {
    let input: Vec<String> = tokens.iter().map(|t| t.surface.clone()).collect();
    let default_level = ctx.selection.lexicon.default_level;
    let mut out = BTreeMap::new();

    for &variant in variants {
        let mut state = input.clone();
        let mut levels: Vec<CefrLevel> = tokens.iter().map(|t| t.level).collect();
        let mut replacements = Vec::new();
        let mut traces = Vec::new();
        let mut failure = None;

        for index in queue.indices() {
            let Some(target) = tokens.get(index) else {
                failure = Some(format!("target index {index} out of range"));
                break;
            };
            let emb = embedding_candidates(ctx.selection.store, target, ctx.k);
            let mlm = if variant == Variant::Embedding {
                CandidateList::empty(target.clone(), ctx.mlm.id(), ctx.k)
            } else {
                let query = build_mlm_query(&state, index).expect("index checked above");
                match mlm_candidates(ctx.mlm, &query, ctx.k, target) {
                    Ok(list) => list,
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            };
            match select_for_variant(variant, target, &mlm, &emb, &ctx.selection) {
                Ok(decision) => {
                    if let Some(rep) = decision.replacement {
                        state[index] = rep.substitute_surface.clone();
                        levels[index] = decision.substitute_level.unwrap_or(default_level);
                        replacements.push(rep);
                    }
                    traces.push(decision.trace);
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }

        if let Some(e) = &failure {
            log::warn!("sentence {sentence_id}, variant {variant}: {e}");
        }
        out.insert(
            variant,
            VariantOutput {
                readability: readability(tokens, &levels),
                tokens: state,
                replacements,
                traces,
                status: if failure.is_some() {
                    VariantStatus::Partial
                } else {
                    VariantStatus::Complete
                },
                error: failure,
            },
        );
    }

    SimplificationResult {
        sentence_id: sentence_id.to_string(),
        input,
        variants: out,
    }
}

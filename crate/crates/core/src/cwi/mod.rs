//! Complex word identification: CEFR level assignment, target ordering and
//! masked sentence construction.

mod level;
mod syllables;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{is_punctuation, normalize_arabic};
use crate::providers::{GramNumber, MorphAnalysis, MorphologyProvider, ProviderError};
use crate::substitution::MASK_TOKEN;

pub use level::{CefrLevel, ParseLevelError};
pub use syllables::{count_syllables, SyllableCount};

#[derive(Debug, Error)]
pub enum CwiError {
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: expected `entry<TAB>level`")]
    MalformedEntry { line: usize },
    #[error("lexicon line {line}: {source}")]
    BadLevel {
        line: usize,
        #[source]
        source: ParseLevelError,
    },
    #[error("target index {index} out of range for a sentence of {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
}

/// One analysed word of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub index: usize,
    pub diacritized: String,
    pub lemma: String,
    pub pos: String,
    pub number: GramNumber,
    pub glosses: BTreeSet<String>,
    pub level: CefrLevel,
    pub syllables: u32,
}

impl Token {
    /// A token with no morphological features and an unresolved level.
    pub fn bare(surface: impl Into<String>, index: usize) -> Self {
        let surface = surface.into();
        let syllables = count_syllables(&surface).count;
        Self {
            diacritized: surface.clone(),
            surface,
            index,
            lemma: String::new(),
            pos: "UNK".into(),
            number: GramNumber::Unspecified,
            glosses: BTreeSet::new(),
            level: CefrLevel::Unknown,
            syllables,
        }
    }

    pub fn from_analysis(surface: impl Into<String>, index: usize, analysis: &MorphAnalysis) -> Self {
        let surface = surface.into();
        let diacritized = if analysis.diacritized.is_empty() {
            surface.clone()
        } else {
            analysis.diacritized.clone()
        };
        let syllables = if surface.chars().all(is_punctuation) {
            0
        } else {
            count_syllables(&diacritized).count
        };
        Self {
            surface,
            index,
            diacritized,
            lemma: analysis.lemma.clone(),
            pos: analysis.pos.clone(),
            number: analysis.number,
            glosses: analysis.glosses.iter().cloned().collect(),
            level: CefrLevel::Unknown,
            syllables,
        }
    }
}

/// Word list mapping surfaces or lemmas to CEFR levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CefrLexicon {
    entries: HashMap<String, CefrLevel>,
    pub default_level: CefrLevel,
    normalize: bool,
}

impl CefrLexicon {
    pub fn new(default_level: CefrLevel) -> Self {
        Self {
            entries: HashMap::new(),
            default_level,
            normalize: false,
        }
    }

    /// Folds alef and teh marbuta variants on both insert and lookup.
    pub fn with_normalization(mut self, normalize: bool) -> Self {
        if normalize != self.normalize {
            self.normalize = normalize;
            let entries = std::mem::take(&mut self.entries);
            for (k, v) in entries {
                self.insert(&k, v);
            }
        }
        self
    }

    fn key(&self, word: &str) -> String {
        if self.normalize {
            normalize_arabic(word)
        } else {
            word.to_string()
        }
    }

    /// Returns the previous level if the entry was already present.
    pub fn insert(&mut self, word: &str, level: CefrLevel) -> Option<CefrLevel> {
        let key = self.key(word);
        self.entries.insert(key, level)
    }

    pub fn get(&self, word: &str) -> Option<CefrLevel> {
        self.entries.get(&self.key(word)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Surface first, then lemma, then the default level.
    pub fn level_of(&self, surface: &str, lemma: Option<&str>) -> CefrLevel {
        self.get(surface)
            .or_else(|| lemma.filter(|l| !l.is_empty()).and_then(|l| self.get(l)))
            .unwrap_or(self.default_level)
            .or(self.default_level)
    }

    /// Parses `entry<TAB>level` lines. Blank lines and `#` comments are
    /// skipped; for duplicate entries the last one wins.
    pub fn parse(text: &str, default_level: CefrLevel) -> Result<Self, CwiError> {
        let mut lexicon = Self::new(default_level);
        let text = text.strip_prefix('\u{FEFF}').unwrap_or(text);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (entry, level) = trimmed
                .split_once('\t')
                .ok_or(CwiError::MalformedEntry { line })?;
            let entry = entry.trim();
            if entry.is_empty() {
                return Err(CwiError::MalformedEntry { line });
            }
            let level = level
                .parse()
                .map_err(|source| CwiError::BadLevel { line, source })?;
            if let Some(previous) = lexicon.insert(entry, level) {
                log::warn!("lexicon line {line}: duplicate entry `{entry}` ({previous} replaced by {level})");
            }
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path, default_level: CefrLevel) -> Result<Self, CwiError> {
        let text = std::fs::read_to_string(path).map_err(|source| CwiError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, default_level)
    }
}

pub fn assign_level(token: &Token, lexicon: &CefrLexicon) -> CefrLevel {
    lexicon.level_of(&token.surface, Some(&token.lemma))
}

/// Analyses and levels a tokenized sentence. Tokens without letters
/// (punctuation, digits) keep `Unknown` and so never become targets.
pub fn analyze_sentence(
    words: &[String],
    morph: &dyn MorphologyProvider,
    lexicon: &CefrLexicon,
) -> Result<Vec<Token>, ProviderError> {
    let analyses = morph.analyze(words)?;
    Ok(words
        .iter()
        .zip(&analyses)
        .enumerate()
        .map(|(i, (w, a))| {
            let mut token = Token::from_analysis(w.as_str(), i, a);
            if w.chars().any(char::is_alphabetic) {
                token.level = assign_level(&token, lexicon);
            }
            token
        })
        .collect())
}

/// Token indices to simplify, hardest first and left to right within a level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetQueue {
    pub entries: Vec<(usize, CefrLevel)>,
}

impl TargetQueue {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn identify_complex(tokens: &[Token], threshold: CefrLevel) -> TargetQueue {
    let mut entries: Vec<(usize, CefrLevel)> = tokens
        .iter()
        .filter(|t| t.level >= threshold)
        .map(|t| (t.index, t.level))
        .collect();
    entries.sort_by(|a, b| b.1.rank().cmp(&a.1.rank()).then(a.0.cmp(&b.0)));
    TargetQueue { entries }
}

/// One copy of the sentence per queued target, with the target replaced by
/// the mask literal.
pub fn mask_variants(
    tokens: &[String],
    queue: &TargetQueue,
) -> Result<Vec<(usize, Vec<String>)>, CwiError> {
    queue
        .indices()
        .map(|index| {
            if index >= tokens.len() {
                return Err(CwiError::IndexOutOfRange {
                    index,
                    len: tokens.len(),
                });
            }
            let mut masked = tokens.to_vec();
            masked[index] = MASK_TOKEN.to_string();
            Ok((index, masked))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn leveled(levels: &[CefrLevel]) -> Vec<Token> {
        levels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut t = Token::bare(format!("w{i}"), i);
                t.level = *l;
                t
            })
            .collect()
    }

    #[test]
    fn lookup_order() {
        let lex = CefrLexicon::parse("# comment\nكتاب\tA1\nوجب\tB2\n\n", CefrLevel::C2).unwrap();
        let mut t = Token::bare("كتاب", 0);
        assert_eq!(assign_level(&t, &lex), CefrLevel::A1);
        t.surface = "وجوب".into();
        t.lemma = "وجب".into();
        assert_eq!(assign_level(&t, &lex), CefrLevel::B2);
        t.lemma = "غير".into();
        assert_eq!(assign_level(&t, &lex), CefrLevel::C2);
    }

    #[test]
    fn lexicon_duplicates_and_errors() {
        let lex = CefrLexicon::parse("a\tA1\na\tB2\n", CefrLevel::C2).unwrap();
        assert_eq!(lex.get("a"), Some(CefrLevel::B2));
        assert_eq!(lex.len(), 1);
        assert!(matches!(
            CefrLexicon::parse("a A1\n", CefrLevel::C2),
            Err(CwiError::MalformedEntry { line: 1 })
        ));
        assert!(matches!(
            CefrLexicon::parse("a\tA1\nb\tZ9\n", CefrLevel::C2),
            Err(CwiError::BadLevel { line: 2, .. })
        ));
    }

    #[test]
    fn normalized_lexicon() {
        let lex = CefrLexicon::parse("أحمد\tA1\n", CefrLevel::C2)
            .unwrap()
            .with_normalization(true);
        assert_eq!(lex.get("احمد"), Some(CefrLevel::A1));
        assert_eq!(lex.get("إحمد"), Some(CefrLevel::A1));
    }

    #[test]
    fn queue_orders_hardest_first() {
        use CefrLevel::*;
        let q = identify_complex(&leveled(&[B2, C2, C1]), B2);
        assert_eq!(q.entries, vec![(1, C2), (2, C1), (0, B2)]);

        assert!(identify_complex(&leveled(&[A1, A1, A1]), B1).is_empty());

        let q = identify_complex(&leveled(&[A1, C1, A2, C1]), C1);
        assert_eq!(q.indices().collect::<Vec<_>>(), vec![1, 3]);

        let q = identify_complex(&leveled(&[Unknown, C2]), A1);
        assert_eq!(q.indices().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn masking() {
        let toks: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let q = TargetQueue {
            entries: vec![(1, CefrLevel::C1)],
        };
        assert_eq!(
            mask_variants(&toks, &q).unwrap(),
            vec![(1, vec!["a".to_string(), "[MASK]".into(), "c".into()])]
        );
        assert!(mask_variants(&toks, &TargetQueue::default()).unwrap().is_empty());
        let bad = TargetQueue {
            entries: vec![(5, CefrLevel::C1)],
        };
        assert!(mask_variants(&toks, &bad).is_err());
    }

    fn any_named() -> impl Strategy<Value = CefrLevel> {
        prop::sample::select(CefrLevel::NAMED.to_vec())
    }

    proptest! {
        #[test]
        fn removing_unqueued_token_keeps_queue_order(
            levels in prop::collection::vec(any_named(), 1..20),
            threshold in any_named(),
            drop in any::<prop::sample::Index>(),
        ) {
            let tokens = leveled(&levels);
            let full: Vec<usize> = identify_complex(&tokens, threshold).indices().collect();
            let d = drop.index(tokens.len());
            prop_assume!(!full.contains(&d));
            let reduced: Vec<Token> = tokens.iter().filter(|t| t.index != d).cloned().collect();
            let after: Vec<usize> = identify_complex(&reduced, threshold).indices().collect();
            prop_assert_eq!(after, full);
        }

        #[test]
        fn assigned_level_is_never_unknown(default in any_named(), word in "[a-c]{1,3}") {
            let lex = CefrLexicon::parse("a\tA1\nb\tUNKNOWN\n", default).unwrap();
            prop_assert!(assign_level(&Token::bare(word, 0), &lex).is_known());
        }

        #[test]
        fn masking_preserves_length(n in 1usize..15, picks in prop::collection::vec(0usize..15, 0..5)) {
            let toks: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let q = TargetQueue { entries: picks.iter().filter(|p| **p < n).map(|p| (*p, CefrLevel::C1)).collect() };
            for (i, masked) in mask_variants(&toks, &q).unwrap() {
                prop_assert_eq!(masked.len(), n);
                prop_assert_eq!(&masked[i], MASK_TOKEN);
            }
        }
    }
}

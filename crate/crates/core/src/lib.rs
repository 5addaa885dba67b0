//! Sentence-level lexical simplification toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] ingests parallel complex/simple corpora with word alignments and
//!   labels every token with an edit operation (delete, add, replace, rewrite).
//! * [`cwi`] assigns CEFR levels and picks the words to simplify, hardest first.
//! * [`substitution`] generates candidates from a masked language model and from
//!   a word-vector store, and re-ranks them by cosine similarity.
//! * [`selection`] runs the filtering rules and produces three simplified
//!   variants of every sentence.
//! * [`evaluation`] scores system output with greedy embedding matching and
//!   aggregates manual annotations.
//! * [`providers`] is the seam to every external model: morphology, masked LM,
//!   token encoder and generator, each reachable through a fixture replay file
//!   or over HTTP.

pub mod corpus;
pub mod cwi;
pub mod evaluation;
pub mod providers;
pub mod selection;
pub mod substitution;

pub use corpus::{tokenize, EditKind, EditOp, SentencePair};
pub use cwi::{CefrLevel, CefrLexicon, Token};
pub use evaluation::ScoreTriple;
pub use selection::{SimplificationResult, Variant};
pub use substitution::{Candidate, CandidateList, EmbeddingStore};

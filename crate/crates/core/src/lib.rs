//! Rank regulatory device categories against free-text device descriptions
//! by sentence-embedding similarity, and flag descriptions whose claimed
//! category ranks implausibly low.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod app;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod lexicon;
pub mod rank;
pub mod scalar;

pub use corpus::{LabelCorpus, LabelEntry, TargetRecord, TargetSet, TokenizedDoc};
pub use embed::{EmbedError, EmbeddingBackend, Role, RoleAssignment, Side};
pub use eval::{EvalConfig, EvalReport};
pub use lexicon::Lexicon;
pub use rank::{RankResult, Ranking, ScoredLabel};
pub use scalar::Scalar;

pub type Embedding = embed::SentenceEmbedding<f64>;
pub type Embedding32 = embed::SentenceEmbedding<f32>;
pub type Index = rank::SimilarityIndex<f64>;
pub type Index32 = rank::SimilarityIndex<f32>;
pub type WordVectors = embed::WordVectorTable<f64>;
pub type WordVectors32 = embed::WordVectorTable<f32>;
pub type BagBackend = embed::BagOfVectors<f64>;
pub type BagBackend32 = embed::BagOfVectors<f32>;
pub type Store = embed::EmbeddingStore<f64>;
pub type Store32 = embed::EmbeddingStore<f32>;

//! Sentence embeddings from three interchangeable backends.
//!
//! * [`BagOfVectors`]: TF-IDF weighted mean of word vectors, with optional
//!   hashed character n-gram fallback for out-of-vocabulary words.
//! * [`ExternalBackend`]: any HTTP embedding server speaking the JSON
//!   request/response schema in [`external`].
//! * [`PrecomputedBackend`]: id-keyed vectors loaded from disk, used to replay
//!   runs without the model that produced them.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub mod bag;
pub mod external;
pub mod precomputed;
pub mod vectors;

pub use bag::{embed_bag, BagEmbedding, BagOfVectors};
pub use external::{
    embed_external, ExternalBackend, HttpResponse, ProviderConfig, ReqwestTransport, Transport,
};
pub use precomputed::{load_precomputed, EmbeddingStore, PrecomputedBackend};
pub use vectors::{
    load_word_vectors, ngram_hash, subword_ngrams, SubwordBuckets, WordVectorTable,
    DEFAULT_BUCKET_COUNT, DEFAULT_MAX_N, DEFAULT_MIN_N,
};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{source_name}:{line}: row {id:?} has {found} components, expected {expected}")]
    MixedDimension {
        source_name: String,
        line: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unembeddable document(s) {doc_ids:?}; tokens without a vector: {skipped:?}")]
    Unembeddable {
        doc_ids: Vec<String>,
        skipped: Vec<String>,
    },
    #[error("embedding for {doc_id:?} has a non-finite component")]
    NonFinite { doc_id: String },
    #[error("no precomputed embedding for id {id:?}")]
    MissingId { id: String },
    #[error("provider contract violated: {0}")]
    Contract(String),
    #[error("transport failure after {attempts} attempt(s) (last status {status:?}): {message}")]
    Transport {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, EmbedError>;

/// Which side of an asymmetric embedding space a vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Query,
    Document,
    Symmetric,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Query => "query",
            Role::Document => "document",
            Role::Symmetric => "symmetric",
        }
    }

    /// Whether a vector in role `self` may be scored against one in `other`.
    /// Symmetric spaces pair with themselves; asymmetric spaces pair across.
    pub fn pairs_with(self, other: Role) -> bool {
        match (self, other) {
            (Role::Symmetric, Role::Symmetric) => true,
            (Role::Symmetric, _) | (_, Role::Symmetric) => false,
            (a, b) => a != b,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fixed-dimension sentence vector tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding<S> {
    vector: Vec<S>,
    backend_id: Arc<str>,
    role: Role,
}

impl<S: Scalar> SentenceEmbedding<S> {
    pub fn new(vector: Vec<S>, backend_id: Arc<str>, role: Role) -> Option<Self> {
        vector.iter().all(|v| v.is_finite()).then_some(Self {
            vector,
            backend_id,
            role,
        })
    }

    pub fn vector(&self) -> &[S] {
        &self.vector
    }

    pub fn into_vector(self) -> Vec<S> {
        self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

/// Which corpus an input belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Label,
    Target,
}

/// Role given to each side of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub labels: Role,
    pub targets: Role,
}

impl RoleAssignment {
    pub const SYMMETRIC: RoleAssignment = RoleAssignment {
        labels: Role::Symmetric,
        targets: Role::Symmetric,
    };

    /// Labels indexed as documents, targets issued as queries.
    pub const RETRIEVAL: RoleAssignment = RoleAssignment {
        labels: Role::Document,
        targets: Role::Query,
    };

    /// Category descriptions embedded as queries and device descriptions
    /// as documents, the direction used for the published results.
    pub const LABELS_AS_QUERIES: RoleAssignment = RoleAssignment {
        labels: Role::Query,
        targets: Role::Document,
    };

    pub fn role(&self, side: Side) -> Role {
        match side {
            Side::Label => self.labels,
            Side::Target => self.targets,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedInput<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

/// A source of sentence embeddings.
///
/// Repeated calls with the same inputs return bitwise-identical vectors.
pub trait EmbeddingBackend<S: Scalar>: Send + Sync {
    fn backend_id(&self) -> &str;

    /// Declared dimension, if known before the first call.
    fn dim(&self) -> Option<usize>;

    fn supports_asymmetric(&self) -> bool;

    fn embed(&self, inputs: &[EmbedInput<'_>], side: Side) -> Result<Vec<SentenceEmbedding<S>>>;
}

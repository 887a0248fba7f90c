use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    EmbedError, EmbedInput, EmbeddingBackend, Result, Role, SentenceEmbedding, Side,
    WordVectorTable,
};
use crate::corpus::TokenizedDoc;
use crate::lexicon::Lexicon;
use crate::scalar::Scalar;

pub const BAG_BACKEND_ID: &str = "bag_of_vectors";

/// A weighted-mean sentence vector plus the tokens that had no vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BagEmbedding<S> {
    pub embedding: SentenceEmbedding<S>,
    pub skipped: Vec<String>,
}

/// Weighted mean of the word vectors of `doc`'s weighted tokens:
/// `sum(w_t * v_t) / sum(w_t)` over tokens that resolve to a vector.
///
/// Fails rather than returning a zero vector when nothing resolves.
pub fn embed_bag<S: Scalar>(
    doc: &TokenizedDoc,
    weights: &BTreeMap<String, S>,
    table: &WordVectorTable<S>,
    backend_id: Arc<str>,
) -> Result<BagEmbedding<S>> {
    let mut acc = vec![S::zero(); table.dim()];
    let mut total = S::zero();
    let mut skipped = Vec::new();
    for (token, &w) in weights {
        match table.resolve(token) {
            Some(v) => {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a = *a + w * x;
                }
                total = total + w;
            }
            None => skipped.push(token.clone()),
        }
    }
    let unembeddable = || EmbedError::Unembeddable {
        doc_ids: vec![doc.doc_id.clone()],
        skipped: skipped.clone(),
    };
    if total <= S::zero() {
        return Err(unembeddable());
    }
    let vector: Vec<S> = acc.into_iter().map(|a| a / total).collect();
    if vector.iter().all(|v| v.is_zero()) {
        return Err(unembeddable());
    }
    let embedding =
        SentenceEmbedding::new(vector, backend_id, Role::Symmetric).ok_or_else(|| {
            EmbedError::NonFinite {
                doc_id: doc.doc_id.clone(),
            }
        })?;
    Ok(BagEmbedding { embedding, skipped })
}

/// TF-IDF weighted word-vector averaging over a fixed lexicon.
#[derive(Debug, Clone)]
pub struct BagOfVectors<S> {
    id: Arc<str>,
    table: Arc<WordVectorTable<S>>,
    lexicon: Arc<Lexicon>,
}

impl<S: Scalar> BagOfVectors<S> {
    pub fn new(table: Arc<WordVectorTable<S>>, lexicon: Arc<Lexicon>) -> Self {
        Self {
            id: Arc::from(BAG_BACKEND_ID),
            table,
            lexicon,
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn embed_text(&self, id: &str, text: &str) -> Result<BagEmbedding<S>> {
        let doc = TokenizedDoc::new(id, text);
        let weights = self.lexicon.tfidf_weights::<S>(&doc);
        embed_bag(&doc, &weights, &self.table, self.id.clone())
    }
}

impl<S: Scalar> EmbeddingBackend<S> for BagOfVectors<S> {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> Option<usize> {
        Some(self.table.dim())
    }

    fn supports_asymmetric(&self) -> bool {
        false
    }

    /// Embeds every input; all unembeddable ids are reported together.
    fn embed(&self, inputs: &[EmbedInput<'_>], _side: Side) -> Result<Vec<SentenceEmbedding<S>>> {
        let mut out = Vec::with_capacity(inputs.len());
        let mut failed = Vec::new();
        let mut skipped = Vec::new();
        for input in inputs {
            match self.embed_text(input.id, input.text) {
                Ok(bag) => out.push(bag.embedding),
                Err(EmbedError::Unembeddable {
                    doc_ids,
                    skipped: s,
                }) => {
                    failed.extend(doc_ids);
                    skipped.extend(s);
                }
                Err(e) => return Err(e),
            }
        }
        if failed.is_empty() {
            Ok(out)
        } else {
            skipped.sort();
            skipped.dedup();
            Err(EmbedError::Unembeddable {
                doc_ids: failed,
                skipped,
            })
        }
    }
}

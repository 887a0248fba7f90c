//! Id-keyed embeddings stored in the word-vector text format.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::vectors::{open, write_rows, RowLengthPolicy, RowReader};
use super::{
    EmbedError, EmbedInput, EmbeddingBackend, Result, RoleAssignment, SentenceEmbedding, Side,
};
use crate::scalar::Scalar;

pub const PRECOMPUTED_BACKEND_ID: &str = "precomputed";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<S> {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<S>,
}

impl<S: Scalar> EmbeddingStore<S> {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(EmbedError::Parameter("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    pub fn push(&mut self, id: &str, vector: &[S]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(EmbedError::Parameter(format!(
                "{id:?} has {} components, store dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if self.index.contains_key(id) {
            return Err(EmbedError::Parameter(format!("duplicate id {id:?}")));
        }
        self.index.insert(id.to_owned(), self.ids.len());
        self.ids.push(id.to_owned());
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn from_reader(reader: impl Read, source_name: &str) -> Result<Self> {
        let rows = RowReader::new(reader, source_name, RowLengthPolicy::MixedDimension)?;
        let mut store = Self::new(rows.dim())?;
        rows.for_each(|line, id, v: Vec<S>| {
            store.push(id, &v).map_err(|e| EmbedError::Parse {
                source_name: source_name.to_owned(),
                line,
                message: e.to_string(),
            })
        })?;
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Result<&[S]> {
        let row = *self
            .index
            .get(id)
            .ok_or_else(|| EmbedError::MissingId { id: id.to_owned() })?;
        Ok(&self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &[S])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }

    pub fn write(&self, out: impl Write) -> std::io::Result<()> {
        write_rows(out, self.dim, self.iter())
    }
}

pub fn load_precomputed<S: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingStore<S>> {
    let path = path.as_ref();
    EmbeddingStore::from_reader(open(path)?, &path.display().to_string())
}

/// Replays embeddings produced earlier, by any backend.
#[derive(Debug, Clone)]
pub struct PrecomputedBackend<S> {
    id: Arc<str>,
    labels: EmbeddingStore<S>,
    targets: Option<EmbeddingStore<S>>,
    roles: RoleAssignment,
}

impl<S: Scalar> PrecomputedBackend<S> {
    pub fn new(
        backend_id: impl Into<Arc<str>>,
        labels: EmbeddingStore<S>,
        targets: Option<EmbeddingStore<S>>,
        roles: RoleAssignment,
    ) -> Result<Self> {
        if let Some(t) = &targets {
            if t.dim() != labels.dim() {
                return Err(EmbedError::Parameter(format!(
                    "label store dim {} differs from target store dim {}",
                    labels.dim(),
                    t.dim()
                )));
            }
        }
        Ok(Self {
            id: backend_id.into(),
            labels,
            targets,
            roles,
        })
    }

    fn store(&self, side: Side) -> Result<&EmbeddingStore<S>> {
        match side {
            Side::Label => Ok(&self.labels),
            Side::Target => self.targets.as_ref().ok_or_else(|| {
                EmbedError::Parameter("no precomputed target embeddings configured".into())
            }),
        }
    }
}

impl<S: Scalar> EmbeddingBackend<S> for PrecomputedBackend<S> {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> Option<usize> {
        Some(self.labels.dim())
    }

    fn supports_asymmetric(&self) -> bool {
        self.roles.labels != self.roles.targets
    }

    /// Looks each input up by id; the text is ignored.
    fn embed(&self, inputs: &[EmbedInput<'_>], side: Side) -> Result<Vec<SentenceEmbedding<S>>> {
        let store = self.store(side)?;
        let role = self.roles.role(side);
        inputs
            .iter()
            .map(|input| {
                let v = store.get(input.id)?;
                SentenceEmbedding::new(v.to_vec(), self.id.clone(), role).ok_or_else(|| {
                    EmbedError::NonFinite {
                        doc_id: input.id.to_owned(),
                    }
                })
            })
            .collect()
    }
}

//! Exact cosine-similarity ranking over the label embeddings.
//!
//! Scores are accumulated in `f64` whatever the storage scalar. Rankings sort
//! by descending score; equal scores keep corpus order.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::embed::{Role, SentenceEmbedding};
use crate::scalar::Scalar;

/// Number of rows printed by `classify` unless overridden.
pub const DEFAULT_TOP_K: usize = 15;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("vector lengths differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cosine is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("cannot build an index from zero labels")]
    Empty,
    #[error("label {label_id:?} has dim {found}, index dim is {expected}")]
    HeterogeneousDim {
        label_id: String,
        expected: usize,
        found: usize,
    },
    #[error("label {label_id:?} comes from backend {found:?}, index backend is {expected:?}")]
    HeterogeneousBackend {
        label_id: String,
        expected: String,
        found: String,
    },
    #[error("label {label_id:?} has role {found}, index role is {expected}")]
    HeterogeneousRole {
        label_id: String,
        expected: Role,
        found: Role,
    },
    #[error("duplicate label_id {0:?}")]
    DuplicateLabel(String),
    #[error("label {0:?} has a zero-norm embedding")]
    ZeroNormLabel(String),
    #[error("query from backend {query:?} ({query_role}) cannot be scored against index backend {index:?} ({index_role})")]
    BackendMismatch {
        query: String,
        query_role: Role,
        index: String,
        index_role: Role,
    },
    #[error("k must lie in 1..={n}, got {k}")]
    BadK { k: usize, n: usize },
    #[error("label {0:?} is not in the index")]
    UnknownLabel(String),
}

pub type Result<T> = std::result::Result<T, RankError>;

fn dot<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.to_f64_lossy() * y.to_f64_lossy())
        .sum()
}

fn norm<S: Scalar>(a: &[S]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine_with_norms<S: Scalar>(a: &[S], na: f64, b: &[S], nb: f64) -> f64 {
    // adding +0.0 maps -0.0 to +0.0 so orthogonal labels tie under total_cmp
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0) + 0.0
}

/// `dot(a, b) / (|a| |b|)`, clamped into `[-1, 1]`.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(RankError::DimMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(RankError::ZeroNorm);
    }
    Ok(cosine_with_norms(a, na, b, nb))
}

/// Descending score, then ascending corpus position.
fn by_score(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredLabel {
    pub label_id: String,
    pub score: f64,
}

/// Immutable label embeddings in corpus order.
#[derive(Debug, Clone)]
pub struct SimilarityIndex<S> {
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    data: Vec<S>,
    norms: Vec<f64>,
    dim: usize,
    backend_id: Arc<str>,
    role: Role,
}

impl<S: Scalar> SimilarityIndex<S> {
    pub fn build(entries: Vec<(String, SentenceEmbedding<S>)>) -> Result<Self> {
        let Some((_, first)) = entries.first() else {
            return Err(RankError::Empty);
        };
        let dim = first.dim();
        let backend_id: Arc<str> = Arc::from(first.backend_id());
        let role = first.role();
        let mut index = Self {
            ids: Vec::with_capacity(entries.len()),
            positions: HashMap::with_capacity(entries.len()),
            data: Vec::with_capacity(entries.len() * dim),
            norms: Vec::with_capacity(entries.len()),
            dim,
            backend_id,
            role,
        };
        for (label_id, emb) in entries {
            if emb.dim() != dim {
                return Err(RankError::HeterogeneousDim {
                    label_id,
                    expected: dim,
                    found: emb.dim(),
                });
            }
            if emb.backend_id() != &*index.backend_id {
                return Err(RankError::HeterogeneousBackend {
                    label_id,
                    expected: index.backend_id.to_string(),
                    found: emb.backend_id().to_owned(),
                });
            }
            if emb.role() != role {
                return Err(RankError::HeterogeneousRole {
                    label_id,
                    expected: role,
                    found: emb.role(),
                });
            }
            if index.positions.contains_key(&label_id) {
                return Err(RankError::DuplicateLabel(label_id));
            }
            let n = norm(emb.vector());
            if n == 0.0 {
                return Err(RankError::ZeroNormLabel(label_id));
            }
            index.positions.insert(label_id.clone(), index.ids.len());
            index.ids.push(label_id);
            index.norms.push(n);
            index.data.extend_from_slice(emb.vector());
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn label_id(&self, position: usize) -> &str {
        &self.ids[position]
    }

    pub fn position(&self, label_id: &str) -> Option<usize> {
        self.positions.get(label_id).copied()
    }

    pub fn vector(&self, position: usize) -> &[S] {
        &self.data[position * self.dim..(position + 1) * self.dim]
    }

    fn check_query(&self, query: &SentenceEmbedding<S>) -> Result<()> {
        if query.backend_id() != &*self.backend_id || !query.role().pairs_with(self.role) {
            return Err(RankError::BackendMismatch {
                query: query.backend_id().to_owned(),
                query_role: query.role(),
                index: self.backend_id.to_string(),
                index_role: self.role,
            });
        }
        if query.dim() != self.dim {
            return Err(RankError::DimMismatch(query.dim(), self.dim));
        }
        Ok(())
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.len() {
            return Err(RankError::BadK { k, n: self.len() });
        }
        Ok(())
    }

    /// Cosine of `query` against every label, in corpus order.
    pub fn scores(&self, query: &SentenceEmbedding<S>) -> Result<Vec<f64>> {
        self.check_query(query)?;
        let q = query.vector();
        let nq = norm(q);
        if nq == 0.0 {
            return Err(RankError::ZeroNorm);
        }
        Ok(self
            .data
            .chunks_exact(self.dim)
            .zip(&self.norms)
            .map(|(row, &nr)| cosine_with_norms(q, nq, row, nr))
            .collect())
    }

    /// Full descending ranking of every label.
    pub fn rank(&self, query: &SentenceEmbedding<S>) -> Result<Ranking> {
        let scores = self.scores(query)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_unstable_by(by_score(&scores));
        let mut rank_of = vec![0; order.len()];
        for (r, &pos) in order.iter().enumerate() {
            rank_of[pos] = r + 1;
        }
        Ok(Ranking {
            order,
            rank_of,
            scores,
        })
    }

    /// The `k` best labels by partial selection, without sorting the tail.
    pub fn top_k(&self, query: &SentenceEmbedding<S>, k: usize) -> Result<Vec<ScoredLabel>> {
        self.check_k(k)?;
        let scores = self.scores(query)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        let cmp = by_score(&scores);
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, &cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(&cmp);
        Ok(order
            .into_iter()
            .map(|pos| ScoredLabel {
                label_id: self.ids[pos].clone(),
                score: scores[pos],
            })
            .collect())
    }
}

/// A complete ordering of the index for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    order: Vec<usize>,
    rank_of: Vec<usize>,
    scores: Vec<f64>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Corpus positions, best first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn score(&self, position: usize) -> f64 {
        self.scores[position]
    }

    /// 1-based rank of the label at corpus `position`.
    pub fn rank_of_position(&self, position: usize) -> usize {
        self.rank_of[position]
    }

    pub fn top_k<S: Scalar>(&self, index: &SimilarityIndex<S>, k: usize) -> Vec<ScoredLabel> {
        self.order
            .iter()
            .take(k)
            .map(|&pos| ScoredLabel {
                label_id: index.label_id(pos).to_owned(),
                score: self.scores[pos],
            })
            .collect()
    }
}

/// 1-based position of `gold_label_id` in `ranking`.
pub fn gold_rank<S: Scalar>(
    ranking: &Ranking,
    index: &SimilarityIndex<S>,
    gold_label_id: &str,
) -> Result<usize> {
    let pos = index
        .position(gold_label_id)
        .ok_or_else(|| RankError::UnknownLabel(gold_label_id.to_owned()))?;
    Ok(ranking.rank_of_position(pos))
}

/// Per-target retrieval outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankResult {
    pub target_id: String,
    pub gold_rank: usize,
    pub top_k: Vec<ScoredLabel>,
    pub n_labels: usize,
}

/// Ranks one query and returns its top `k` plus the full ranking.
pub fn rank_labels<S: Scalar>(
    query: &SentenceEmbedding<S>,
    index: &SimilarityIndex<S>,
    k: usize,
) -> Result<(Vec<ScoredLabel>, Ranking)> {
    index.check_k(k)?;
    let ranking = index.rank(query)?;
    Ok((ranking.top_k(index, k), ranking))
}

pub struct RankQuery<'a, S> {
    pub target_id: &'a str,
    pub gold_label_id: &'a str,
    pub embedding: &'a SentenceEmbedding<S>,
}

/// Ranks every query in parallel; output order follows `queries`.
pub fn rank_targets<S: Scalar>(
    index: &SimilarityIndex<S>,
    queries: &[RankQuery<'_, S>],
    k: usize,
) -> Result<Vec<RankResult>> {
    queries
        .par_iter()
        .map(|q| {
            let (top_k, ranking) = rank_labels(q.embedding, index, k)?;
            Ok(RankResult {
                target_id: q.target_id.to_owned(),
                gold_rank: gold_rank(&ranking, index, q.gold_label_id)?,
                top_k,
                n_labels: index.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: &[f64]) -> SentenceEmbedding<f64> {
        SentenceEmbedding::new(v.to_vec(), Arc::from("b"), Role::Symmetric).unwrap()
    }

    fn index(rows: &[&[f64]]) -> SimilarityIndex<f64> {
        SimilarityIndex::build(
            rows.iter()
                .enumerate()
                .map(|(i, r)| (format!("L{i}"), emb(r)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_examples() {
        assert_abs_diff_eq!(
            cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            0.7071,
            epsilon = 1e-4
        );
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(RankError::ZeroNorm));
        assert_eq!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(RankError::DimMismatch(1, 2))
        );
        assert_abs_diff_eq!(
            cosine(&[1.0f32, 1.0], &[1.0, 0.0]).unwrap(),
            0.7071,
            epsilon = 1e-4
        );
    }

    #[test]
    fn cosine_is_clamped() {
        let v = [0.1, 0.2, 0.3, 1e-8, 7.77];
        let c = cosine(&v, &v).unwrap();
        assert!(c <= 1.0);
    }

    #[test]
    fn build_errors() {
        assert_eq!(
            SimilarityIndex::<f64>::build(vec![]).unwrap_err(),
            RankError::Empty
        );
        let mixed = vec![
            ("a".to_owned(), emb(&[1.0; 300])),
            ("b".to_owned(), emb(&[1.0; 768])),
        ];
        assert!(matches!(
            SimilarityIndex::build(mixed),
            Err(RankError::HeterogeneousDim {
                expected: 300,
                found: 768,
                ..
            })
        ));
        let dup = vec![("a".to_owned(), emb(&[1.0])), ("a".to_owned(), emb(&[2.0]))];
        assert_eq!(
            SimilarityIndex::build(dup).unwrap_err(),
            RankError::DuplicateLabel("a".into())
        );
        let other = SentenceEmbedding::new(vec![1.0], Arc::from("other"), Role::Symmetric).unwrap();
        let mixed_backend = vec![("a".to_owned(), emb(&[1.0])), ("b".to_owned(), other)];
        assert!(matches!(
            SimilarityIndex::build(mixed_backend),
            Err(RankError::HeterogeneousBackend { .. })
        ));
        let zero = vec![("z".to_owned(), emb(&[0.0, 0.0]))];
        assert!(matches!(
            SimilarityIndex::build(zero),
            Err(RankError::ZeroNormLabel(_))
        ));
    }

    #[test]
    fn large_index_records_n() {
        let rows: Vec<Vec<f64>> = (0..2585).map(|i| vec![1.0, i as f64]).collect();
        let idx = SimilarityIndex::build(
            rows.iter()
                .enumerate()
                .map(|(i, r)| (format!("{i}"), emb(r)))
                .collect(),
        )
        .unwrap();
        assert_eq!(idx.len(), 2585);
    }

    #[test]
    fn fifth_highest_gets_rank_five() {
        let idx = index(&[
            &[1.0, 0.1],
            &[1.0, 0.2],
            &[1.0, 0.3],
            &[1.0, 0.4],
            &[1.0, 0.5],
            &[1.0, 0.6],
        ]);
        // query along the x axis: similarity decreases with the y component
        let ranking = idx.rank(&emb(&[1.0, 0.0])).unwrap();
        assert_eq!(gold_rank(&ranking, &idx, "L4").unwrap(), 5);
        assert_eq!(gold_rank(&ranking, &idx, "L0").unwrap(), 1);
        assert_eq!(gold_rank(&ranking, &idx, "L5").unwrap(), 6);
        assert_eq!(
            gold_rank(&ranking, &idx, "nope").unwrap_err(),
            RankError::UnknownLabel("nope".into())
        );
    }

    #[test]
    fn identity_retrieval() {
        let idx = index(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        let (top, ranking) = rank_labels(&emb(&[1.0, 0.0, 0.0]), &idx, 1).unwrap();
        assert_eq!(
            top,
            vec![ScoredLabel {
                label_id: "L1".into(),
                score: 1.0
            }]
        );
        assert_eq!(ranking.len(), 3);
    }

    #[test]
    fn ties_keep_corpus_order() {
        let idx = index(&[&[0.0, 1.0], &[2.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]]);
        let (top, _) = rank_labels(&emb(&[1.0, 0.0]), &idx, 3).unwrap();
        let ids: Vec<&str> = top.iter().map(|s| s.label_id.as_str()).collect();
        assert_eq!(ids, ["L1", "L2", "L3"]);
        assert!(top.iter().all(|s| s.score == 1.0));
        let fast = idx.top_k(&emb(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(fast, top[..2]);
    }

    #[test]
    fn k_bounds() {
        let idx = index(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let q = emb(&[1.0, 1.0]);
        assert_eq!(
            rank_labels(&q, &idx, 0).unwrap_err(),
            RankError::BadK { k: 0, n: 2 }
        );
        assert_eq!(
            idx.top_k(&q, 3).unwrap_err(),
            RankError::BadK { k: 3, n: 2 }
        );
        assert_eq!(idx.top_k(&q, 2).unwrap().len(), 2);
    }

    #[test]
    fn backend_and_role_checked() {
        let docs = SimilarityIndex::build(vec![(
            "a".to_owned(),
            SentenceEmbedding::new(vec![1.0, 0.0], Arc::from("gpt"), Role::Document).unwrap(),
        )])
        .unwrap();
        let sym_other =
            SentenceEmbedding::new(vec![1.0, 0.0], Arc::from("bag"), Role::Symmetric).unwrap();
        assert!(matches!(
            docs.rank(&sym_other),
            Err(RankError::BackendMismatch { .. })
        ));
        let sym_same =
            SentenceEmbedding::new(vec![1.0, 0.0], Arc::from("gpt"), Role::Symmetric).unwrap();
        assert!(matches!(
            docs.rank(&sym_same),
            Err(RankError::BackendMismatch { .. })
        ));
        let query = SentenceEmbedding::new(vec![1.0, 0.0], Arc::from("gpt"), Role::Query).unwrap();
        assert!(docs.rank(&query).is_ok());
        let wrong_dim = SentenceEmbedding::new(vec![1.0], Arc::from("gpt"), Role::Query).unwrap();
        assert_eq!(
            docs.rank(&wrong_dim).unwrap_err(),
            RankError::DimMismatch(1, 2)
        );
    }

    #[test]
    fn parallel_batch_preserves_order() {
        let idx = index(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let qs: Vec<SentenceEmbedding<f64>> =
            (0..50).map(|i| emb(&[1.0, i as f64 / 10.0])).collect();
        let queries: Vec<RankQuery<'_, f64>> = qs
            .iter()
            .enumerate()
            .map(|(i, e)| RankQuery {
                target_id: if i % 2 == 0 { "even" } else { "odd" },
                gold_label_id: "L2",
                embedding: e,
            })
            .collect();
        let results = rank_targets(&idx, &queries, 2).unwrap();
        assert_eq!(results.len(), 50);
        for (i, r) in results.iter().enumerate() {
            assert_eq!(r.target_id, if i % 2 == 0 { "even" } else { "odd" });
            assert_eq!(r.n_labels, 3);
            assert!(r.gold_rank >= 1 && r.gold_rank <= 3);
        }
        assert_eq!(results, rank_targets(&idx, &queries, 2).unwrap());
    }

    #[test]
    fn f32_index() {
        let rows = vec![
            (
                "a".to_owned(),
                SentenceEmbedding::new(vec![1.0f32, 0.0], Arc::from("b"), Role::Symmetric).unwrap(),
            ),
            (
                "b".to_owned(),
                SentenceEmbedding::new(vec![0.6f32, 0.8], Arc::from("b"), Role::Symmetric).unwrap(),
            ),
        ];
        let idx = SimilarityIndex::build(rows).unwrap();
        let q = SentenceEmbedding::new(vec![0.0f32, 1.0], Arc::from("b"), Role::Symmetric).unwrap();
        let top = idx.top_k(&q, 1).unwrap();
        assert_eq!(top[0].label_id, "b");
    }

    fn random_instance(seed: u64, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let q = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        (rows, q)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn positive_scaling_keeps_ranking(seed in any::<u64>(), n in 1usize..60, dim in 1usize..16, c in 0.001f64..1000.0) {
            let (rows, q) = random_instance(seed, n, dim);
            let plain = index(&rows.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let scaled_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
            let scaled = index(&scaled_rows.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let qs: Vec<f64> = q.iter().map(|x| x * c).collect();
            let a = plain.rank(&emb(&q)).unwrap();
            let b = scaled.rank(&emb(&qs)).unwrap();
            // scores may differ in the last bits, so compare orders only where
            // neighbouring scores are not within rounding of each other
            for w in a.order().windows(2) {
                let (s0, s1) = (a.score(w[0]), a.score(w[1]));
                if s0 - s1 > 1e-12 {
                    prop_assert!(b.rank_of_position(w[0]) < b.rank_of_position(w[1]));
                }
            }
        }

        #[test]
        fn power_of_two_scaling_is_bit_exact(seed in any::<u64>(), n in 1usize..60, dim in 1usize..16, e in -20i32..20) {
            let c = 2f64.powi(e);
            let (rows, q) = random_instance(seed, n, dim);
            let plain = index(&rows.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let scaled_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
            let scaled = index(&scaled_rows.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let qs: Vec<f64> = q.iter().map(|x| x * c).collect();
            prop_assert_eq!(plain.rank(&emb(&q)).unwrap(), scaled.rank(&emb(&qs)).unwrap());
        }

        #[test]
        fn ranks_in_bounds_and_scores_sorted(seed in any::<u64>(), n in 1usize..80, dim in 1usize..8) {
            let (rows, q) = random_instance(seed, n, dim);
            let idx = index(&rows.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let (top, ranking) = rank_labels(&emb(&q), &idx, n).unwrap();
            prop_assert!(top.windows(2).all(|w| w[0].score >= w[1].score));
            for i in 0..n {
                let r = gold_rank(&ranking, &idx, &format!("L{i}")).unwrap();
                prop_assert!(r >= 1 && r <= n);
            }
        }
    }
}

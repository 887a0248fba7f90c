//! Document-frequency statistics over the label corpus.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TokenizedDoc;
use crate::scalar::Scalar;

/// Fraction of documents above which a token counts as a stop word.
pub const DEFAULT_STOP_FRACTION: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("stop fraction must lie in (0, 1], got {0}")]
    StopFraction(f64),
    #[error("cannot build a lexicon from zero documents")]
    NoDocuments,
    #[error("stop-fraction grid must be sorted ascending")]
    UnsortedGrid,
}

/// Document frequencies, stop words and IDF over a fixed document collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    doc_count: usize,
    stop_fraction: f64,
    df: BTreeMap<String, usize>,
    #[serde(skip)]
    stopwords: HashSet<String>,
}

fn check_fraction(theta: f64) -> Result<(), LexiconError> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(LexiconError::StopFraction(theta))
    }
}

fn document_frequencies(docs: &[TokenizedDoc]) -> BTreeMap<String, usize> {
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let distinct: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for token in distinct {
            *df.entry(token.to_owned()).or_default() += 1;
        }
    }
    df
}

fn is_stop(df: usize, doc_count: usize, theta: f64) -> bool {
    df as f64 > theta * doc_count as f64
}

impl Lexicon {
    pub fn build(docs: &[TokenizedDoc], stop_fraction: f64) -> Result<Self, LexiconError> {
        check_fraction(stop_fraction)?;
        if docs.is_empty() {
            return Err(LexiconError::NoDocuments);
        }
        Ok(Self::from_parts(
            docs.len(),
            document_frequencies(docs),
            stop_fraction,
        ))
    }

    fn from_parts(doc_count: usize, df: BTreeMap<String, usize>, stop_fraction: f64) -> Self {
        let stopwords = df
            .iter()
            .filter(|&(_, &d)| is_stop(d, doc_count, stop_fraction))
            .map(|(t, _)| t.clone())
            .collect();
        Self {
            doc_count,
            stop_fraction,
            df,
            stopwords,
        }
    }

    /// Restores a lexicon saved with [`Lexicon::to_json`].
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let stored: Lexicon = serde_json::from_str(text)?;
        check_fraction(stored.stop_fraction).map_err(serde::de::Error::custom)?;
        if let Some((t, &d)) = stored
            .df
            .iter()
            .find(|&(_, &d)| d == 0 || d > stored.doc_count)
        {
            return Err(serde::de::Error::custom(format!(
                "df[{t:?}] = {d} outside 1..={}",
                stored.doc_count
            )));
        }
        Ok(Self::from_parts(
            stored.doc_count,
            stored.df,
            stored.stop_fraction,
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serializes")
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn stop_fraction(&self) -> f64 {
        self.stop_fraction
    }

    pub fn df(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn vocab_size(&self) -> usize {
        self.df.len()
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Stop words in lexicographic order.
    pub fn stopwords(&self) -> BTreeSet<&str> {
        self.stopwords.iter().map(String::as_str).collect()
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    /// Unknown tokens take `df = 0`.
    pub fn idf<S: Scalar>(&self, token: &str) -> S {
        let n = S::from_usize_lossy(self.doc_count);
        let df = S::from_usize_lossy(self.df(token));
        ((S::one() + n) / (S::one() + df)).ln() + S::one()
    }

    /// Raw term count times IDF for every non-stop token in `doc`.
    pub fn tfidf_weights<S: Scalar>(&self, doc: &TokenizedDoc) -> BTreeMap<String, S> {
        let mut tf: HashMap<&str, usize> = HashMap::new();
        for token in &doc.tokens {
            if !self.is_stopword(token) {
                *tf.entry(token.as_str()).or_default() += 1;
            }
        }
        tf.into_iter()
            .map(|(t, count)| (t.to_owned(), S::from_usize_lossy(count) * self.idf::<S>(t)))
            .collect()
    }
}

/// Vocabulary size left after stop-word removal at each fraction in `grid`.
pub fn stopword_curve(
    docs: &[TokenizedDoc],
    grid: &[f64],
) -> Result<Vec<(f64, usize)>, LexiconError> {
    if docs.is_empty() {
        return Err(LexiconError::NoDocuments);
    }
    for &theta in grid {
        check_fraction(theta)?;
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(LexiconError::UnsortedGrid);
    }
    let df = document_frequencies(docs);
    let n = docs.len();
    Ok(grid
        .iter()
        .map(|&theta| {
            let remaining = df.values().filter(|&&d| !is_stop(d, n, theta)).count();
            (theta, remaining)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn docs(raw: &[&[&str]]) -> Vec<TokenizedDoc> {
        raw.iter()
            .enumerate()
            .map(|(i, toks)| TokenizedDoc {
                doc_id: i.to_string(),
                tokens: toks.iter().map(|s| s.to_string()).collect(),
            })
            .collect()
    }

    fn abc() -> Vec<TokenizedDoc> {
        docs(&[&["a", "b"], &["a", "c"], &["a"]])
    }

    #[test]
    fn half_threshold_removes_ubiquitous_token() {
        let lex = Lexicon::build(&abc(), 0.5).unwrap();
        assert_eq!(lex.df("a"), 3);
        assert_eq!(lex.df("b"), 1);
        assert_eq!(lex.stopwords().into_iter().collect::<Vec<_>>(), ["a"]);
    }

    #[test]
    fn full_threshold_keeps_everything() {
        let lex = Lexicon::build(&abc(), 1.0).unwrap();
        assert!(lex.stopwords().is_empty());
    }

    #[test]
    fn df_counts_each_document_once() {
        let lex = Lexicon::build(&docs(&[&["a", "a", "a"], &["b"]]), 1.0).unwrap();
        assert_eq!(lex.df("a"), 1);
    }

    #[test]
    fn bad_fraction() {
        assert_eq!(
            Lexicon::build(&abc(), 0.0).unwrap_err(),
            LexiconError::StopFraction(0.0)
        );
        assert!(Lexicon::build(&abc(), 1.5).is_err());
        assert!(Lexicon::build(&[], 0.2).is_err());
        assert!(stopword_curve(&abc(), &[0.5, 0.3]).is_err());
        assert!(stopword_curve(&abc(), &[-0.1]).is_err());
    }

    #[test]
    fn curve_examples() {
        // at 0.3 the cutoff is 0.9 documents, so df = 1 tokens go too
        assert_eq!(
            stopword_curve(&abc(), &[0.3, 0.5, 1.0]).unwrap(),
            vec![(0.3, 0), (0.5, 2), (1.0, 3)]
        );
        let single = docs(&[&["x", "y", "z"]]);
        assert_eq!(
            stopword_curve(&single, &[0.1, 0.99]).unwrap(),
            vec![(0.1, 0), (0.99, 0)]
        );
        assert_eq!(stopword_curve(&abc(), &[1.0]).unwrap(), vec![(1.0, 3)]);
    }

    #[test]
    fn idf_values() {
        let lex = Lexicon::build(&abc(), 1.0).unwrap();
        assert_abs_diff_eq!(lex.idf::<f64>("a"), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lex.idf::<f64>("b"), 1.6931, epsilon = 1e-4);
        assert_abs_diff_eq!(lex.idf::<f64>("nope"), 2.3863, epsilon = 1e-4);
        assert_abs_diff_eq!(lex.idf::<f32>("b"), 1.6931, epsilon = 1e-4);
    }

    #[test]
    fn tfidf_examples() {
        let lex = Lexicon::build(&abc(), 0.5).unwrap();
        let w = lex.tfidf_weights::<f64>(&docs(&[&["a", "a", "b"]])[0]);
        assert_eq!(w.len(), 1);
        assert_abs_diff_eq!(w["b"], lex.idf::<f64>("b"), epsilon = 1e-15);

        let w = lex.tfidf_weights::<f64>(&docs(&[&["b", "b"]])[0]);
        assert_abs_diff_eq!(w["b"], 3.3863, epsilon = 1e-4);

        assert!(lex
            .tfidf_weights::<f64>(&docs(&[&["a", "a"]])[0])
            .is_empty());
    }

    #[test]
    fn json_roundtrip_restores_stopwords() {
        let lex = Lexicon::build(&abc(), 0.5).unwrap();
        let back = Lexicon::from_json(&lex.to_json()).unwrap();
        assert_eq!(back, lex);
        assert!(back.is_stopword("a"));
        assert!(Lexicon::from_json(r#"{"doc_count":1,"stop_fraction":0.2,"df":{"a":2}}"#).is_err());
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<TokenizedDoc>> {
        prop::collection::vec(prop::collection::vec(0u8..12, 0..8), 1..20).prop_map(|raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, toks)| TokenizedDoc {
                    doc_id: i.to_string(),
                    tokens: toks.into_iter().map(|t| format!("w{t}")).collect(),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn curve_is_monotone(docs in corpus_strategy(), mut grid in prop::collection::vec(0.01f64..=1.0, 1..10)) {
            grid.sort_by(f64::total_cmp);
            let curve = stopword_curve(&docs, &grid).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
        }

        #[test]
        fn stopwords_reproducible_from_df(docs in corpus_strategy(), theta in 0.01f64..=1.0) {
            let lex = Lexicon::build(&docs, theta).unwrap();
            let n = docs.len();
            for (token, &d) in &lex.df {
                prop_assert!(d >= 1 && d <= n);
                prop_assert_eq!(lex.is_stopword(token), d as f64 > theta * n as f64);
            }
        }

        #[test]
        fn adding_a_doc_never_lowers_df(docs in corpus_strategy(), extra in prop::collection::vec(0u8..12, 0..8)) {
            let before = Lexicon::build(&docs, 1.0).unwrap();
            let mut more = docs.clone();
            more.push(TokenizedDoc {
                doc_id: "extra".into(),
                tokens: extra.into_iter().map(|t| format!("w{t}")).collect(),
            });
            let after = Lexicon::build(&more, 1.0).unwrap();
            for token in before.df.keys() {
                prop_assert!(after.df(token) >= before.df(token));
            }
        }

        #[test]
        fn idf_strictly_decreasing_in_df(n in 1usize..200) {
            let lex = Lexicon { doc_count: n, stop_fraction: 1.0, df: (1..=n).map(|d| (format!("t{d}"), d)).collect(), stopwords: HashSet::new() };
            for d in 1..n {
                let (lo, hi) = (format!("t{d}"), format!("t{}", d + 1));
                prop_assert!(lex.idf::<f64>(&lo) > lex.idf::<f64>(&hi));
            }
        }
    }
}

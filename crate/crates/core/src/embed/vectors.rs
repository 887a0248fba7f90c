//! Text word-vector files and subword hashing.
//!
//! File layout: a `count dim` header line, then `count` lines of
//! `key v1 .. v_dim`, space separated.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{EmbedError, Result};
use crate::scalar::Scalar;

pub const DEFAULT_BUCKET_COUNT: usize = 2_000_000;
pub const DEFAULT_MIN_N: usize = 3;
pub const DEFAULT_MAX_N: usize = 6;

const FNV_OFFSET: u32 = 2_166_136_261;
const FNV_PRIME: u32 = 16_777_619;

/// What to do when a row's length disagrees with the header.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowLengthPolicy {
    ParseError,
    MixedDimension,
}

/// Streaming reader for the `count dim` text format.
pub(crate) struct RowReader<R> {
    lines: std::io::Lines<BufReader<R>>,
    source_name: String,
    policy: RowLengthPolicy,
    count: usize,
    dim: usize,
}

impl<R: Read> RowReader<R> {
    pub(crate) fn new(reader: R, source_name: &str, policy: RowLengthPolicy) -> Result<Self> {
        let parse_err = |message: String| EmbedError::Parse {
            source_name: source_name.to_owned(),
            line: 1,
            message,
        };
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(line) => line.map_err(|e| parse_err(e.to_string()))?,
            None => return Err(parse_err("missing `count dim` header".into())),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [count, dim] = fields.as_slice() else {
            return Err(parse_err(format!(
                "expected `count dim` header, got {header:?}"
            )));
        };
        let count: usize = count
            .parse()
            .map_err(|_| parse_err(format!("bad row count {count:?}")))?;
        let dim: i64 = dim
            .parse()
            .map_err(|_| parse_err(format!("bad dimension {dim:?}")))?;
        if dim <= 0 {
            return Err(parse_err(format!("dimension must be positive, got {dim}")));
        }
        Ok(Self {
            lines,
            source_name: source_name.to_owned(),
            policy,
            count,
            dim: dim as usize,
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn count(&self) -> usize {
        self.count
    }

    /// Hands each row to `row` as `(line number, key, values)`, then checks
    /// the row total against the header.
    pub(crate) fn for_each<S, F>(self, mut row: F) -> Result<()>
    where
        S: Scalar,
        F: FnMut(usize, &str, Vec<S>) -> Result<()>,
    {
        let Self {
            lines,
            source_name,
            policy,
            count,
            dim,
        } = self;
        let parse_err = |line: usize, message: String| EmbedError::Parse {
            source_name: source_name.clone(),
            line,
            message,
        };
        let mut seen = 0usize;
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().expect("non-blank line has a field");
            let values = parts
                .map(|p| {
                    p.parse::<S>()
                        .map_err(|_| parse_err(line_no, format!("bad component {p:?}")))
                })
                .collect::<Result<Vec<S>>>()?;
            if values.len() != dim {
                return Err(match policy {
                    RowLengthPolicy::ParseError => parse_err(
                        line_no,
                        format!("{key:?} has {} components, expected {dim}", values.len()),
                    ),
                    RowLengthPolicy::MixedDimension => EmbedError::MixedDimension {
                        source_name: source_name.clone(),
                        line: line_no,
                        id: key.to_owned(),
                        expected: dim,
                        found: values.len(),
                    },
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(
                    line_no,
                    format!("{key:?} has a non-finite component"),
                ));
            }
            seen += 1;
            row(line_no, key, values)?;
        }
        if seen != count {
            return Err(parse_err(
                1,
                format!("header declares {count} rows, file has {seen}"),
            ));
        }
        Ok(())
    }
}

/// Writes rows in the `count dim` text format. `Display` for floats is
/// shortest-round-trip, so reloading yields identical bits.
pub fn write_rows<'a, S, W, I>(mut out: W, dim: usize, rows: I) -> std::io::Result<()>
where
    S: Scalar,
    W: Write,
    I: ExactSizeIterator<Item = (&'a str, &'a [S])>,
{
    writeln!(out, "{} {}", rows.len(), dim)?;
    for (key, values) in rows {
        out.write_all(key.as_bytes())?;
        for v in values {
            write!(out, " {v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Character n-grams of `word` wrapped as `<word>`, ordered by start
/// position then length. Lengths are counted in characters.
pub fn subword_ngrams(word: &str, nmin: usize, nmax: usize) -> Result<Vec<String>> {
    if nmin == 0 || nmax < nmin {
        return Err(EmbedError::Parameter(format!(
            "n-gram bounds must satisfy 1 <= nmin <= nmax, got {nmin}..{nmax}"
        )));
    }
    let wrapped: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut grams = Vec::new();
    for start in 0..wrapped.len() {
        for n in nmin..=nmax {
            let end = start + n;
            if end > wrapped.len() {
                break;
            }
            grams.push(wrapped[start..end].iter().collect());
        }
    }
    Ok(grams)
}

/// 32-bit FNV-1a of the UTF-8 bytes, reduced modulo `bucket_count`.
pub fn ngram_hash(ngram: &str, bucket_count: usize) -> usize {
    assert!(bucket_count > 0, "bucket_count must be positive");
    let h = ngram.bytes().fold(FNV_OFFSET, |h, b| {
        (h ^ u32::from(b)).wrapping_mul(FNV_PRIME)
    });
    h as usize % bucket_count
}

/// Hashed n-gram vectors. Rows absent from the table are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordBuckets<S> {
    bucket_count: usize,
    dim: usize,
    rows: HashMap<usize, Vec<S>>,
}

impl<S: Scalar> SubwordBuckets<S> {
    pub fn new(bucket_count: usize, dim: usize) -> Result<Self> {
        if bucket_count == 0 || dim == 0 {
            return Err(EmbedError::Parameter(
                "bucket_count and dim must be positive".into(),
            ));
        }
        Ok(Self {
            bucket_count,
            dim,
            rows: HashMap::new(),
        })
    }

    pub fn insert(&mut self, bucket: usize, row: Vec<S>) -> Result<()> {
        if bucket >= self.bucket_count {
            return Err(EmbedError::Parameter(format!(
                "bucket {bucket} out of range 0..{}",
                self.bucket_count
            )));
        }
        if row.len() != self.dim {
            return Err(EmbedError::Parameter(format!(
                "bucket row has {} components, expected {}",
                row.len(),
                self.dim
            )));
        }
        self.rows.insert(bucket, row);
        Ok(())
    }

    /// Loads a bucket file: `count dim` header, then `bucket_index v1 .. v_dim`.
    pub fn load(path: impl AsRef<Path>, bucket_count: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = open(path)?;
        let name = path.display().to_string();
        let reader = RowReader::new(file, &name, RowLengthPolicy::ParseError)?;
        let mut table = Self::new(bucket_count, reader.dim())?;
        reader.for_each(|line, key, v| {
            let bucket: usize = key.parse().map_err(|_| EmbedError::Parse {
                source_name: name.clone(),
                line,
                message: format!("bucket index {key:?} is not an integer"),
            })?;
            table.insert(bucket, v)
        })?;
        Ok(table)
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, bucket: usize) -> Option<&[S]> {
        self.rows.get(&bucket).map(Vec::as_slice)
    }
}

/// Word vectors keyed by surface form, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable<S> {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<S>,
    duplicates: usize,
    subwords: Option<SubwordBuckets<S>>,
    nmin: usize,
    nmax: usize,
}

impl<S: Scalar> WordVectorTable<S> {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(EmbedError::Parameter("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
            subwords: None,
            nmin: DEFAULT_MIN_N,
            nmax: DEFAULT_MAX_N,
        })
    }

    /// Inserts or replaces a word vector. Replacements are counted.
    pub fn insert(&mut self, word: &str, vector: Vec<S>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(EmbedError::Parameter(format!(
                "vector for {word:?} has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        match self.index.get(word) {
            Some(&row) => {
                self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(&vector);
                self.duplicates += 1;
            }
            None => {
                self.index.insert(word.to_owned(), self.index.len());
                self.data.extend(vector);
            }
        }
        Ok(())
    }

    pub fn from_reader(reader: impl Read, source_name: &str) -> Result<Self> {
        let reader = RowReader::new(reader, source_name, RowLengthPolicy::ParseError)?;
        let mut table = Self::new(reader.dim())?;
        table.index.reserve(reader.count());
        reader.for_each(|_, word, vector| table.insert(word, vector))?;
        if table.duplicates > 0 {
            log::warn!(
                "{source_name}: {} duplicate word(s), last occurrence kept",
                table.duplicates
            );
        }
        Ok(table)
    }

    /// Attaches n-gram bucket vectors used for words with no stored vector.
    pub fn with_subwords(
        mut self,
        buckets: SubwordBuckets<S>,
        nmin: usize,
        nmax: usize,
    ) -> Result<Self> {
        if buckets.dim() != self.dim {
            return Err(EmbedError::Parameter(format!(
                "bucket dimension {} differs from word dimension {}",
                buckets.dim(),
                self.dim
            )));
        }
        subword_ngrams("", nmin, nmax)?;
        self.subwords = Some(buckets);
        self.nmin = nmin;
        self.nmax = nmax;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Words whose vector was replaced by a later occurrence.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn has_subwords(&self) -> bool {
        self.subwords.is_some()
    }

    pub fn get(&self, word: &str) -> Option<&[S]> {
        self.index
            .get(word)
            .map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    /// Stored vector, else the mean of the word's n-gram bucket vectors.
    pub fn resolve(&self, word: &str) -> Option<Vec<S>> {
        if let Some(v) = self.get(word) {
            return Some(v.to_vec());
        }
        let buckets = self.subwords.as_ref()?;
        let grams = subword_ngrams(word, self.nmin, self.nmax).ok()?;
        if grams.is_empty() {
            return None;
        }
        let mut sum = vec![S::zero(); self.dim];
        for gram in &grams {
            if let Some(row) = buckets.row(ngram_hash(gram, buckets.bucket_count())) {
                for (acc, &x) in sum.iter_mut().zip(row) {
                    *acc = *acc + x;
                }
            }
        }
        let n = S::from_usize_lossy(grams.len());
        Some(sum.into_iter().map(|x| x / n).collect())
    }
}

pub fn load_word_vectors<S: Scalar>(path: impl AsRef<Path>) -> Result<WordVectorTable<S>> {
    let path = path.as_ref();
    WordVectorTable::from_reader(open(path)?, &path.display().to_string())
}

pub(crate) fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|source| EmbedError::Io {
        path: path.to_owned(),
        source,
    })
}

//! Label corpus and target set ingestion.
//!
//! Both files are JSON Lines: one object per line, blank lines skipped.
//! Label records carry `label_id`, `name`, `description` and an optional
//! `class`; target records carry `target_id`, `description`, `gold_label_id`
//! and an optional `mislabel_flag`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: empty corpus")]
    EmptyCorpus { source_name: String },
    #[error("{source_name}: empty target set")]
    EmptyTargets { source_name: String },
    #[error("{source_name}:{line}: malformed record: {message}")]
    Malformed {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{source_name}:{line}: duplicate label_id {id:?}")]
    DuplicateLabel {
        source_name: String,
        line: usize,
        id: String,
    },
    #[error("{source_name}:{line}: duplicate target_id {id:?}")]
    DuplicateTarget {
        source_name: String,
        line: usize,
        id: String,
    },
    #[error("target {target_id:?}: gold_label_id {gold_label_id:?} is not in the label corpus")]
    UnresolvedGold {
        target_id: String,
        gold_label_id: String,
    },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// One regulatory device category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub label_id: String,
    pub name: String,
    pub description: String,
    pub raw_description: String,
    pub class: Option<String>,
}

/// One device to classify against the label corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetRecord {
    pub target_id: String,
    pub description: String,
    pub gold_label_id: String,
    pub mislabel_flag: Option<bool>,
    /// Token count of the cleaned description, stop words included.
    pub word_count: usize,
}

impl TargetRecord {
    pub fn is_flagged_mislabel(&self) -> bool {
        self.mislabel_flag == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

impl TokenizedDoc {
    pub fn new(doc_id: impl Into<String>, text: &str) -> Self {
        Self {
            doc_id: doc_id.into(),
            tokens: tokenize(text),
        }
    }
}

static REGULATION_CODE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|[^0-9])[0-9]{3,4}\.[0-9]{2,4}(?:[^0-9]|$)").unwrap());

fn is_regulation_ref(contents: &str) -> bool {
    contents.contains('§') || REGULATION_CODE.is_match(contents)
}

/// Removes every balanced parenthetical group that cites a regulation,
/// parentheses included. A group cites a regulation when it contains `§` or a
/// `ddd.dd`-shaped code (3-4 digits, dot, 2-4 digits). Everything else,
/// including unbalanced parentheses, is kept byte for byte.
pub fn strip_regulation_refs(text: &str) -> String {
    let mut open = Vec::new();
    let mut groups = Vec::new();
    for (pos, ch) in text.char_indices() {
        match ch {
            '(' => open.push(pos),
            ')' => {
                if let Some(start) = open.pop() {
                    groups.push((start, pos + 1));
                }
            }
            _ => {}
        }
    }
    if groups.is_empty() {
        return text.to_owned();
    }
    // Outer groups start first; a matching outer group swallows its children.
    groups.sort_unstable();
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    for (start, end) in groups {
        if cuts.last().is_some_and(|&(_, cut_end)| start < cut_end) {
            continue;
        }
        if is_regulation_ref(&text[start + 1..end - 1]) {
            cuts.push((start, end));
        }
    }
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (start, end) in cuts {
        out.push_str(&text[cursor..start]);
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Lowercases and splits on anything that is not alphanumeric, so whitespace,
/// punctuation and hyphens all act as separators and never survive as tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    label_id: String,
    name: String,
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetRecordRaw {
    target_id: String,
    description: String,
    gold_label_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mislabel_flag: Option<bool>,
}

/// Loaded label corpus, in file order.
#[derive(Debug, Clone, Default)]
pub struct LabelCorpus {
    entries: Vec<LabelEntry>,
    by_id: HashMap<String, usize>,
    skipped_lines: usize,
}

impl LabelCorpus {
    pub fn from_reader(reader: impl Read, source_name: &str) -> Result<Self> {
        let mut corpus = LabelCorpus::default();
        for_each_record(reader, source_name, |line, record: LabelRecord| {
            let malformed = |message: &str| CorpusError::Malformed {
                source_name: source_name.to_owned(),
                line,
                message: message.to_owned(),
            };
            if record.label_id.trim().is_empty() {
                return Err(malformed("empty label_id"));
            }
            let description = strip_regulation_refs(&record.description);
            if description.trim().is_empty() {
                return Err(malformed("description is empty after cleaning"));
            }
            if corpus.by_id.contains_key(&record.label_id) {
                return Err(CorpusError::DuplicateLabel {
                    source_name: source_name.to_owned(),
                    line,
                    id: record.label_id,
                });
            }
            corpus
                .by_id
                .insert(record.label_id.clone(), corpus.entries.len());
            corpus.entries.push(LabelEntry {
                label_id: record.label_id,
                name: record.name,
                description,
                raw_description: record.description,
                class: record.class,
            });
            Ok(())
        })
        .map(|skipped| corpus.skipped_lines = skipped)?;
        if corpus.entries.is_empty() {
            return Err(CorpusError::EmptyCorpus {
                source_name: source_name.to_owned(),
            });
        }
        Ok(corpus)
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label_id: &str) -> Option<&LabelEntry> {
        self.by_id.get(label_id).map(|&i| &self.entries[i])
    }

    pub fn position(&self, label_id: &str) -> Option<usize> {
        self.by_id.get(label_id).copied()
    }

    /// Blank lines skipped while reading.
    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn tokenized(&self) -> Vec<TokenizedDoc> {
        self.entries
            .iter()
            .map(|e| TokenizedDoc::new(e.label_id.clone(), &e.description))
            .collect()
    }

    /// Writes the corpus back in the record format. The original (uncleaned)
    /// description is written so a reload reproduces every field.
    pub fn write_records(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            let record = LabelRecord {
                label_id: e.label_id.clone(),
                name: e.name.clone(),
                description: e.raw_description.clone(),
                class: e.class.clone(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Loaded target set, in file order.
#[derive(Debug, Clone, Default)]
pub struct TargetSet {
    records: Vec<TargetRecord>,
    skipped_lines: usize,
}

impl TargetSet {
    pub fn from_reader(reader: impl Read, source_name: &str, corpus: &LabelCorpus) -> Result<Self> {
        let mut records: Vec<TargetRecord> = Vec::new();
        let mut seen: HashMap<String, ()> = HashMap::new();
        let skipped = for_each_record(reader, source_name, |line, raw: TargetRecordRaw| {
            if raw.target_id.trim().is_empty() {
                return Err(CorpusError::Malformed {
                    source_name: source_name.to_owned(),
                    line,
                    message: "empty target_id".to_owned(),
                });
            }
            if seen.insert(raw.target_id.clone(), ()).is_some() {
                return Err(CorpusError::DuplicateTarget {
                    source_name: source_name.to_owned(),
                    line,
                    id: raw.target_id,
                });
            }
            if corpus.get(&raw.gold_label_id).is_none() {
                return Err(CorpusError::UnresolvedGold {
                    target_id: raw.target_id,
                    gold_label_id: raw.gold_label_id,
                });
            }
            let description = strip_regulation_refs(&raw.description);
            let word_count = tokenize(&description).len();
            records.push(TargetRecord {
                target_id: raw.target_id,
                description,
                gold_label_id: raw.gold_label_id,
                mislabel_flag: raw.mislabel_flag,
                word_count,
            });
            Ok(())
        })?;
        if records.is_empty() {
            return Err(CorpusError::EmptyTargets {
                source_name: source_name.to_owned(),
            });
        }
        Ok(Self {
            records,
            skipped_lines: skipped,
        })
    }

    pub fn records(&self) -> &[TargetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn n_flagged(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.is_flagged_mislabel())
            .count()
    }
}

pub fn parse_label_corpus(path: impl AsRef<Path>) -> Result<LabelCorpus> {
    let path = path.as_ref();
    let file = open(path)?;
    LabelCorpus::from_reader(file, &path.display().to_string())
}

pub fn parse_target_set(path: impl AsRef<Path>, corpus: &LabelCorpus) -> Result<TargetSet> {
    let path = path.as_ref();
    let file = open(path)?;
    TargetSet::from_reader(file, &path.display().to_string(), corpus)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Feeds each non-blank line, decoded as `R`, to `handle`. Returns the number
/// of blank lines skipped.
fn for_each_record<R, F>(reader: impl Read, source_name: &str, mut handle: F) -> Result<usize>
where
    R: for<'de> Deserialize<'de>,
    F: FnMut(usize, R) -> Result<()>,
{
    let mut skipped = 0;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            source_name: source_name.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            skipped += 1;
            continue;
        }
        let record: R = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            source_name: source_name.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        handle(line_no, record)?;
    }
    Ok(skipped)
}

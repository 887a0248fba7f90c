//! Seeded synthetic label corpus, targets and word vectors.
//!
//! Labels fall into topics. Every label owns a disjoint set of content
//! tokens, and every description also carries filler words that occur in
//! all labels and so become stop words. Word vectors are a shared topic
//! centroid plus independent noise, so labels within a topic are closer to
//! each other than to labels of other topics.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use labelrank::corpus::{LabelCorpus, TargetSet};
use labelrank::embed::{BagOfVectors, EmbedInput, EmbeddingBackend, Side, WordVectorTable};
use labelrank::eval::{evaluate, EvalConfig, EvalReport};
use labelrank::lexicon::Lexicon;
use labelrank::rank::{rank_targets, RankQuery, RankResult, SimilarityIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FILLER: [&str; 3] = ["device", "of", "used"];

#[derive(Debug, Clone)]
pub struct Params {
    pub topics: usize,
    pub labels_per_topic: usize,
    pub words_per_label: usize,
    /// Tokens each target copies from its label.
    pub kept: usize,
    /// Fresh same-topic tokens each target adds.
    pub fresh: usize,
    pub dim: usize,
    pub centroid_weight: f64,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            topics: 5,
            labels_per_topic: 100,
            words_per_label: 10,
            kept: 6,
            fresh: 2,
            dim: 50,
            centroid_weight: 0.6,
            seed: 20240611,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Label {
    pub id: String,
    pub topic: usize,
    pub words: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Target {
    pub id: String,
    /// Index of the label the description was written from.
    pub source: usize,
    /// Index of the label the record claims.
    pub gold: usize,
    pub words: Vec<String>,
    pub flagged: bool,
}

pub struct Synthetic {
    pub params: Params,
    pub labels: Vec<Label>,
    pub targets: Vec<Target>,
    pub vectors: Vec<(String, Vec<f64>)>,
    centroids: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    minted: usize,
}

impl Synthetic {
    pub fn generate(params: Params) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let centroids: Vec<Vec<f64>> = (0..params.topics)
            .map(|_| (0..params.dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let mut s = Synthetic {
            params: params.clone(),
            labels: Vec::new(),
            targets: Vec::new(),
            vectors: Vec::new(),
            centroids,
            rng,
            minted: 0,
        };
        for w in FILLER {
            let v = (0..params.dim).map(|_| normal.sample(&mut s.rng)).collect();
            s.vectors.push((w.to_owned(), v));
        }
        for topic in 0..params.topics {
            for j in 0..params.labels_per_topic {
                let words = s.mint_words(topic, params.words_per_label);
                s.labels.push(Label {
                    id: format!("{}.{:04}", 860 + topic, j),
                    topic,
                    words,
                });
            }
        }
        for i in 0..s.labels.len() {
            let words = s.paraphrase(i);
            s.targets.push(Target {
                id: format!("K{i:04}"),
                source: i,
                gold: i,
                words,
                flagged: false,
            });
        }
        s
    }

    fn mint_words(&mut self, topic: usize, n: usize) -> Vec<String> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let word = format!("t{topic}w{}", self.minted);
                self.minted += 1;
                let v = self.centroids[topic]
                    .iter()
                    .map(|c| self.params.centroid_weight * c + normal.sample(&mut self.rng))
                    .collect();
                self.vectors.push((word.clone(), v));
                word
            })
            .collect()
    }

    fn paraphrase(&mut self, label: usize) -> Vec<String> {
        let mut kept = self.labels[label].words.clone();
        kept.shuffle(&mut self.rng);
        kept.truncate(self.params.kept);
        let topic = self.labels[label].topic;
        let fresh = self.params.fresh;
        kept.extend(self.mint_words(topic, fresh));
        kept
    }

    /// Share of a target's content tokens copied from its source label.
    pub fn shared_fraction(&self) -> f64 {
        self.params.kept as f64 / (self.params.kept + self.params.fresh) as f64
    }

    /// Points each listed target at the label `offset` positions later,
    /// which belongs to another topic when `offset` is a multiple of
    /// `labels_per_topic` and has no content token in common.
    pub fn plant_mislabels(&mut self, targets: &[usize], offset: usize) {
        let n = self.labels.len();
        for &t in targets {
            let target = &mut self.targets[t];
            target.gold = (target.source + offset) % n;
            target.flagged = true;
        }
    }

    /// Adds a label sharing all but two of the source label's tokens and
    /// points `target` at it. Returns the new label's index.
    pub fn plant_near_miss(&mut self, target: usize) -> usize {
        let source = self.targets[target].source;
        let topic = self.labels[source].topic;
        let keep = self.params.words_per_label - 2;
        let mut words: Vec<String> = self.labels[source].words[..keep].to_vec();
        words.extend(self.mint_words(topic, 2));
        self.labels.push(Label {
            id: format!("{}.9999", 860 + topic),
            topic,
            words,
        });
        let idx = self.labels.len() - 1;
        self.targets[target].gold = idx;
        self.targets[target].flagged = true;
        idx
    }

    pub fn labels_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, l) in self.labels.iter().enumerate() {
            let description = format!(
                "A {} {} {} (see § {}) {}.",
                FILLER[0],
                FILLER[1],
                l.words.join(" "),
                l.id,
                FILLER[2]
            );
            let record = serde_json::json!({
                "label_id": l.id,
                "name": format!("Synthetic device {i}"),
                "description": description,
            });
            writeln!(out, "{record}").unwrap();
        }
        out
    }

    pub fn targets_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.targets {
            let record = serde_json::json!({
                "target_id": t.id,
                "description": format!("{} {}", FILLER[0], t.words.join(" ")),
                "gold_label_id": self.labels[t.gold].id,
                "mislabel_flag": t.flagged,
            });
            writeln!(out, "{record}").unwrap();
        }
        out
    }

    pub fn vectors_text(&self) -> String {
        let mut out = format!("{} {}\n", self.vectors.len(), self.params.dim);
        for (w, v) in &self.vectors {
            out.push_str(w);
            for x in v {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Writes corpus, targets, vectors and a bag-of-vectors config; returns
    /// the config path.
    pub fn write_to(&self, dir: &Path) -> PathBuf {
        fs::write(dir.join("labels.jsonl"), self.labels_jsonl()).unwrap();
        fs::write(dir.join("targets.jsonl"), self.targets_jsonl()).unwrap();
        fs::write(dir.join("vectors.vec"), self.vectors_text()).unwrap();
        let config = dir.join("run.toml");
        fs::write(
            &config,
            "corpus_path = \"labels.jsonl\"\ntargets_path = \"targets.jsonl\"\n\n[backend.bag_of_vectors]\nvectors_path = \"vectors.vec\"\n",
        )
        .unwrap();
        config
    }
}

pub struct PipelineRun {
    pub results: Vec<RankResult>,
    pub report: EvalReport,
}

/// Ingest, weight, embed, rank and evaluate entirely in memory.
pub fn run_bag_pipeline(s: &Synthetic, threshold: usize) -> PipelineRun {
    let corpus = LabelCorpus::from_reader(s.labels_jsonl().as_bytes(), "labels").unwrap();
    let targets = TargetSet::from_reader(s.targets_jsonl().as_bytes(), "targets", &corpus).unwrap();
    let lexicon = Lexicon::build(&corpus.tokenized(), 0.2).unwrap();
    let table =
        WordVectorTable::<f64>::from_reader(s.vectors_text().as_bytes(), "vectors").unwrap();
    let backend = BagOfVectors::new(Arc::new(table), Arc::new(lexicon));

    let label_inputs: Vec<EmbedInput> = corpus
        .entries()
        .iter()
        .map(|e| EmbedInput {
            id: &e.label_id,
            text: &e.description,
        })
        .collect();
    let label_embs = backend.embed(&label_inputs, Side::Label).unwrap();
    let index = SimilarityIndex::build(
        corpus
            .entries()
            .iter()
            .map(|e| e.label_id.clone())
            .zip(label_embs)
            .collect(),
    )
    .unwrap();

    let target_inputs: Vec<EmbedInput> = targets
        .records()
        .iter()
        .map(|r| EmbedInput {
            id: &r.target_id,
            text: &r.description,
        })
        .collect();
    let target_embs = backend.embed(&target_inputs, Side::Target).unwrap();
    let queries: Vec<RankQuery<f64>> = targets
        .records()
        .iter()
        .zip(&target_embs)
        .map(|(r, e)| RankQuery {
            target_id: &r.target_id,
            gold_label_id: &r.gold_label_id,
            embedding: e,
        })
        .collect();
    let results = rank_targets(&index, &queries, 15).unwrap();
    let config = EvalConfig {
        mislabel_threshold: threshold,
        baseline_trials: 100,
        ..EvalConfig::default()
    };
    let (report, _) = evaluate(backend.backend_id(), &results, targets.records(), &config).unwrap();
    PipelineRun { results, report }
}

//! Command-line surface: ingest, build, classify, evaluate, stopwords, stats.
//!
//! Every command is deterministic given its config and input files. Exit
//! codes: 0 success, 1 usage or configuration, 2 data, 3 transport.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_label_corpus, parse_target_set, CorpusError, LabelCorpus, TargetSet};
use crate::embed::{
    load_precomputed, load_word_vectors, BagOfVectors, EmbedError, EmbedInput, EmbeddingBackend,
    EmbeddingStore, ExternalBackend, PrecomputedBackend, ReqwestTransport, Role, SentenceEmbedding,
    Side, SubwordBuckets,
};
use crate::eval::{evaluate, EvalError, StatsError};
use crate::lexicon::{stopword_curve, Lexicon, LexiconError};
use crate::rank::{rank_labels, rank_targets, RankError, RankQuery, SimilarityIndex};

pub mod config;

pub use config::{BackendConfig, RunConfig};

pub const LABELS_FILE: &str = "labels.vec";
pub const TARGETS_FILE: &str = "targets.vec";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEXICON_FILE: &str = "lexicon.json";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const REPORT_FILE: &str = "report.json";
pub const TARGET_ROWS_FILE: &str = "targets.csv";

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config(_) => 1,
            AppError::Lexicon(LexiconError::StopFraction(_)) => 1,
            AppError::Embed(EmbedError::Transport { .. }) => 3,
            AppError::Embed(EmbedError::Parameter(_)) => 1,
            AppError::Rank(RankError::BadK { .. }) => 1,
            AppError::Eval(EvalError::ZeroK | EvalError::ZeroThreshold) => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, AppError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "labelrank",
    version,
    about = "Rank device categories against device descriptions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the label corpus and targets, report counts.
    Ingest(CommonArgs),
    /// Embed every label and persist the index, lexicon and stop words.
    Build(BuildArgs),
    /// Print the top-k labels for one description.
    Classify(ClassifyArgs),
    /// Rank every target and write the report and per-target rows.
    Evaluate(EvaluateArgs),
    /// Print remaining vocabulary against stop fraction and write the stop-word list.
    Stopwords(StopwordsArgs),
    /// Correlation and significance helpers.
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    stop_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Description text; read from standard input when absent.
    text: Option<String>,
    #[arg(short)]
    k: Option<usize>,
    /// Use the stored target embedding with this id instead of text.
    #[arg(long, conflicts_with = "text")]
    query_id: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hit_k: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct StopwordsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    stop_fraction: Option<f64>,
    /// Number of evenly spaced fractions in the curve, ending at 1.
    #[arg(long, default_value_t = 100)]
    points: usize,
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// Pearson r of two series plus its two-sided t-test.
    Pearson {
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        x: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        y: Vec<f64>,
    },
    /// Two-sided p-value of a correlation r over n samples.
    Ttest {
        #[arg(long, allow_negative_numbers = true)]
        r: f64,
        #[arg(long)]
        n: usize,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match dispatch(cli.command, stdin, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn dispatch(command: Command, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Ingest(args) => cmd_ingest(&load_config(&args)?, stdout),
        Command::Build(args) => {
            let mut config = load_config(&args.common)?;
            if let Some(theta) = args.stop_fraction {
                config.stop_fraction = theta;
            }
            cmd_build(&config, stdout)
        }
        Command::Classify(args) => {
            let mut config = load_config(&args.common)?;
            if let Some(k) = args.k {
                config.top_k = k;
            }
            let query = match (args.query_id, args.text) {
                (Some(id), _) => Query::Id(id),
                (None, Some(text)) => Query::Text(text),
                (None, None) => {
                    let mut text = String::new();
                    stdin
                        .read_to_string(&mut text)
                        .map_err(io_err(Path::new("<stdin>")))?;
                    Query::Text(text)
                }
            };
            cmd_classify(&config, &query, stdout)
        }
        Command::Evaluate(args) => {
            let mut config = load_config(&args.common)?;
            if let Some(t) = args.threshold {
                config.mislabel_threshold = t;
            }
            if let Some(ks) = args.hit_k {
                config.hit_k = ks;
            }
            if let Some(seed) = args.seed {
                config.baseline_seed = seed;
            }
            cmd_evaluate(&config, stdout)
        }
        Command::Stopwords(args) => {
            let mut config = load_config(&args.common)?;
            if let Some(theta) = args.stop_fraction {
                config.stop_fraction = theta;
            }
            cmd_stopwords(&config, args.points, stdout)
        }
        Command::Stats(cmd) => cmd_stats(&cmd, stdout),
    }
}

/// What `build` records about the persisted index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub backend_id: String,
    pub dim: usize,
    pub label_role: Role,
    pub target_role: Role,
    pub labels: usize,
    pub targets: Option<usize>,
    pub stop_fraction: f64,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| AppError::Artifact {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn load_targets(config: &RunConfig, corpus: &LabelCorpus) -> Result<Option<TargetSet>> {
    config
        .targets_path
        .as_ref()
        .map(|p| parse_target_set(p, corpus))
        .transpose()
        .map_err(AppError::from)
}

fn cmd_ingest(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = parse_label_corpus(&config.corpus_path)?;
    let targets = load_targets(config, &corpus)?;
    let mut text = format!(
        "labels: {}\nlabel_lines_skipped: {}\n",
        corpus.len(),
        corpus.skipped_lines()
    );
    if let Some(t) = targets {
        text.push_str(&format!(
            "targets: {}\ntargets_flagged: {}\ntarget_lines_skipped: {}\n",
            t.len(),
            t.n_flagged(),
            t.skipped_lines()
        ));
    }
    out.write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

/// Embedding backend described by `config`. The bag backend needs the
/// lexicon the index was built with.
fn make_backend(
    config: &RunConfig,
    lexicon: impl FnOnce() -> Result<Lexicon>,
) -> Result<Box<dyn EmbeddingBackend<f64>>> {
    Ok(match &config.backend {
        BackendConfig::BagOfVectors(b) => {
            let mut table = load_word_vectors::<f64>(&b.vectors_path)?;
            if let Some(path) = &b.buckets_path {
                let buckets = SubwordBuckets::load(path, b.bucket_count)?;
                table = table.with_subwords(buckets, b.min_n, b.max_n)?;
            }
            Box::new(BagOfVectors::new(Arc::new(table), Arc::new(lexicon()?)))
        }
        BackendConfig::External(e) => {
            let transport = ReqwestTransport::new(Duration::from_secs(e.timeout_secs))
                .map_err(AppError::Config)?;
            Box::new(ExternalBackend::new(
                e.provider_config()?,
                e.roles(),
                Box::new(transport),
            ))
        }
        BackendConfig::Precomputed(p) => {
            let labels = load_precomputed(&p.labels_path)?;
            let targets = p.targets_path.as_ref().map(load_precomputed).transpose()?;
            Box::new(PrecomputedBackend::new(
                p.backend_id.clone(),
                labels,
                targets,
                p.roles(),
            )?)
        }
    })
}

fn embed_all(
    backend: &dyn EmbeddingBackend<f64>,
    docs: impl Iterator<Item = (String, String)>,
    side: Side,
) -> Result<(Vec<String>, Vec<SentenceEmbedding<f64>>)> {
    let docs: Vec<(String, String)> = docs.collect();
    let inputs: Vec<EmbedInput> = docs
        .iter()
        .map(|(id, text)| EmbedInput { id, text })
        .collect();
    let embeddings = backend.embed(&inputs, side)?;
    Ok((docs.into_iter().map(|(id, _)| id).collect(), embeddings))
}

fn to_store(ids: &[String], embeddings: &[SentenceEmbedding<f64>]) -> Result<EmbeddingStore<f64>> {
    let dim = embeddings.first().map_or(0, SentenceEmbedding::dim);
    let mut store = EmbeddingStore::new(dim)?;
    for (id, e) in ids.iter().zip(embeddings) {
        store.push(id, e.vector())?;
    }
    Ok(store)
}

fn store_bytes(store: &EmbeddingStore<f64>, path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    store.write(&mut buf).map_err(io_err(path))?;
    Ok(buf)
}

fn stopword_list(lexicon: &Lexicon) -> String {
    lexicon
        .stopwords()
        .into_iter()
        .map(|t| format!("{t}\n"))
        .collect()
}

fn cmd_build(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = parse_label_corpus(&config.corpus_path)?;
    let targets = load_targets(config, &corpus)?;
    let lexicon = Lexicon::build(&corpus.tokenized(), config.stop_fraction)?;
    let backend = make_backend(config, || Ok(lexicon.clone()))?;

    let (label_ids, label_embs) = embed_all(
        backend.as_ref(),
        corpus
            .entries()
            .iter()
            .map(|e| (e.label_id.clone(), e.description.clone())),
        Side::Label,
    )?;
    let labels = to_store(&label_ids, &label_embs)?;
    let target_store = match &targets {
        Some(t) => {
            let (ids, embs) = embed_all(
                backend.as_ref(),
                t.records()
                    .iter()
                    .map(|r| (r.target_id.clone(), r.description.clone())),
                Side::Target,
            )?;
            Some((to_store(&ids, &embs)?, embs[0].role()))
        }
        None => None,
    };

    let manifest = Manifest {
        backend_id: backend.backend_id().to_owned(),
        dim: labels.dim(),
        label_role: label_embs[0].role(),
        target_role: match (&target_store, &config.backend) {
            (Some((_, role)), _) => *role,
            (None, BackendConfig::External(e)) if e.asymmetric => e.target_role,
            (None, BackendConfig::Precomputed(p)) => p.target_role,
            (None, _) => label_embs[0].role(),
        },
        labels: labels.len(),
        targets: target_store.as_ref().map(|(s, _)| s.len()),
        stop_fraction: config.stop_fraction,
    };

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let labels_path = dir.join(LABELS_FILE);
    write_file(&labels_path, &store_bytes(&labels, &labels_path)?)?;
    let targets_path = dir.join(TARGETS_FILE);
    match &target_store {
        Some((store, _)) => write_file(&targets_path, &store_bytes(store, &targets_path)?)?,
        None if targets_path.exists() => {
            fs::remove_file(&targets_path).map_err(io_err(&targets_path))?
        }
        None => {}
    }
    write_file(&dir.join(LEXICON_FILE), lexicon.to_json().as_bytes())?;
    write_file(
        &dir.join(STOPWORDS_FILE),
        stopword_list(&lexicon).as_bytes(),
    )?;
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&dir.join(MANIFEST_FILE), manifest_json.as_bytes())?;

    writeln!(
        out,
        "built {} label embeddings (dim {}, backend {}) in {}",
        manifest.labels,
        manifest.dim,
        manifest.backend_id,
        dir.display()
    )
    .map_err(io_err(Path::new("<stdout>")))
}

/// Persisted index plus the metadata needed to score queries against it.
pub struct BuiltIndex {
    pub manifest: Manifest,
    pub index: SimilarityIndex<f64>,
    backend_id: Arc<str>,
}

impl BuiltIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        let store: EmbeddingStore<f64> = load_precomputed(dir.join(LABELS_FILE))?;
        let backend_id: Arc<str> = Arc::from(manifest.backend_id.as_str());
        let entries = store
            .iter()
            .map(|(id, v)| {
                SentenceEmbedding::new(v.to_vec(), backend_id.clone(), manifest.label_role)
                    .map(|e| (id.to_owned(), e))
                    .ok_or_else(|| EmbedError::NonFinite {
                        doc_id: id.to_owned(),
                    })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            index: SimilarityIndex::build(entries)?,
            manifest,
            backend_id,
        })
    }

    /// Target embeddings written by `build`, if any.
    pub fn stored_targets(&self, dir: &Path) -> Result<Option<EmbeddingStore<f64>>> {
        if self.manifest.targets.is_none() {
            return Ok(None);
        }
        Ok(Some(load_precomputed(dir.join(TARGETS_FILE))?))
    }

    fn target_embedding(&self, v: &[f64], id: &str) -> Result<SentenceEmbedding<f64>> {
        SentenceEmbedding::new(
            v.to_vec(),
            self.backend_id.clone(),
            self.manifest.target_role,
        )
        .ok_or_else(|| {
            EmbedError::NonFinite {
                doc_id: id.to_owned(),
            }
            .into()
        })
    }
}

fn live_lexicon(config: &RunConfig) -> impl FnOnce() -> Result<Lexicon> + '_ {
    move || {
        let path = config.output_dir.join(LEXICON_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Lexicon::from_json(&text).map_err(|e| AppError::Artifact {
            path,
            message: e.to_string(),
        })
    }
}

pub enum Query {
    Text(String),
    Id(String),
}

fn cmd_classify(config: &RunConfig, query: &Query, out: &mut dyn Write) -> Result<()> {
    let corpus = parse_label_corpus(&config.corpus_path)?;
    let built = BuiltIndex::load(&config.output_dir)?;
    let embedding = match query {
        Query::Id(id) => {
            let store = built.stored_targets(&config.output_dir)?.ok_or_else(|| {
                AppError::Usage(
                    "--query-id needs target embeddings; configure targets_path and rebuild".into(),
                )
            })?;
            built.target_embedding(store.get(id)?, id)?
        }
        Query::Text(text) => {
            if matches!(config.backend, BackendConfig::Precomputed(_)) {
                return Err(AppError::Usage(
                    "the precomputed backend cannot embed free text; use --query-id".into(),
                ));
            }
            let cleaned = crate::corpus::strip_regulation_refs(text);
            let backend = make_backend(config, live_lexicon(config))?;
            let input = EmbedInput {
                id: "query",
                text: &cleaned,
            };
            backend.embed(&[input], Side::Target)?.remove(0)
        }
    };
    let (top, _) = rank_labels(&embedding, &built.index, config.top_k)?;

    let mut w = csv_writer(Vec::new());
    w.write_record(["rank", "label_id", "name", "score"])
        .expect("in-memory csv");
    for (i, s) in top.iter().enumerate() {
        let name = corpus.get(&s.label_id).map_or("", |e| e.name.as_str());
        w.write_record([
            (i + 1).to_string(),
            s.label_id.clone(),
            name.to_owned(),
            format!("{:.6}", s.score),
        ])
        .expect("in-memory csv");
    }
    out.write_all(&csv_bytes(w))
        .map_err(io_err(Path::new("<stdout>")))
}

fn csv_writer(buf: Vec<u8>) -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

fn csv_bytes(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory csv flush")
}

fn cmd_evaluate(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = parse_label_corpus(&config.corpus_path)?;
    let targets = load_targets(config, &corpus)?
        .ok_or_else(|| AppError::Config("evaluate needs targets_path".into()))?;
    let built = BuiltIndex::load(&config.output_dir)?;

    let embeddings: Vec<SentenceEmbedding<f64>> = match built.stored_targets(&config.output_dir)? {
        Some(store) => targets
            .records()
            .iter()
            .map(|r| built.target_embedding(store.get(&r.target_id)?, &r.target_id))
            .collect::<Result<_>>()?,
        None => {
            let backend = make_backend(config, live_lexicon(config))?;
            embed_all(
                backend.as_ref(),
                targets
                    .records()
                    .iter()
                    .map(|r| (r.target_id.clone(), r.description.clone())),
                Side::Target,
            )?
            .1
        }
    };
    let queries: Vec<RankQuery<f64>> = targets
        .records()
        .iter()
        .zip(&embeddings)
        .map(|(r, e)| RankQuery {
            target_id: &r.target_id,
            gold_label_id: &r.gold_label_id,
            embedding: e,
        })
        .collect();
    let k = config.top_k.min(built.index.len());
    let results = rank_targets(&built.index, &queries, k)?;
    let (report, rows) = evaluate(
        &built.manifest.backend_id,
        &results,
        targets.records(),
        &config.eval_config(),
    )?;

    let dir = &config.output_dir;
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&dir.join(REPORT_FILE), report_json.as_bytes())?;
    let mut w = csv_writer(Vec::new());
    for row in &rows {
        w.serialize(row).expect("in-memory csv");
    }
    write_file(&dir.join(TARGET_ROWS_FILE), &csv_bytes(w))?;

    let mut summary = format!(
        "backend: {}\nlabels: {}\ncorrect: {} (mean gold rank {:.2})\n",
        report.backend_id, report.n_labels, report.n_correct, report.avg_rank_correct
    );
    if let Some(avg) = report.avg_rank_mislabeled {
        summary.push_str(&format!(
            "mislabeled: {} (mean gold rank {avg:.2})\n",
            report.n_mislabeled
        ));
    }
    for (k, hit) in &report.hit_at_k {
        summary.push_str(&format!("hit@{k}: {hit:.4}\n"));
    }
    summary.push_str(&format!(
        "flagged above rank {}: {}\n",
        report.mislabel_threshold,
        report.detected_mislabels.len()
    ));
    out.write_all(summary.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

fn cmd_stopwords(config: &RunConfig, points: usize, out: &mut dyn Write) -> Result<()> {
    if points == 0 {
        return Err(AppError::Usage("--points must be positive".into()));
    }
    let corpus = parse_label_corpus(&config.corpus_path)?;
    let docs = corpus.tokenized();
    let grid: Vec<f64> = (1..=points).map(|i| i as f64 / points as f64).collect();
    let curve = stopword_curve(&docs, &grid)?;
    let lexicon = Lexicon::build(&docs, config.stop_fraction)?;

    let mut w = csv_writer(Vec::new());
    w.write_record(["theta", "remaining_vocab"])
        .expect("in-memory csv");
    for (theta, remaining) in curve {
        w.write_record([theta.to_string(), remaining.to_string()])
            .expect("in-memory csv");
    }
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(
        &dir.join(STOPWORDS_FILE),
        stopword_list(&lexicon).as_bytes(),
    )?;
    out.write_all(&csv_bytes(w))
        .map_err(io_err(Path::new("<stdout>")))
}

fn cmd_stats(cmd: &StatsCommand, out: &mut dyn Write) -> Result<()> {
    use crate::eval::stats::{pearson_r, t_statistic, t_test_two_sided};
    let (n, r) = match cmd {
        StatsCommand::Pearson { x, y } => (x.len(), pearson_r(x, y)?),
        StatsCommand::Ttest { r, n } => (*n, *r),
    };
    let p = t_test_two_sided(r, n)?;
    let t = if r.abs() < 1.0 {
        t_statistic(r, n)?
    } else {
        r.signum() * f64::INFINITY
    };
    write!(out, "n,r,t,p\n{n},{r:.6},{t:.6},{p:.6}\n").map_err(io_err(Path::new("<stdout>")))
}

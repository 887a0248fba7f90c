//! Retrieval metrics over gold-label ranks, mislabel screening and the
//! length/rank correlation test.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::TargetRecord;
use crate::rank::RankResult;

pub mod stats;

pub use stats::{pearson_r, t_statistic, t_test_two_sided, StatsError};

/// Gold rank above which a target is reported as a likely mislabel.
pub const DEFAULT_MISLABEL_THRESHOLD: usize = 100;
pub const DEFAULT_HIT_KS: [usize; 6] = [1, 5, 10, 15, 20, 100];
pub const DEFAULT_BASELINE_SEED: u64 = 0x5eed;
pub const DEFAULT_BASELINE_TRIALS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no ranks to aggregate")]
    NoRanks,
    #[error("mislabel threshold must be at least 1")]
    ZeroThreshold,
    #[error("no correctly labeled targets; metrics are undefined")]
    NoCorrectTargets,
    #[error("target {0:?} has no rank result")]
    MissingResult(String),
    #[error("rank results disagree on the number of labels ({0} vs {1})")]
    InconsistentLabelCount(usize, usize),
    #[error("random baseline needs at least one label")]
    NoLabels,
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Fraction of `ranks` at or below `k`.
pub fn hit_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if ranks.is_empty() {
        return Err(EvalError::NoRanks);
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(hits as f64 / ranks.len() as f64)
}

pub fn mean_rank(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(EvalError::NoRanks);
    }
    Ok(ranks.iter().map(|&r| r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Expected 1-based rank of a uniformly random guess among `n_labels`.
pub fn random_baseline(n_labels: usize) -> Result<f64> {
    if n_labels == 0 {
        return Err(EvalError::NoLabels);
    }
    Ok((n_labels as f64 + 1.0) / 2.0)
}

/// Mean gold rank when every label gets an independent uniform score.
/// Ties (vanishingly rare) favour the gold label, which sits first.
pub fn simulate_random_baseline(n_labels: usize, trials: usize, seed: u64) -> Result<f64> {
    if n_labels == 0 {
        return Err(EvalError::NoLabels);
    }
    if trials == 0 {
        return Err(EvalError::NoRanks);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0u64;
    for _ in 0..trials {
        let gold: f64 = rng.random();
        let above = (1..n_labels).filter(|_| rng.random::<f64>() > gold).count();
        total += above as u64 + 1;
    }
    Ok(total as f64 / trials as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MislabelVerdict {
    pub target_id: String,
    pub gold_rank: usize,
    pub flagged: bool,
    pub threshold: usize,
}

/// Flags every result whose gold rank exceeds `threshold`. Verdicts come
/// back worst rank first; equal ranks keep input order.
pub fn detect_mislabels(results: &[RankResult], threshold: usize) -> Result<Vec<MislabelVerdict>> {
    if threshold == 0 {
        return Err(EvalError::ZeroThreshold);
    }
    let mut verdicts: Vec<MislabelVerdict> = results
        .iter()
        .map(|r| MislabelVerdict {
            target_id: r.target_id.clone(),
            gold_rank: r.gold_rank,
            flagged: r.gold_rank > threshold,
            threshold,
        })
        .collect();
    verdicts.sort_by_key(|v| std::cmp::Reverse(v.gold_rank));
    Ok(verdicts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Cutoffs for hit@k; 100 and the label count are always added.
    pub hit_ks: Vec<usize>,
    pub mislabel_threshold: usize,
    pub baseline_seed: u64,
    pub baseline_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            hit_ks: DEFAULT_HIT_KS.to_vec(),
            mislabel_threshold: DEFAULT_MISLABEL_THRESHOLD,
            baseline_seed: DEFAULT_BASELINE_SEED,
            baseline_trials: DEFAULT_BASELINE_TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedBaseline {
    pub seed: u64,
    pub trials: usize,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub n: usize,
    pub pearson_r: f64,
    pub t: f64,
    pub p_value: f64,
}

/// Aggregate retrieval quality for one backend.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub backend_id: String,
    pub n_labels: usize,
    pub n_targets: usize,
    pub n_correct: usize,
    pub n_mislabeled: usize,
    pub avg_rank_correct: f64,
    pub avg_rank_mislabeled: Option<f64>,
    /// Over correctly labeled targets only.
    pub hit_at_k: BTreeMap<usize, f64>,
    /// Word count against gold rank over correctly labeled targets; absent
    /// when fewer than three targets or either series is constant.
    pub length_correlation: Option<Correlation>,
    pub random_baseline: f64,
    pub simulated_baseline: SimulatedBaseline,
    pub mislabel_threshold: usize,
    /// Targets whose gold rank exceeds the threshold, worst first.
    pub detected_mislabels: Vec<String>,
}

/// One row of the per-target output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetRow {
    pub target_id: String,
    pub word_count: usize,
    pub gold_rank: usize,
    pub flagged: bool,
}

pub fn evaluate(
    backend_id: &str,
    results: &[RankResult],
    targets: &[TargetRecord],
    config: &EvalConfig,
) -> Result<(EvalReport, Vec<TargetRow>)> {
    let by_id: HashMap<&str, &RankResult> =
        results.iter().map(|r| (r.target_id.as_str(), r)).collect();
    let paired: Vec<(&TargetRecord, &RankResult)> = targets
        .iter()
        .map(|t| {
            by_id
                .get(t.target_id.as_str())
                .map(|r| (t, *r))
                .ok_or_else(|| EvalError::MissingResult(t.target_id.clone()))
        })
        .collect::<Result<_>>()?;
    let n_labels = paired.first().ok_or(EvalError::NoRanks)?.1.n_labels;
    if let Some((_, r)) = paired.iter().find(|(_, r)| r.n_labels != n_labels) {
        return Err(EvalError::InconsistentLabelCount(n_labels, r.n_labels));
    }

    let (mislabeled, correct): (Vec<_>, Vec<_>) =
        paired.iter().partition(|(t, _)| t.is_flagged_mislabel());
    if correct.is_empty() {
        return Err(EvalError::NoCorrectTargets);
    }
    let correct_ranks: Vec<usize> = correct.iter().map(|(_, r)| r.gold_rank).collect();
    let mislabeled_ranks: Vec<usize> = mislabeled.iter().map(|(_, r)| r.gold_rank).collect();

    let mut ks = config.hit_ks.clone();
    ks.extend([100, n_labels]);
    ks.sort_unstable();
    ks.dedup();
    let hit_at_k = ks
        .into_iter()
        .map(|k| Ok((k, hit_at_k(&correct_ranks, k)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let word_counts: Vec<f64> = correct.iter().map(|(t, _)| t.word_count as f64).collect();
    let rank_values: Vec<f64> = correct_ranks.iter().map(|&r| r as f64).collect();
    let length_correlation = pearson_r(&word_counts, &rank_values).ok().map(|r| {
        let n = word_counts.len();
        Correlation {
            n,
            pearson_r: r,
            t: if r.abs() < 1.0 {
                t_statistic(r, n).expect("n >= 3 and |r| < 1")
            } else {
                r.signum() * f64::INFINITY
            },
            p_value: t_test_two_sided(r, n).expect("n >= 3 and |r| <= 1"),
        }
    });

    let rank_results: Vec<RankResult> = paired.iter().map(|(_, r)| (*r).clone()).collect();
    let verdicts = detect_mislabels(&rank_results, config.mislabel_threshold)?;
    let flagged: HashMap<&str, bool> = verdicts
        .iter()
        .map(|v| (v.target_id.as_str(), v.flagged))
        .collect();

    let rows = paired
        .iter()
        .map(|(t, r)| TargetRow {
            target_id: t.target_id.clone(),
            word_count: t.word_count,
            gold_rank: r.gold_rank,
            flagged: flagged[t.target_id.as_str()],
        })
        .collect();

    let report = EvalReport {
        backend_id: backend_id.to_owned(),
        n_labels,
        n_targets: paired.len(),
        n_correct: correct.len(),
        n_mislabeled: mislabeled.len(),
        avg_rank_correct: mean_rank(&correct_ranks)?,
        avg_rank_mislabeled: mean_rank(&mislabeled_ranks).ok(),
        hit_at_k,
        length_correlation,
        random_baseline: random_baseline(n_labels)?,
        simulated_baseline: SimulatedBaseline {
            seed: config.baseline_seed,
            trials: config.baseline_trials,
            mean_rank: simulate_random_baseline(
                n_labels,
                config.baseline_trials,
                config.baseline_seed,
            )?,
        },
        mislabel_threshold: config.mislabel_threshold,
        detected_mislabels: verdicts
            .iter()
            .filter(|v| v.flagged)
            .map(|v| v.target_id.clone())
            .collect(),
    };
    Ok((report, rows))
}

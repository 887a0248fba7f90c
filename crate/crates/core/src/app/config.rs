//! Run configuration loaded from TOML.
//!
//! ```toml
//! corpus_path = "labels.jsonl"
//! targets_path = "targets.jsonl"
//! output_dir = "out"
//!
//! [backend.bag_of_vectors]
//! vectors_path = "wiki.en.vec"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Command-line flags override file values, which override defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::embed::{
    ProviderConfig, Role, RoleAssignment, DEFAULT_BUCKET_COUNT, DEFAULT_MAX_N, DEFAULT_MIN_N,
};
use crate::eval::{
    EvalConfig, DEFAULT_BASELINE_SEED, DEFAULT_BASELINE_TRIALS, DEFAULT_HIT_KS,
    DEFAULT_MISLABEL_THRESHOLD,
};
use crate::lexicon::DEFAULT_STOP_FRACTION;
use crate::rank::DEFAULT_TOP_K;

use super::AppError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    #[serde(default)]
    pub targets_path: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_stop_fraction")]
    pub stop_fraction: f64,
    #[serde(default = "default_hit_k")]
    pub hit_k: Vec<usize>,
    #[serde(default = "default_threshold")]
    pub mislabel_threshold: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_seed")]
    pub baseline_seed: u64,
    #[serde(default = "default_trials")]
    pub baseline_trials: usize,
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    BagOfVectors(BagConfig),
    External(ExternalConfig),
    Precomputed(PrecomputedConfig),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BagConfig {
    pub vectors_path: PathBuf,
    /// Hashed character n-gram rows for out-of-vocabulary words.
    #[serde(default)]
    pub buckets_path: Option<PathBuf>,
    #[serde(default = "default_min_n")]
    pub min_n: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default = "default_bucket_count")]
    pub bucket_count: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub asymmetric: bool,
    #[serde(default = "default_label_role")]
    pub label_role: Role,
    #[serde(default = "default_target_role")]
    pub target_role: Role,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_backoff_ms")]
    pub max_backoff_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecomputedConfig {
    pub labels_path: PathBuf,
    #[serde(default)]
    pub targets_path: Option<PathBuf>,
    #[serde(default = "default_precomputed_id")]
    pub backend_id: String,
    #[serde(default = "default_symmetric")]
    pub label_role: Role,
    #[serde(default = "default_symmetric")]
    pub target_role: Role,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_stop_fraction() -> f64 {
    DEFAULT_STOP_FRACTION
}
fn default_hit_k() -> Vec<usize> {
    DEFAULT_HIT_KS.to_vec()
}
fn default_threshold() -> usize {
    DEFAULT_MISLABEL_THRESHOLD
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K
}
fn default_seed() -> u64 {
    DEFAULT_BASELINE_SEED
}
fn default_trials() -> usize {
    DEFAULT_BASELINE_TRIALS
}
fn default_min_n() -> usize {
    DEFAULT_MIN_N
}
fn default_max_n() -> usize {
    DEFAULT_MAX_N
}
fn default_bucket_count() -> usize {
    DEFAULT_BUCKET_COUNT
}
fn default_label_role() -> Role {
    RoleAssignment::LABELS_AS_QUERIES.labels
}
fn default_target_role() -> Role {
    RoleAssignment::LABELS_AS_QUERIES.targets
}
fn default_symmetric() -> Role {
    Role::Symmetric
}
fn default_batch_size() -> usize {
    32
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_backoff_ms() -> u64 {
    8000
}
fn default_max_in_flight() -> usize {
    4
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_precomputed_id() -> String {
    crate::embed::precomputed::PRECOMPUTED_BACKEND_ID.to_owned()
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, AppError> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            AppError::Config(m) => AppError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_path);
        if let Some(p) = self.targets_path.as_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
        match &mut self.backend {
            BackendConfig::BagOfVectors(b) => {
                fix(&mut b.vectors_path);
                if let Some(p) = b.buckets_path.as_mut() {
                    fix(p);
                }
            }
            BackendConfig::External(_) => {}
            BackendConfig::Precomputed(p) => {
                fix(&mut p.labels_path);
                if let Some(t) = p.targets_path.as_mut() {
                    fix(t);
                }
            }
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            hit_ks: self.hit_k.clone(),
            mislabel_threshold: self.mislabel_threshold,
            baseline_seed: self.baseline_seed,
            baseline_trials: self.baseline_trials,
        }
    }
}

impl ExternalConfig {
    /// Reads the credential from the environment at call time.
    pub fn provider_config(&self) -> Result<ProviderConfig, AppError> {
        let api_key =
            match &self.api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    AppError::Config(format!("environment variable {var} is not set"))
                })?),
                None => None,
            };
        Ok(ProviderConfig {
            url: self.url.clone(),
            model: self.model.clone(),
            api_key,
            asymmetric: self.asymmetric,
            dim: self.dim,
            batch_size: self.batch_size,
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.backoff_ms),
            max_backoff: Duration::from_millis(self.max_backoff_ms),
            max_in_flight: self.max_in_flight,
        })
    }

    pub fn roles(&self) -> RoleAssignment {
        RoleAssignment {
            labels: self.label_role,
            targets: self.target_role,
        }
    }
}

impl PrecomputedConfig {
    pub fn roles(&self) -> RoleAssignment {
        RoleAssignment {
            labels: self.label_role,
            targets: self.target_role,
        }
    }
}

//! Experiment configuration: one TOML file declaring resources, training,
//! retrieval, and output settings. All paths are relative to the config
//! file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::ValidationMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub resources: BTreeMap<String, ResourceConfig>,
    pub labeling: LabelingConfig,
    #[serde(default)]
    pub model1: Model1Config,
    #[serde(default)]
    pub trainer: TrainerConfig,
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub ltr: LtrConfig,
    #[serde(default)]
    pub linear: LinearConfig,
    #[serde(default)]
    pub ambiguity: AmbiguityConfig,
}

fn default_output_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResourceConfig {
    Parallel {
        path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Comparable {
        source_docs: String,
        target_docs: String,
        alignments: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default = "default_comparable_top_k")]
        top_k: usize,
    },
    Dictionary {
        path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
}

fn default_comparable_top_k() -> usize {
    20
}

impl ResourceConfig {
    /// Query-translation cutoffs per resource kind; the dictionary takes 6,
    /// comparable 3, parallel 5 unless the config overrides them.
    pub fn n(&self) -> usize {
        match self {
            ResourceConfig::Parallel { n, .. } => n.unwrap_or(5),
            ResourceConfig::Comparable { n, .. } => n.unwrap_or(3),
            ResourceConfig::Dictionary { n, .. } => n.unwrap_or(6),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ResourceConfig::Parallel { .. } => "parallel",
            ResourceConfig::Comparable { .. } => "comparable",
            ResourceConfig::Dictionary { .. } => "dictionary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingConfig {
    /// Parallel-format corpus reserved for alignment-based labeling.
    pub corpus: String,
    #[serde(default = "default_pool_k")]
    pub pool_k: usize,
    #[serde(default = "default_validation")]
    pub validation: String,
    #[serde(default = "default_max_instances")]
    pub max_instances: usize,
    #[serde(default = "default_iterations")]
    pub aligner_iterations: usize,
}

fn default_pool_k() -> usize {
    10
}
fn default_validation() -> String {
    "any".to_string()
}
fn default_max_instances() -> usize {
    4000
}
fn default_iterations() -> usize {
    5
}

impl LabelingConfig {
    pub fn validation_mode(&self) -> Result<ValidationMode> {
        ValidationMode::parse(&self.validation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model1Config {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub use_null: bool,
    #[serde(default = "default_prune_top_k")]
    pub prune_top_k: usize,
    #[serde(default = "default_prune_min_prob")]
    pub prune_min_prob: f64,
}

fn default_true() -> bool {
    true
}
fn default_prune_top_k() -> usize {
    50
}
fn default_prune_min_prob() -> f64 {
    1e-4
}

impl Default for Model1Config {
    fn default() -> Self {
        Model1Config {
            iterations: default_iterations(),
            use_null: true,
            prune_top_k: default_prune_top_k(),
            prune_min_prob: default_prune_min_prob(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    #[serde(default = "default_trainer_kind")]
    pub kind: String,
    #[serde(default = "default_restarts")]
    pub restarts: u32,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_passes")]
    pub max_passes: u32,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default)]
    pub reg: f64,
}

fn default_trainer_kind() -> String {
    "coordinate_ascent".to_string()
}
fn default_restarts() -> u32 {
    8
}
fn default_epsilon() -> f64 {
    1e-5
}
fn default_max_passes() -> u32 {
    12
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_epochs() -> u32 {
    100
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            kind: default_trainer_kind(),
            restarts: default_restarts(),
            epsilon: default_epsilon(),
            max_passes: default_max_passes(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            reg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    pub documents: String,
    pub topics: String,
    pub qrels: String,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    /// Ranked-list depth written to run files.
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Weighted query terms (the default) versus flat weight-1 terms.
    #[serde(default = "default_true")]
    pub weighted: bool,
}

fn default_k1() -> f64 {
    1.2
}
fn default_b() -> f64 {
    0.75
}
fn default_depth() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtrConfig {
    #[serde(default = "default_ltr_n")]
    pub n: usize,
    /// Resource whose top translations build the target-side context at
    /// query time; empty selects the single resource with the best MAP.
    #[serde(default)]
    pub context_resource: String,
    #[serde(default = "default_context_top")]
    pub context_top: usize,
}

fn default_ltr_n() -> usize {
    5
}
fn default_context_top() -> usize {
    5
}

impl Default for LtrConfig {
    fn default() -> Self {
        LtrConfig {
            n: default_ltr_n(),
            context_resource: String::new(),
            context_top: default_context_top(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Fixed mixture weights per resource id; empty triggers a step-0.1
    /// grid search over the simplex.
    #[serde(default)]
    pub lambdas: BTreeMap<String, f64>,
}

impl LinearConfig {
    pub fn n(&self) -> usize {
        self.n.unwrap_or(5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AmbiguityConfig {
    /// Optional held-out word-in-context evaluation file
    /// (`word<TAB>context<TAB>expected`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<String>,
}

/// Parses and validates a config file; returns it with its base directory
/// for path resolution.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::parse(path, 0, format!("bad config: {}", e.message())))?;
    validate_config(&config).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::parse(path, 0, msg),
        other => other,
    })?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, base))
}

fn validate_config(config: &ExperimentConfig) -> Result<()> {
    if config.resources.is_empty() {
        return Err(Error::InvalidInput("config declares no resources".into()));
    }
    for (id, res) in &config.resources {
        if res.n() == 0 {
            return Err(Error::InvalidInput(format!("resource {id:?} has n = 0")));
        }
        if id.is_empty() || id == "*" {
            return Err(Error::InvalidInput(format!("invalid resource id {id:?}")));
        }
    }
    config.labeling.validation_mode()?;
    match config.trainer.kind.as_str() {
        "coordinate_ascent" | "pairwise_hinge" => {}
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown trainer kind {other:?} (expected coordinate_ascent or pairwise_hinge)"
            )))
        }
    }
    if config.retrieval.depth == 0 {
        return Err(Error::InvalidInput("retrieval depth must be >= 1".into()));
    }
    if config.ltr.n == 0 || config.ltr.context_top == 0 || config.linear.n() == 0 {
        return Err(Error::InvalidInput("translation cutoffs must be >= 1".into()));
    }
    if !config.linear.lambdas.is_empty() {
        check_lambdas(&config.linear.lambdas, &config.resources)?;
    }
    if !config.ltr.context_resource.is_empty()
        && !config.resources.contains_key(&config.ltr.context_resource)
    {
        return Err(Error::InvalidInput(format!(
            "context_resource {:?} is not a configured resource",
            config.ltr.context_resource
        )));
    }
    Ok(())
}

/// Mixture weights must cover exactly the configured resources, be
/// non-negative, and sum to 1 within 1e-9.
pub fn check_lambdas(
    lambdas: &BTreeMap<String, f64>,
    resources: &BTreeMap<String, ResourceConfig>,
) -> Result<()> {
    for id in lambdas.keys() {
        if !resources.contains_key(id) {
            return Err(Error::InvalidInput(format!(
                "lambda references unknown resource {id:?}"
            )));
        }
    }
    for id in resources.keys() {
        if !lambdas.contains_key(id) {
            return Err(Error::InvalidInput(format!(
                "lambda missing for resource {id:?}"
            )));
        }
    }
    let mut sum = 0.0;
    for (id, &l) in lambdas {
        if !(0.0..=1.0 + 1e-9).contains(&l) {
            return Err(Error::InvalidInput(format!(
                "lambda for {id:?} must be in [0, 1], got {l}"
            )));
        }
        sum += l;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "lambdas must sum to 1 (±1e-9), got {sum}"
        )));
    }
    Ok(())
}

pub fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

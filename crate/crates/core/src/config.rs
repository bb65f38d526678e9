//! Run configuration: a flat JSON object whose keys are all optional, plus
//! command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action_space::{DimensionBounds, Vocab, ACTION_DIMS, DEFAULT_VOCAB_SIZE};
use crate::draft_tree::TreeParams;
use crate::error::ConfigError;
use crate::harness::CostModel;

/// Environment variable consulted for the seed when neither a flag nor the
/// config file sets one.
pub const SEED_ENV: &str = "SPECDEC_SEED";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub vocab_size: u32,
    pub bounds: DimensionBounds,
    /// Probability that the draft's top proposal is the verifier argmax.
    pub agreement_p: f64,
    /// Spread, in bins, of the draft's miss displacement.
    pub noise_sigma: f64,
    pub top_k: usize,
    pub tree_depth: usize,
    pub max_nodes: usize,
    /// Policies to run; 0 means strict.
    pub relaxation_thresholds: Vec<u32>,
    /// Per-dimension thresholds used instead of `r` by every relaxed policy.
    pub per_dimension_r: Option<[u32; ACTION_DIMS]>,
    pub episodes: usize,
    /// Tokens decoded per episode; whole action chunks only.
    pub target_length: usize,
    pub verify_latency_ms: f64,
    pub draft_latency_ms: f64,
    pub success_tolerance_bins: u32,
    /// Positions reported in the per-position table, 6 or 7.
    pub report_positions: usize,
    pub parallel: bool,
    pub measure_speedup: bool,
    pub measure_episodes: usize,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_size: DEFAULT_VOCAB_SIZE,
            bounds: DimensionBounds::default(),
            agreement_p: 0.5,
            noise_sigma: 6.0,
            top_k: 8,
            tree_depth: 4,
            max_nodes: 50,
            relaxation_thresholds: vec![0, 3, 5, 9],
            per_dimension_r: None,
            episodes: 50,
            target_length: 70,
            verify_latency_ms: 20.0,
            draft_latency_ms: 1.0,
            success_tolerance_bins: 5,
            report_positions: ACTION_DIMS,
            parallel: true,
            measure_speedup: false,
            measure_episodes: 2,
            format: OutputFormat::Json,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn vocab(&self) -> Result<Vocab, ConfigError> {
        Vocab::new(self.vocab_size).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams::new(self.top_k, self.tree_depth, self.max_nodes)
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel::from_millis(self.verify_latency_ms, self.draft_latency_ms)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        let vocab = self.vocab()?;
        self.tree_params().validate(vocab).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.agreement_p) {
            return invalid(format!("agreement_p must be in [0, 1], got {}", self.agreement_p));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return invalid(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        if self.relaxation_thresholds.is_empty() {
            return invalid("relaxation_thresholds must list at least one value".into());
        }
        if self.episodes == 0 {
            return invalid("episodes must be at least 1".into());
        }
        if self.target_length == 0 || self.target_length % ACTION_DIMS != 0 {
            return invalid(format!(
                "target_length must be a positive multiple of {ACTION_DIMS}, got {}",
                self.target_length
            ));
        }
        if !(self.verify_latency_ms.is_finite() && self.verify_latency_ms > 0.0) {
            return invalid(format!("verify_latency_ms must be positive, got {}", self.verify_latency_ms));
        }
        if !(self.draft_latency_ms.is_finite() && self.draft_latency_ms >= 0.0) {
            return invalid(format!("draft_latency_ms must be non-negative, got {}", self.draft_latency_ms));
        }
        if !(6..=ACTION_DIMS).contains(&self.report_positions) {
            return invalid(format!("report_positions must be 6 or 7, got {}", self.report_positions));
        }
        if self.measure_episodes == 0 {
            return invalid("measure_episodes must be at least 1".into());
        }
        Ok(())
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    /// Replaces the whole threshold list when non-empty.
    pub r: Vec<u32>,
    pub top_k: Option<usize>,
    pub tree_depth: Option<usize>,
    pub max_nodes: Option<usize>,
    pub episodes: Option<usize>,
    pub target_length: Option<usize>,
    pub format: Option<OutputFormat>,
    pub output: Option<PathBuf>,
    pub parallel: Option<bool>,
}

/// Load, merge and validate a configuration, reading the seed fallback from
/// the process environment.
pub fn parse_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<RunConfig, ConfigError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    parse_config_with_env(path, overrides, env_seed.as_deref())
}

/// Precedence for the seed: flag, then file, then `env_seed`, then 0.
pub fn parse_config_with_env(
    path: Option<&Path>,
    overrides: &ConfigOverrides,
    env_seed: Option<&str>,
) -> Result<RunConfig, ConfigError> {
    let (mut config, file_has_seed) = match path {
        None => (RunConfig::default(), false),
        Some(path) => load_file(path)?,
    };
    if !file_has_seed {
        if let Some(raw) = env_seed {
            config.seed = raw
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
    }
    apply(&mut config, overrides);
    config.validate()?;
    Ok(config)
}

fn load_file(path: &Path) -> Result<(RunConfig, bool), ConfigError> {
    if !path.exists() {
        return Err(ConfigError::Missing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let has_seed = value.get("seed").is_some();
    Ok((serde_json::from_value(value)?, has_seed))
}

fn apply(config: &mut RunConfig, o: &ConfigOverrides) {
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if !o.r.is_empty() {
        config.relaxation_thresholds = o.r.clone();
    }
    if let Some(v) = o.top_k {
        config.top_k = v;
    }
    if let Some(v) = o.tree_depth {
        config.tree_depth = v;
    }
    if let Some(v) = o.max_nodes {
        config.max_nodes = v;
    }
    if let Some(v) = o.episodes {
        config.episodes = v;
    }
    if let Some(v) = o.target_length {
        config.target_length = v;
    }
    if let Some(v) = o.format {
        config.format = v;
    }
    if let Some(v) = &o.output {
        config.output = Some(v.clone());
    }
    if let Some(v) = o.parallel {
        config.parallel = v;
    }
}

//! Pipeline configuration file. Every section is optional; defaults
//! match the library defaults. Validation is fail-fast and names the
//! offending field.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use datamix_core::corpus_clean::FilterRuleSet;
use datamix_core::longctx_planner::{BlendUnit, DEFAULT_TOKEN_BUDGET};
use datamix_core::mix_optimizer::{DEFAULT_KAPPA, DEFAULT_MU};
use datamix_core::pack_avg::DEFAULT_AVERAGE_WINDOW;
use datamix_core::pref_builder::DEFAULT_PAIRS_PER_PROMPT;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub filter: Option<FilterRuleSet>,
    #[serde(default)]
    pub dedup: DedupConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub blend: BlendConfig,
    #[serde(default)]
    pub anneal: AnnealConfig,
    #[serde(default)]
    pub pairs: PairsConfig,
    #[serde(default)]
    pub pack: PackConfig,
    #[serde(default)]
    pub average: AverageConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupConfig {
    pub levels: Vec<String>,
    pub min_paragraph_chars: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            levels: vec![
                "url".to_string(),
                "document".to_string(),
                "paragraph".to_string(),
            ],
            min_paragraph_chars: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iters: usize,
    pub cos_threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 8,
            max_iters: 100,
            cos_threshold: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    pub kappa: f64,
    pub mu: f64,
    pub max_rounds: u32,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            kappa: DEFAULT_KAPPA,
            mu: DEFAULT_MU,
            max_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendConfig {
    pub short_fraction: f64,
    #[serde(default)]
    pub domain_upsample: std::collections::BTreeMap<String, f64>,
    pub unit: BlendUnit,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            short_fraction: 0.7,
            domain_upsample: Default::default(),
            unit: BlendUnit::Tokens,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealConfig {
    pub pretrain_peak_lr: f64,
    pub warmup_frac: f64,
    pub token_budget: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            pretrain_peak_lr: 3e-4,
            warmup_frac: 0.01,
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsConfig {
    pub pairs_per_prompt: usize,
}

impl Default for PairsConfig {
    fn default() -> Self {
        PairsConfig {
            pairs_per_prompt: DEFAULT_PAIRS_PER_PROMPT,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackConfig {
    pub max_len: u64,
    pub mode: String,
    pub strictness: String,
}

impl Default for PackConfig {
    fn default() -> Self {
        PackConfig {
            max_len: 8192,
            mode: "pretrain".to_string(),
            strictness: "strict".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AverageConfig {
    pub window: usize,
}

impl Default for AverageConfig {
    fn default() -> Self {
        AverageConfig {
            window: DEFAULT_AVERAGE_WINDOW,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field {}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| bad("config", format!("cannot read {}: {e}", path.display())))?;
        let config: PipelineConfig = serde_json::from_str(&raw)
            .map_err(|e| bad("config", format!("parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(filter) = &self.filter {
            filter
                .validate()
                .map_err(|e| bad("filter", e.to_string()))?;
        }
        for level in &self.dedup.levels {
            if !matches!(level.as_str(), "url" | "document" | "paragraph") {
                return Err(bad("dedup.levels", format!("unknown level {level}")));
            }
        }
        if self.cluster.k == 0 {
            return Err(bad("cluster.k", "must be positive"));
        }
        if self.cluster.max_iters == 0 {
            return Err(bad("cluster.max_iters", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.cluster.cos_threshold) {
            return Err(bad(
                "cluster.cos_threshold",
                format!("must lie in [0, 1], got {}", self.cluster.cos_threshold),
            ));
        }
        if !self.mix.kappa.is_finite() || self.mix.kappa <= 0.0 {
            return Err(bad(
                "mix.kappa",
                format!("must be finite and positive, got {}", self.mix.kappa),
            ));
        }
        if !self.mix.mu.is_finite() || self.mix.mu <= 0.0 {
            return Err(bad(
                "mix.mu",
                format!("must be finite and positive, got {}", self.mix.mu),
            ));
        }
        if self.mix.max_rounds == 0 {
            return Err(bad("mix.max_rounds", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.blend.short_fraction) {
            return Err(bad(
                "blend.short_fraction",
                format!("must lie in [0, 1], got {}", self.blend.short_fraction),
            ));
        }
        if let Some((domain, &m)) = self.blend.domain_upsample.iter().find(|&(_, &m)| m < 1.0) {
            return Err(bad(
                "blend.domain_upsample",
                format!("multiplier for {domain} must be >= 1, got {m}"),
            ));
        }
        if !(self.anneal.pretrain_peak_lr > 0.0) {
            return Err(bad(
                "anneal.pretrain_peak_lr",
                format!("must be positive, got {}", self.anneal.pretrain_peak_lr),
            ));
        }
        if !(0.0..1.0).contains(&self.anneal.warmup_frac) {
            return Err(bad(
                "anneal.warmup_frac",
                format!("must lie in [0, 1), got {}", self.anneal.warmup_frac),
            ));
        }
        if self.pairs.pairs_per_prompt == 0 {
            return Err(bad("pairs.pairs_per_prompt", "must be positive"));
        }
        if self.pack.max_len == 0 {
            return Err(bad("pack.max_len", "must be positive"));
        }
        if !matches!(self.pack.mode.as_str(), "pretrain" | "sft") {
            return Err(bad(
                "pack.mode",
                format!("must be pretrain or sft, got {}", self.pack.mode),
            ));
        }
        if !matches!(self.pack.strictness.as_str(), "strict" | "lenient") {
            return Err(bad(
                "pack.strictness",
                format!("must be strict or lenient, got {}", self.pack.strictness),
            ));
        }
        if self.average.window < 2 {
            return Err(bad("average.window", "must be at least 2"));
        }
        Ok(())
    }
}

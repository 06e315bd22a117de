//! Corpus cleaning: hierarchical de-duplication, heuristic quality
//! filtering, embedding-based clustering, and the external-scorer
//! gateway.

mod dedup;
mod filter;
mod gateway;
mod kmeans;

pub use dedup::{
    all_levels, dedup_stream, normalize_text, normalize_url, normalize_url_with, DedupLevel,
    DedupReport, UrlError,
};
pub use filter::{heuristic_filter, run_filter, Verdict};
pub use gateway::{
    score_gateway, GatewayConfig, GatewayError, GatewayResult, ScoreItem, ScoreRecord,
    ScorerEndpoint,
};
pub use kmeans::{kmeans_cluster, near_dup_groups, ClusterResult, KmeansError, NearDupReport};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One corpus record; the unit of cleaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            url: None,
            domain: None,
            meta: BTreeMap::new(),
            token_count: None,
        }
    }
}

/// Thresholds for heuristic quality filtering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterRuleSet {
    pub min_chars: usize,
    pub punct_ratio_min: f64,
    pub punct_ratio_max: f64,
    #[serde(default)]
    pub dirty_words: Vec<String>,
    pub dirty_word_max_ratio: f64,
    pub code_min_stars: u64,
}

impl Default for FilterRuleSet {
    fn default() -> Self {
        FilterRuleSet {
            min_chars: 50,
            punct_ratio_min: 0.001,
            punct_ratio_max: 0.30,
            dirty_words: Vec::new(),
            dirty_word_max_ratio: 0.01,
            code_min_stars: 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum RuleSetError {
    #[error("punct_ratio_min {min} exceeds punct_ratio_max {max}")]
    PunctRange { min: f64, max: f64 },
    #[error("{field} must be a fraction in [0, 1], got {value}")]
    FractionOutOfRange { field: &'static str, value: f64 },
    #[error("min_chars must be positive")]
    ZeroMinChars,
}

impl FilterRuleSet {
    pub fn validate(&self) -> Result<(), RuleSetError> {
        if self.min_chars == 0 {
            return Err(RuleSetError::ZeroMinChars);
        }
        for (field, value) in [
            ("punct_ratio_min", self.punct_ratio_min),
            ("punct_ratio_max", self.punct_ratio_max),
            ("dirty_word_max_ratio", self.dirty_word_max_ratio),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(RuleSetError::FractionOutOfRange { field, value });
            }
        }
        if self.punct_ratio_min > self.punct_ratio_max {
            return Err(RuleSetError::PunctRange {
                min: self.punct_ratio_min,
                max: self.punct_ratio_max,
            });
        }
        Ok(())
    }
}

/// Per-stream filtering summary.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub dropped: usize,
    pub dropped_by_reason: BTreeMap<String, usize>,
    pub verdicts: Vec<(String, Verdict)>,
}

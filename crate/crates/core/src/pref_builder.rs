//! Preference-pair construction for DPO: chosen score >= 8, on-policy
//! priority at ties, rejected strictly on-policy with a score gap of at
//! least 2, and at most K pairs per prompt.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CHOSEN_MIN_SCORE: f64 = 8.0;
pub const MIN_SCORE_GAP: f64 = 2.0;
pub const DEFAULT_PAIRS_PER_PROMPT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    RuleVerified,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub prompt_id: String,
    pub response: String,
    pub source_model: String,
    pub on_policy: bool,
    pub score: f64,
    pub score_kind: ScoreKind,
}

impl ResponseRecord {
    /// Map a rule-verified pass/fail verdict onto the judge scale.
    pub fn rule_score(pass: bool) -> f64 {
        if pass {
            10.0
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), PairError> {
        if !(0.0..=10.0).contains(&self.score) {
            return Err(PairError::ScoreOutOfRange {
                prompt_id: self.prompt_id.clone(),
                score: self.score,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub chosen: ResponseRecord,
    pub rejected: ResponseRecord,
}

impl PreferencePair {
    pub fn check_invariants(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.chosen.score < CHOSEN_MIN_SCORE {
            violations.push("chosen_below_threshold".to_string());
        }
        if self.chosen.score - self.rejected.score < MIN_SCORE_GAP {
            violations.push("gap_below_threshold".to_string());
        }
        if !self.rejected.on_policy {
            violations.push("rejected_off_policy".to_string());
        }
        if self.chosen.prompt_id != self.rejected.prompt_id
            || self.chosen.prompt_id != self.prompt_id
        {
            violations.push("prompt_id_mismatch".to_string());
        }
        violations
    }
}

#[derive(Debug, Error)]
pub enum PairError {
    #[error("score {score} for prompt {prompt_id} outside [0, 10]")]
    ScoreOutOfRange { prompt_id: String, score: f64 },
    #[error("candidates span multiple prompt ids: {0} vs {1}")]
    MixedPrompts(String, String),
    #[error("k must be >= 1")]
    ZeroK,
}

fn text_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// Pick the chosen response: the maximum-scoring candidate with score
/// >= 8, preferring on-policy candidates, then the lexicographically
/// smallest source tag, then the smallest response hash.
pub fn select_chosen(candidates: &[ResponseRecord]) -> Result<Option<ResponseRecord>, PairError> {
    let Some(first) = candidates.first() else {
        return Ok(None);
    };
    for c in candidates {
        c.validate()?;
        if c.prompt_id != first.prompt_id {
            return Err(PairError::MixedPrompts(
                first.prompt_id.clone(),
                c.prompt_id.clone(),
            ));
        }
    }
    let max_score = candidates
        .iter()
        .map(|c| c.score)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_score < CHOSEN_MIN_SCORE {
        return Ok(None);
    }
    let top: Vec<&ResponseRecord> = candidates.iter().filter(|c| c.score == max_score).collect();
    let pool: Vec<&ResponseRecord> = if top.iter().any(|c| c.on_policy) {
        top.iter().filter(|c| c.on_policy).copied().collect()
    } else {
        top
    };
    let best = pool
        .into_iter()
        .min_by(|a, b| {
            a.source_model
                .cmp(&b.source_model)
                .then_with(|| text_hash(&a.response).cmp(&text_hash(&b.response)))
        })
        .cloned();
    Ok(best)
}

/// All on-policy candidates at least 2 points below the chosen one.
pub fn select_rejected<'a>(
    candidates: &'a [ResponseRecord],
    chosen: &ResponseRecord,
) -> Vec<&'a ResponseRecord> {
    candidates
        .iter()
        .filter(|c| {
            c.on_policy && chosen.score - c.score >= MIN_SCORE_GAP && *c != chosen
        })
        .collect()
}

/// Build up to `k` pairs for one prompt's candidate group. When more
/// than `k` rejected candidates are eligible, `k` are sampled uniformly
/// without replacement; the generator is derived from the seed and the
/// prompt id, so output is deterministic per (group, k, seed).
pub fn build_pairs(
    candidates: &[ResponseRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>, PairError> {
    if k == 0 {
        return Err(PairError::ZeroK);
    }
    let Some(chosen) = select_chosen(candidates)? else {
        return Ok(Vec::new());
    };
    let eligible = select_rejected(candidates, &chosen);
    if eligible.is_empty() {
        return Ok(Vec::new());
    }
    let picks: Vec<usize> = if eligible.len() > k {
        let prompt_hash = {
            let digest = text_hash(&chosen.prompt_id);
            u64::from_le_bytes(digest[..8].try_into().unwrap())
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ prompt_hash);
        let mut idx = sample(&mut rng, eligible.len(), k).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..eligible.len()).collect()
    };
    Ok(picks
        .into_iter()
        .map(|i| PreferencePair {
            prompt_id: chosen.prompt_id.clone(),
            chosen: chosen.clone(),
            rejected: eligible[i].clone(),
        })
        .collect())
}

/// Build pairs for a whole dataset, grouped by prompt id, merged in
/// prompt-id order.
pub fn build_dataset(
    records: &[ResponseRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>, PairError> {
    let mut groups: BTreeMap<&str, Vec<ResponseRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.prompt_id).or_default().push(r.clone());
    }
    let mut pairs = Vec::new();
    for group in groups.values() {
        pairs.extend(build_pairs(group, k, seed)?);
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PairReport {
    pub pair_count: usize,
    pub prompts_with_pairs: usize,
    pub per_source_counts: BTreeMap<String, usize>,
    /// Histogram of floor(chosen − rejected) score gaps.
    pub score_gap_histogram: BTreeMap<u32, usize>,
    pub violations: Vec<(String, Vec<String>)>,
    pub valid: bool,
}

/// Summarize a pair stream, re-validating every pair's invariants.
pub fn dataset_report(pairs: &[PreferencePair]) -> PairReport {
    let mut report = PairReport {
        pair_count: pairs.len(),
        valid: true,
        ..Default::default()
    };
    let mut prompts = std::collections::BTreeSet::new();
    for pair in pairs {
        prompts.insert(pair.prompt_id.clone());
        *report
            .per_source_counts
            .entry(pair.chosen.source_model.clone())
            .or_insert(0) += 1;
        let gap = (pair.chosen.score - pair.rejected.score).floor().max(0.0) as u32;
        *report.score_gap_histogram.entry(gap).or_insert(0) += 1;
        let violations = pair.check_invariants();
        if !violations.is_empty() {
            report.valid = false;
            report
                .violations
                .push((pair.prompt_id.clone(), violations));
        }
    }
    report.prompts_with_pairs = prompts.len();
    report
}

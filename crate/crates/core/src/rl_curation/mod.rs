//! RL dataset curation: answer verification, pass-rate stratification,
//! dataset composition, tool-call rewards, constraint checking, and
//! curriculum ordering.

mod boxed;
mod constraints;
mod tool;

pub use boxed::{answers_equivalent, extract_boxed, verify_boxed_answer, AnswerVerdict, BoxedCheck};
pub use constraints::{
    validate_constraints, ConstraintError, ConstraintReport, ConstraintResult, ConstraintSpec,
};
pub use tool::{
    tool_reward, validate_tool_call, FunctionDef, ParamType, RewardError, ToolCall,
    ToolCallRecord, ToolOutput, ToolValidation,
};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-prompt rollout outcomes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub prompt_id: String,
    pub attempts: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Error)]
pub enum RlError {
    #[error("rollout for prompt {0} has no attempts")]
    EmptyAttempts(String),
    #[error("insufficient_tier: the {0} tier is empty")]
    InsufficientTier(&'static str),
    #[error("stages ({stages}) exceeds prompt count ({prompts})")]
    TooManyStages { stages: usize, prompts: usize },
    #[error("pass rate {rate} for prompt {prompt_id} outside [0, 1]")]
    BadRate { prompt_id: String, rate: f64 },
}

/// Empirical fraction of correct attempts.
pub fn pass_rate(record: &RolloutRecord) -> Result<f64, RlError> {
    if record.attempts.is_empty() {
        return Err(RlError::EmptyAttempts(record.prompt_id.clone()));
    }
    let correct = record.attempts.iter().filter(|&&a| a).count();
    Ok(correct as f64 / record.attempts.len() as f64)
}

/// All attempts pass → Easy; none pass → Hard; anything between →
/// Medium.
pub fn tier(correct: usize, attempts: usize) -> Tier {
    if correct == attempts {
        Tier::Easy
    } else if correct == 0 {
        Tier::Hard
    } else {
        Tier::Medium
    }
}

pub fn stratify(record: &RolloutRecord) -> Result<(f64, Tier), RlError> {
    let rate = pass_rate(record)?;
    let correct = record.attempts.iter().filter(|&&a| a).count();
    Ok((rate, tier(correct, record.attempts.len())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositionReport {
    pub medium_taken: usize,
    pub hard_taken: usize,
    pub medium_available: usize,
    pub hard_available: usize,
}

/// Sample a 2:1 medium:hard dataset. `m = min(|medium|, 2|hard|)`
/// rounded down to even so the ratio is exact, with `m/2` hard items;
/// the combined output is shuffled deterministically.
pub fn compose_rl_set<T: Clone>(
    medium: &[T],
    hard: &[T],
    seed: u64,
) -> Result<(Vec<T>, CompositionReport), RlError> {
    if medium.is_empty() {
        return Err(RlError::InsufficientTier("medium"));
    }
    if hard.is_empty() {
        return Err(RlError::InsufficientTier("hard"));
    }
    let mut m = medium.len().min(2 * hard.len());
    m -= m % 2;
    if m == 0 {
        return Err(RlError::InsufficientTier("medium"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let medium_idx = sample(&mut rng, medium.len(), m).into_vec();
    let hard_idx = sample(&mut rng, hard.len(), m / 2).into_vec();
    let mut out: Vec<T> = medium_idx
        .into_iter()
        .map(|i| medium[i].clone())
        .chain(hard_idx.into_iter().map(|i| hard[i].clone()))
        .collect();
    out.shuffle(&mut rng);
    Ok((
        out,
        CompositionReport {
            medium_taken: m,
            hard_taken: m / 2,
            medium_available: medium.len(),
            hard_available: hard.len(),
        },
    ))
}

/// Order prompts by pass rate descending (ties by prompt id) and split
/// into `stages` contiguous near-equal groups; earlier stages hold the
/// higher pass rates.
pub fn curriculum_order(
    prompts: &[(String, f64)],
    stages: usize,
) -> Result<Vec<Vec<String>>, RlError> {
    if stages > prompts.len() {
        return Err(RlError::TooManyStages {
            stages,
            prompts: prompts.len(),
        });
    }
    for (id, rate) in prompts {
        if !(0.0..=1.0).contains(rate) {
            return Err(RlError::BadRate {
                prompt_id: id.clone(),
                rate: *rate,
            });
        }
    }
    let mut sorted: Vec<&(String, f64)> = prompts.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let n = sorted.len();
    let base = n / stages;
    let extra = n % stages;
    let mut out = Vec::with_capacity(stages);
    let mut cursor = 0;
    for stage in 0..stages {
        let size = base + usize::from(stage < extra);
        out.push(
            sorted[cursor..cursor + size]
                .iter()
                .map(|(id, _)| id.clone())
                .collect(),
        );
        cursor += size;
    }
    Ok(out)
}

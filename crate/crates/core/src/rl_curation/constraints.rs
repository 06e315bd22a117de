//! Verifiable-constraint validation scripts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    MaxWords { limit: usize },
    MinWords { limit: usize },
    ParagraphCount { count: usize },
    KeywordCount { keyword: String, count: usize },
    EndsWith { suffix: String },
    StartsWith { prefix: String },
}

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("numeric parameter must be positive for {0}")]
    NonPositiveParameter(&'static str),
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        match self {
            ConstraintSpec::MaxWords { limit } | ConstraintSpec::MinWords { limit } if *limit == 0 => {
                Err(ConstraintError::NonPositiveParameter("word limit"))
            }
            ConstraintSpec::ParagraphCount { count } if *count == 0 => {
                Err(ConstraintError::NonPositiveParameter("paragraph_count"))
            }
            ConstraintSpec::KeywordCount { count, .. } if *count == 0 => {
                Err(ConstraintError::NonPositiveParameter("keyword_count"))
            }
            _ => Ok(()),
        }
    }
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn paragraph_count(text: &str) -> usize {
    let mut count = 0;
    let mut in_paragraph = false;
    for line in text.lines() {
        if line.trim().is_empty() {
            in_paragraph = false;
        } else if !in_paragraph {
            count += 1;
            in_paragraph = true;
        }
    }
    count
}

fn keyword_occurrences(text: &str, keyword: &str) -> usize {
    if keyword.is_empty() {
        return 0;
    }
    let haystack = text.to_lowercase();
    let needle = keyword.to_lowercase();
    let mut count = 0;
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(&needle) {
        count += 1;
        from += pos + needle.len();
    }
    count
}

fn check_one(response: &str, spec: &ConstraintSpec) -> bool {
    match spec {
        ConstraintSpec::MaxWords { limit } => word_count(response) <= *limit,
        ConstraintSpec::MinWords { limit } => word_count(response) >= *limit,
        ConstraintSpec::ParagraphCount { count } => paragraph_count(response) == *count,
        ConstraintSpec::KeywordCount { keyword, count } => {
            keyword_occurrences(response, keyword) >= *count
        }
        ConstraintSpec::EndsWith { suffix } => response.trim_end().ends_with(suffix),
        ConstraintSpec::StartsWith { prefix } => response.trim_start().starts_with(prefix),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintResult {
    pub spec: ConstraintSpec,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub results: Vec<ConstraintResult>,
    pub overall_pass: bool,
}

/// Evaluate each constraint independently; overall pass iff all pass.
pub fn validate_constraints(
    response: &str,
    constraints: &[ConstraintSpec],
) -> Result<ConstraintReport, ConstraintError> {
    for c in constraints {
        c.validate()?;
    }
    let results: Vec<ConstraintResult> = constraints
        .iter()
        .map(|spec| ConstraintResult {
            spec: spec.clone(),
            pass: check_one(response, spec),
        })
        .collect();
    let overall_pass = results.iter().all(|r| r.pass);
    Ok(ConstraintReport {
        results,
        overall_pass,
    })
}

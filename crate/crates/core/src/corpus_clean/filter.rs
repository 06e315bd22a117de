//! Heuristic quality filtering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Document, FilterReport, FilterRuleSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Keep,
    Drop { reasons: Vec<String> },
}

impl Verdict {
    pub fn is_keep(&self) -> bool {
        matches!(self, Verdict::Keep)
    }
}

fn punct_ratio(text: &str) -> f64 {
    let mut total = 0usize;
    let mut punct = 0usize;
    for c in text.chars() {
        total += 1;
        if c.is_ascii_punctuation() {
            punct += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        punct as f64 / total as f64
    }
}

fn dirty_word_ratio(text: &str, dirty_words: &[String]) -> f64 {
    if dirty_words.is_empty() {
        return 0.0;
    }
    let mut total = 0usize;
    let mut dirty = 0usize;
    for token in text.split_whitespace() {
        total += 1;
        let lower = token.to_lowercase();
        if dirty_words.iter().any(|w| w.eq_ignore_ascii_case(&lower)) {
            dirty += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        dirty as f64 / total as f64
    }
}

/// Apply every rule; all fired reasons are recorded.
pub fn heuristic_filter(doc: &Document, rules: &FilterRuleSet) -> Verdict {
    let mut reasons = Vec::new();
    if doc.text.chars().count() < rules.min_chars {
        reasons.push("too_short".to_string());
    }
    let ratio = punct_ratio(&doc.text);
    if ratio < rules.punct_ratio_min || ratio > rules.punct_ratio_max {
        reasons.push("punct_anomaly".to_string());
    }
    if dirty_word_ratio(&doc.text, &rules.dirty_words) > rules.dirty_word_max_ratio {
        reasons.push("dirty_words".to_string());
    }
    if doc.domain.as_deref() == Some("code") {
        if let Some(stars) = doc.meta.get("stars").and_then(|s| s.parse::<u64>().ok()) {
            if stars < rules.code_min_stars {
                reasons.push("low_stars".to_string());
            }
        }
    }
    if reasons.is_empty() {
        Verdict::Keep
    } else {
        Verdict::Drop { reasons }
    }
}

/// Filter a batch in parallel, preserving input order in the report.
pub fn run_filter(docs: &[Document], rules: &FilterRuleSet) -> FilterReport {
    let verdicts: Vec<(String, Verdict)> = docs
        .par_iter()
        .map(|d| (d.id.clone(), heuristic_filter(d, rules)))
        .collect();
    let mut report = FilterReport::default();
    for (_, verdict) in &verdicts {
        match verdict {
            Verdict::Keep => report.kept += 1,
            Verdict::Drop { reasons } => {
                report.dropped += 1;
                for r in reasons {
                    *report.dropped_by_reason.entry(r.clone()).or_insert(0) += 1;
                }
            }
        }
    }
    report.verdicts = verdicts;
    report
}

//! Boxed-answer extraction and equivalence checking.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerVerdict {
    Correct,
    Incorrect,
    NoAnswer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxedCheck {
    pub verdict: AnswerVerdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Content of the last `\boxed{...}` with balanced-brace matching.
/// Returns `Err(())` on unbalanced braces.
pub fn extract_boxed(text: &str) -> Result<Option<String>, ()> {
    const MARKER: &str = "\\boxed{";
    let mut last = None;
    let mut search_from = 0;
    while let Some(pos) = text[search_from..].find(MARKER) {
        let open = search_from + pos + MARKER.len() - 1;
        let bytes = text.as_bytes();
        let mut depth = 0usize;
        let mut close = None;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            match b {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match close {
            Some(end) => {
                last = Some(text[open + 1..end].to_string());
                search_from = end + 1;
            }
            None => return Err(()),
        }
    }
    Ok(last)
}

/// Parse rationals (`a/b`), decimals, and scientific notation.
fn parse_numeric(text: &str) -> Option<f64> {
    let cleaned = text.trim().trim_matches('$').trim().replace(',', "");
    if let Some((num, den)) = cleaned.split_once('/') {
        let n: f64 = num.trim().parse().ok()?;
        let d: f64 = den.trim().parse().ok()?;
        if d == 0.0 {
            return None;
        }
        return Some(n / d);
    }
    cleaned.parse().ok()
}

fn numeric_equal(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs())
}

fn normalize_answer(text: &str) -> String {
    text.replace("\\left", "")
        .replace("\\right", "")
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '$')
        .collect::<String>()
        .to_lowercase()
}

/// Equivalence ladder: numeric comparison when both sides parse, else
/// normalized string equality.
pub fn answers_equivalent(a: &str, b: &str) -> bool {
    if let (Some(x), Some(y)) = (parse_numeric(a), parse_numeric(b)) {
        return numeric_equal(x, y);
    }
    normalize_answer(a) == normalize_answer(b)
}

/// Extract the final boxed answer from `response` and compare it against
/// `reference`.
pub fn verify_boxed_answer(response: &str, reference: &str) -> BoxedCheck {
    match extract_boxed(response) {
        Err(()) => BoxedCheck {
            verdict: AnswerVerdict::NoAnswer,
            flags: vec!["unbalanced_braces".to_string()],
        },
        Ok(None) => BoxedCheck {
            verdict: AnswerVerdict::NoAnswer,
            flags: Vec::new(),
        },
        Ok(Some(answer)) => BoxedCheck {
            verdict: if answers_equivalent(&answer, reference) {
                AnswerVerdict::Correct
            } else {
                AnswerVerdict::Incorrect
            },
            flags: Vec::new(),
        },
    }
}

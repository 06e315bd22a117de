//! Tool-call format/match validation and the piecewise tool-use reward.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Number,
    Integer,
    Boolean,
    Array,
    Object,
}

impl ParamType {
    fn accepts(&self, value: &Value) -> bool {
        match self {
            ParamType::String => value.is_string(),
            ParamType::Number => value.is_number(),
            ParamType::Integer => value.is_i64() || value.is_u64(),
            ParamType::Boolean => value.is_boolean(),
            ParamType::Array => value.is_array(),
            ParamType::Object => value.is_object(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    pub params: BTreeMap<String, ParamType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub params: BTreeMap<String, Value>,
}

/// Model output: either an already-structured call or free text that
/// may or may not parse into one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ToolOutput {
    Call(ToolCall),
    Text(String),
}

impl ToolOutput {
    fn as_call(&self) -> Option<ToolCall> {
        match self {
            ToolOutput::Call(c) => Some(c.clone()),
            ToolOutput::Text(t) => serde_json::from_str(t).ok(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub id: String,
    pub requires_tool: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_output: Option<ToolOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ToolCall>,
    #[serde(default)]
    pub schema: Vec<FunctionDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_score: Option<f64>,
    #[serde(default = "default_s_min")]
    pub s_min: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
}

fn default_s_min() -> f64 {
    0.0
}
fn default_s_max() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolValidation {
    pub format_ok: bool,
    pub match_ok: bool,
    pub diagnostics: Vec<String>,
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if a.is_number() && b.is_number() => {
            x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs())
        }
        _ => match (a, b) {
            (Value::Array(xs), Value::Array(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| values_equal(x, y))
            }
            (Value::Object(xs), Value::Object(ys)) => {
                xs.len() == ys.len()
                    && xs
                        .iter()
                        .all(|(k, x)| ys.get(k).is_some_and(|y| values_equal(x, y)))
            }
            _ => a == b,
        },
    }
}

/// Format check: the output parses as a call, names a schema tool, uses
/// only that tool's parameters, and respects declared types. Match
/// check: format plus exact agreement with the reference call.
pub fn validate_tool_call(
    output: &ToolOutput,
    schema: &[FunctionDef],
    reference: &ToolCall,
) -> ToolValidation {
    let mut diagnostics = Vec::new();
    let Some(call) = output.as_call() else {
        return ToolValidation {
            format_ok: false,
            match_ok: false,
            diagnostics: vec!["unparseable_output".to_string()],
        };
    };
    let Some(def) = schema.iter().find(|f| f.name == call.name) else {
        return ToolValidation {
            format_ok: false,
            match_ok: false,
            diagnostics: vec![format!("unknown_tool:{}", call.name)],
        };
    };
    let mut format_ok = true;
    for (param, value) in &call.params {
        match def.params.get(param) {
            None => {
                format_ok = false;
                diagnostics.push(format!("unknown_param:{param}"));
            }
            Some(ty) if !ty.accepts(value) => {
                format_ok = false;
                diagnostics.push(format!("type_mismatch:{param}"));
            }
            Some(_) => {}
        }
    }
    let mut match_ok = format_ok;
    if match_ok && call.name != reference.name {
        match_ok = false;
        diagnostics.push("tool_name_differs".to_string());
    }
    if match_ok {
        let keys_a: Vec<&String> = call.params.keys().collect();
        let keys_b: Vec<&String> = reference.params.keys().collect();
        if keys_a != keys_b {
            match_ok = false;
            diagnostics.push("param_keys_differ".to_string());
        } else {
            for (key, value) in &call.params {
                if !values_equal(value, &reference.params[key]) {
                    match_ok = false;
                    diagnostics.push(format!("param_value_differs:{key}"));
                }
            }
        }
    }
    ToolValidation {
        format_ok,
        match_ok,
        diagnostics,
    }
}

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("tool-free record {id} is missing a judge score")]
    MissingScore { id: String },
    #[error("score {score} outside bounds [{s_min}, {s_max}] for record {id}")]
    ScoreOutOfBounds {
        id: String,
        score: f64,
        s_min: f64,
        s_max: f64,
    },
    #[error("score bounds invalid for record {id}: s_min {s_min} >= s_max {s_max}")]
    BadBounds { id: String, s_min: f64, s_max: f64 },
}

/// Piecewise reward: +1 for a fully correct required tool call, -1 for
/// a failed one, and an affine map of the judge score onto [-1, 1] for
/// tool-free tasks.
pub fn tool_reward(record: &ToolCallRecord, validation: (bool, bool)) -> Result<f64, RewardError> {
    if record.requires_tool {
        let (format_ok, match_ok) = validation;
        return Ok(if format_ok && match_ok { 1.0 } else { -1.0 });
    }
    if record.s_min >= record.s_max {
        return Err(RewardError::BadBounds {
            id: record.id.clone(),
            s_min: record.s_min,
            s_max: record.s_max,
        });
    }
    let score = record.judge_score.ok_or(RewardError::MissingScore {
        id: record.id.clone(),
    })?;
    if score < record.s_min || score > record.s_max {
        return Err(RewardError::ScoreOutOfBounds {
            id: record.id.clone(),
            score,
            s_min: record.s_min,
            s_max: record.s_max,
        });
    }
    Ok(2.0 * (score - record.s_min) / (record.s_max - record.s_min) - 1.0)
}

//! Gateway to an external model-based quality scorer.
//!
//! Two backends sit behind one contract: an HTTP endpoint receiving a
//! JSON batch, or a subprocess consuming JSONL on stdin and emitting
//! JSONL scores. Items that fail scoring after retries are marked
//! unscored, never silently dropped.

use std::collections::HashMap;
use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScorerEndpoint {
    Http { url: String },
    Command { program: String, args: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub endpoint: ScorerEndpoint,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl GatewayConfig {
    pub fn new(endpoint: ScorerEndpoint) -> Self {
        GatewayConfig {
            endpoint,
            max_retries: 2,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default)]
    pub unscored: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayResult {
    pub records: Vec<ScoreRecord>,
    pub error_count: usize,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("scorer subprocess failed to start: {0}")]
    Spawn(std::io::Error),
    #[error("scorer subprocess i/o: {0}")]
    SubprocessIo(std::io::Error),
}

#[derive(Serialize)]
struct HttpBatch<'a> {
    items: &'a [ScoreItem],
}

#[derive(Deserialize)]
struct HttpResponse {
    scores: Vec<ScoreRecord>,
}

/// Score a batch. Retries the whole batch per config; after retries,
/// items without a returned score come back with `unscored = true` and
/// `error_count` reflects them.
pub fn score_gateway(
    items: &[ScoreItem],
    config: &GatewayConfig,
) -> Result<GatewayResult, GatewayError> {
    if items.is_empty() {
        return Ok(GatewayResult {
            records: Vec::new(),
            error_count: 0,
        });
    }
    let mut scored: HashMap<String, ScoreRecord> = HashMap::new();
    for _attempt in 0..=config.max_retries {
        let result = match &config.endpoint {
            ScorerEndpoint::Http { url } => score_http(items, url, config.timeout_secs),
            ScorerEndpoint::Command { program, args } => score_command(items, program, args)?,
        };
        if let Some(records) = result {
            for r in records {
                if r.score.is_some() {
                    scored.insert(r.id.clone(), r);
                }
            }
        }
        if items.iter().all(|i| scored.contains_key(&i.id)) {
            break;
        }
    }
    let mut error_count = 0;
    let records = items
        .iter()
        .map(|item| {
            scored.remove(&item.id).unwrap_or_else(|| {
                error_count += 1;
                ScoreRecord {
                    id: item.id.clone(),
                    score: None,
                    flags: vec!["scoring_failed".to_string()],
                    unscored: true,
                }
            })
        })
        .collect();
    Ok(GatewayResult {
        records,
        error_count,
    })
}

fn score_http(items: &[ScoreItem], url: &str, timeout_secs: u64) -> Option<Vec<ScoreRecord>> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .ok()?;
    let response = client
        .post(url)
        .json(&HttpBatch { items })
        .send()
        .ok()?
        .error_for_status()
        .ok()?;
    let parsed: HttpResponse = response.json().ok()?;
    Some(parsed.scores)
}

fn score_command(
    items: &[ScoreItem],
    program: &str,
    args: &[String],
) -> Result<Option<Vec<ScoreRecord>>, GatewayError> {
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(GatewayError::Spawn)?;
    {
        let stdin = child.stdin.as_mut().expect("piped stdin");
        for item in items {
            let line = serde_json::to_string(item).expect("serializable item");
            writeln!(stdin, "{line}").map_err(GatewayError::SubprocessIo)?;
        }
    }
    let output = child
        .wait_with_output()
        .map_err(GatewayError::SubprocessIo)?;
    if !output.status.success() {
        return Ok(None);
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let records: Vec<ScoreRecord> = stdout
        .lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect();
    Ok(Some(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(n: usize) -> Vec<ScoreItem> {
        (0..n)
            .map(|i| ScoreItem {
                id: format!("item{i}"),
                text: format!("text {i}"),
            })
            .collect()
    }

    fn stub_config(script: &str) -> GatewayConfig {
        GatewayConfig::new(ScorerEndpoint::Command {
            program: "sh".to_string(),
            args: vec!["-c".to_string(), script.to_string()],
        })
    }

    #[test]
    fn constant_stub_scores_all() {
        // Echo each input id back with score 5.
        let script = r#"while read -r line; do
            id=$(printf '%s' "$line" | sed 's/.*"id":"\([^"]*\)".*/\1/')
            printf '{"id":"%s","score":5.0}\n' "$id"
        done"#;
        let result = score_gateway(&items(4), &stub_config(script)).unwrap();
        assert_eq!(result.error_count, 0);
        assert!(result.records.iter().all(|r| r.score == Some(5.0)));
    }

    #[test]
    fn partial_failure_marks_unscored() {
        // Scores everything except item1.
        let script = r#"while read -r line; do
            id=$(printf '%s' "$line" | sed 's/.*"id":"\([^"]*\)".*/\1/')
            if [ "$id" != "item1" ]; then printf '{"id":"%s","score":7.5}\n' "$id"; fi
        done"#;
        let mut config = stub_config(script);
        config.max_retries = 1;
        let result = score_gateway(&items(3), &config).unwrap();
        assert_eq!(result.error_count, 1);
        let failed: Vec<_> = result.records.iter().filter(|r| r.unscored).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].id, "item1");
        assert!(failed[0].flags.contains(&"scoring_failed".to_string()));
    }

    #[test]
    fn empty_batch_empty_result() {
        let result = score_gateway(&[], &stub_config("true")).unwrap();
        assert!(result.records.is_empty());
        assert_eq!(result.error_count, 0);
    }

    #[test]
    fn unreachable_endpoint_all_unscored() {
        let mut config = GatewayConfig::new(ScorerEndpoint::Http {
            url: "http://127.0.0.1:1/score".to_string(),
        });
        config.max_retries = 0;
        config.timeout_secs = 1;
        let result = score_gateway(&items(2), &config).unwrap();
        assert_eq!(result.error_count, 2);
        assert!(result.records.iter().all(|r| r.unscored));
    }

    #[test]
    fn http_backend_round_trip() {
        use std::io::{BufRead, BufReader, Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let trimmed = line.trim();
                if let Some(rest) = trimmed
                    .to_ascii_lowercase()
                    .strip_prefix("content-length:")
                {
                    content_length = rest.trim().parse().unwrap();
                }
                if trimmed.is_empty() {
                    break;
                }
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).unwrap();
            let batch: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let scores: Vec<serde_json::Value> = batch["items"]
                .as_array()
                .unwrap()
                .iter()
                .map(|item| serde_json::json!({"id": item["id"], "score": 9.0}))
                .collect();
            let body = serde_json::json!({ "scores": scores }).to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
        });

        let config = GatewayConfig::new(ScorerEndpoint::Http {
            url: format!("http://{addr}/score"),
        });
        let result = score_gateway(&items(2), &config).unwrap();
        handle.join().unwrap();
        assert_eq!(result.error_count, 0);
        assert!(result.records.iter().all(|r| r.score == Some(9.0)));
    }
}

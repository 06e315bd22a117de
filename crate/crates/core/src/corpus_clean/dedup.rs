//! URL-, document-, and paragraph-level de-duplication.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use url::Url;

use super::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupLevel {
    Url,
    Document,
    Paragraph,
}

#[derive(Debug, Error)]
#[error("unparseable URL: {input}")]
pub struct UrlError {
    pub input: String,
}

/// Canonicalize a URL for URL-level de-duplication: lowercase scheme and
/// host, drop the fragment, drop tracking query parameters, sort the
/// remaining query parameters by key.
pub fn normalize_url(input: &str) -> Result<String, UrlError> {
    normalize_url_with(input, &["utm_"])
}

pub fn normalize_url_with(input: &str, tracking_prefixes: &[&str]) -> Result<String, UrlError> {
    let mut url = Url::parse(input).map_err(|_| UrlError {
        input: input.to_string(),
    })?;
    if url.host_str().is_none() {
        return Err(UrlError {
            input: input.to_string(),
        });
    }
    url.set_fragment(None);
    let mut params: Vec<(String, String)> = url
        .query_pairs()
        .filter(|(k, _)| !tracking_prefixes.iter().any(|p| k.starts_with(p)))
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    params.sort();
    if params.is_empty() {
        url.set_query(None);
    } else {
        let query = params
            .iter()
            .map(|(k, v)| {
                if v.is_empty() {
                    k.clone()
                } else {
                    format!("{k}={v}")
                }
            })
            .collect::<Vec<_>>()
            .join("&");
        url.set_query(Some(&query));
    }
    // Url::parse already lowercases scheme and host.
    Ok(url.to_string())
}

/// NFC-normalize, collapse whitespace runs, and trim. Applied before
/// content hashing so trivially reformatted duplicates collide.
pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    let mut in_ws = false;
    for c in nfc.chars() {
        if c.is_whitespace() {
            in_ws = true;
        } else {
            if in_ws && !out.is_empty() {
                out.push(' ');
            }
            in_ws = false;
            out.push(c);
        }
    }
    out
}

/// 128-bit content hash (truncated SHA-256) of normalized text.
fn content_hash(text: &str) -> u128 {
    let digest = Sha256::digest(normalize_text(text).as_bytes());
    u128::from_le_bytes(digest[..16].try_into().unwrap())
}

fn split_paragraphs(text: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join("\n"));
    }
    paragraphs
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DedupReport {
    pub input: usize,
    pub kept: usize,
    pub url_removed: usize,
    pub document_removed: usize,
    pub paragraphs_removed: usize,
    pub emptied_removed: usize,
}

/// Hierarchical de-duplication over an ordered stream; the first
/// occurrence wins at every level.
///
/// When paragraph-level runs, the surviving text is re-hashed and checked
/// against the document-level seen set so the output never contains two
/// documents with identical normalized text.
pub fn dedup_stream(
    docs: Vec<Document>,
    levels: &HashSet<DedupLevel>,
    min_paragraph_chars: usize,
) -> (Vec<Document>, DedupReport) {
    let mut report = DedupReport {
        input: docs.len(),
        ..Default::default()
    };
    let mut seen_urls: HashSet<String> = HashSet::new();
    let mut seen_docs: HashSet<u128> = HashSet::new();
    let mut seen_paragraphs: HashSet<u128> = HashSet::new();
    let mut kept = Vec::new();

    for mut doc in docs {
        if levels.contains(&DedupLevel::Url) {
            if let Some(url) = doc.url.as_deref() {
                // Unparseable URLs are treated as "no URL".
                if let Ok(canonical) = normalize_url(url) {
                    if !seen_urls.insert(canonical) {
                        report.url_removed += 1;
                        continue;
                    }
                }
            }
        }
        if levels.contains(&DedupLevel::Document) && !seen_docs.insert(content_hash(&doc.text)) {
            report.document_removed += 1;
            continue;
        }
        if levels.contains(&DedupLevel::Paragraph) {
            let paragraphs = split_paragraphs(&doc.text);
            let mut surviving = Vec::with_capacity(paragraphs.len());
            let mut removed_any = false;
            for p in paragraphs {
                if p.chars().count() >= min_paragraph_chars {
                    if seen_paragraphs.insert(content_hash(&p)) {
                        surviving.push(p);
                    } else {
                        report.paragraphs_removed += 1;
                        removed_any = true;
                    }
                } else {
                    surviving.push(p);
                }
            }
            if removed_any {
                if surviving.is_empty() {
                    report.emptied_removed += 1;
                    continue;
                }
                doc.text = surviving.join("\n\n");
                if levels.contains(&DedupLevel::Document)
                    && !seen_docs.insert(content_hash(&doc.text))
                {
                    report.document_removed += 1;
                    continue;
                }
            }
        }
        kept.push(doc);
    }
    report.kept = kept.len();
    (kept, report)
}

pub fn all_levels() -> HashSet<DedupLevel> {
    [DedupLevel::Url, DedupLevel::Document, DedupLevel::Paragraph]
        .into_iter()
        .collect()
}

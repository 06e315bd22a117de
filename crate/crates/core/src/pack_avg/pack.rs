//! Greedy first-fit sequence packing with same-source grouping and
//! optional single-turn → multi-turn dialogue merging.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub token_length: u64,
    pub source: String,
    /// Dialogue turns; 1 marks a single-turn exchange eligible for
    /// multi-turn merging in SFT mode.
    #[serde(default = "one")]
    pub turns: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackMode {
    PretrainConcat,
    SftPack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub sample_id: String,
    pub start_offset: u64,
    pub token_length: u64,
    pub turns: u32,
}

/// Group of single-turn samples merged into one multi-turn dialogue.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DialogueMerge {
    pub sample_ids: Vec<String>,
    pub turns: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PackedSequence {
    pub max_len: u64,
    pub source: String,
    pub segments: Vec<Segment>,
    pub pad_length: u64,
    pub mode: PackMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dialogue_merges: Vec<DialogueMerge>,
}

impl PackedSequence {
    pub fn used_tokens(&self) -> u64 {
        self.segments.iter().map(|s| s.token_length).sum()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PackReport {
    pub sequences: usize,
    pub total_tokens: u64,
    pub total_padding: u64,
    /// Sample ids truncated in lenient mode.
    pub truncated: Vec<String>,
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("sample {id} has length {len} exceeding max_len {max_len}")]
    Oversized { id: String, len: u64, max_len: u64 },
    #[error("max_len must be positive")]
    ZeroMaxLen,
}

/// Pack samples greedily in input order: each sample goes into the
/// first open sequence of its source with room, otherwise a new one.
pub fn pack_sequences(
    samples: &[Sample],
    max_len: u64,
    mode: PackMode,
    strictness: Strictness,
) -> Result<(Vec<PackedSequence>, PackReport), PackError> {
    if max_len == 0 {
        return Err(PackError::ZeroMaxLen);
    }
    let mut report = PackReport::default();
    let mut sequences: Vec<PackedSequence> = Vec::new();
    for sample in samples {
        let mut len = sample.token_length;
        if len > max_len {
            match strictness {
                Strictness::Strict => {
                    return Err(PackError::Oversized {
                        id: sample.id.clone(),
                        len,
                        max_len,
                    })
                }
                Strictness::Lenient => {
                    len = max_len;
                    report.truncated.push(sample.id.clone());
                }
            }
        }
        let slot = sequences
            .iter()
            .position(|s| s.source == sample.source && s.used_tokens() + len <= max_len);
        let seq = match slot {
            Some(i) => &mut sequences[i],
            None => {
                sequences.push(PackedSequence {
                    max_len,
                    source: sample.source.clone(),
                    segments: Vec::new(),
                    pad_length: 0,
                    mode,
                    dialogue_merges: Vec::new(),
                });
                sequences.last_mut().unwrap()
            }
        };
        let start = seq.used_tokens();
        seq.segments.push(Segment {
            sample_id: sample.id.clone(),
            start_offset: start,
            token_length: len,
            turns: sample.turns,
        });
    }
    for seq in &mut sequences {
        seq.pad_length = max_len - seq.used_tokens();
        report.total_tokens += seq.used_tokens();
        report.total_padding += seq.pad_length;
        if seq.mode == PackMode::SftPack {
            seq.dialogue_merges = merge_dialogues(&seq.segments);
        }
    }
    report.sequences = sequences.len();
    Ok((sequences, report))
}

/// Runs of consecutive single-turn segments merge into one multi-turn
/// dialogue each; multi-turn segments stand alone.
fn merge_dialogues(segments: &[Segment]) -> Vec<DialogueMerge> {
    let mut merges = Vec::new();
    let mut run: Vec<&Segment> = Vec::new();
    let mut flush = |run: &mut Vec<&Segment>| {
        if run.len() > 1 {
            merges.push(DialogueMerge {
                sample_ids: run.iter().map(|s| s.sample_id.clone()).collect(),
                turns: run.len() as u32,
            });
        }
        run.clear();
    };
    for seg in segments {
        if seg.turns == 1 {
            run.push(seg);
        } else {
            flush(&mut run);
        }
    }
    flush(&mut run);
    merges
}

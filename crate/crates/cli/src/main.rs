//! `datamix`: command-line front end for the data-pipeline library.
//!
//! Every subcommand reads JSONL (or binary checkpoints), writes its
//! primary output to `--out`, and drops a machine-readable summary next
//! to it at `<out>.report.json`. Exit codes: 0 success, 1 validation or
//! runtime error, 2 usage error.

mod config;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::PipelineConfig;
use datamix_core::corpus_clean::{
    dedup_stream, kmeans_cluster, near_dup_groups, run_filter, DedupLevel, Document,
    FilterRuleSet,
};
use datamix_core::jsonl::{read_jsonl, write_jsonl};
use datamix_core::longctx_planner::{
    anneal_plan, assign_bucket, blend_sample, BlendSpec, LengthBucketSpec, LrConfig,
};
use datamix_core::mix_optimizer::{mix_iterate, MixState, PerplexityObservation};
use datamix_core::pack_avg::{
    average_checkpoints, pack_sequences, CheckpointTensorSet, PackMode, Sample, Strictness,
};
use datamix_core::pref_builder::{build_dataset, dataset_report, ResponseRecord};
use datamix_core::rl_curation::{
    curriculum_order, stratify, tool_reward, validate_tool_call, verify_boxed_answer,
    validate_constraints, ConstraintSpec, RolloutRecord, Tier, ToolCallRecord,
};

#[derive(Parser)]
#[command(name = "datamix", version, about = "Training-data pipeline tools")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Primary output path; the summary goes to <out>.report.json.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Apply heuristic quality filters to a document stream.
    Clean { input: PathBuf },
    /// Remove URL, document, and paragraph duplicates.
    Dedup { input: PathBuf },
    /// Cluster embedding vectors and report near-duplicate groups.
    Cluster { input: PathBuf },
    /// Run one data-mix reweighting round from perplexity logs.
    MixStep {
        logs: PathBuf,
        #[arg(long)]
        state: PathBuf,
    },
    /// Assign documents to context-length buckets.
    Bucket { input: PathBuf },
    /// Draw a short/long blend from per-bucket pools.
    Blend {
        /// One JSONL pool per bucket, shortest first.
        pools: Vec<PathBuf>,
        #[arg(long)]
        n_units: u64,
    },
    /// Emit the staged context-extension schedule.
    AnnealPlan {
        /// Target context lengths, ascending.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<u64>,
        /// Total steps of each preceding stage.
        #[arg(long, value_delimiter = ',', default_value = "")]
        prev_steps: Vec<u64>,
    },
    /// Build preference pairs from scored responses.
    Pairs { input: PathBuf },
    /// Stratify prompts by rollout pass rate.
    Stratify { input: PathBuf },
    /// Score tool-call records.
    Reward { input: PathBuf },
    /// Check boxed final answers against references.
    VerifyMath { input: PathBuf },
    /// Check responses against verifiable instruction constraints.
    CheckConstraints { input: PathBuf },
    /// Order prompts into curriculum stages by pass rate.
    Curriculum {
        input: PathBuf,
        #[arg(long)]
        stages: usize,
    },
    /// Pack samples into fixed-length training sequences.
    Pack { input: PathBuf },
    /// Average the trailing window of checkpoints.
    AvgCkpt { inputs: Vec<PathBuf> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type CliError = Box<dyn std::error::Error>;

fn report_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    out.with_file_name(name)
}

fn write_report<T: Serialize>(out: &Path, report: &T) -> Result<(), CliError> {
    let path = report_path(out);
    std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn require_out(common: &Common) -> Result<PathBuf, CliError> {
    common
        .out
        .clone()
        .ok_or_else(|| "missing required --out".into())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let seed = cli.common.seed.unwrap_or(config.seed);
    if let Some(threads) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    let out = require_out(&cli.common)?;

    match cli.command {
        Command::Clean { input } => {
            let docs: Vec<Document> = read_jsonl(&input)?;
            let rules = config.filter.clone().unwrap_or_else(FilterRuleSet::default);
            let report = run_filter(&docs, &rules);
            let kept: Vec<&Document> = docs
                .iter()
                .zip(&report.verdicts)
                .filter(|(_, (_, v))| v.is_keep())
                .map(|(d, _)| d)
                .collect();
            write_jsonl(&out, &kept)?;
            write_report(&out, &report)?;
        }
        Command::Dedup { input } => {
            let docs: Vec<Document> = read_jsonl(&input)?;
            let levels: HashSet<DedupLevel> = config
                .dedup
                .levels
                .iter()
                .map(|l| match l.as_str() {
                    "url" => DedupLevel::Url,
                    "document" => DedupLevel::Document,
                    _ => DedupLevel::Paragraph,
                })
                .collect();
            let (kept, report) = dedup_stream(docs, &levels, config.dedup.min_paragraph_chars);
            write_jsonl(&out, &kept)?;
            write_report(&out, &report)?;
        }
        Command::Cluster { input } => {
            #[derive(Deserialize)]
            struct VectorRecord {
                id: String,
                vector: Vec<f64>,
            }
            #[derive(Serialize)]
            struct Assignment<'a> {
                id: &'a str,
                cluster: usize,
            }
            let records: Vec<VectorRecord> = read_jsonl(&input)?;
            let vectors: Vec<Vec<f64>> = records.iter().map(|r| r.vector.clone()).collect();
            let result =
                kmeans_cluster(&vectors, config.cluster.k, seed, config.cluster.max_iters)?;
            let (groups, near_dup) =
                near_dup_groups(&vectors, &result, config.cluster.cos_threshold);
            let assignments: Vec<Assignment> = records
                .iter()
                .zip(&result.assignments)
                .map(|(r, &cluster)| Assignment { id: &r.id, cluster })
                .collect();
            write_jsonl(&out, &assignments)?;
            let id_groups: Vec<Vec<&str>> = groups
                .iter()
                .map(|g| g.iter().map(|&i| records[i].id.as_str()).collect())
                .collect();
            write_report(
                &out,
                &serde_json::json!({
                    "k": result.k,
                    "inertia": result.inertia,
                    "iterations": result.inertia_history.len(),
                    "near_dup_groups": id_groups,
                    "zero_norm_excluded": near_dup.zero_norm_excluded,
                }),
            )?;
        }
        Command::MixStep { logs, state } => {
            let observations: Vec<PerplexityObservation> = read_jsonl(&logs)?;
            let mut mix_state: MixState =
                serde_json::from_str(&std::fs::read_to_string(&state)?)?;
            mix_state.kappa = config.mix.kappa;
            mix_state.mu = config.mix.mu;
            mix_state.max_rounds = config.mix.max_rounds;
            mix_state.validate()?;
            let (next, report) = mix_iterate(&observations, &mix_state)?;
            std::fs::write(&out, serde_json::to_string_pretty(&next)?)?;
            write_report(&out, &report)?;
        }
        Command::Bucket { input } => {
            #[derive(Serialize)]
            struct BucketAssignment<'a> {
                id: &'a str,
                bucket: usize,
                token_length: u64,
            }
            let docs: Vec<Document> = read_jsonl(&input)?;
            let spec = LengthBucketSpec::default();
            let mut counts = vec![0u64; spec.bucket_count()];
            let assignments: Vec<BucketAssignment> = docs
                .iter()
                .map(|d| {
                    // Whitespace tokens stand in when no count is recorded.
                    let token_length = d
                        .token_count
                        .unwrap_or_else(|| d.text.split_whitespace().count() as u64);
                    let bucket = assign_bucket(token_length, &spec);
                    counts[bucket] += 1;
                    BucketAssignment {
                        id: &d.id,
                        bucket,
                        token_length,
                    }
                })
                .collect();
            write_jsonl(&out, &assignments)?;
            write_report(
                &out,
                &serde_json::json!({"boundaries": spec.boundaries, "per_bucket": counts}),
            )?;
        }
        Command::Blend { pools, n_units } => {
            let pool_docs: Vec<Vec<Document>> = pools
                .iter()
                .map(|p| read_jsonl(p))
                .collect::<Result<_, _>>()?;
            let spec = BlendSpec {
                short_fraction: config.blend.short_fraction,
                domain_upsample: config.blend.domain_upsample.clone(),
                seed,
                unit: config.blend.unit,
            };
            let (sampled, report) = blend_sample(&pool_docs, &spec, n_units)?;
            write_jsonl(&out, &sampled)?;
            write_report(&out, &report)?;
        }
        Command::AnnealPlan {
            targets,
            prev_steps,
        } => {
            let lr = LrConfig {
                pretrain_peak_lr: config.anneal.pretrain_peak_lr,
                warmup_frac: config.anneal.warmup_frac,
            };
            let mut stages = anneal_plan(&targets, &prev_steps, &lr)?;
            for stage in &mut stages {
                stage.token_budget = config.anneal.token_budget;
            }
            std::fs::write(&out, serde_json::to_string_pretty(&stages)?)?;
            write_report(
                &out,
                &serde_json::json!({
                    "stages": stages.len(),
                    "targets": targets,
                    "initial_lrs": stages.iter().map(|s| s.initial_lr).collect::<Vec<_>>(),
                }),
            )?;
        }
        Command::Pairs { input } => {
            let responses: Vec<ResponseRecord> = read_jsonl(&input)?;
            let pairs = build_dataset(&responses, config.pairs.pairs_per_prompt, seed)?;
            write_jsonl(&out, &pairs)?;
            write_report(&out, &dataset_report(&pairs))?;
        }
        Command::Stratify { input } => {
            #[derive(Serialize)]
            struct Stratum<'a> {
                prompt_id: &'a str,
                pass_rate: f64,
                tier: Tier,
            }
            let rollouts: Vec<RolloutRecord> = read_jsonl(&input)?;
            let mut tier_counts: BTreeMap<String, usize> = BTreeMap::new();
            let mut strata = Vec::with_capacity(rollouts.len());
            for record in &rollouts {
                let (pass_rate, tier) = stratify(record)?;
                *tier_counts.entry(format!("{tier:?}")).or_insert(0) += 1;
                strata.push(Stratum {
                    prompt_id: &record.prompt_id,
                    pass_rate,
                    tier,
                });
            }
            write_jsonl(&out, &strata)?;
            write_report(&out, &serde_json::json!({"tiers": tier_counts}))?;
        }
        Command::Reward { input } => {
            #[derive(Serialize)]
            struct RewardRecord<'a> {
                id: &'a str,
                format_ok: bool,
                match_ok: bool,
                reward: f64,
            }
            let records: Vec<ToolCallRecord> = read_jsonl(&input)?;
            let mut rewards = Vec::with_capacity(records.len());
            for record in &records {
                let validation = match (&record.model_output, &record.reference) {
                    (Some(output), Some(reference)) => {
                        let v = validate_tool_call(output, &record.schema, reference);
                        (v.format_ok, v.match_ok)
                    }
                    _ => (false, false),
                };
                let reward = tool_reward(record, validation)?;
                rewards.push(RewardRecord {
                    id: &record.id,
                    format_ok: validation.0,
                    match_ok: validation.1,
                    reward,
                });
            }
            let mean = if rewards.is_empty() {
                0.0
            } else {
                rewards.iter().map(|r| r.reward).sum::<f64>() / rewards.len() as f64
            };
            write_jsonl(&out, &rewards)?;
            write_report(
                &out,
                &serde_json::json!({"records": rewards.len(), "mean_reward": mean}),
            )?;
        }
        Command::VerifyMath { input } => {
            #[derive(Deserialize)]
            struct MathRecord {
                id: String,
                response: String,
                reference: String,
            }
            #[derive(Serialize)]
            struct MathResult<'a> {
                id: &'a str,
                #[serde(flatten)]
                check: datamix_core::rl_curation::BoxedCheck,
            }
            let records: Vec<MathRecord> = read_jsonl(&input)?;
            let mut verdict_counts: BTreeMap<String, usize> = BTreeMap::new();
            let results: Vec<MathResult> = records
                .iter()
                .map(|r| {
                    let check = verify_boxed_answer(&r.response, &r.reference);
                    *verdict_counts
                        .entry(format!("{:?}", check.verdict))
                        .or_insert(0) += 1;
                    MathResult { id: &r.id, check }
                })
                .collect();
            write_jsonl(&out, &results)?;
            write_report(&out, &serde_json::json!({"verdicts": verdict_counts}))?;
        }
        Command::CheckConstraints { input } => {
            #[derive(Deserialize)]
            struct ConstraintRecord {
                id: String,
                response: String,
                constraints: Vec<ConstraintSpec>,
            }
            #[derive(Serialize)]
            struct ConstraintOutcome<'a> {
                id: &'a str,
                overall_pass: bool,
                results: Vec<datamix_core::rl_curation::ConstraintResult>,
            }
            let records: Vec<ConstraintRecord> = read_jsonl(&input)?;
            let mut passed = 0usize;
            let mut outcomes = Vec::with_capacity(records.len());
            for record in &records {
                let report = validate_constraints(&record.response, &record.constraints)?;
                passed += report.overall_pass as usize;
                outcomes.push(ConstraintOutcome {
                    id: &record.id,
                    overall_pass: report.overall_pass,
                    results: report.results,
                });
            }
            write_jsonl(&out, &outcomes)?;
            write_report(
                &out,
                &serde_json::json!({"records": outcomes.len(), "passed": passed}),
            )?;
        }
        Command::Curriculum { input, stages } => {
            #[derive(Deserialize)]
            struct RatedPrompt {
                prompt_id: String,
                pass_rate: f64,
            }
            let prompts: Vec<RatedPrompt> = read_jsonl(&input)?;
            let rated: Vec<(String, f64)> = prompts
                .into_iter()
                .map(|p| (p.prompt_id, p.pass_rate))
                .collect();
            let ordered = curriculum_order(&rated, stages)?;
            std::fs::write(&out, serde_json::to_string_pretty(&ordered)?)?;
            write_report(
                &out,
                &serde_json::json!({
                    "stages": ordered.len(),
                    "per_stage": ordered.iter().map(Vec::len).collect::<Vec<_>>(),
                }),
            )?;
        }
        Command::Pack { input } => {
            let samples: Vec<Sample> = read_jsonl(&input)?;
            let mode = match config.pack.mode.as_str() {
                "sft" => PackMode::SftPack,
                _ => PackMode::PretrainConcat,
            };
            let strictness = match config.pack.strictness.as_str() {
                "lenient" => Strictness::Lenient,
                _ => Strictness::Strict,
            };
            let (sequences, report) =
                pack_sequences(&samples, config.pack.max_len, mode, strictness)?;
            write_jsonl(&out, &sequences)?;
            write_report(&out, &report)?;
        }
        Command::AvgCkpt { inputs } => {
            let sets: Vec<CheckpointTensorSet> = inputs
                .iter()
                .map(|p| CheckpointTensorSet::read_file(p))
                .collect::<Result<_, _>>()?;
            let averaged = average_checkpoints(&sets, config.average.window)?;
            averaged.write_file(&out)?;
            write_report(
                &out,
                &serde_json::json!({
                    "inputs": inputs.len(),
                    "window": config.average.window.min(inputs.len()),
                    "tensors": averaged.tensors.len(),
                }),
            )?;
        }
    }
    Ok(())
}

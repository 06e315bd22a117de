//! Long-context planning: length-interval bucketing, the short/long
//! blend with domain upsampling, annealing-stage planning, and the
//! cosine learning-rate schedule.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_clean::Document;

/// Half-open token-length intervals `[lo, hi)` forming buckets B0..B4.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthBucketSpec {
    pub boundaries: Vec<u64>,
}

impl Default for LengthBucketSpec {
    fn default() -> Self {
        LengthBucketSpec {
            boundaries: vec![0, 8_192, 16_384, 32_768, 131_072],
        }
    }
}

impl LengthBucketSpec {
    pub fn bucket_count(&self) -> usize {
        self.boundaries.len()
    }
}

/// Bucket containing `token_len`; the last bucket is unbounded above.
pub fn assign_bucket(token_len: u64, spec: &LengthBucketSpec) -> usize {
    let mut bucket = 0;
    for (i, &lo) in spec.boundaries.iter().enumerate() {
        if token_len >= lo {
            bucket = i;
        }
    }
    bucket
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendUnit {
    Samples,
    Tokens,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlendSpec {
    pub short_fraction: f64,
    #[serde(default)]
    pub domain_upsample: BTreeMap<String, f64>,
    pub seed: u64,
    pub unit: BlendUnit,
}

impl Default for BlendSpec {
    fn default() -> Self {
        BlendSpec {
            short_fraction: 0.7,
            domain_upsample: BTreeMap::new(),
            seed: 0,
            unit: BlendUnit::Tokens,
        }
    }
}

impl BlendSpec {
    pub fn validate(&self) -> Result<(), BlendError> {
        if !(0.0..=1.0).contains(&self.short_fraction) {
            return Err(BlendError::BadShortFraction(self.short_fraction));
        }
        if let Some((domain, &m)) = self.domain_upsample.iter().find(|&(_, &m)| m < 1.0) {
            return Err(BlendError::BadMultiplier {
                domain: domain.clone(),
                multiplier: m,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BlendError {
    #[error("short_fraction must lie in [0, 1], got {0}")]
    BadShortFraction(f64),
    #[error("upsample multiplier for {domain} must be >= 1, got {multiplier}")]
    BadMultiplier { domain: String, multiplier: f64 },
    #[error("short pool (B0) is empty")]
    EmptyShortPool,
    #[error("all long pools (B1..) are empty")]
    EmptyLongPools,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BlendReport {
    /// Units drawn per bucket (samples or tokens per the spec unit).
    pub per_bucket_units: Vec<u64>,
    /// Buckets that were exhausted and switched to with-replacement.
    pub replacement_used: Vec<usize>,
    pub total_units: u64,
}

fn doc_weight(doc: &Document, upsample: &BTreeMap<String, f64>) -> f64 {
    doc.domain
        .as_deref()
        .and_then(|d| upsample.get(d))
        .copied()
        .unwrap_or(1.0)
}

fn doc_units(doc: &Document, unit: BlendUnit) -> u64 {
    match unit {
        BlendUnit::Samples => 1,
        BlendUnit::Tokens => doc.token_count.unwrap_or(1).max(1),
    }
}

/// Draw from one pool until `quota` units are accumulated: weighted
/// without replacement first (Efraimidis–Spirakis order), then with
/// replacement once the pool is exhausted.
fn draw_pool(
    pool: &[Document],
    quota: u64,
    spec: &BlendSpec,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Document>,
    replacement_used: &mut bool,
) -> u64 {
    if quota == 0 || pool.is_empty() {
        return 0;
    }
    // Weighted-without-replacement order via exponential keys.
    let mut keyed: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let w = doc_weight(doc, &spec.domain_upsample);
            let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            (-u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut drawn = 0u64;
    for &(_, idx) in &keyed {
        if drawn >= quota {
            return drawn;
        }
        drawn += doc_units(&pool[idx], spec.unit);
        out.push(pool[idx].clone());
    }
    // Pool exhausted; continue with replacement, weighted by cumulative
    // weight lookup.
    *replacement_used = true;
    let cumulative: Vec<f64> = pool
        .iter()
        .scan(0.0, |acc, doc| {
            *acc += doc_weight(doc, &spec.domain_upsample);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap();
    while drawn < quota {
        let target = rng.gen::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c < target).min(pool.len() - 1);
        drawn += doc_units(&pool[idx], spec.unit);
        out.push(pool[idx].clone());
    }
    drawn
}

/// Largest-remainder split of `total` across weights.
fn proportional_split(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u64 = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut quotas: Vec<u64> = weights
        .iter()
        .map(|&w| total * w / sum)
        .collect();
    let assigned: u64 = quotas.iter().sum();
    let mut remainders: Vec<(u64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| ((total * w) % sum, i))
        .collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for i in 0..(total - assigned) as usize {
        quotas[remainders[i % remainders.len()].1] += 1;
    }
    quotas
}

/// Blend the short bucket (B0) with the long buckets at
/// `short_fraction : 1 − short_fraction`, upsampling configured domains
/// within each pool. Deterministic under the spec seed.
pub fn blend_sample(
    pools: &[Vec<Document>],
    spec: &BlendSpec,
    n_units: u64,
) -> Result<(Vec<Document>, BlendReport), BlendError> {
    spec.validate()?;
    if pools.is_empty() || pools[0].is_empty() {
        return Err(BlendError::EmptyShortPool);
    }
    if pools[1..].iter().all(|p| p.is_empty()) {
        return Err(BlendError::EmptyLongPools);
    }
    let mut report = BlendReport {
        per_bucket_units: vec![0; pools.len()],
        ..Default::default()
    };
    if n_units == 0 {
        return Ok((Vec::new(), report));
    }
    let short_quota = (spec.short_fraction * n_units as f64).round() as u64;
    let long_quota = n_units - short_quota;
    let long_sizes: Vec<u64> = pools[1..]
        .iter()
        .map(|p| p.iter().map(|d| doc_units(d, spec.unit)).sum())
        .collect();
    let long_quotas = proportional_split(long_quota, &long_sizes);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    let mut used = false;
    let drawn = draw_pool(&pools[0], short_quota, spec, &mut rng, &mut out, &mut used);
    report.per_bucket_units[0] = drawn;
    if used {
        report.replacement_used.push(0);
    }
    for (offset, &quota) in long_quotas.iter().enumerate() {
        let bucket = offset + 1;
        let mut used = false;
        let drawn = draw_pool(&pools[bucket], quota, spec, &mut rng, &mut out, &mut used);
        report.per_bucket_units[bucket] = drawn;
        if used {
            report.replacement_used.push(bucket);
        }
    }
    report.total_units = report.per_bucket_units.iter().sum();
    Ok((out, report))
}

/// One context-extension annealing stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealStage {
    pub target_context: u64,
    pub rope_base: f64,
    pub token_budget: u64,
    pub resume_fraction: f64,
    /// Step of the preceding stage this stage resumes from; absent for
    /// the first stage.
    pub resume_step: Option<u64>,
    pub initial_lr: f64,
}

pub const DEFAULT_TOKEN_BUDGET: u64 = 50_000_000_000;
pub const DEFAULT_RESUME_FRACTION: f64 = 1.0 / 3.0;

/// Context length → RoPE base. No extrapolation beyond the table.
pub fn rope_base_for(target_context: u64) -> Option<f64> {
    match target_context {
        32_768 => Some(1e6),
        131_072 => Some(8e6),
        262_144 => Some(4e7),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrConfig {
    /// Peak learning rate of the 8K pretraining schedule; the first
    /// annealing stage starts here.
    pub pretrain_peak_lr: f64,
    pub warmup_frac: f64,
}

#[derive(Debug, Error)]
pub enum AnnealError {
    #[error("no RoPE base known for target context {0}")]
    UnknownTarget(u64),
    #[error("targets must be strictly increasing")]
    UnorderedTargets,
    #[error("need {expected} previous-stage step counts, got {got}")]
    BadPrevSteps { expected: usize, got: usize },
    #[error(transparent)]
    Lr(#[from] LrError),
}

#[derive(Debug, Error)]
pub enum LrError {
    #[error("step {step} outside [0, {total}]")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("warmup_frac must lie in (0, 1), got {0}")]
    BadWarmupFrac(f64),
    #[error("peak must be positive, got {0}")]
    BadPeak(f64),
}

/// Linear warmup from 0 to `peak` over the first `warmup_frac · total`
/// steps, then cosine decay from `peak` down to exactly `0.1 · peak` at
/// `total_steps`.
pub fn cosine_lr(
    step: u64,
    total_steps: u64,
    peak: f64,
    warmup_frac: f64,
) -> Result<f64, LrError> {
    if !(peak > 0.0) {
        return Err(LrError::BadPeak(peak));
    }
    if !(warmup_frac > 0.0 && warmup_frac < 1.0) {
        return Err(LrError::BadWarmupFrac(warmup_frac));
    }
    if step > total_steps {
        return Err(LrError::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    let warmup_steps = warmup_frac * total_steps as f64;
    let s = step as f64;
    if s < warmup_steps {
        return Ok(peak * s / warmup_steps);
    }
    let floor = 0.1 * peak;
    let progress = (s - warmup_steps) / (total_steps as f64 - warmup_steps);
    Ok(floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Build one stage per target context length. Stage 0 starts at the 8K
/// pretraining learning rate; stage k resumes from 1/3 of the preceding
/// stage's steps, inheriting the learning rate at that point of the
/// preceding schedule.
pub fn anneal_plan(
    targets: &[u64],
    prev_stage_steps: &[u64],
    lr: &LrConfig,
) -> Result<Vec<AnnealStage>, AnnealError> {
    for w in targets.windows(2) {
        if w[1] <= w[0] {
            return Err(AnnealError::UnorderedTargets);
        }
    }
    if targets.len() > 1 && prev_stage_steps.len() < targets.len() - 1 {
        return Err(AnnealError::BadPrevSteps {
            expected: targets.len() - 1,
            got: prev_stage_steps.len(),
        });
    }
    let mut stages = Vec::with_capacity(targets.len());
    let mut stage_initial_lr = lr.pretrain_peak_lr;
    for (k, &target) in targets.iter().enumerate() {
        let rope_base = rope_base_for(target).ok_or(AnnealError::UnknownTarget(target))?;
        let resume_step = if k == 0 {
            None
        } else {
            let prev_total = prev_stage_steps[k - 1];
            let resume = prev_total / 3;
            stage_initial_lr = cosine_lr(resume, prev_total, stage_initial_lr, lr.warmup_frac)?;
            Some(resume)
        };
        stages.push(AnnealStage {
            target_context: target,
            rope_base,
            token_budget: DEFAULT_TOKEN_BUDGET,
            resume_fraction: DEFAULT_RESUME_FRACTION,
            resume_step,
            initial_lr: stage_initial_lr,
        });
    }
    Ok(stages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_boundaries() {
        let spec = LengthBucketSpec::default();
        assert_eq!(assign_bucket(0, &spec), 0);
        assert_eq!(assign_bucket(5_000, &spec), 0);
        assert_eq!(assign_bucket(8_191, &spec), 0);
        assert_eq!(assign_bucket(8_192, &spec), 1);
        assert_eq!(assign_bucket(16_384, &spec), 2);
        assert_eq!(assign_bucket(32_768, &spec), 3);
        assert_eq!(assign_bucket(131_072, &spec), 4);
        assert_eq!(assign_bucket(200_000, &spec), 4);
    }

    #[test]
    fn bucket_partition_is_total() {
        let spec = LengthBucketSpec::default();
        for len in (0..300_000).step_by(997) {
            let b = assign_bucket(len, &spec);
            assert!(b < spec.bucket_count());
            assert!(len >= spec.boundaries[b]);
            if b + 1 < spec.bucket_count() {
                assert!(len < spec.boundaries[b + 1]);
            }
        }
    }

    fn doc(id: usize, bucket: usize, domain: &str) -> Document {
        let mut d = Document::new(format!("d{bucket}_{id}"), "x");
        d.domain = Some(domain.to_string());
        d.token_count = Some(1);
        d
    }

    fn pools(sizes: &[usize]) -> Vec<Vec<Document>> {
        sizes
            .iter()
            .enumerate()
            .map(|(b, &n)| (0..n).map(|i| doc(i, b, "web")).collect())
            .collect()
    }

    #[test]
    fn sample_quota_is_exact() {
        let pools = pools(&[100, 20, 20, 20, 20]);
        let spec = BlendSpec {
            unit: BlendUnit::Samples,
            ..Default::default()
        };
        let (out, report) = blend_sample(&pools, &spec, 10).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(report.per_bucket_units[0], 7);
        assert_eq!(report.per_bucket_units[1..].iter().sum::<u64>(), 3);
        assert!(report.replacement_used.is_empty());
    }

    #[test]
    fn short_fraction_one_takes_only_b0() {
        let pools = pools(&[50, 10, 0, 0, 0]);
        let spec = BlendSpec {
            short_fraction: 1.0,
            unit: BlendUnit::Samples,
            ..Default::default()
        };
        let (out, _) = blend_sample(&pools, &spec, 20).unwrap();
        assert!(out.iter().all(|d| d.id.starts_with("d0_")));
    }

    #[test]
    fn empty_short_pool_rejected() {
        let pools = pools(&[0, 10, 0, 0, 0]);
        let spec = BlendSpec::default();
        assert!(matches!(
            blend_sample(&pools, &spec, 10),
            Err(BlendError::EmptyShortPool)
        ));
    }

    #[test]
    fn zero_units_empty_output() {
        let pools = pools(&[10, 10, 0, 0, 0]);
        let spec = BlendSpec::default();
        let (out, report) = blend_sample(&pools, &spec, 0).unwrap();
        assert!(out.is_empty());
        assert_eq!(report.total_units, 0);
    }

    #[test]
    fn exhausted_pool_flags_replacement() {
        let pools = pools(&[5, 2, 0, 0, 0]);
        let spec = BlendSpec {
            unit: BlendUnit::Samples,
            ..Default::default()
        };
        let (out, report) = blend_sample(&pools, &spec, 20).unwrap();
        assert_eq!(out.len(), 20);
        assert!(report.replacement_used.contains(&0));
        assert!(report.replacement_used.contains(&1));
    }

    #[test]
    fn deterministic_under_seed() {
        let pools = pools(&[100, 40, 30, 20, 10]);
        let spec = BlendSpec {
            unit: BlendUnit::Samples,
            seed: 99,
            ..Default::default()
        };
        let (a, _) = blend_sample(&pools, &spec, 50).unwrap();
        let (b, _) = blend_sample(&pools, &spec, 50).unwrap();
        let ids_a: Vec<&str> = a.iter().map(|d| d.id.as_str()).collect();
        let ids_b: Vec<&str> = b.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids_a, ids_b);
    }

    #[test]
    fn rope_base_table() {
        assert_eq!(rope_base_for(32_768), Some(1e6));
        assert_eq!(rope_base_for(131_072), Some(8e6));
        assert_eq!(rope_base_for(262_144), Some(4e7));
        assert_eq!(rope_base_for(65_536), None);
    }

    #[test]
    fn anneal_plan_full_ladder() {
        let lr = LrConfig {
            pretrain_peak_lr: 3e-4,
            warmup_frac: 0.01,
        };
        let stages = anneal_plan(&[32_768, 131_072, 262_144], &[9_000, 12_000], &lr).unwrap();
        assert_eq!(stages.len(), 3);
        assert_eq!(stages[0].rope_base, 1e6);
        assert_eq!(stages[1].rope_base, 8e6);
        assert_eq!(stages[2].rope_base, 4e7);
        assert_eq!(stages[0].resume_step, None);
        assert_eq!(stages[1].resume_step, Some(3_000));
        assert_eq!(stages[2].resume_step, Some(4_000));
        assert_eq!(stages[0].initial_lr, 3e-4);
        let expected1 = cosine_lr(3_000, 9_000, 3e-4, 0.01).unwrap();
        assert_eq!(stages[1].initial_lr, expected1);
        let expected2 = cosine_lr(4_000, 12_000, expected1, 0.01).unwrap();
        assert_eq!(stages[2].initial_lr, expected2);
    }

    #[test]
    fn unknown_target_rejected() {
        let lr = LrConfig {
            pretrain_peak_lr: 3e-4,
            warmup_frac: 0.01,
        };
        assert!(matches!(
            anneal_plan(&[65_536], &[], &lr),
            Err(AnnealError::UnknownTarget(65_536))
        ));
    }

    #[test]
    fn cosine_lr_endpoints() {
        let peak = 2e-4;
        // Warmup end hits the peak.
        assert!((cosine_lr(100, 1_000, peak, 0.1).unwrap() - peak).abs() < 1e-18);
        // Final step decays to exactly 10% of peak.
        assert_eq!(cosine_lr(1_000, 1_000, peak, 0.1).unwrap(), 0.1 * peak);
        // Warmup starts from zero.
        assert_eq!(cosine_lr(0, 1_000, peak, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn cosine_lr_monotone_after_warmup() {
        let mut prev = f64::INFINITY;
        for step in 100..=1_000 {
            let lr = cosine_lr(step, 1_000, 1e-3, 0.1).unwrap();
            assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }

    #[test]
    fn cosine_lr_continuous_at_warmup_boundary() {
        let before = cosine_lr(99, 1_000, 1e-3, 0.1).unwrap();
        let at = cosine_lr(100, 1_000, 1e-3, 0.1).unwrap();
        assert!((at - before) < 1.2e-5);
    }

    #[test]
    fn cosine_lr_step_out_of_range() {
        assert!(matches!(
            cosine_lr(1_001, 1_000, 1e-3, 0.1),
            Err(LrError::StepOutOfRange { .. })
        ));
    }
}

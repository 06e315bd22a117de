//! Acceptance suite: one test per release criterion, each printing a
//! pass line with its runtime. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the lines).

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use datamix_core::corpus_clean::{
    all_levels, dedup_stream, kmeans_cluster, Document,
};
use datamix_core::longctx_planner::{
    anneal_plan, blend_sample, cosine_lr, rope_base_for, BlendSpec, BlendUnit, LrConfig,
};
use datamix_core::mix_optimizer::{
    mix_iterate, update_proportions, CubicSpline, MixState, PerplexityObservation,
};
use datamix_core::pack_avg::{
    average_checkpoints, pack_sequences, CheckpointTensorSet, PackMode, Sample, Strictness,
    Tensor, TensorData,
};
use datamix_core::pref_builder::{build_pairs, ResponseRecord, ScoreKind};
use datamix_core::rl_curation::{tier, tool_reward, Tier, ToolCallRecord};

fn finish(name: &str, start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < budget,
        "{name}: runtime {elapsed:?} exceeded budget {budget:?}"
    );
    println!("acceptance[{name}]: PASS ({elapsed:?})");
}

fn state_with(
    proportions: &[(&str, f64)],
    minima: &[(&str, f64)],
    avg_s: f64,
) -> MixState {
    let mut state = MixState::new(
        proportions
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect(),
        10,
    );
    state.subset_minima = minima
        .iter()
        .map(|&(k, s)| (k.to_string(), (s, 1.0)))
        .collect();
    state.average_minimum = Some((avg_s, 1.0));
    state
}

#[test]
fn mix_update_arithmetic() {
    let start = Instant::now();

    // Hand-computed example 1: zero offsets leave proportions fixed.
    let update = update_proportions(&state_with(
        &[("a", 0.3), ("b", 0.7)],
        &[("a", 5000.0), ("b", 5000.0)],
        5000.0,
    ))
    .unwrap();
    assert!((update.normalized["a"] - 0.3).abs() <= 1e-12 * 0.3);
    assert!((update.normalized["b"] - 0.7).abs() <= 1e-12 * 0.7);

    // Hand-computed example 2: +15000 offset scales 0.2 to exactly 2.0.
    let update = update_proportions(&state_with(
        &[("a", 0.2), ("b", 0.8)],
        &[("a", 20000.0), ("b", 5000.0)],
        5000.0,
    ))
    .unwrap();
    assert!((update.pre_normalization["a"] - 2.0).abs() <= 1e-12 * 2.0);

    // Hand-computed example 3: symmetric offsets.
    let update = update_proportions(&state_with(
        &[("a", 0.5), ("b", 0.5)],
        &[("a", 15000.0), ("b", -15000.0)],
        0.0,
    ))
    .unwrap();
    assert!((update.pre_normalization["a"] - 5.0).abs() <= 1e-12 * 5.0);
    assert!((update.pre_normalization["b"] - 0.05).abs() <= 1e-12 * 0.05);
    assert!((update.normalized["a"] - 5.0 / 5.05).abs() <= 1e-12);
    assert!((update.normalized["b"] - 0.05 / 5.05).abs() <= 1e-12);

    // 1000 randomized cases: normalized sums equal 1 within 1e-9.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.gen_range(2..8);
        let mut raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-6).collect();
        let sum: f64 = raw.iter().sum();
        for r in &mut raw {
            *r /= sum;
        }
        let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let mut state = MixState::new(
            names.iter().cloned().zip(raw.iter().copied()).collect(),
            10,
        );
        state.subset_minima = names
            .iter()
            .map(|name| {
                (
                    name.clone(),
                    (rng.gen_range(-30_000.0..30_000.0), rng.gen::<f64>() + 1.0),
                )
            })
            .collect();
        state.average_minimum = Some((rng.gen_range(-30_000.0..30_000.0), 2.0));
        let update = update_proportions(&state).unwrap();
        let total: f64 = update.normalized.values().sum();
        assert!((total - 1.0).abs() <= 1e-9, "sum {total}");
        assert!(update.normalized.values().all(|&r| r >= 0.0));
    }

    finish("mix update arithmetic", start, Duration::from_secs(1));
}

#[test]
fn spline_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        // Random smooth curve: a low-order polynomial plus slow sinusoids,
        // sampled at 8-20 strictly increasing steps.
        let n = rng.gen_range(8..=20);
        let width: f64 = rng.gen_range(50.0..5000.0);
        let a = rng.gen_range(-2.0..2.0);
        let b = rng.gen_range(-2.0..2.0);
        let c = rng.gen_range(0.1..2.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp = rng.gen_range(0.0..1.5);
        let f = |x: f64| {
            let u = x / width;
            10.0 + a * u + b * u * u + c * (u - 0.5) * (u - 0.3) * u
                + amp * (2.5 * u + phase).sin()
        };
        let points: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let x = width * i as f64 / (n - 1) as f64;
                (x, f(x))
            })
            .collect();
        let spline = CubicSpline::fit_unchecked_sign(&points).unwrap();
        let (s, p) = spline.minimum();

        // Dense-grid oracle, first index wins ties.
        let (lo, hi) = spline.domain();
        let mut grid_s = lo;
        let mut grid_p = f64::INFINITY;
        for i in 0..=100_000u32 {
            let x = (lo + (hi - lo) * i as f64 / 100_000.0).min(hi);
            let y = spline.eval(x).unwrap();
            if y < grid_p {
                grid_p = y;
                grid_s = x;
            }
        }
        assert!(
            (s - grid_s).abs() <= 1e-3 * (hi - lo),
            "case {case}: s {s} vs grid {grid_s}"
        );
        assert!(
            (p - grid_p).abs() <= 1e-6 * grid_p.abs().max(1e-12),
            "case {case}: p {p} vs grid {grid_p}"
        );
    }
    finish("spline oracle equivalence", start, Duration::from_secs(10));
}

#[test]
fn mix_iteration_direction() {
    let start = Instant::now();
    // Shared step grid 0..100_000 by 1000. Weighted-average curve is a
    // parabola with vertex 50_000; subset A's values are the same shape
    // shifted 15_000 steps later. Subset B's values are chosen so the
    // equal-weight average reproduces the base parabola exactly.
    let q = |s: f64| ((s - 50_000.0) / 20_000.0).powi(2) + 2.0;
    let steps: Vec<u64> = (0..=100).map(|i| i * 1000).collect();
    let mut logs = Vec::new();
    for &s in &steps {
        let p_a = q(s as f64 - 15_000.0);
        let p_b = 2.0 * q(s as f64) - p_a;
        assert!(p_a > 0.0 && p_b > 0.0);
        logs.push(PerplexityObservation {
            subset_id: "a".to_string(),
            step: s,
            perplexity: p_a,
            token_count: 100,
        });
        logs.push(PerplexityObservation {
            subset_id: "b".to_string(),
            step: s,
            perplexity: p_b,
            token_count: 100,
        });
    }
    let state = MixState::new(
        [("a".to_string(), 0.5), ("b".to_string(), 0.5)].into(),
        5,
    );
    let (_, report) = mix_iterate(&logs, &state).unwrap();
    let factor = report.pre_normalization["a"] / report.old_proportions["a"];
    assert!(
        (factor - 10.0).abs() <= 1e-9,
        "growth factor {factor}, offset {}",
        report.subset_minima["a"].0 - report.average_minimum.0
    );
    finish("mix iteration direction", start, Duration::from_secs(1));
}

#[test]
fn reward_truth_table() {
    let start = Instant::now();
    let record = |requires_tool: bool, score: Option<f64>| ToolCallRecord {
        id: "r".to_string(),
        requires_tool,
        model_output: None,
        reference: None,
        schema: Vec::new(),
        judge_score: score,
        s_min: 2.0,
        s_max: 8.0,
    };
    for format_ok in [false, true] {
        for match_ok in [false, true] {
            let reward = tool_reward(&record(true, None), (format_ok, match_ok)).unwrap();
            let expected = if format_ok && match_ok { 1.0 } else { -1.0 };
            assert_eq!(reward, expected);
            assert!((-1.0..=1.0).contains(&reward));
            for (s, expected) in [(2.0, -1.0), (5.0, 0.0), (8.0, 1.0)] {
                let reward = tool_reward(&record(false, Some(s)), (format_ok, match_ok)).unwrap();
                assert_eq!(reward, expected);
                assert!((-1.0..=1.0).contains(&reward));
            }
        }
    }
    finish("reward truth table", start, Duration::from_secs(1));
}

#[test]
fn tier_brute_force() {
    let start = Instant::now();
    for pattern in 0u32..32 {
        let attempts: Vec<bool> = (0..5).map(|i| pattern & (1 << i) != 0).collect();
        let correct = attempts.iter().filter(|&&a| a).count();
        let expected = match correct {
            5 => Tier::Easy,
            0 => Tier::Hard,
            _ => Tier::Medium,
        };
        assert_eq!(tier(correct, 5), expected, "pattern {pattern:05b}");
    }
    finish("tier brute force", start, Duration::from_secs(1));
}

#[test]
fn pair_invariants() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..10_000u32 {
        let prompt = format!("prompt{case}");
        let n = rng.gen_range(1..12);
        let candidates: Vec<ResponseRecord> = (0..n)
            .map(|i| ResponseRecord {
                prompt_id: prompt.clone(),
                response: format!("response {i} for {prompt}"),
                source_model: if rng.gen::<bool>() {
                    "self-7b".to_string()
                } else {
                    format!("ext-{}", rng.gen_range(0..3))
                },
                on_policy: rng.gen::<f64>() < 0.6,
                score: (rng.gen_range(0..=20) as f64) / 2.0,
                score_kind: ScoreKind::Judge,
            })
            .collect();
        let pairs = build_pairs(&candidates, 4, 99).unwrap();
        assert!(pairs.len() <= 4);
        for pair in &pairs {
            assert!(pair.chosen.score >= 8.0);
            assert!(pair.chosen.score - pair.rejected.score >= 2.0);
            assert!(pair.rejected.on_policy);
            assert_eq!(pair.chosen.prompt_id, pair.rejected.prompt_id);
        }
        // Determinism: double run is identical.
        let again = build_pairs(&candidates, 4, 99).unwrap();
        assert_eq!(pairs, again);
    }
    finish("pair invariants", start, Duration::from_secs(30));
}

#[test]
fn blend_ratio() {
    let start = Instant::now();
    // B0 pool far larger than the draw so without-replacement sampling
    // stays close to the analytic weights.
    let b0_size = 2_000_000usize;
    let pool0: Vec<Document> = (0..b0_size)
        .map(|i| {
            let mut d = Document::new(format!("s{i}"), "");
            d.domain = Some(if i % 2 == 0 { "exams" } else { "web" }.to_string());
            d
        })
        .collect();
    let long_pool: Vec<Document> = (0..200_000)
        .map(|i| Document::new(format!("l{i}"), ""))
        .collect();
    let pools = vec![pool0, long_pool, Vec::new(), Vec::new(), Vec::new()];
    let spec = BlendSpec {
        short_fraction: 0.7,
        domain_upsample: [("exams".to_string(), 2.0)].into(),
        seed: 5,
        unit: BlendUnit::Samples,
    };
    let n_units = 100_000u64;
    let (out, report) = blend_sample(&pools, &spec, n_units).unwrap();
    assert_eq!(out.len() as u64, n_units);
    assert_eq!(report.per_bucket_units.iter().sum::<u64>(), n_units);
    // Quota mode: B0 share is exactly 0.70.
    assert_eq!(report.per_bucket_units[0] as f64 / n_units as f64, 0.70);
    assert!(report.replacement_used.is_empty());

    // Within B0, exam docs carry weight 2 vs 1: analytic share 2/3.
    let b0_drawn: Vec<&Document> = out.iter().filter(|d| d.id.starts_with('s')).collect();
    let exam_share = b0_drawn
        .iter()
        .filter(|d| d.domain.as_deref() == Some("exams"))
        .count() as f64
        / b0_drawn.len() as f64;
    assert!(
        (exam_share - 2.0 / 3.0).abs() <= 0.01,
        "exam share {exam_share}"
    );
    finish("blend ratio", start, Duration::from_secs(30));
}

#[test]
fn anneal_plan_exactness() {
    let start = Instant::now();
    assert_eq!(rope_base_for(32_768), Some(1e6));
    assert_eq!(rope_base_for(131_072), Some(8e6));
    assert_eq!(rope_base_for(262_144), Some(4e7));
    let lr = LrConfig {
        pretrain_peak_lr: 3e-4,
        warmup_frac: 0.01,
    };
    let stages = anneal_plan(&[32_768, 131_072, 262_144], &[9_000, 10_000], &lr).unwrap();
    assert_eq!(stages[0].rope_base, 1e6);
    assert_eq!(stages[1].rope_base, 8e6);
    assert_eq!(stages[2].rope_base, 4e7);
    assert_eq!(stages[1].resume_step, Some(9_000 / 3));
    assert_eq!(stages[2].resume_step, Some(10_000 / 3));
    for (steps, expected) in [(9_000u64, 3_000u64), (10_000, 3_333), (1, 0)] {
        assert_eq!(steps / 3, expected);
    }
    let peak = 2.5e-4;
    assert_eq!(cosine_lr(4_000, 4_000, peak, 0.02).unwrap(), 0.1 * peak);
    finish("anneal plan exactness", start, Duration::from_secs(1));
}

#[test]
fn dedup_idempotence_and_packing_conservation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);

    // 100k synthetic documents with planted URL, document, and paragraph
    // duplicates.
    let mut docs = Vec::with_capacity(100_000);
    let mut planted_doc_dups = Vec::new();
    let mut planted_url_dups = Vec::new();
    for i in 0..90_000u32 {
        let body = format!(
            "unique paragraph number {i} with filler text {}\n\nsecondary paragraph {i} {}",
            rng.gen::<u64>(),
            rng.gen::<u64>()
        );
        let mut d = Document::new(format!("d{i}"), body);
        d.url = Some(format!("http://corpus.example/{i}"));
        docs.push(d);
    }
    for i in 0..5_000u32 {
        // Exact copy of an earlier document under a fresh id and URL.
        let victim = docs[(i * 7) as usize].clone();
        let mut dup = Document::new(format!("dup{i}"), victim.text.clone());
        dup.url = Some(format!("http://corpus.example/dup/{i}"));
        planted_doc_dups.push(dup.id.clone());
        docs.push(dup);
    }
    for i in 0..5_000u32 {
        // Same canonical URL as an earlier doc, different text.
        let victim = (i * 11) as usize;
        let mut dup = Document::new(
            format!("urldup{i}"),
            format!("different text body for url dup {i} {}", rng.gen::<u64>()),
        );
        dup.url = Some(format!("HTTP://Corpus.example/{victim}?utm_source=x"));
        planted_url_dups.push(dup.id.clone());
        docs.push(dup);
    }
    let levels = all_levels();
    let (once, report) = dedup_stream(docs, &levels, 20);
    let kept_ids: std::collections::HashSet<&str> =
        once.iter().map(|d| d.id.as_str()).collect();
    for id in planted_doc_dups.iter().chain(&planted_url_dups) {
        assert!(!kept_ids.contains(id.as_str()), "planted duplicate {id} survived");
    }
    assert_eq!(report.document_removed, 5_000);
    assert_eq!(report.url_removed, 5_000);
    let (twice, report2) = dedup_stream(once.clone(), &levels, 20);
    assert_eq!(once, twice, "dedup not idempotent");
    assert_eq!(report2.kept, report2.input);

    // Packing conservation over 10,000 random sample sets.
    for case in 0..10_000u32 {
        let n = rng.gen_range(1..12);
        let max_len = 4096;
        let samples: Vec<Sample> = (0..n)
            .map(|j| Sample {
                id: format!("c{case}_{j}"),
                token_length: rng.gen_range(1..=max_len),
                source: format!("src{}", rng.gen_range(0..3)),
                turns: 1,
            })
            .collect();
        let input_total: u64 = samples.iter().map(|s| s.token_length).sum();
        let (seqs, report) =
            pack_sequences(&samples, max_len, PackMode::PretrainConcat, Strictness::Strict)
                .unwrap();
        assert_eq!(report.total_tokens, input_total);
        for seq in &seqs {
            assert!(seq.used_tokens() <= max_len);
        }
    }
    finish(
        "dedup idempotence and packing conservation",
        start,
        Duration::from_secs(60),
    );
}

#[test]
fn checkpoint_averaging() {
    let start = Instant::now();
    let set_f64 = |values: Vec<f64>| {
        let mut tensors = BTreeMap::new();
        let len = values.len() as u64;
        tensors.insert("w".to_string(), Tensor::f64(vec![len], values).unwrap());
        CheckpointTensorSet { tensors }
    };
    let avg = average_checkpoints(&[set_f64(vec![1.0, 3.0]), set_f64(vec![3.0, 5.0])], 5).unwrap();
    assert_eq!(avg.tensors["w"].data, TensorData::F64(vec![2.0, 4.0]));

    // Five identical f32 checkpoints: identity within 1 ULP.
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let values: Vec<f32> = (0..10_000).map(|_| rng.gen_range(-5.0f32..5.0)).collect();
    let mut tensors = BTreeMap::new();
    tensors.insert(
        "w".to_string(),
        Tensor::f32(vec![values.len() as u64], values.clone()).unwrap(),
    );
    let set = CheckpointTensorSet { tensors };
    let avg = average_checkpoints(&vec![set.clone(); 5], 5).unwrap();
    let TensorData::F32(avg_values) = &avg.tensors["w"].data else {
        panic!("dtype changed");
    };
    for (a, b) in avg_values.iter().zip(&values) {
        let ulp_gap = (a.to_bits() as i64 - b.to_bits() as i64).abs();
        assert!(ulp_gap <= 1, "value {b} averaged to {a}");
    }

    // Container round-trip is bit-exact.
    let mut bytes = Vec::new();
    set.write_to(&mut bytes).unwrap();
    let restored = CheckpointTensorSet::read_from(bytes.as_slice()).unwrap();
    let mut bytes2 = Vec::new();
    restored.write_to(&mut bytes2).unwrap();
    assert_eq!(bytes, bytes2);
    assert_eq!(restored, set);
    finish("checkpoint averaging", start, Duration::from_secs(5));
}

#[test]
fn kmeans_properties() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for case in 0..100u64 {
        let n = rng.gen_range(20..200);
        let d = rng.gen_range(2..6);
        let k = rng.gen_range(2..8.min(n));
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let result = kmeans_cluster(&vectors, k, case, 50).unwrap();
        for w in result.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "case {case}: {w:?}");
        }
        // Nearest-centroid property holds exactly at convergence.
        for (i, v) in vectors.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in result.centroids.iter().enumerate() {
                let dist: f64 = v.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = j;
                }
            }
            assert_eq!(result.assignments[i], best, "case {case}, point {i}");
        }
    }
    finish("k-means", start, Duration::from_secs(30));
}

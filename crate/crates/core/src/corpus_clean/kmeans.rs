//! Seeded k-means over embedding vectors plus near-duplicate grouping
//! within clusters.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KmeansError {
    #[error("k={k} exceeds point count n={n}")]
    TooFewPoints { k: usize, n: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("non-finite entry at point {point}, dim {dim}")]
    NonFinite { point: usize, dim: usize },
    #[error("inconsistent vector dimensions: point {point} has {got}, expected {expected}")]
    DimMismatch {
        point: usize,
        got: usize,
        expected: usize,
    },
    #[error("empty vectors")]
    Empty,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration, non-increasing.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by Euclidean distance, ties to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

fn validate(vectors: &[Vec<f64>]) -> Result<usize, KmeansError> {
    let first = vectors.first().ok_or(KmeansError::Empty)?;
    let d = first.len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != d {
            return Err(KmeansError::DimMismatch {
                point: i,
                got: v.len(),
                expected: d,
            });
        }
        for (j, x) in v.iter().enumerate() {
            if !x.is_finite() {
                return Err(KmeansError::NonFinite { point: i, dim: j });
            }
        }
    }
    Ok(d)
}

/// k-means++ seeding followed by Lloyd iterations. Deterministic for a
/// fixed (vectors, k, seed). Empty clusters are reseeded from the point
/// farthest from its assigned centroid.
pub fn kmeans_cluster(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterResult, KmeansError> {
    if k == 0 {
        return Err(KmeansError::ZeroK);
    }
    let n = vectors.len();
    if k > n {
        return Err(KmeansError::TooFewPoints { k, n });
    }
    validate(vectors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ initialization.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(vectors[rng.gen_range(0..n)].clone());
    let mut dists: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in dists.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroids.push(vectors[next].clone());
        let c = centroids.last().unwrap();
        for (d, v) in dists.iter_mut().zip(vectors) {
            let nd = sq_dist(v, c);
            if nd < *d {
                *d = nd;
            }
        }
    }

    let d = vectors[0].len();
    let mut assignments = vec![0usize; n];
    let mut inertia_history = Vec::new();
    let mut inertia = f64::INFINITY;
    for _ in 0..max_iters {
        let assigned: Vec<(usize, f64)> = vectors
            .par_iter()
            .map(|v| nearest(v, &centroids))
            .collect();
        let new_inertia: f64 = assigned.iter().map(|(_, d)| d).sum();
        let new_assignments: Vec<usize> = assigned.iter().map(|(j, _)| *j).collect();
        inertia = new_inertia;
        inertia_history.push(new_inertia);
        let changed = new_assignments != assignments;
        assignments = new_assignments;

        // Recompute means.
        let mut sums = vec![vec![0.0f64; d]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Reseed from the worst-fit point.
                let far = assigned
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                    .map(|(i, _)| i)
                    .unwrap();
                centroids[j] = vectors[far].clone();
            } else {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
        if !changed && inertia_history.len() > 1 {
            break;
        }
    }
    // Final assignment pass so the nearest-centroid property holds
    // exactly against the reported centroids.
    let assigned: Vec<(usize, f64)> = vectors
        .par_iter()
        .map(|v| nearest(v, &centroids))
        .collect();
    let final_inertia: f64 = assigned.iter().map(|(_, d)| d).sum();
    if final_inertia < inertia {
        inertia = final_inertia;
        inertia_history.push(final_inertia);
    }
    assignments = assigned.into_iter().map(|(j, _)| j).collect();

    Ok(ClusterResult {
        k,
        assignments,
        centroids,
        inertia,
        inertia_history,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NearDupReport {
    /// Indices excluded from grouping because their vector has zero norm.
    pub zero_norm_excluded: Vec<usize>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb.max(ra)] = ra.min(rb);
        }
    }
}

/// Within each cluster, group indices whose cosine similarity reaches the
/// threshold, closed transitively. Singleton groups are omitted.
pub fn near_dup_groups(
    vectors: &[Vec<f64>],
    result: &ClusterResult,
    cos_threshold: f64,
) -> (Vec<Vec<usize>>, NearDupReport) {
    let n = vectors.len();
    let mut report = NearDupReport::default();
    let mut uf = UnionFind::new(n);
    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); result.k];
    for (i, &a) in result.assignments.iter().enumerate() {
        let norm: f64 = vectors[i].iter().map(|x| x * x).sum();
        if norm == 0.0 {
            report.zero_norm_excluded.push(i);
        } else {
            by_cluster[a].push(i);
        }
    }
    for members in &by_cluster {
        for (pos, &i) in members.iter().enumerate() {
            for &j in &members[pos + 1..] {
                if cosine(&vectors[i], &vectors[j]) >= cos_threshold {
                    uf.union(i, j);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        if report.zero_norm_excluded.contains(&i) {
            continue;
        }
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups
        .into_values()
        .filter(|g| g.len() > 1)
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    out.sort();
    (out, report)
}

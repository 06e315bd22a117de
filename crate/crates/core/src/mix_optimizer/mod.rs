//! Iterative data-mix optimization: fit per-subset perplexity curves,
//! locate their minima, compare against the token-weighted average
//! curve, and reweight subset proportions.

mod spline;

pub use spline::{CubicSpline, SplineError};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One perplexity measurement for one subset at one training step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerplexityObservation {
    pub subset_id: String,
    pub step: u64,
    pub perplexity: f64,
    pub token_count: u64,
}

/// Fitted perplexity-vs-step curve for one subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetCurve {
    pub subset_id: String,
    pub spline: CubicSpline,
}

impl SubsetCurve {
    pub fn minimum(&self) -> (f64, f64) {
        self.spline.minimum()
    }
}

/// Evolving optimizer state across rounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixState {
    pub round: u32,
    pub max_rounds: u32,
    pub kappa: f64,
    pub mu: f64,
    pub proportions: BTreeMap<String, f64>,
    #[serde(default)]
    pub subset_minima: BTreeMap<String, (f64, f64)>,
    #[serde(default)]
    pub average_minimum: Option<(f64, f64)>,
}

pub const DEFAULT_KAPPA: f64 = 10.0;
pub const DEFAULT_MU: f64 = 15_000.0;

impl MixState {
    pub fn new(proportions: BTreeMap<String, f64>, max_rounds: u32) -> Self {
        MixState {
            round: 0,
            max_rounds,
            kappa: DEFAULT_KAPPA,
            mu: DEFAULT_MU,
            proportions,
            subset_minima: BTreeMap::new(),
            average_minimum: None,
        }
    }

    pub fn validate(&self) -> Result<(), MixError> {
        if self.kappa <= 0.0 {
            return Err(MixError::BadHyperparameter {
                field: "kappa",
                value: self.kappa,
            });
        }
        if self.mu <= 0.0 {
            return Err(MixError::BadHyperparameter {
                field: "mu",
                value: self.mu,
            });
        }
        let sum: f64 = self.proportions.values().sum();
        if (sum - 1.0).abs() > 1e-9 || self.proportions.values().any(|&r| r < 0.0) {
            return Err(MixError::BadProportions { sum });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MixError {
    #[error("{field} must be positive, got {value}")]
    BadHyperparameter { field: &'static str, value: f64 },
    #[error("proportions must be non-negative and sum to 1 (sum = {sum})")]
    BadProportions { sum: f64 },
    #[error("spline fit failed for subset {subset}: {source}")]
    Fit {
        subset: String,
        source: SplineError,
    },
    #[error("step grids misaligned; missing (subset, step) pairs: {0:?}")]
    MisalignedSteps(Vec<(String, u64)>),
    #[error("observations for subset {subset} have non-increasing steps at index {index}")]
    UnsortedSteps { subset: String, index: usize },
    #[error("minimum missing for subset {0}")]
    MissingMinimum(String),
    #[error("average-curve minimum missing")]
    MissingAverageMinimum,
    #[error("max_rounds_reached: round {round} >= max {max}")]
    MaxRoundsReached { round: u32, max: u32 },
    #[error("no observations")]
    NoObservations,
}

/// Fit the natural cubic spline for one subset's (step, perplexity) log.
pub fn fit_spline(
    subset_id: &str,
    observations: &[(u64, f64)],
) -> Result<SubsetCurve, MixError> {
    let points: Vec<(f64, f64)> = observations
        .iter()
        .map(|&(s, p)| (s as f64, p))
        .collect();
    let spline = CubicSpline::fit(&points).map_err(|source| MixError::Fit {
        subset: subset_id.to_string(),
        source,
    })?;
    Ok(SubsetCurve {
        subset_id: subset_id.to_string(),
        spline,
    })
}

/// Global minimum of a fitted curve; ties resolve to the smallest step.
pub fn curve_minimum(curve: &SubsetCurve) -> (f64, f64) {
    curve.minimum()
}

fn group_by_subset(
    logs: &[PerplexityObservation],
) -> Result<BTreeMap<String, (Vec<(u64, f64)>, u64)>, MixError> {
    let mut groups: BTreeMap<String, (Vec<(u64, f64)>, u64)> = BTreeMap::new();
    for obs in logs {
        let entry = groups
            .entry(obs.subset_id.clone())
            .or_insert_with(|| (Vec::new(), obs.token_count));
        if let Some(last) = entry.0.last() {
            if obs.step <= last.0 {
                return Err(MixError::UnsortedSteps {
                    subset: obs.subset_id.clone(),
                    index: entry.0.len(),
                });
            }
        }
        entry.0.push((obs.step, obs.perplexity));
    }
    if groups.is_empty() {
        return Err(MixError::NoObservations);
    }
    Ok(groups)
}

/// Token-weighted average perplexity curve over all subsets. Every
/// subset must report at the same set of steps.
pub fn weighted_average_curve(logs: &[PerplexityObservation]) -> Result<SubsetCurve, MixError> {
    let groups = group_by_subset(logs)?;
    let all_steps: BTreeSet<u64> = groups
        .values()
        .flat_map(|(obs, _)| obs.iter().map(|&(s, _)| s))
        .collect();
    let mut missing = Vec::new();
    for (subset, (obs, _)) in &groups {
        let have: BTreeSet<u64> = obs.iter().map(|&(s, _)| s).collect();
        for &s in all_steps.difference(&have) {
            missing.push((subset.clone(), s));
        }
    }
    if !missing.is_empty() {
        return Err(MixError::MisalignedSteps(missing));
    }
    let total_weight: f64 = groups.values().map(|&(_, w)| w as f64).sum();
    let mut averaged = Vec::with_capacity(all_steps.len());
    for (idx, &step) in all_steps.iter().enumerate() {
        let weighted: f64 = groups
            .values()
            .map(|(obs, w)| obs[idx].1 * *w as f64)
            .sum();
        averaged.push((step, weighted / total_weight));
    }
    fit_spline("__weighted_average__", &averaged)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProportionUpdate {
    pub pre_normalization: BTreeMap<String, f64>,
    pub normalized: BTreeMap<String, f64>,
}

/// Apply the reweighting rule `r_i ← r_i · κ^((s_i − s̄)/μ)` followed by
/// normalization to unit sum.
pub fn update_proportions(state: &MixState) -> Result<ProportionUpdate, MixError> {
    if state.kappa <= 0.0 {
        return Err(MixError::BadHyperparameter {
            field: "kappa",
            value: state.kappa,
        });
    }
    if state.mu <= 0.0 {
        return Err(MixError::BadHyperparameter {
            field: "mu",
            value: state.mu,
        });
    }
    let (avg_s, _) = state
        .average_minimum
        .ok_or(MixError::MissingAverageMinimum)?;
    let mut pre = BTreeMap::new();
    for (subset, &r) in &state.proportions {
        let (s, _) = state
            .subset_minima
            .get(subset)
            .ok_or_else(|| MixError::MissingMinimum(subset.clone()))?;
        pre.insert(subset.clone(), r * state.kappa.powf((s - avg_s) / state.mu));
    }
    let sum: f64 = pre.values().sum();
    let normalized = pre
        .iter()
        .map(|(k, v)| (k.clone(), v / sum))
        .collect();
    Ok(ProportionUpdate {
        pre_normalization: pre,
        normalized,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub subset_minima: BTreeMap<String, (f64, f64)>,
    pub average_minimum: (f64, f64),
    pub old_proportions: BTreeMap<String, f64>,
    pub pre_normalization: BTreeMap<String, f64>,
    pub new_proportions: BTreeMap<String, f64>,
}

/// One full optimizer round: group, fit, locate minima, reweight.
pub fn mix_iterate(
    logs: &[PerplexityObservation],
    state: &MixState,
) -> Result<(MixState, RoundReport), MixError> {
    if state.round >= state.max_rounds {
        return Err(MixError::MaxRoundsReached {
            round: state.round,
            max: state.max_rounds,
        });
    }
    let groups = group_by_subset(logs)?;
    let mut minima = BTreeMap::new();
    for (subset, (obs, _)) in &groups {
        let curve = fit_spline(subset, obs)?;
        minima.insert(subset.clone(), curve.minimum());
    }
    let avg_curve = weighted_average_curve(logs)?;
    let avg_minimum = avg_curve.minimum();

    let mut working = state.clone();
    working.subset_minima = minima.clone();
    working.average_minimum = Some(avg_minimum);
    // Subsets present in the logs but absent from the proportion map get
    // no update; subsets in the map but missing logs are an error.
    for subset in working.proportions.keys() {
        if !minima.contains_key(subset) {
            return Err(MixError::MissingMinimum(subset.clone()));
        }
    }
    let update = update_proportions(&working)?;
    let report = RoundReport {
        round: state.round,
        subset_minima: minima.clone(),
        average_minimum: avg_minimum,
        old_proportions: state.proportions.clone(),
        pre_normalization: update.pre_normalization,
        new_proportions: update.normalized.clone(),
    };
    let next = MixState {
        round: state.round + 1,
        max_rounds: state.max_rounds,
        kappa: state.kappa,
        mu: state.mu,
        proportions: update.normalized,
        subset_minima: minima,
        average_minimum: Some(avg_minimum),
    };
    Ok((next, report))
}

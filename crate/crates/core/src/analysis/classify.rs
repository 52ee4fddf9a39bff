//! Finite-horizon stability classification of an ensemble.

use serde::{Deserialize, Serialize};

use super::ensemble::McStats;
use crate::dynamics::NuFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySettings {
    /// Mean-square verdict requires the final-decile mean of `|x|²` below this.
    pub mean_square_threshold: f64,
    /// Admissible exceedance probability, one per epsilon (the last entry is
    /// reused if fewer are given).
    pub probability_levels: Vec<f64>,
    /// Normal quantile for the Wilson upper confidence bound.
    pub z: f64,
}

impl Default for ClassifySettings {
    fn default() -> Self {
        ClassifySettings {
            mean_square_threshold: 1e-2,
            probability_levels: vec![0.05],
            z: 1.96,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityVerdict {
    pub epsilon: f64,
    pub frequency: f64,
    /// Wilson upper confidence bound on the exceedance probability.
    pub upper: f64,
    pub level: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub final_decile_mean_x2: f64,
    pub previous_decile_mean_x2: f64,
    pub trending_down: bool,
    /// Empirical `M = sup ν(t)·mean|x(t)|²`.
    pub nu_sup: f64,
    pub nu_sup_time: f64,
    pub nu_growth: f64,
    pub diverged: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub mean_square: bool,
    pub nu_mean_square: bool,
    pub in_probability: Vec<ProbabilityVerdict>,
    pub diagnostics: Diagnostics,
}

fn wilson_upper(p: f64, n: usize, z: f64) -> f64 {
    let n = n as f64;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre + spread) / (1.0 + z2 / n)).min(1.0)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Classify from the ensemble curves. Deterministic in `stats`.
pub fn classify_stability(stats: &McStats, nu: &NuFunction, settings: &ClassifySettings) -> Classification {
    let len = stats.times.len();
    let mut warnings = Vec::new();
    let decile = (len / 10).max(1);
    let final_part = &stats.mean_x2[len.saturating_sub(decile)..];
    let prev_start = len.saturating_sub(2 * decile);
    let prev_part = &stats.mean_x2[prev_start..len.saturating_sub(decile)];
    let final_mean = mean(final_part);
    let prev_mean = if prev_part.is_empty() { final_mean } else { mean(prev_part) };
    let trending_down = final_mean <= prev_mean;

    let mut nu_sup = f64::NEG_INFINITY;
    let mut nu_sup_index = 0;
    for (k, &v) in stats.nu_mean_x2.iter().enumerate() {
        if v > nu_sup {
            nu_sup = v;
            nu_sup_index = k;
        }
    }
    let nu_sup_time = stats.times.get(nu_sup_index).copied().unwrap_or(0.0);
    let nu_growth = nu.value(stats.horizon) / nu.value(0.0);
    if !(nu_growth >= 10.0) {
        warnings.push(format!(
            "ν grows only by a factor {nu_growth:.3} over the horizon; the weighted verdict is weak"
        ));
    }
    if stats.diverged > 0 {
        warnings.push(format!("{} trials diverged and are excluded from the curves", stats.diverged));
    }
    let healthy = stats.diverged == 0;
    // the all-zero ensemble attains its supremum everywhere, including t = 0
    let attained_early = nu_sup_time <= 0.5 * stats.horizon;
    let nu_mean_square = healthy && nu_sup.is_finite() && attained_early;
    let mean_square = healthy && final_mean < settings.mean_square_threshold && trending_down;

    let in_probability = stats
        .epsilons
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let level = settings
                .probability_levels
                .get(e)
                .or(settings.probability_levels.last())
                .copied()
                .unwrap_or(0.05);
            let frequency = stats.exceed[e].last().copied().unwrap_or(0.0);
            let upper = wilson_upper(frequency, stats.trials.max(1), settings.z);
            ProbabilityVerdict {
                epsilon: eps,
                frequency,
                upper,
                level,
                pass: healthy && upper <= level,
            }
        })
        .collect();

    Classification {
        mean_square,
        nu_mean_square,
        in_probability,
        diagnostics: Diagnostics {
            final_decile_mean_x2: final_mean,
            previous_decile_mean_x2: prev_mean,
            trending_down,
            nu_sup,
            nu_sup_time,
            nu_growth,
            diverged: stats.diverged,
            warnings,
        },
    }
}

//! Monte Carlo checks of the supermartingale property and Dynkin's formula.

use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::McStats;
use super::lyapunov::{generator_v1_with_chi, v1_series, LyapunovV1Spec};
use crate::certificates::chi_term;
use crate::dynamics::{DelayFunction, DelaySystem};
use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, Mat};
use crate::rng::{substream, Stream};
use crate::sim::{integrate, InitialSegment, SimSettings};
use crate::switching::{sample_path_with, ModeId, RateMap, SwitchingFamily};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupermartingaleReport {
    /// Largest `(mean_j − 3se_j) − min_{i<j}(mean_i + 3se_i) − slack`.
    pub worst_violation: f64,
    pub worst_time: f64,
    /// Discretization allowance `h·max mean_V`.
    pub slack: f64,
    pub pass: bool,
}

/// Check that the ensemble mean of `V₁` never rises beyond its confidence band.
pub fn supermartingale_check(stats: &McStats) -> Result<SupermartingaleReport> {
    let (mean, se) = match (&stats.mean_v, &stats.se_v) {
        (Some(m), Some(s)) => (m, s),
        _ => return Err(Error::Domain("ensemble has no V₁ series".into())),
    };
    let slack = stats.step * mean.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let mut running_upper = f64::INFINITY;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_time = stats.times.first().copied().unwrap_or(0.0);
    for k in 0..mean.len() {
        if k > 0 {
            let v = (mean[k] - 3.0 * se[k]) - running_upper - slack;
            if v > worst {
                worst = v;
                worst_time = stats.times[k];
            }
        }
        running_upper = running_upper.min(mean[k] + 3.0 * se[k]);
    }
    if mean.len() < 2 {
        worst = 0.0;
    }
    Ok(SupermartingaleReport {
        worst_violation: worst,
        worst_time,
        slack,
        pass: worst <= 0.0,
    })
}

pub struct DynkinSetup<'a, S: DelaySystem + ?Sized> {
    pub spec: &'a LyapunovV1Spec,
    pub system: &'a S,
    pub family: &'a SwitchingFamily,
    pub rates: &'a RateMap,
    pub initial_mode: ModeId,
    pub delay: &'a DelayFunction,
    pub initial: &'a InitialSegment,
    pub settings: SimSettings,
    pub trials: usize,
    pub seed: u64,
    /// Constant `C` of the `C·√h·scale` discretization allowance.
    pub slack_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynkinReport {
    /// Ensemble mean of `V₁(T) − V₁(0) − ∫₀ᵀ ÂV₁ dt`.
    pub residual: f64,
    pub se: f64,
    pub mean_v0: f64,
    pub mean_vt: f64,
    pub mean_integral: f64,
    /// `C·√h·mean(|V₁(0)| + ∫|ÂV₁|dt)`.
    pub slack: f64,
    pub conservative: bool,
    pub trials: usize,
    pub pass: bool,
}

struct DynkinTrial {
    v0: f64,
    vt: f64,
    integral: f64,
    abs_integral: f64,
    conservative: bool,
}

fn dynkin_trial<S: DelaySystem + ?Sized>(setup: &DynkinSetup<'_, S>, trial: usize) -> Result<DynkinTrial> {
    let mut sw = substream(setup.seed, trial as u64, Stream::Switching);
    let path = sample_path_with(setup.family, setup.rates, setup.initial_mode, setup.settings.horizon, &mut sw)?;
    let mut noise = substream(setup.seed, trial as u64, Stream::Noise);
    let traj = integrate(setup.system, setup.delay, setup.initial, &path, &setup.settings, &mut noise)?;
    let v = v1_series(setup.spec, setup.delay, &traj)?;

    let mut conservative = false;
    let chis: Vec<Mat> = path
        .states
        .iter()
        .map(|s| {
            let c = chi_term(setup.family, &setup.spec.p, s, setup.rates)?;
            conservative |= c.conservative;
            Ok(c.matrix)
        })
        .collect::<Result<_>>()?;

    let n = traj.n;
    let mut delayed = vec![0.0; n];
    let mut pieces = Vec::with_capacity(traj.len());
    let mut abs_pieces = Vec::with_capacity(traj.len());
    for k in 0..traj.len() - 1 {
        let (t0, t1) = (traj.times[k], traj.times[k + 1]);
        let mode = traj.modes[k];
        let chi = &chis[path.interval_at(t0)?];
        traj.state_at(setup.delay.lagged(t0), &mut delayed);
        let a0 = generator_v1_with_chi(setup.spec, setup.system, setup.delay, chi, traj.state(k), &delayed, mode, t0);
        // left limit: same mode and χ at the end of the step
        traj.state_at(setup.delay.lagged(t1), &mut delayed);
        let a1 = generator_v1_with_chi(setup.spec, setup.system, setup.delay, chi, traj.state(k + 1), &delayed, mode, t1);
        pieces.push(0.5 * (a0 + a1) * (t1 - t0));
        abs_pieces.push(0.5 * (a0.abs() + a1.abs()) * (t1 - t0));
    }
    Ok(DynkinTrial {
        v0: v[0],
        vt: v[v.len() - 1],
        integral: compensated_sum(pieces),
        abs_integral: compensated_sum(abs_pieces),
        conservative,
    })
}

/// Estimate the Dynkin residual `E[V₁(T)] − V₁(0) − E∫₀ᵀ ÂV₁ dt`.
pub fn dynkin_residual<S: DelaySystem + ?Sized>(setup: &DynkinSetup<'_, S>) -> Result<DynkinReport> {
    if setup.trials < 2 {
        return Err(Error::config("trials", "trials must be ≥ 2"));
    }
    setup.spec.validate(setup.system.dim(), setup.family.mode_count())?;
    let results: Vec<DynkinTrial> = (0..setup.trials)
        .into_par_iter()
        .map(|i| dynkin_trial(setup, i))
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let residuals: Vec<f64> = results.iter().map(|r| r.vt - r.v0 - r.integral).collect();
    let mean = compensated_sum(residuals.iter().copied()) / n;
    let var = compensated_sum(residuals.iter().map(|r| (r - mean) * (r - mean))) / (n - 1.0);
    let se = (var / n).sqrt();
    let scale = compensated_sum(results.iter().map(|r| r.v0.abs() + r.abs_integral)) / n;
    let slack = setup.slack_constant * setup.settings.step.sqrt() * scale;
    Ok(DynkinReport {
        residual: mean,
        se,
        mean_v0: compensated_sum(results.iter().map(|r| r.v0)) / n,
        mean_vt: compensated_sum(results.iter().map(|r| r.vt)) / n,
        mean_integral: compensated_sum(results.iter().map(|r| r.integral)) / n,
        slack,
        conservative: results.iter().any(|r| r.conservative),
        trials: results.len(),
        pass: mean.abs() <= 3.0 * se + slack,
    })
}

//! Monte Carlo ensembles and their summary statistics.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::lyapunov::{v1_series, LyapunovV1Spec};
use crate::dynamics::{DelayFunction, DelaySystem, NuFunction};
use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;
use crate::rng::{substream, Stream};
use crate::sim::{integrate, InitialSegment, SimSettings};
use crate::switching::{sample_path_with, ModeId, RateMap, SwitchingFamily};

/// Everything needed to run an ensemble.
pub struct McSetup<'a, S: DelaySystem + ?Sized> {
    pub system: &'a S,
    pub family: &'a SwitchingFamily,
    pub rates: &'a RateMap,
    pub initial_mode: ModeId,
    pub delay: &'a DelayFunction,
    pub initial: &'a InitialSegment,
    pub nu: &'a NuFunction,
    pub settings: SimSettings,
    pub trials: usize,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    /// Keep every `record_every`-th uniform grid point (the last one always).
    pub record_every: usize,
    pub v1: Option<&'a LyapunovV1Spec>,
}

/// Per-time ensemble statistics over non-divergent trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McStats {
    pub times: Vec<f64>,
    pub mean_x2: Vec<f64>,
    pub se_x2: Vec<f64>,
    /// `ν(t)·mean|x(t)|²`.
    pub nu_mean_x2: Vec<f64>,
    pub mean_v: Option<Vec<f64>>,
    pub se_v: Option<Vec<f64>>,
    pub epsilons: Vec<f64>,
    /// `exceed[e][k]`: fraction of trials with `|x(t_k)| > epsilons[e]`.
    pub exceed: Vec<Vec<f64>>,
    /// Trials that contributed to the statistics.
    pub trials: usize,
    pub diverged: usize,
    pub diverged_trials: Vec<usize>,
    pub step: f64,
    pub horizon: f64,
    pub seed: u64,
}

/// Recorded per-trial series.
struct TrialRows {
    x2: Vec<f64>,
    v: Option<Vec<f64>>,
}

/// Shifted sums `Σ(y − K)`, `Σ(y − K)²` with `K` the first observation.
#[derive(Clone, Default)]
struct Moments {
    shift: Option<f64>,
    s1: CompensatedSum,
    s2: CompensatedSum,
}

impl Moments {
    fn add(&mut self, y: f64) {
        let k = *self.shift.get_or_insert(y);
        let d = y - k;
        self.s1.add(d);
        self.s2.add(d * d);
    }

    fn mean_se(&self, n: usize) -> (f64, f64) {
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let k = self.shift.unwrap_or(0.0);
        let nf = n as f64;
        let m1 = self.s1.value() / nf;
        let mean = k + m1;
        if n < 2 {
            return (mean, f64::NAN);
        }
        let var = ((self.s2.value() - nf * m1 * m1) / (nf - 1.0)).max(0.0);
        (mean, (var / nf).sqrt())
    }
}

/// Indices into the uniform grid that get recorded.
fn recorded_uniform(settings: &SimSettings, every: usize) -> Vec<usize> {
    let steps = settings.uniform_steps();
    let mut idx: Vec<usize> = (0..=steps).step_by(every.max(1)).collect();
    if *idx.last().unwrap() != steps {
        idx.push(steps);
    }
    idx
}

fn run_trial<S: DelaySystem + ?Sized>(setup: &McSetup<'_, S>, trial: usize, recorded: &[usize]) -> Result<(TrialRows, Vec<f64>)> {
    let mut sw = substream(setup.seed, trial as u64, Stream::Switching);
    let path = sample_path_with(setup.family, setup.rates, setup.initial_mode, setup.settings.horizon, &mut sw)?;
    let mut noise = substream(setup.seed, trial as u64, Stream::Noise);
    let traj = integrate(setup.system, setup.delay, setup.initial, &path, &setup.settings, &mut noise)?;
    let points: Vec<usize> = recorded.iter().map(|&j| traj.uniform[j]).collect();
    let mut x2 = Vec::with_capacity(points.len());
    let mut norms = Vec::with_capacity(points.len());
    for &k in &points {
        let s: f64 = traj.state(k).iter().map(|v| v * v).sum();
        x2.push(s);
        norms.push(s.sqrt());
    }
    let v = match setup.v1 {
        Some(spec) => {
            let series = v1_series(spec, setup.delay, &traj)?;
            Some(points.iter().map(|&k| series[k]).collect())
        }
        None => None,
    };
    Ok((TrialRows { x2, v }, norms))
}

/// Trials are simulated in parallel in fixed-size batches, then reduced in
/// trial order, so results do not depend on the thread count.
pub fn mc_ensemble<S: DelaySystem + ?Sized>(setup: &McSetup<'_, S>) -> Result<McStats> {
    if setup.trials < 2 {
        return Err(Error::config("simulation.trials", "trials must be ≥ 2"));
    }
    setup.settings.validate()?;
    if setup.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::config("simulation.epsilons", "epsilons must be positive"));
    }
    if let Some(spec) = setup.v1 {
        spec.validate(setup.system.dim(), setup.family.mode_count())?;
    }
    let recorded = recorded_uniform(&setup.settings, setup.record_every);
    let times: Vec<f64> = recorded.iter().map(|&j| setup.settings.uniform_time(j)).collect();
    let len = times.len();
    let mut x2m = vec![Moments::default(); len];
    let mut vm = setup.v1.map(|_| vec![Moments::default(); len]);
    let mut exceed_counts = vec![vec![0usize; len]; setup.epsilons.len()];
    let mut ok = 0usize;
    let mut diverged_trials = Vec::new();

    const BATCH: usize = 64;
    for start in (0..setup.trials).step_by(BATCH) {
        let end = (start + BATCH).min(setup.trials);
        let results: Vec<Result<(TrialRows, Vec<f64>)>> =
            (start..end).into_par_iter().map(|i| run_trial(setup, i, &recorded)).collect();
        for (offset, r) in results.into_iter().enumerate() {
            match r {
                Ok((rows, norms)) => {
                    ok += 1;
                    for k in 0..len {
                        x2m[k].add(rows.x2[k]);
                        for (e, &eps) in setup.epsilons.iter().enumerate() {
                            if norms[k] > eps {
                                exceed_counts[e][k] += 1;
                            }
                        }
                    }
                    if let (Some(vm), Some(v)) = (vm.as_mut(), rows.v) {
                        for k in 0..len {
                            vm[k].add(v[k]);
                        }
                    }
                }
                Err(Error::Divergence { .. }) => diverged_trials.push(start + offset),
                Err(e) => return Err(e),
            }
        }
    }

    if ok < 2 {
        return Err(Error::Domain(format!(
            "only {ok} of {} trials stayed bounded; statistics need at least two",
            setup.trials
        )));
    }
    let (mean_x2, se_x2): (Vec<f64>, Vec<f64>) = x2m.iter().map(|m| m.mean_se(ok)).unzip();
    let nu_mean_x2 = times.iter().zip(&mean_x2).map(|(&t, &m)| setup.nu.value(t) * m).collect();
    let (mean_v, se_v) = match vm {
        Some(vm) => {
            let (a, b): (Vec<f64>, Vec<f64>) = vm.iter().map(|m| m.mean_se(ok)).unzip();
            (Some(a), Some(b))
        }
        None => (None, None),
    };
    let denom = ok.max(1) as f64;
    let exceed = exceed_counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / denom).collect())
        .collect();
    Ok(McStats {
        times,
        mean_x2,
        se_x2,
        nu_mean_x2,
        mean_v,
        se_v,
        epsilons: setup.epsilons.clone(),
        exceed,
        trials: ok,
        diverged: diverged_trials.len(),
        diverged_trials,
        step: setup.settings.step,
        horizon: setup.settings.horizon,
        seed: setup.seed,
    })
}

impl McStats {
    /// CSV with columns `t,mean_x2,se_x2,nu_mean_x2,mean_V,se_V,exceed_eps1,...`.
    /// `mean_V`/`se_V` are empty when no functional was evaluated.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t,mean_x2,se_x2,nu_mean_x2,mean_V,se_V");
        for e in 1..=self.epsilons.len() {
            header.push_str(&format!(",exceed_eps{e}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.times.len() {
            let mut line = format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[k], self.mean_x2[k], self.se_x2[k], self.nu_mean_x2[k]
            );
            match (&self.mean_v, &self.se_v) {
                (Some(m), Some(s)) => line.push_str(&format!(",{:.16e},{:.16e}", m[k], s[k])),
                _ => line.push_str(",,"),
            }
            for row in &self.exceed {
                line.push_str(&format!(",{:.16e}", row[k]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Index of the last recorded time `≤ t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }
}

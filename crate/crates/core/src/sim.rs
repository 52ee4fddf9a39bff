//! Euler–Maruyama integration of delayed stochastic systems along a switching path.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dynamics::{DelayFunction, DelaySystem};
use crate::error::{Error, Result};
use crate::switching::{ModeId, SwitchingPath};

/// States with some component above this magnitude count as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Initial segment `φ` on `[−τ_b, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSegment {
    Constant { value: Vec<f64> },
    /// Piecewise-linear through `(times[k], values[k])`, held constant outside.
    Samples { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl InitialSegment {
    pub fn constant(value: Vec<f64>) -> Self {
        InitialSegment::Constant { value }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialSegment::Constant { value } => value.len(),
            InitialSegment::Samples { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            InitialSegment::Constant { value } => {
                if value.len() != n {
                    return Err(Error::config("simulation.initial.value", format!("expected {n} entries")));
                }
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("simulation.initial.value", "entries must be finite"));
                }
            }
            InitialSegment::Samples { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::config("simulation.initial", "times and values must be non-empty and equally long"));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) || times.iter().any(|t| *t > 0.0) {
                    return Err(Error::config("simulation.initial.times", "must be strictly increasing and non-positive"));
                }
                if values.iter().any(|v| v.len() != n) {
                    return Err(Error::config("simulation.initial.values", format!("each sample needs {n} entries")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: f64, out: &mut [f64]) {
        match self {
            InitialSegment::Constant { value } => out.copy_from_slice(value),
            InitialSegment::Samples { times, values } => {
                let k = times.partition_point(|&t| t <= s);
                if k == 0 {
                    out.copy_from_slice(&values[0]);
                } else if k == times.len() {
                    out.copy_from_slice(&values[k - 1]);
                } else {
                    let w = (s - times[k - 1]) / (times[k] - times[k - 1]);
                    for i in 0..out.len() {
                        out[i] = (1.0 - w) * values[k - 1][i] + w * values[k][i];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub horizon: f64,
    pub step: f64,
}

impl SimSettings {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        let s = SimSettings { horizon, step };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config("simulation.horizon", "must be positive"));
        }
        if !(self.step.is_finite() && self.step > 0.0 && self.step <= self.horizon) {
            return Err(Error::config("simulation.step", "must be positive and at most the horizon"));
        }
        Ok(())
    }

    /// Number of uniform steps; the last one may be shorter than `step`.
    pub fn uniform_steps(&self) -> usize {
        let k = self.horizon / self.step;
        let r = k.round();
        if (k - r).abs() <= 1e-9 * k.max(1.0) {
            r as usize
        } else {
            k.ceil() as usize
        }
    }

    /// Uniform time `j·h`, clamped to the horizon.
    pub fn uniform_time(&self, j: usize) -> f64 {
        if j >= self.uniform_steps() {
            self.horizon
        } else {
            j as f64 * self.step
        }
    }
}

/// Integration output on the merged grid of uniform points and switch instants.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    /// Row-major `len × n`.
    pub states: Vec<f64>,
    /// Mode in force on `[times[k], times[k + 1])`.
    pub modes: Vec<ModeId>,
    /// Indices into `times` of the uniform points `j·h`.
    pub uniform: Vec<usize>,
    pub settings: SimSettings,
    pub initial: InitialSegment,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// `x(s)` for `s ≤ times.last()`: linear interpolation on the stored
    /// points, or the initial segment for `s ≤ 0`.
    pub fn state_at(&self, s: f64, out: &mut [f64]) {
        history_lookup(&self.times, &self.states, self.n, &self.initial, s, out);
    }

    /// Write `t,mode,x1,...,xn` at every stored point with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t,mode");
        for i in 1..=self.n {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut line = format!("{:.16e},{}", self.times[k], self.modes[k]);
            for v in self.state(k) {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn history_lookup(times: &[f64], states: &[f64], n: usize, init: &InitialSegment, s: f64, out: &mut [f64]) {
    if s <= 0.0 {
        init.eval(s, out);
        return;
    }
    let k = times.partition_point(|&t| t <= s);
    if k >= times.len() {
        out.copy_from_slice(&states[(times.len() - 1) * n..times.len() * n]);
        return;
    }
    // k ≥ 1 since times[0] = 0 ≤ s
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (s - t0) / (t1 - t0);
    for i in 0..n {
        out[i] = (1.0 - w) * states[(k - 1) * n + i] + w * states[k * n + i];
    }
}

/// Merged grid: uniform points plus switch instants strictly inside `(0, T)`.
/// Returns the times and the indices of the uniform points.
pub fn merged_grid(settings: &SimSettings, path: &SwitchingPath) -> (Vec<f64>, Vec<usize>) {
    let steps = settings.uniform_steps();
    let eps = 1e-12 * settings.step;
    let jumps: Vec<f64> = path
        .jump_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < settings.horizon)
        .collect();
    let mut times = Vec::with_capacity(steps + 1 + jumps.len());
    let mut uniform = Vec::with_capacity(steps + 1);
    let mut ji = 0;
    for j in 0..=steps {
        let u = settings.uniform_time(j);
        while ji < jumps.len() && jumps[ji] < u - eps {
            if times.last().is_none_or(|&l| jumps[ji] > l + eps) {
                times.push(jumps[ji]);
            }
            ji += 1;
        }
        while ji < jumps.len() && jumps[ji] <= u + eps {
            ji += 1; // coincides with the uniform point
        }
        uniform.push(times.len());
        times.push(u);
    }
    (times, uniform)
}

/// Euler–Maruyama integration with piecewise-linear history interpolation.
pub fn integrate<S: DelaySystem + ?Sized, R: Rng + ?Sized>(
    sys: &S,
    delay: &DelayFunction,
    initial: &InitialSegment,
    path: &SwitchingPath,
    settings: &SimSettings,
    rng: &mut R,
) -> Result<Trajectory> {
    settings.validate()?;
    let n = sys.dim();
    let m = sys.noise_dim();
    initial.validate(n)?;
    if path.horizon < settings.horizon {
        return Err(Error::Domain(format!(
            "switching path covers [0, {}] but the horizon is {}",
            path.horizon, settings.horizon
        )));
    }
    if let Some(bad) = path.modes.iter().find(|md| md.0 >= sys.mode_count()) {
        return Err(Error::Dimension(format!("path visits mode {bad} but the system has {}", sys.mode_count())));
    }
    let (times, uniform) = merged_grid(settings, path);
    let len = times.len();
    let mut states = Vec::with_capacity(len * n);
    let mut modes = Vec::with_capacity(len);
    let mut x = vec![0.0; n];
    initial.eval(0.0, &mut x);
    states.extend_from_slice(&x);

    let mut delayed = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n * m];
    let mut dw = vec![0.0; m];
    for k in 0..len - 1 {
        let t = times[k];
        let dt = times[k + 1] - t;
        let mode = path.mode_at(t)?;
        modes.push(mode);
        let lag = delay.lagged(t);
        if lag < -delay.tau_b - 1e-12 * delay.tau_b.max(1.0) {
            return Err(Error::config(
                "delay",
                format!("t − τ(t) = {lag} at t = {t} reaches before the history window [−{}, 0]", delay.tau_b),
            ));
        }
        history_lookup(&times[..=k], &states, n, initial, lag, &mut delayed);
        let xk = &states[k * n..(k + 1) * n];
        sys.drift(t, xk, &delayed, mode, &mut f);
        sys.diffusion(t, xk, &delayed, mode, &mut g);
        let sd = dt.sqrt();
        for w in dw.iter_mut() {
            *w = sd * rng.sample::<f64, _>(StandardNormal);
        }
        for i in 0..n {
            let mut v = xk[i] + f[i] * dt;
            for c in 0..m {
                v += g[i * m + c] * dw[c];
            }
            x[i] = v;
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { time: times[k + 1] });
        }
        states.extend_from_slice(&x);
    }
    modes.push(path.mode_at(times[len - 1])?);
    Ok(Trajectory {
        n,
        times,
        states,
        modes,
        uniform,
        settings: *settings,
        initial: initial.clone(),
    })
}

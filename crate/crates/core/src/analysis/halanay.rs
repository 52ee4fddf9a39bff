//! Generalized Halanay comparison dynamics and the bound check.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::{DelayFunction, ScalarFn};
use crate::error::{Error, Result};

/// Right-continuous coefficient `α(t)` or `β(t)`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `values[k]` on `[breaks[k], breaks[k + 1])`, with `breaks[0] = 0`.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    Custom(ScalarFn),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Piecewise { breaks, values } => write!(f, "Piecewise({breaks:?}, {values:?})"),
            Coefficient::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Coefficient {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Piecewise { breaks, values } => {
                let k = breaks.partition_point(|&b| b <= t).saturating_sub(1);
                values[k]
            }
            Coefficient::Custom(f) => f(t),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if let Coefficient::Piecewise { breaks, values } = self {
            if breaks.is_empty() || breaks.len() != values.len() || breaks[0] != 0.0 {
                return Err(Error::config(what, "piecewise coefficient needs matching breaks starting at 0"));
            }
            if breaks.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::config(what, "breaks must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// `D⁺u ≤ −α(t)u + β(t) sup_{[t−τ(t), t]} u + J₀` with `u ≡ u₀` on `[−τ_b, 0]`.
#[derive(Debug, Clone)]
pub struct HalanayProblem {
    pub alpha: Coefficient,
    pub beta: Coefficient,
    pub eta: f64,
    pub j0: f64,
    pub delay: DelayFunction,
    pub u0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalanaySeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl HalanaySeries {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,u")?;
        for (t, u) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:.16e},{u:.16e}")?;
        }
        Ok(())
    }
}

/// Sliding maximum over stored points; falls back to a scan when the window's
/// left edge moves backwards (`τ′ > 1`).
struct WindowMax {
    deque: VecDeque<usize>,
    left: f64,
}

impl WindowMax {
    fn new() -> Self {
        WindowMax {
            deque: VecDeque::new(),
            left: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, k: usize, values: &[f64]) {
        while self.deque.back().is_some_and(|&j| values[j] <= values[k]) {
            self.deque.pop_back();
        }
        self.deque.push_back(k);
    }

    fn max(&mut self, lo: f64, times: &[f64], values: &[f64]) -> f64 {
        if lo < self.left {
            let start = times.partition_point(|&t| t < lo);
            return values[start..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        self.left = lo;
        while self.deque.front().is_some_and(|&j| times[j] < lo) {
            self.deque.pop_front();
        }
        self.deque.front().map_or(f64::NEG_INFINITY, |&j| values[j])
    }
}

fn grid(h: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config("halanay.step", "step must be positive"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config("halanay.horizon", "horizon must be positive"));
    }
    let settings = crate::sim::SimSettings::new(horizon, h.min(horizon))?;
    Ok((0..=settings.uniform_steps()).map(|j| settings.uniform_time(j)).collect())
}

/// Explicit Euler for the comparison dynamics taken with equality.
pub fn halanay_integrate(p: &HalanayProblem, h: f64, horizon: f64) -> Result<HalanaySeries> {
    p.alpha.validate("halanay.alpha")?;
    p.beta.validate("halanay.beta")?;
    if !(p.j0 >= 0.0) {
        return Err(Error::config("halanay.j0", "J₀ must be non-negative"));
    }
    let times = grid(h, horizon)?;
    let mut values = Vec::with_capacity(times.len());
    values.push(p.u0);
    let mut window = WindowMax::new();
    window.push(0, &values);
    for k in 0..times.len() - 1 {
        let t = times[k];
        let lo = p.delay.lagged(t);
        if lo < -p.delay.tau_b * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("window starts at {lo}, before −τ_b")));
        }
        let mut sup = window.max(lo, &times[..=k], &values);
        if lo <= 0.0 {
            sup = sup.max(p.u0);
        }
        let u = values[k];
        let next = u + (times[k + 1] - t) * (-p.alpha.eval(t) * u + p.beta.eval(t) * sup + p.j0);
        values.push(next);
        window.push(k + 1, &values);
    }
    Ok(HalanaySeries { times, values })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalanayReport {
    /// `max{J₀/η, u₀}`.
    pub bound: f64,
    pub sup_u: f64,
    pub max_violation: f64,
    /// `10·h·α_max·u_max`.
    pub slack: f64,
    pub min_gap: f64,
    pub pass: bool,
}

/// Integrate and check `u(t) ≤ max{J₀/η, u₀}` up to the explicit-Euler slack.
pub fn halanay_bound_check(p: &HalanayProblem, h: f64, horizon: f64) -> Result<(HalanayReport, HalanaySeries)> {
    if !(p.eta > 0.0) {
        return Err(Error::config("halanay.eta", "η must be positive"));
    }
    let times = grid(h, horizon)?;
    let mut min_gap = f64::INFINITY;
    let mut alpha_max = f64::NEG_INFINITY;
    for &t in &times {
        let (a, b) = (p.alpha.eval(t), p.beta.eval(t));
        if !(a > 0.0 && b >= 0.0) {
            return Err(Error::validation(format!("α({t}) = {a}, β({t}) = {b}: need α > 0, β ≥ 0"), Some(t)));
        }
        let gap = a - b;
        if gap < p.eta {
            return Err(Error::validation(
                format!("α − β = {gap} < η = {} at t = {t}; the comparison bound does not apply", p.eta),
                Some(t),
            ));
        }
        min_gap = min_gap.min(gap);
        alpha_max = alpha_max.max(a);
    }
    let series = halanay_integrate(p, h, horizon)?;
    let bound = (p.j0 / p.eta).max(p.u0);
    let sup_u = series.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let u_max = series.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let slack = 10.0 * h * alpha_max * u_max;
    let max_violation = sup_u - bound;
    Ok((
        HalanayReport {
            bound,
            sup_u,
            max_violation,
            slack,
            min_gap,
            pass: max_violation <= slack,
        },
        series,
    ))
}

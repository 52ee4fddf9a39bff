//! Delay functions, weight functions `ν(t)`, and the switched delayed network
//! model with its hypothesis validators.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{lambda_min, symmetrize, Mat, Vector};
use crate::rng::{substream, Stream};
use crate::switching::ModeId;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `σ(u, v, ξ)` written row-major into an `n × m` buffer.
pub type NoiseFn = Arc<dyn Fn(&[f64], &[f64], ModeId, &mut [f64]) + Send + Sync>;

/// Uniform evaluation grid on `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl TimeGrid {
    pub const DEFAULT_POINTS: usize = 2001;

    pub fn new(start: f64, end: f64, points: usize) -> Result<Self> {
        if points == 0 || !(end >= start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Domain(format!("invalid grid [{start}, {end}] with {points} points")));
        }
        Ok(TimeGrid { start, end, points })
    }

    /// `DEFAULT_POINTS` points on `[0, horizon]`.
    pub fn over(horizon: f64) -> Result<Self> {
        TimeGrid::new(0.0, horizon, Self::DEFAULT_POINTS)
    }

    pub fn spacing(&self) -> f64 {
        if self.points < 2 {
            0.0
        } else {
            (self.end - self.start) / (self.points - 1) as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.points).map(move |i| if i + 1 == self.points { self.end } else { self.start + h * i as f64 })
    }
}

// ---------------------------------------------------------------- delays

#[derive(Clone)]
pub enum DelayKind {
    Constant { value: f64 },
    /// `τ(t) = slope·t + offset`.
    Affine { slope: f64, offset: f64 },
    Custom { tau: ScalarFn, tau_prime: ScalarFn },
}

impl fmt::Debug for DelayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayKind::Constant { value } => write!(f, "Constant({value})"),
            DelayKind::Affine { slope, offset } => write!(f, "Affine({slope}·t + {offset})"),
            DelayKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Time-varying delay `τ(t)` with `τ_* = inf τ` and `τ_b = sup (τ(t) − t)`.
#[derive(Debug, Clone)]
pub struct DelayFunction {
    pub kind: DelayKind,
    pub tau_star: f64,
    pub tau_b: f64,
}

impl DelayFunction {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::config("delay.value", "constant delay must be positive"));
        }
        Ok(DelayFunction {
            kind: DelayKind::Constant { value },
            tau_star: value,
            tau_b: value,
        })
    }

    /// Affine delay with `0 ≤ slope < 1`.
    pub fn affine(slope: f64, offset: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&slope) {
            return Err(Error::config(
                "delay.slope",
                "affine delay slope must lie in [0, 1); use affine_steep to override",
            ));
        }
        Self::affine_steep(slope, offset)
    }

    /// Affine delay without the `slope < 1` restriction. For `slope > 1` the
    /// lagged time runs to `−∞` and `τ_b` is infinite.
    pub fn affine_steep(slope: f64, offset: f64) -> Result<Self> {
        if !(slope.is_finite() && slope >= 0.0) {
            return Err(Error::config("delay.slope", "slope must be finite and non-negative"));
        }
        if !(offset.is_finite() && offset > 0.0) {
            return Err(Error::config("delay.offset", "offset must be positive"));
        }
        let tau_b = if slope <= 1.0 { offset } else { f64::INFINITY };
        Ok(DelayFunction {
            kind: DelayKind::Affine { slope, offset },
            tau_star: offset,
            tau_b,
        })
    }

    /// User-supplied delay with its derivative and declared `τ_*`, `τ_b`.
    pub fn custom(tau: ScalarFn, tau_prime: ScalarFn, tau_star: f64, tau_b: f64) -> Result<Self> {
        if !(tau_star > 0.0 && tau_b > 0.0) {
            return Err(Error::config("delay", "tau_star and tau_b must be positive"));
        }
        Ok(DelayFunction {
            kind: DelayKind::Custom { tau, tau_prime },
            tau_star,
            tau_b,
        })
    }

    pub fn tau(&self, t: f64) -> f64 {
        match &self.kind {
            DelayKind::Constant { value } => *value,
            DelayKind::Affine { slope, offset } => slope * t + offset,
            DelayKind::Custom { tau, .. } => tau(t),
        }
    }

    pub fn tau_prime(&self, t: f64) -> f64 {
        match &self.kind {
            DelayKind::Constant { .. } => 0.0,
            DelayKind::Affine { slope, .. } => *slope,
            DelayKind::Custom { tau_prime, .. } => tau_prime(t),
        }
    }

    /// The delayed argument `t − τ(t)`.
    pub fn lagged(&self, t: f64) -> f64 {
        t - self.tau(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayReport {
    pub tau_star_est: f64,
    pub tau_b_est: f64,
    /// `max(|τ_* claimed − estimate|, |τ_b claimed − estimate|)`.
    pub max_claim_error: f64,
    pub tau_prime_max: f64,
    /// First grid time with `τ′(t) ≥ 1`, which rules out the thm4-style
    /// weight constant.
    pub derivative_at_least_one: Option<f64>,
    pub grid_spacing: f64,
}

impl DelayReport {
    pub fn flagged(&self) -> bool {
        self.derivative_at_least_one.is_some()
    }
}

pub fn validate_delay(d: &DelayFunction, grid: &TimeGrid) -> Result<DelayReport> {
    let mut tau_star_est = f64::INFINITY;
    let mut tau_b_est = f64::NEG_INFINITY;
    let mut tau_prime_max = f64::NEG_INFINITY;
    let mut first_steep = None;
    for t in grid.iter() {
        let tau = d.tau(t);
        if !(tau > 0.0) {
            return Err(Error::validation(format!("delay τ({t}) = {tau} is not positive"), Some(t)));
        }
        tau_star_est = tau_star_est.min(tau);
        tau_b_est = tau_b_est.max(tau - t);
        let dp = d.tau_prime(t);
        tau_prime_max = tau_prime_max.max(dp);
        if dp >= 1.0 && first_steep.is_none() {
            first_steep = Some(t);
        }
    }
    if tau_b_est <= 0.0 {
        return Err(Error::validation("τ_b = sup(τ(t) − t) must be positive", None));
    }
    if tau_b_est > d.tau_b * (1.0 + 1e-12) {
        return Err(Error::validation(
            format!("declared τ_b = {} is below the grid estimate {tau_b_est}", d.tau_b),
            None,
        ));
    }
    let max_claim_error = if d.tau_b.is_finite() {
        (d.tau_star - tau_star_est).abs().max((d.tau_b - tau_b_est).abs())
    } else {
        (d.tau_star - tau_star_est).abs()
    };
    Ok(DelayReport {
        tau_star_est,
        tau_b_est,
        max_claim_error,
        tau_prime_max,
        derivative_at_least_one: first_steep,
        grid_spacing: grid.spacing(),
    })
}

// ---------------------------------------------------------------- weights

/// Shape of the weight function `ν(t)`.
#[derive(Clone)]
pub enum NuKind {
    /// `exp(α t)`.
    Exponential { alpha: f64 },
    /// `(t + shift)^α` with `shift = τ_b + 1`.
    Power { alpha: f64, shift: f64 },
    /// `ln(t + shift)` with `shift = τ_b + 1`.
    Log { shift: f64 },
    /// `ln ln(t + shift)` with `shift = τ_b + 3`.
    LogLog { shift: f64 },
    Custom { nu: ScalarFn, nu_prime: ScalarFn },
}

impl fmt::Debug for NuKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NuKind::Exponential { alpha } => write!(f, "exp({alpha}·t)"),
            NuKind::Power { alpha, shift } => write!(f, "(t + {shift})^{alpha}"),
            NuKind::Log { shift } => write!(f, "ln(t + {shift})"),
            NuKind::LogLog { shift } => write!(f, "ln ln(t + {shift})"),
            NuKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl NuKind {
    pub fn exponential(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config("nu.alpha", "exponential weight needs alpha > 0 so that ν → ∞"));
        }
        Ok(NuKind::Exponential { alpha })
    }

    pub fn power(alpha: f64, delay: &DelayFunction) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config("nu.alpha", "power weight needs alpha > 0 so that ν → ∞"));
        }
        Self::finite_tau_b(delay)?;
        Ok(NuKind::Power {
            alpha,
            shift: delay.tau_b + 1.0,
        })
    }

    pub fn log(delay: &DelayFunction) -> Result<Self> {
        Self::finite_tau_b(delay)?;
        Ok(NuKind::Log { shift: delay.tau_b + 1.0 })
    }

    pub fn log_log(delay: &DelayFunction) -> Result<Self> {
        Self::finite_tau_b(delay)?;
        Ok(NuKind::LogLog { shift: delay.tau_b + 3.0 })
    }

    fn finite_tau_b(delay: &DelayFunction) -> Result<()> {
        if delay.tau_b.is_finite() {
            Ok(())
        } else {
            Err(Error::config("nu", "shifted weights need a finite τ_b"))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            NuKind::Exponential { alpha } => (alpha * t).exp(),
            NuKind::Power { alpha, shift } => (t + shift).powf(*alpha),
            NuKind::Log { shift } => (t + shift).ln(),
            NuKind::LogLog { shift } => (t + shift).ln().ln(),
            NuKind::Custom { nu, .. } => nu(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            NuKind::Exponential { alpha } => alpha * (alpha * t).exp(),
            NuKind::Power { alpha, shift } => alpha * (t + shift).powf(alpha - 1.0),
            NuKind::Log { shift } => 1.0 / (t + shift),
            NuKind::LogLog { shift } => 1.0 / ((t + shift) * (t + shift).ln()),
            NuKind::Custom { nu_prime, .. } => nu_prime(t),
        }
    }
}

/// Closed-form value of a weight constant over `t ≥ 0`. `attained` is false
/// when the extremum is only reached as `t → ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedForm {
    pub value: f64,
    pub attained: bool,
}

impl ClosedForm {
    fn at(value: f64) -> Self {
        ClosedForm { value, attained: true }
    }

    fn asymptotic(value: f64) -> Self {
        ClosedForm { value, attained: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuConstants {
    /// Grid estimate of `sup ν′/ν`.
    pub alpha_nu: f64,
    /// Grid estimate of `inf (1 − τ′) ν(t − τ)/ν(t)`.
    pub beta_nu_thm4: f64,
    /// Grid estimate of `sup ν(t)/ν(t − τ)`.
    pub beta_nu_thm5: f64,
    pub grid_spacing: f64,
    pub closed_alpha: Option<ClosedForm>,
    pub closed_beta_thm4: Option<ClosedForm>,
    pub closed_beta_thm5: Option<ClosedForm>,
}

const CLOSED_FORM_REL_TOL: f64 = 1e-6;

fn closed_forms(kind: &NuKind, d: &DelayFunction) -> (Option<ClosedForm>, Option<ClosedForm>, Option<ClosedForm>) {
    match (kind, &d.kind) {
        (NuKind::Exponential { alpha }, dk) => {
            let a = Some(ClosedForm::at(*alpha));
            match dk {
                DelayKind::Constant { value } => (
                    a,
                    Some(ClosedForm::at((-alpha * value).exp())),
                    Some(ClosedForm::at((alpha * value).exp())),
                ),
                DelayKind::Affine { slope, offset } if *slope == 0.0 => (
                    a,
                    Some(ClosedForm::at((-alpha * offset).exp())),
                    Some(ClosedForm::at((alpha * offset).exp())),
                ),
                DelayKind::Affine { .. } => (
                    a,
                    Some(ClosedForm::asymptotic(0.0)),
                    Some(ClosedForm::asymptotic(f64::INFINITY)),
                ),
                DelayKind::Custom { .. } => (a, None, None),
            }
        }
        (NuKind::Power { alpha, shift }, dk) => {
            let a = Some(ClosedForm::at(alpha / shift));
            // ratio ρ(t) = (t − τ(t) + s)/(t + s); β₄ = (1 − τ′)·inf ρ^α, β₅ = sup ρ^{−α}
            let (slope, offset) = match dk {
                DelayKind::Constant { value } => (0.0, *value),
                DelayKind::Affine { slope, offset } => (*slope, *offset),
                DelayKind::Custom { .. } => return (a, None, None),
            };
            if slope >= 1.0 {
                return (a, None, None);
            }
            let s = *shift;
            let at_zero = (s - offset) / s;
            let increasing = offset - slope * s >= 0.0;
            let (inf_rho, attained) = if increasing { (at_zero, true) } else { (1.0 - slope, false) };
            let mk = |v: f64| if attained { ClosedForm::at(v) } else { ClosedForm::asymptotic(v) };
            (
                a,
                Some(mk((1.0 - slope) * inf_rho.powf(*alpha))),
                Some(mk(inf_rho.powf(-alpha))),
            )
        }
        _ => (None, None, None),
    }
}

/// Grid estimates of `α_ν`, `β_ν` (both variants) for weight `kind` and delay
/// `d`, with closed forms for exponential and power weights.
pub fn nu_constants(kind: &NuKind, d: &DelayFunction, grid: &TimeGrid) -> Result<NuConstants> {
    let mut alpha = f64::NEG_INFINITY;
    let mut beta4 = f64::INFINITY;
    let mut beta5 = f64::NEG_INFINITY;
    for t in grid.iter() {
        let lag = d.lagged(t);
        if lag < -d.tau_b * (1.0 + 1e-12) {
            return Err(Error::validation(format!("t − τ(t) = {lag} falls below −τ_b"), Some(t)));
        }
        let nu = kind.value(t);
        let nu_lag = kind.value(lag);
        if !(nu > 0.0) {
            return Err(Error::validation(format!("ν({t}) = {nu} is not positive"), Some(t)));
        }
        // ln(t + τ_b + 1) vanishes at −τ_b; that only makes β_ν(thm5) infinite
        if !(nu_lag >= 0.0) {
            return Err(Error::validation(format!("ν({lag}) = {nu_lag} is negative"), Some(lag)));
        }
        alpha = alpha.max(kind.derivative(t) / nu);
        beta4 = beta4.min((1.0 - d.tau_prime(t)) * nu_lag / nu);
        beta5 = beta5.max(nu / nu_lag);
    }
    let (ca, c4, c5) = closed_forms(kind, d);
    for (name, est, cf) in [("alpha_nu", alpha, ca), ("beta_nu_thm4", beta4, c4), ("beta_nu_thm5", beta5, c5)] {
        if let Some(cf) = cf {
            if cf.attained && (est - cf.value).abs() > CLOSED_FORM_REL_TOL * cf.value.abs().max(1e-300) {
                return Err(Error::validation(
                    format!("{name}: grid estimate {est} disagrees with closed form {}", cf.value),
                    None,
                ));
            }
        }
    }
    Ok(NuConstants {
        alpha_nu: alpha,
        beta_nu_thm4: beta4,
        beta_nu_thm5: beta5,
        grid_spacing: grid.spacing(),
        closed_alpha: ca,
        closed_beta_thm4: c4,
        closed_beta_thm5: c5,
    })
}

/// Weight function with the constants certificates use.
#[derive(Debug, Clone)]
pub struct NuFunction {
    pub kind: NuKind,
    pub alpha_nu: f64,
    pub beta_nu_thm4: f64,
    pub beta_nu_thm5: f64,
}

impl NuFunction {
    /// Constants taken from `nu_constants`, preferring attained closed forms.
    pub fn derived(kind: NuKind, d: &DelayFunction, grid: &TimeGrid) -> Result<Self> {
        let c = nu_constants(&kind, d, grid)?;
        let pick = |cf: Option<ClosedForm>, est: f64| match cf {
            Some(cf) if cf.attained => cf.value,
            _ => est,
        };
        Ok(NuFunction {
            alpha_nu: pick(c.closed_alpha, c.alpha_nu),
            beta_nu_thm4: pick(c.closed_beta_thm4, c.beta_nu_thm4),
            beta_nu_thm5: pick(c.closed_beta_thm5, c.beta_nu_thm5),
            kind,
        })
    }

    /// Declared constants, each checked in its conservative direction against
    /// the grid estimate. `None` entries are derived.
    pub fn declared(
        kind: NuKind,
        alpha_nu: Option<f64>,
        beta_nu_thm4: Option<f64>,
        beta_nu_thm5: Option<f64>,
        d: &DelayFunction,
        grid: &TimeGrid,
    ) -> Result<Self> {
        let derived = NuFunction::derived(kind, d, grid)?;
        let slack = |v: f64| 1e-9 * v.abs().max(1.0);
        let alpha = match alpha_nu {
            Some(a) if a + slack(a) < derived.alpha_nu => {
                return Err(Error::config(
                    "nu.alpha_nu",
                    format!("declared α_ν = {a} is below sup ν′/ν ≈ {}", derived.alpha_nu),
                ))
            }
            Some(a) => a,
            None => derived.alpha_nu,
        };
        let b4 = match beta_nu_thm4 {
            Some(b) if b - slack(b) > derived.beta_nu_thm4 => {
                return Err(Error::config(
                    "nu.beta_nu_thm4",
                    format!("declared β_ν = {b} exceeds inf (1−τ′)ν(t−τ)/ν ≈ {}", derived.beta_nu_thm4),
                ))
            }
            Some(b) => b,
            None => derived.beta_nu_thm4,
        };
        let b5 = match beta_nu_thm5 {
            Some(b) if b + slack(b) < derived.beta_nu_thm5 => {
                return Err(Error::config(
                    "nu.beta_nu_thm5",
                    format!("declared β_ν = {b} is below sup ν/ν(t−τ) ≈ {}", derived.beta_nu_thm5),
                ))
            }
            Some(b) => b,
            None => derived.beta_nu_thm5,
        };
        Ok(NuFunction {
            kind: derived.kind,
            alpha_nu: alpha,
            beta_nu_thm4: b4,
            beta_nu_thm5: b5,
        })
    }

    /// Weight used only to evaluate functionals; constants are neutral and no
    /// growth condition is enforced.
    pub fn for_evaluation(kind: NuKind) -> Self {
        NuFunction {
            kind,
            alpha_nu: 0.0,
            beta_nu_thm4: 1.0,
            beta_nu_thm5: 1.0,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.kind.value(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.kind.derivative(t)
    }
}

// ---------------------------------------------------------------- network model

#[derive(Clone)]
pub enum ActivationKind {
    Tanh,
    /// `g`, `g′` and optionally `∫₀ˣ g`; the integral falls back to Simpson's rule.
    Custom {
        g: ScalarFn,
        dg: ScalarFn,
        integral: Option<ScalarFn>,
    },
}

impl fmt::Debug for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Tanh => write!(f, "Tanh"),
            ActivationKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Componentwise output nonlinearity `g` with derivative bounds `G_i`.
#[derive(Debug, Clone)]
pub struct Activation {
    pub kind: ActivationKind,
    pub gains: Vec<f64>,
}

/// `ln cosh x` without overflow.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl Activation {
    pub fn tanh(n: usize) -> Self {
        Activation {
            kind: ActivationKind::Tanh,
            gains: vec![1.0; n],
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Custom { g, .. } => g(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Custom { dg, .. } => dg(x),
        }
    }

    /// `∫₀ˣ g(ρ) dρ`.
    pub fn integral(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::Tanh => ln_cosh(x),
            ActivationKind::Custom { integral: Some(f), .. } => f(x),
            ActivationKind::Custom { g, .. } => {
                const PANELS: usize = 256;
                let h = x / PANELS as f64;
                let mut acc = g(0.0) + g(x);
                for k in 1..PANELS {
                    acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(h * k as f64);
                }
                acc * h / 3.0
            }
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.value(v);
        }
    }

    pub fn gain_matrix(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_vec(self.gains.clone()))
    }
}

/// Noise intensity `σ(u, v, ξ)`, evaluated at `u = g(x(t))`, `v = g(x(t − τ))`.
#[derive(Clone)]
pub enum Noise {
    /// `σ = v` as a single column (scalar Brownian motion).
    DelayedOutput,
    /// `σ = C₁(ξ)u + C₂(ξ)v` as a single column.
    LinearMix { c1: Vec<Mat>, c2: Vec<Mat> },
    /// User function writing an `n × noise_dim` matrix. `attested` records
    /// that the caller vouches for local Lipschitz continuity and linear growth.
    Custom {
        sigma: NoiseFn,
        noise_dim: usize,
        attested: bool,
    },
}

impl fmt::Debug for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Noise::DelayedOutput => write!(f, "DelayedOutput"),
            Noise::LinearMix { .. } => write!(f, "LinearMix"),
            Noise::Custom { noise_dim, .. } => write!(f, "Custom(m = {noise_dim})"),
        }
    }
}

impl Noise {
    pub fn noise_dim(&self) -> usize {
        match self {
            Noise::DelayedOutput | Noise::LinearMix { .. } => 1,
            Noise::Custom { noise_dim, .. } => *noise_dim,
        }
    }

    /// Write `σ(u, v, ξ)` row-major into `out` (`n × m`).
    pub fn eval(&self, u: &[f64], v: &[f64], mode: ModeId, out: &mut [f64]) {
        match self {
            Noise::DelayedOutput => out.copy_from_slice(v),
            Noise::LinearMix { c1, c2 } => {
                let (c1, c2) = (&c1[mode.0], &c2[mode.0]);
                for i in 0..u.len() {
                    let mut s = 0.0;
                    for j in 0..u.len() {
                        s += c1[(i, j)] * u[j] + c2[(i, j)] * v[j];
                    }
                    out[i] = s;
                }
            }
            Noise::Custom { sigma, .. } => sigma(u, v, mode, out),
        }
    }
}

/// Noise bound data: `tr σᵀσ ≤ uᵀE u + vᵀF v` and
/// `tr σᵀPσ ≤ a (uᵀP u + vᵀP v)`.
#[derive(Debug, Clone)]
pub struct NoiseBound {
    pub a: f64,
    pub e: Mat,
    pub f: Mat,
}

#[derive(Debug, Clone)]
pub struct ModeParams {
    /// Diagonal of `D(ξ)`.
    pub d: Vector,
    pub a: Mat,
    pub b: Mat,
    pub bound: NoiseBound,
}

impl ModeParams {
    pub fn d_matrix(&self) -> Mat {
        Mat::from_diagonal(&self.d)
    }
}

/// `dx = [−D(r)x + A(r)g(x) + B(r)g(x(t − τ))]dt + σ(g(x), g(x(t − τ)), r)dW`.
#[derive(Debug, Clone)]
pub struct SwitchedNetworkModel {
    pub n: usize,
    pub modes: Vec<ModeParams>,
    pub activation: Activation,
    pub noise: Noise,
}

fn check_psd(m: &Mat, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!("{what}: expected {n}x{n}")));
    }
    if crate::linalg::relative_asymmetry(m) > 1e-10 {
        return Err(Error::config(what, "must be symmetric"));
    }
    if n > 0 && lambda_min(&symmetrize(m))? < -1e-12 {
        return Err(Error::config(what, "must be positive semidefinite"));
    }
    Ok(())
}

impl SwitchedNetworkModel {
    pub fn new(modes: Vec<ModeParams>, activation: Activation, noise: Noise) -> Result<Self> {
        let first = modes.first().ok_or_else(|| Error::config("model.modes", "at least one mode required"))?;
        let n = first.d.len();
        if n == 0 {
            return Err(Error::config("model.dimension", "state dimension must be at least 1"));
        }
        if activation.gains.len() != n {
            return Err(Error::config("model.activation.gains", format!("expected {n} gains")));
        }
        if activation.gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::config("model.activation.gains", "gains must be positive"));
        }
        for (k, m) in modes.iter().enumerate() {
            let key = |f: &str| format!("model.modes[{k}].{f}");
            if m.d.len() != n {
                return Err(Error::config(key("d"), format!("expected {n} entries")));
            }
            if m.d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::config(key("d"), "D must be diagonal with positive entries"));
            }
            if m.a.shape() != (n, n) {
                return Err(Error::config(key("a"), format!("expected {n}x{n}")));
            }
            if m.b.shape() != (n, n) {
                return Err(Error::config(key("b"), format!("expected {n}x{n}")));
            }
            if !(m.bound.a.is_finite() && m.bound.a > 0.0) {
                return Err(Error::config(key("noise_bound.a"), "a(ξ) must be positive"));
            }
            check_psd(&m.bound.e, n, &key("noise_bound.e"))?;
            check_psd(&m.bound.f, n, &key("noise_bound.f"))?;
        }
        match &noise {
            Noise::LinearMix { c1, c2 } => {
                if c1.len() != modes.len() || c2.len() != modes.len() {
                    return Err(Error::config("model.noise", "need C₁ and C₂ for every mode"));
                }
                if c1.iter().chain(c2).any(|c| c.shape() != (n, n)) {
                    return Err(Error::config("model.noise", format!("C matrices must be {n}x{n}")));
                }
            }
            Noise::Custom { noise_dim, .. } if *noise_dim == 0 => {
                return Err(Error::config("model.noise.noise_dim", "must be at least 1"));
            }
            _ => {}
        }
        Ok(SwitchedNetworkModel {
            n,
            modes,
            activation,
            noise,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, mode: ModeId) -> Result<&ModeParams> {
        self.modes
            .get(mode.0)
            .ok_or_else(|| Error::Dimension(format!("model has no mode {}", mode.0)))
    }

    /// Copy of the model with mode `k` edited by `f`.
    pub fn with_mode_params(&self, k: usize, f: impl FnOnce(&mut ModeParams)) -> Self {
        let mut m = self.clone();
        f(&mut m.modes[k]);
        m
    }
}

/// Drift and diffusion of a delayed stochastic system with switching.
pub trait DelaySystem: Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn mode_count(&self) -> usize;
    /// `f(x, x(t − τ), ξ, t)` into `out` (length `n`).
    fn drift(&self, t: f64, x: &[f64], delayed: &[f64], mode: ModeId, out: &mut [f64]);
    /// `g(x, x(t − τ), ξ, t)` row-major into `out` (`n × m`).
    fn diffusion(&self, t: f64, x: &[f64], delayed: &[f64], mode: ModeId, out: &mut [f64]);
}

const STACK_DIM: usize = 16;

fn with_outputs<R>(act: &Activation, x: &[f64], xd: &[f64], f: impl FnOnce(&[f64], &[f64]) -> R) -> R {
    let n = x.len();
    if n <= STACK_DIM {
        let mut gx = [0.0; STACK_DIM];
        let mut gd = [0.0; STACK_DIM];
        act.apply(x, &mut gx[..n]);
        act.apply(xd, &mut gd[..n]);
        f(&gx[..n], &gd[..n])
    } else {
        let mut gx = vec![0.0; n];
        let mut gd = vec![0.0; n];
        act.apply(x, &mut gx);
        act.apply(xd, &mut gd);
        f(&gx, &gd)
    }
}

impl DelaySystem for SwitchedNetworkModel {
    fn dim(&self) -> usize {
        self.n
    }

    fn noise_dim(&self) -> usize {
        self.noise.noise_dim()
    }

    fn mode_count(&self) -> usize {
        self.modes.len()
    }

    fn drift(&self, _t: f64, x: &[f64], delayed: &[f64], mode: ModeId, out: &mut [f64]) {
        let p = &self.modes[mode.0];
        with_outputs(&self.activation, x, delayed, |gx, gd| {
            for i in 0..self.n {
                let mut s = -p.d[i] * x[i];
                for j in 0..self.n {
                    s += p.a[(i, j)] * gx[j] + p.b[(i, j)] * gd[j];
                }
                out[i] = s;
            }
        });
    }

    fn diffusion(&self, _t: f64, x: &[f64], delayed: &[f64], mode: ModeId, out: &mut [f64]) {
        with_outputs(&self.activation, x, delayed, |gx, gd| self.noise.eval(gx, gd, mode, out));
    }
}

/// Per-mode linear delayed system `dx = (A x + B x(t − τ))dt + C dW` with
/// additive noise `C` (`n × m`).
#[derive(Debug, Clone)]
pub struct LinearMode {
    pub drift: Mat,
    pub delayed: Mat,
    pub diffusion: Mat,
}

#[derive(Debug, Clone)]
pub struct LinearDelaySystem {
    pub n: usize,
    pub m: usize,
    pub modes: Vec<LinearMode>,
}

impl LinearDelaySystem {
    pub fn new(modes: Vec<LinearMode>) -> Result<Self> {
        let first = modes.first().ok_or_else(|| Error::config("model.modes", "at least one mode required"))?;
        let n = first.drift.nrows();
        let m = first.diffusion.ncols();
        if n == 0 {
            return Err(Error::config("model.dimension", "state dimension must be at least 1"));
        }
        for (k, md) in modes.iter().enumerate() {
            if md.drift.shape() != (n, n) || md.delayed.shape() != (n, n) || md.diffusion.shape() != (n, m) {
                return Err(Error::config(format!("model.modes[{k}]"), "inconsistent matrix shapes"));
            }
        }
        Ok(LinearDelaySystem { n, m: m.max(1), modes })
    }

    /// Scalar `dx = −a x dt + s dW` in a single mode.
    pub fn scalar(a: f64, s: f64) -> Self {
        LinearDelaySystem {
            n: 1,
            m: 1,
            modes: vec![LinearMode {
                drift: Mat::from_element(1, 1, -a),
                delayed: Mat::zeros(1, 1),
                diffusion: Mat::from_element(1, 1, s),
            }],
        }
    }
}

impl DelaySystem for LinearDelaySystem {
    fn dim(&self) -> usize {
        self.n
    }

    fn noise_dim(&self) -> usize {
        self.m
    }

    fn mode_count(&self) -> usize {
        self.modes.len()
    }

    fn drift(&self, _t: f64, x: &[f64], delayed: &[f64], mode: ModeId, out: &mut [f64]) {
        let p = &self.modes[mode.0];
        for i in 0..self.n {
            let mut s = 0.0;
            for j in 0..self.n {
                s += p.drift[(i, j)] * x[j] + p.delayed[(i, j)] * delayed[j];
            }
            out[i] = s;
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], _delayed: &[f64], mode: ModeId, out: &mut [f64]) {
        let c = &self.modes[mode.0].diffusion;
        if c.ncols() == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        for i in 0..self.n {
            for j in 0..self.m {
                out[i * self.m + j] = c[(i, j)];
            }
        }
    }
}

// ---------------------------------------------------------------- hypotheses

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub mode: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    /// Smallest `rhs − lhs` over all samples.
    pub min_slack: f64,
    pub violation: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputCheck {
    pub zero_at_origin: bool,
    /// Largest `g′ − G` (positive means the bound fails) and smallest `g′`.
    pub max_gain_excess: f64,
    pub min_derivative: f64,
    pub violation_at: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub samples: usize,
    pub radius: f64,
    /// How local Lipschitz continuity and linear growth are established.
    pub regularity: String,
    pub output: OutputCheck,
    pub trace_bound: BoundCheck,
    pub weighted_bound: Option<BoundCheck>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.output.zero_at_origin
            && self.output.violation_at.is_none()
            && self.trace_bound.violation.is_none()
            && self.weighted_bound.as_ref().is_none_or(|w| w.violation.is_none())
    }
}

fn quad(m: &Mat, x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += x[i] * m[(i, j)] * x[j];
        }
    }
    s
}

fn sample_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let mut z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    z.iter_mut().for_each(|v| *v *= r / norm);
    z
}

fn record(check: &mut BoundCheck, mode: usize, u: &[f64], v: &[f64], lhs: f64, rhs: f64) {
    let slack = rhs - lhs;
    check.min_slack = check.min_slack.min(slack);
    if slack < -1e-12 * (1.0 + rhs.abs()) && check.violation.is_none() {
        check.violation = Some(Witness {
            mode,
            u: u.to_vec(),
            v: v.to_vec(),
            lhs,
            rhs,
        });
    }
}

/// Sample `(u, v)` uniformly in the `radius` ball of `R^{2n}` for every mode
/// and check the output-function and noise bounds. `p` optionally supplies the
/// per-mode matrices for the weighted trace bound.
pub fn validate_hypotheses(
    m: &SwitchedNetworkModel,
    sample_count: usize,
    radius: f64,
    seed: u64,
    p: Option<&[Mat]>,
) -> Result<HypothesisReport> {
    if sample_count == 0 {
        return Err(Error::Domain("sample_count must be at least 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Domain("radius must be positive".into()));
    }
    if let Some(p) = p {
        if p.len() != m.mode_count() {
            return Err(Error::Dimension("one P matrix per mode required".into()));
        }
    }
    let n = m.n;
    let mut rng = substream(seed, 0, Stream::Sampling);

    let zero_at_origin = m.activation.value(0.0).abs() <= 1e-15;
    let mut max_gain_excess = f64::NEG_INFINITY;
    let mut min_derivative = f64::INFINITY;
    let mut violation_at = None;
    const OUTPUT_GRID: usize = 1001;
    for i in 0..n {
        for k in 0..OUTPUT_GRID {
            let x = -radius + 2.0 * radius * k as f64 / (OUTPUT_GRID - 1) as f64;
            let d = m.activation.derivative(x);
            max_gain_excess = max_gain_excess.max(d - m.activation.gains[i]);
            min_derivative = min_derivative.min(d);
            if (d < -1e-12 || d > m.activation.gains[i] + 1e-12) && violation_at.is_none() {
                violation_at = Some((i, x));
            }
        }
    }

    let noise_dim = m.noise.noise_dim();
    let mut sigma = vec![0.0; n * noise_dim];
    let mut trace = BoundCheck {
        min_slack: f64::INFINITY,
        violation: None,
    };
    let mut weighted = p.map(|_| BoundCheck {
        min_slack: f64::INFINITY,
        violation: None,
    });
    for (k, mode) in m.modes.iter().enumerate() {
        for _ in 0..sample_count {
            let z = sample_ball(2 * n, radius, &mut rng);
            let (u, v) = z.split_at(n);
            m.noise.eval(u, v, ModeId(k), &mut sigma);
            let tr: f64 = sigma.iter().map(|s| s * s).sum();
            record(&mut trace, k, u, v, tr, quad(&mode.bound.e, u) + quad(&mode.bound.f, v));
            if let (Some(w), Some(p)) = (weighted.as_mut(), p) {
                let pk = &p[k];
                let mut lhs = 0.0;
                for c in 0..noise_dim {
                    for i in 0..n {
                        for j in 0..n {
                            lhs += sigma[i * noise_dim + c] * pk[(i, j)] * sigma[j * noise_dim + c];
                        }
                    }
                }
                record(w, k, u, v, lhs, mode.bound.a * (quad(pk, u) + quad(pk, v)));
            }
        }
    }

    let regularity = match &m.noise {
        Noise::Custom { attested: true, .. } => "attested by caller",
        Noise::Custom { attested: false, .. } => "unattested custom noise",
        _ => "by construction",
    }
    .to_string();

    Ok(HypothesisReport {
        samples: sample_count,
        radius,
        regularity,
        output: OutputCheck {
            zero_at_origin,
            max_gain_excess,
            min_derivative,
            violation_at,
        },
        trace_bound: trace,
        weighted_bound: weighted,
    })
}

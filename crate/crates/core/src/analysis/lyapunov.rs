//! Lyapunov functionals `V₁`, `V₂` and the pointwise generator of `V₁`.

use crate::certificates::CertificateThm4;
use crate::dynamics::{Activation, DelayFunction, DelaySystem, NuFunction};
use crate::error::{Error, Result};
use crate::linalg::{check_spd, lambda_min, relative_asymmetry, symmetrize, Mat, Vector};
use crate::sim::Trajectory;
use crate::switching::ModeId;

/// `V₁ = ν(t)[xᵀP(r)x + 2Σ Zᵢ∫₀^{xᵢ} gᵢ] + ∫_{t−τ(t)}^{t} ν(s) g(x(s))ᵀQ g(x(s)) ds`.
#[derive(Debug, Clone)]
pub struct LyapunovV1Spec {
    pub p: Vec<Mat>,
    /// Diagonal of `Z`; zero entries are allowed for evaluation.
    pub z: Vector,
    pub q: Mat,
    pub nu: NuFunction,
    pub activation: Activation,
}

/// `V₂ = ν(t) xᵀP(r)x`.
#[derive(Debug, Clone)]
pub struct LyapunovV2Spec {
    pub p: Vec<Mat>,
    pub nu: NuFunction,
}

fn quad(m: &Mat, x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * x[j];
        }
        s += x[i] * row;
    }
    s
}

impl LyapunovV1Spec {
    pub fn from_certificate(cert: &CertificateThm4, activation: Activation) -> Self {
        LyapunovV1Spec {
            p: cert.p.clone(),
            z: cert.z.clone(),
            q: cert.q.clone(),
            nu: cert.nu.clone(),
            activation,
        }
    }

    pub fn validate(&self, n: usize, modes: usize) -> Result<()> {
        if self.p.len() < modes {
            return Err(Error::Dimension(format!("V₁ needs P for {modes} modes")));
        }
        for (k, p) in self.p.iter().enumerate() {
            check_spd(p, n, &format!("P({k})"))?;
        }
        if self.z.len() != n || self.z.iter().any(|z| !(*z >= 0.0)) {
            return Err(Error::CertificateStructure("Z must be a non-negative diagonal".into()));
        }
        if self.q.shape() != (n, n) || relative_asymmetry(&self.q) > 1e-10 {
            return Err(Error::Dimension(format!("Q must be a symmetric {n}x{n} matrix")));
        }
        if lambda_min(&symmetrize(&self.q))? < -1e-12 {
            return Err(Error::CertificateStructure("Q must be positive semidefinite".into()));
        }
        if self.activation.gains.len() != n {
            return Err(Error::Dimension(format!("activation has {} gains, state has {n}", self.activation.gains.len())));
        }
        Ok(())
    }

    /// `xᵀP(ξ)x + 2Σ Zᵢ∫₀^{xᵢ} gᵢ`.
    pub fn pointwise(&self, x: &[f64], mode: ModeId) -> f64 {
        let mut s = quad(&self.p[mode.0], x);
        for (i, &xi) in x.iter().enumerate() {
            if self.z[i] != 0.0 {
                s += 2.0 * self.z[i] * self.activation.integral(xi);
            }
        }
        s
    }

    /// Integrand `ν(s) g(x)ᵀQ g(x)` of the delay term.
    pub fn integrand(&self, s: f64, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.activation.apply(x, scratch);
        self.nu.value(s) * quad(&self.q, scratch)
    }

    /// Smallest eigenvalue of `P(ξ)`, for the lower bound `V₁ ≥ ν λ_min |x|²`.
    pub fn lambda_min_p(&self, mode: ModeId) -> Result<f64> {
        lambda_min(&self.p[mode.0])
    }
}

impl LyapunovV2Spec {
    pub fn eval(&self, t: f64, x: &[f64], mode: ModeId) -> f64 {
        self.nu.value(t) * quad(&self.p[mode.0], x)
    }
}

/// Trapezoid nodes on the initial segment: `−τ_b + i·h` up to 0.
fn history_nodes(tau_b: f64, h: f64) -> Vec<f64> {
    let k = tau_b / h;
    let count = if (k - k.round()).abs() <= 1e-9 * k.max(1.0) { k.round() } else { k.ceil() }.max(1.0) as usize;
    let mut nodes: Vec<f64> = (0..count).map(|i| -tau_b + i as f64 * h).collect();
    nodes.push(0.0);
    nodes
}

/// `V₁` at every stored point of `traj`, using cumulative trapezoid sums for
/// the delay integral.
pub fn v1_series(spec: &LyapunovV1Spec, delay: &DelayFunction, traj: &Trajectory) -> Result<Vec<f64>> {
    let evaluator = V1Integral::new(spec, delay, traj)?;
    let mut out = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        out.push(evaluator.value(k));
    }
    Ok(out)
}

/// `V₁` at stored point `k` of `traj`.
pub fn eval_v1(spec: &LyapunovV1Spec, delay: &DelayFunction, traj: &Trajectory, k: usize) -> Result<f64> {
    if k >= traj.len() {
        return Err(Error::Domain(format!("index {k} beyond trajectory of length {}", traj.len())));
    }
    let t = traj.times[k];
    let lag = delay.lagged(t);
    if lag < -delay.tau_b * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("history needed at {lag}, before −τ_b")));
    }
    let n = traj.n;
    let mut scratch = vec![0.0; n];
    let mut x = vec![0.0; n];
    // nodes: lag, then history nodes and grid points strictly above lag up to t
    let mut nodes = vec![lag];
    if lag < 0.0 {
        nodes.extend(history_nodes(delay.tau_b, traj.settings.step).into_iter().filter(|&s| s > lag));
    }
    nodes.extend(traj.times[..=k].iter().copied().filter(|&s| s > lag.max(0.0)));
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for s in nodes {
        traj.state_at(s, &mut x);
        let f = spec.integrand(s, &x, &mut scratch);
        if let Some((s0, f0)) = prev {
            integral += 0.5 * (f0 + f) * (s - s0);
        }
        prev = Some((s, f));
    }
    Ok(spec.nu.value(t) * spec.pointwise(traj.state(k), traj.modes[k]) + integral)
}

struct V1Integral<'a> {
    spec: &'a LyapunovV1Spec,
    delay: &'a DelayFunction,
    traj: &'a Trajectory,
    hist_nodes: Vec<f64>,
    hist_values: Vec<f64>,
    /// Cumulative integral from `−τ_b` to each history node.
    hist_cum: Vec<f64>,
    grid_values: Vec<f64>,
    /// Cumulative integral from 0 to each trajectory time.
    grid_cum: Vec<f64>,
}

impl<'a> V1Integral<'a> {
    fn new(spec: &'a LyapunovV1Spec, delay: &'a DelayFunction, traj: &'a Trajectory) -> Result<Self> {
        let n = traj.n;
        let mut scratch = vec![0.0; n];
        let mut x = vec![0.0; n];
        let hist_nodes = history_nodes(delay.tau_b, traj.settings.step);
        let mut hist_values = Vec::with_capacity(hist_nodes.len());
        for &s in &hist_nodes {
            traj.initial.eval(s, &mut x);
            hist_values.push(spec.integrand(s, &x, &mut scratch));
        }
        let hist_cum = cumulative(&hist_nodes, &hist_values);
        let grid_values: Vec<f64> = (0..traj.len())
            .map(|k| spec.integrand(traj.times[k], traj.state(k), &mut scratch))
            .collect();
        let grid_cum = cumulative(&traj.times, &grid_values);
        for &t in &traj.times {
            let lag = delay.lagged(t);
            if lag < -delay.tau_b * (1.0 + 1e-12) {
                return Err(Error::Domain(format!("history needed at {lag}, before −τ_b")));
            }
        }
        Ok(V1Integral {
            spec,
            delay,
            traj,
            hist_nodes,
            hist_values,
            hist_cum,
            grid_values,
            grid_cum,
        })
    }

    /// `∫_{s}^{end of nodes}` via the cumulative table, with a partial
    /// trapezoid from `s` to the next node.
    fn tail(nodes: &[f64], values: &[f64], cum: &[f64], s: f64, f_s: f64) -> f64 {
        let j = nodes.partition_point(|&v| v <= s);
        let last = cum.len() - 1;
        if j > last {
            return 0.0;
        }
        0.5 * (f_s + values[j]) * (nodes[j] - s) + (cum[last] - cum[j])
    }

    fn value(&self, k: usize) -> f64 {
        let traj = self.traj;
        let t = traj.times[k];
        let lag = self.delay.lagged(t);
        let n = traj.n;
        let mut scratch = vec![0.0; n];
        let mut x = vec![0.0; n];
        traj.state_at(lag, &mut x);
        let f_lag = self.spec.integrand(lag, &x, &mut scratch);
        let integral = if lag < 0.0 {
            let hist = Self::tail(&self.hist_nodes, &self.hist_values, &self.hist_cum, lag, f_lag);
            hist + self.grid_cum[k]
        } else {
            let times = &traj.times[..=k];
            Self::tail(times, &self.grid_values[..=k], &self.grid_cum[..=k], lag, f_lag)
        };
        self.spec.nu.value(t) * self.spec.pointwise(traj.state(k), traj.modes[k]) + integral
    }
}

fn cumulative(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..nodes.len() {
        acc += 0.5 * (values[i - 1] + values[i]) * (nodes[i] - nodes[i - 1]);
        out.push(acc);
    }
    out
}

/// Pointwise generator `ÂV₁` at `(x, x(t − τ), ξ, t)` with switching term `chi`.
#[allow(clippy::too_many_arguments)]
pub fn generator_v1_with_chi<S: DelaySystem + ?Sized>(
    spec: &LyapunovV1Spec,
    sys: &S,
    delay: &DelayFunction,
    chi: &Mat,
    x: &[f64],
    delayed: &[f64],
    mode: ModeId,
    t: f64,
) -> f64 {
    let n = sys.dim();
    let m = sys.noise_dim();
    let p = &spec.p[mode.0];
    let nu = spec.nu.value(t);
    let dnu = spec.nu.derivative(t);
    let mut f = vec![0.0; n];
    let mut sigma = vec![0.0; n * m];
    sys.drift(t, x, delayed, mode, &mut f);
    sys.diffusion(t, x, delayed, mode, &mut sigma);
    let mut gx = vec![0.0; n];
    let mut gd = vec![0.0; n];
    spec.activation.apply(x, &mut gx);
    spec.activation.apply(delayed, &mut gd);

    let mut coupling = 0.0;
    for i in 0..n {
        let mut px = 0.0;
        for j in 0..n {
            px += p[(i, j)] * x[j];
        }
        coupling += (px + spec.z[i] * gx[i]) * f[i];
    }
    let mut trace = 0.0;
    for c in 0..m {
        for i in 0..n {
            let si = sigma[i * m + c];
            if si == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..n {
                row += p[(i, j)] * sigma[j * m + c];
            }
            trace += si * row + spec.z[i] * spec.activation.derivative(x[i]) * si * si;
        }
    }
    let lag = delay.lagged(t);
    dnu * spec.pointwise(x, mode) + 2.0 * nu * coupling + nu * trace + nu * quad(chi, x) + nu * quad(&spec.q, &gx)
        - (1.0 - delay.tau_prime(t)) * spec.nu.value(lag) * quad(&spec.q, &gd)
}

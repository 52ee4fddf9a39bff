//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use coxswitch::certificates::CertificateThm4;
use coxswitch::config::{Experiment, ExperimentConfig, NETWORK_AFFINE_DELAY, NETWORK_CONSTANT_DELAY};
use coxswitch::dynamics::{Activation, ModeParams, Noise, NoiseBound, NuFunction, NuKind, SwitchedNetworkModel};
use coxswitch::linalg::{Mat, Vector};
use coxswitch::switching::{RateMap, SwitchingFamily};
use rand::Rng;

pub fn constant_case() -> Experiment {
    ExperimentConfig::from_json(NETWORK_CONSTANT_DELAY).unwrap().build().unwrap()
}

pub fn affine_case() -> Experiment {
    ExperimentConfig::from_json(NETWORK_AFFINE_DELAY).unwrap().build().unwrap()
}

pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Mat {
    Mat::from_fn(n, n, |_, _| uniform(rng, -scale, scale))
}

/// `M Mᵀ + shift·I`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> Mat {
    let m = random_matrix(rng, n, 1.0);
    &m * m.transpose() + Mat::identity(n, n) * shift
}

pub fn random_diag<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(n, |_, _| uniform(rng, lo, hi))
}

/// A random network model, block-matrix certificate and Markov switching law.
pub struct Instance {
    pub model: SwitchedNetworkModel,
    pub cert: CertificateThm4,
    pub family: SwitchingFamily,
    pub transition: Vec<Vec<f64>>,
    pub rates: RateMap,
}

pub fn random_instance<R: Rng>(rng: &mut R, n: usize, modes: usize) -> Instance {
    let params = (0..modes)
        .map(|_| ModeParams {
            d: random_diag(rng, n, 0.5, 5.0),
            a: random_matrix(rng, n, 3.0),
            b: random_matrix(rng, n, 3.0),
            bound: NoiseBound {
                a: uniform(rng, 0.0, 2.0),
                e: random_spd(rng, n, 0.0),
                f: random_spd(rng, n, 0.0),
            },
        })
        .collect();
    let mut activation = Activation::tanh(n);
    activation.gains = (0..n).map(|_| uniform(rng, 0.5, 2.0)).collect();
    let model = SwitchedNetworkModel::new(params, activation, Noise::DelayedOutput).unwrap();
    let alpha = uniform(rng, 0.0, 0.5);
    let beta = uniform(rng, 0.5, 1.0);
    let cert = CertificateThm4 {
        p: (0..modes).map(|_| random_spd(rng, n, 0.5)).collect(),
        z: random_diag(rng, n, 0.5, 3.0),
        q: random_spd(rng, n, 0.5),
        r: (0..modes).map(|_| random_spd(rng, n, 0.5)).collect(),
        nu: NuFunction {
            kind: NuKind::Exponential { alpha: alpha.max(1e-3) },
            alpha_nu: alpha,
            beta_nu_thm4: beta,
            beta_nu_thm5: 1.0 / beta,
        },
    };
    let transition: Vec<Vec<f64>> = (0..modes)
        .map(|_| {
            let w: Vec<f64> = (0..modes).map(|_| uniform(rng, 0.1, 1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        })
        .collect();
    let rates: Vec<f64> = (0..modes).map(|_| uniform(rng, 0.5, 10.0)).collect();
    let mu0 = rates.iter().cloned().fold(0.0, f64::max);
    Instance {
        model,
        cert,
        family: SwitchingFamily::markov(transition.clone()).unwrap(),
        transition,
        rates: RateMap::new(rates, mu0).unwrap(),
    }
}

/// Π for mode `k` assembled entry by entry from the block formulas, with the
/// exact Markov switching term `μ_k(Σ_j T_kj P_j − P_k)`.
pub fn naive_pi(inst: &Instance, k: usize) -> Mat {
    let n = inst.model.n;
    let md = &inst.model.modes[k];
    let c = &inst.cert;
    let p = &c.p[k];
    let r = &c.r[k];
    let g = &inst.model.activation.gains;
    let z = &c.z;
    let zg_max = (0..n).map(|i| z[i] * g[i]).fold(f64::NEG_INFINITY, f64::max);
    let mu = inst.rates.rates()[k];
    let (alpha, beta) = (c.nu.alpha_nu, c.nu.beta_nu_thm4);
    let a_noise = md.bound.a;
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

    let mut pi = Mat::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            let mut expected_next = 0.0;
            for (l, pl) in c.p.iter().enumerate() {
                expected_next += inst.transition[k][l] * pl[(i, j)];
            }
            let chi = mu * (expected_next - p[(i, j)]);
            let sigma = alpha * (p[(i, j)] + delta(i, j) * z[i] * g[i]) - (p[(i, j)] * md.d[j] + md.d[i] * p[(i, j)])
                + r[(i, j)]
                + chi;
            let lambda = -2.0 * delta(i, j) * z[i] * md.d[i] / g[i] + z[i] * md.a[(i, j)] + md.a[(j, i)] * z[j]
                - r[(i, j)] / (g[i] * g[j])
                + a_noise * p[(i, j)]
                + c.q[(i, j)]
                + zg_max * md.bound.e[(i, j)];
            let gamma = -beta * c.q[(i, j)] + a_noise * p[(i, j)] + zg_max * md.bound.f[(i, j)];
            let mut pa = 0.0;
            let mut pb = 0.0;
            for l in 0..n {
                pa += p[(i, l)] * md.a[(l, j)];
                pb += p[(i, l)] * md.b[(l, j)];
            }
            let zb = z[i] * md.b[(i, j)];
            pi[(i, j)] = sigma;
            pi[(n + i, n + j)] = lambda;
            pi[(2 * n + i, 2 * n + j)] = gamma;
            pi[(i, n + j)] = pa;
            pi[(n + j, i)] = pa;
            pi[(i, 2 * n + j)] = pb;
            pi[(2 * n + j, i)] = pb;
            pi[(n + i, 2 * n + j)] = zb;
            pi[(2 * n + j, n + i)] = zb;
        }
    }
    // the defining formulas are not symmetric entry by entry; compare the symmetric part
    (&pi + pi.transpose()) * 0.5
}

/// Characteristic polynomial coefficients `c₀..c_n` (monic, `c_n = 1`) of `a`
/// by the Faddeev–LeVerrier recursion.
pub fn char_poly(a: &Mat) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m = Mat::zeros(n, n);
    let id = Mat::identity(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[n - k + 1];
        coeffs[n - k] = -(a * &m).trace() / k as f64;
    }
    coeffs
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Real roots of the characteristic polynomial of a symmetric matrix by a
/// sign-change scan over the Gershgorin interval followed by bisection.
pub fn char_poly_roots(a: &Mat) -> Vec<f64> {
    let n = a.nrows();
    let c = char_poly(a);
    let radius = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    let cells = 200_000;
    let width = 2.0 * radius / cells as f64;
    let mut roots = Vec::new();
    let mut lo = -radius;
    let mut f_lo = poly_eval(&c, lo);
    for i in 1..=cells {
        let hi = -radius + i as f64 * width;
        let f_hi = poly_eval(&c, hi);
        if f_lo == 0.0 {
            roots.push(lo);
        } else if f_lo * f_hi < 0.0 {
            let (mut a0, mut b0, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let mid = 0.5 * (a0 + b0);
                let fm = poly_eval(&c, mid);
                if fm == 0.0 || b0 - a0 < 1e-15 * radius {
                    a0 = mid;
                    b0 = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b0 = mid;
                } else {
                    a0 = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a0 + b0));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots
}

pub fn max_rel_diff(a: &Mat, b: &Mat) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs())) / scale
}

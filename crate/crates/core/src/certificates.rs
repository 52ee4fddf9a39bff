//! Matrix stability certificates: the switching term `χ`, the block matrix
//! `Π` and the `(M, N)` pair, all checked through symmetric eigensolves.

use serde::Serialize;

use crate::dynamics::{NuFunction, SwitchedNetworkModel};
use crate::error::{Error, Result};
use crate::linalg::{check_spd, lambda_max, lambda_min, relative_asymmetry, spectral_norm, symmetrize, Mat, Vector};
use crate::switching::{FamilyState, ModeId, NextLaw, RateMap, SwitchingFamily};

/// Asymmetry allowed in an assembled matrix before it is symmetrized.
pub const ASSEMBLY_ASYMMETRY: f64 = 1e-12;
/// Asymmetry allowed in inputs to `loewner_leq`.
pub const INPUT_ASYMMETRY: f64 = 1e-10;

/// Quadratic-plus-integral certificate: `P(ξ)`, diagonal `Z`, `Q`, `R(ξ)`.
#[derive(Debug, Clone)]
pub struct CertificateThm4 {
    pub p: Vec<Mat>,
    /// Diagonal of `Z`.
    pub z: Vector,
    pub q: Mat,
    pub r: Vec<Mat>,
    pub nu: NuFunction,
}

impl CertificateThm4 {
    pub fn validate(&self, n: usize, modes: usize) -> Result<()> {
        check_per_mode(&self.p, n, modes, "P")?;
        check_per_mode(&self.r, n, modes, "R")?;
        check_positive_diagonal(&self.z, n, "Z")?;
        check_spd(&self.q, n, "Q")
    }

    pub fn z_matrix(&self) -> Mat {
        Mat::from_diagonal(&self.z)
    }
}

/// Auxiliary-functional certificate: `P(ξ)`, diagonal `V(ξ)`, `W(ξ)` and the
/// constants `ρ₁`, `κ > κ′`.
#[derive(Debug, Clone)]
pub struct CertificateThm5 {
    pub p: Vec<Mat>,
    pub v: Vec<Vector>,
    pub w: Vec<Vector>,
    pub rho1: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub nu: NuFunction,
}

impl CertificateThm5 {
    pub fn validate(&self, n: usize, modes: usize) -> Result<()> {
        if !(self.kappa_prime > 0.0 && self.kappa > self.kappa_prime) {
            return Err(Error::CertificateStructure(format!(
                "need κ > κ′ > 0, got κ = {}, κ′ = {}",
                self.kappa, self.kappa_prime
            )));
        }
        if !(self.rho1 >= 1.0) {
            return Err(Error::CertificateStructure(format!("ρ₁ = {} must be at least 1", self.rho1)));
        }
        check_per_mode(&self.p, n, modes, "P")?;
        if self.v.len() < modes || self.w.len() < modes {
            return Err(Error::Dimension(format!("V and W need entries for {modes} modes")));
        }
        for k in 0..modes {
            check_positive_diagonal(&self.v[k], n, &format!("V({k})"))?;
            check_positive_diagonal(&self.w[k], n, &format!("W({k})"))?;
        }
        Ok(())
    }
}

fn check_per_mode(ms: &[Mat], n: usize, modes: usize, what: &str) -> Result<()> {
    if ms.len() < modes {
        return Err(Error::Dimension(format!("{what}: {} matrices for {modes} modes", ms.len())));
    }
    for (k, m) in ms.iter().enumerate() {
        check_spd(m, n, &format!("{what}({k})"))?;
    }
    Ok(())
}

fn check_positive_diagonal(d: &Vector, n: usize, what: &str) -> Result<()> {
    if d.len() != n {
        return Err(Error::Dimension(format!("{what}: expected {n} diagonal entries, got {}", d.len())));
    }
    if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::CertificateStructure(format!("{what} must have positive diagonal entries")));
    }
    Ok(())
}

/// `λ_max` verdict for one matrix inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemidefReport {
    pub lambda_max: f64,
    pub pass: bool,
    pub tolerance: f64,
    /// Unit eigenvector for `lambda_max`.
    pub witness: Vec<f64>,
    /// All eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

impl SemidefReport {
    fn from_matrix(m: &Mat, tolerance: f64) -> Result<Self> {
        let ext = lambda_max(m)?;
        Ok(SemidefReport {
            lambda_max: ext.value,
            pass: ext.value <= tolerance,
            tolerance,
            witness: ext.vector.iter().copied().collect(),
            eigenvalues: ext.spectrum,
        })
    }
}

/// Acceptance threshold `absolute + relative·‖M‖₂` for `λ_max(M) ≤ 0` tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemidefTolerance {
    pub absolute: f64,
    pub relative: f64,
}

impl Default for SemidefTolerance {
    fn default() -> Self {
        SemidefTolerance {
            absolute: 0.0,
            relative: 0.0,
        }
    }
}

impl SemidefTolerance {
    /// Zero absolute tolerance plus `‖M‖₂·1e-9` to absorb assembly rounding.
    pub fn with_slack() -> Self {
        SemidefTolerance {
            absolute: 0.0,
            relative: 1e-9,
        }
    }

    pub fn threshold(&self, m: &Mat) -> f64 {
        if self.relative == 0.0 {
            self.absolute
        } else {
            self.absolute + self.relative * spectral_norm(m)
        }
    }
}

/// `A ⪯ B` via `λ_max(A − B) ≤ tolerance`.
pub fn loewner_leq(a: &Mat, b: &Mat, tolerance: f64) -> Result<SemidefReport> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::Dimension(format!("loewner_leq: {:?} vs {:?}", a.shape(), b.shape())));
    }
    for (m, name) in [(a, "left"), (b, "right")] {
        if relative_asymmetry(m) > INPUT_ASYMMETRY {
            return Err(Error::Domain(format!("{name} operand is not symmetric")));
        }
    }
    SemidefReport::from_matrix(&symmetrize(&(a - b)), tolerance)
}

/// Switching term `μ(ξ)(E[P(ξᵏ⁺¹) | Fₖ] − P(ξ))`, or its conservative bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiTerm {
    pub matrix: Mat,
    /// True when `matrix` is an upper bound rather than the exact term.
    pub conservative: bool,
}

/// `χ` for the family state `state`.
pub fn chi_term(family: &SwitchingFamily, p: &[Mat], state: &FamilyState, rates: &RateMap) -> Result<ChiTerm> {
    let mode = state.mode();
    let k = family.mode_count();
    if p.len() < k || mode.0 >= p.len() {
        return Err(Error::Dimension(format!("P given for {} modes, family has {k}", p.len())));
    }
    let mu = rates.rate(mode)?;
    let current = &p[mode.0];
    match family.conditional_next_distribution(state) {
        NextLaw::Exact(dist) => {
            // Σ_j p_j (P_j − P_ξ) equals E[P(next)] − P_ξ and is exactly zero
            // when P does not depend on the mode
            let mut drift = Mat::zeros(current.nrows(), current.ncols());
            for (j, &pj) in dist.iter().enumerate() {
                if pj != 0.0 && j != mode.0 {
                    drift += (&p[j] - current) * pj;
                }
            }
            Ok(ChiTerm {
                matrix: drift * mu,
                conservative: false,
            })
        }
        NextLaw::Bound => {
            // only the walk's off-maximum mode lands here
            let diff = &p[0] - &p[1];
            let lo = lambda_min(&symmetrize(&diff))?;
            let scale = spectral_norm(&p[0]).max(1.0);
            if lo < -1e-12 * scale {
                return Err(Error::CertificateStructure(format!(
                    "conservative χ bound needs P(0) ⪰ P(1); λ_min(P(0) − P(1)) = {lo:e}"
                )));
            }
            Ok(ChiTerm {
                matrix: diff * (0.5 * mu),
                conservative: true,
            })
        }
    }
}

/// `χ` for every conditional-law case of `mode` (one case for memoryless
/// families, one per compatible hidden state, and so on).
pub fn chi_cases(family: &SwitchingFamily, p: &[Mat], mode: ModeId, rates: &RateMap) -> Result<Vec<ChiTerm>> {
    family
        .representative_states(mode)
        .iter()
        .map(|s| chi_term(family, p, s, rates))
        .collect()
}

fn invert_gains(model: &SwitchedNetworkModel) -> Vector {
    Vector::from_iterator(model.n, model.activation.gains.iter().map(|g| 1.0 / g))
}

fn check_assembled(m: &Mat, what: &str) -> Result<Mat> {
    let asym = relative_asymmetry(m);
    if asym > ASSEMBLY_ASYMMETRY {
        return Err(Error::Domain(format!("{what} is asymmetric before symmetrization ({asym:e})")));
    }
    Ok(symmetrize(m))
}

/// Assemble `Π` for `mode` with the switching term `chi`.
pub fn build_pi_with(model: &SwitchedNetworkModel, cert: &CertificateThm4, mode: ModeId, chi: &Mat) -> Result<Mat> {
    let n = model.n;
    let k = mode.0;
    let par = model.mode(mode)?;
    let p = cert.p.get(k).ok_or_else(|| Error::Dimension(format!("no P for mode {k}")))?;
    let r = cert.r.get(k).ok_or_else(|| Error::Dimension(format!("no R for mode {k}")))?;
    if chi.shape() != (n, n) || cert.q.shape() != (n, n) || cert.z.len() != n {
        return Err(Error::Dimension(format!("certificate blocks must be {n}x{n}")));
    }
    let g = model.activation.gain_matrix();
    let g_inv = Mat::from_diagonal(&invert_gains(model));
    let z = cert.z_matrix();
    let d = par.d_matrix();
    let zg = &z * &g;
    let lmax_zg = (0..n).map(|i| cert.z[i] * model.activation.gains[i]).fold(f64::NEG_INFINITY, f64::max);
    let (alpha, beta, a) = (cert.nu.alpha_nu, cert.nu.beta_nu_thm4, par.bound.a);

    let pd = p * &d;
    let sigma = (p + &zg) * alpha - (&pd + pd.transpose()) + r + chi;
    let za = &z * &par.a;
    let lambda = (&z * &d * &g_inv) * -2.0 + &za + za.transpose() - &g_inv * r * &g_inv
        + p * a
        + &cert.q
        + &par.bound.e * lmax_zg;
    let gamma = &cert.q * -beta + p * a + &par.bound.f * lmax_zg;
    let pa = p * &par.a;
    let pb = p * &par.b;
    let zb = &z * &par.b;

    let mut pi = Mat::zeros(3 * n, 3 * n);
    let mut put = |bi: usize, bj: usize, m: &Mat| pi.view_mut((bi * n, bj * n), (n, n)).copy_from(m);
    put(0, 0, &sigma);
    put(1, 1, &lambda);
    put(2, 2, &gamma);
    put(0, 1, &pa);
    put(0, 2, &pb);
    put(1, 2, &zb);
    put(1, 0, &pa.transpose());
    put(2, 0, &pb.transpose());
    put(2, 1, &zb.transpose());
    check_assembled(&pi, &format!("Π({k})"))
}

/// `Π` for every conditional-law case of `mode`.
pub fn build_pi(
    model: &SwitchedNetworkModel,
    cert: &CertificateThm4,
    family: &SwitchingFamily,
    rates: &RateMap,
    mode: ModeId,
) -> Result<Vec<(Mat, bool)>> {
    cert.validate(model.n, model.mode_count())?;
    chi_cases(family, &cert.p, mode, rates)?
        .into_iter()
        .map(|chi| Ok((build_pi_with(model, cert, mode, &chi.matrix)?, chi.conservative)))
        .collect()
}

/// One checked matrix inequality for one mode and conditional-law case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub mode: usize,
    pub case: usize,
    pub conservative: bool,
    pub report: SemidefReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thm4Report {
    pub cases: Vec<CaseReport>,
    /// Per-mode maximum of `λ_max(Π)` over its cases (`None` for modes the
    /// family never visits).
    pub mode_lambda_max: Vec<Option<f64>>,
    pub worst_lambda_max: f64,
    pub worst_mode: usize,
    /// True when some case used the conservative `χ` bound.
    pub conservative: bool,
    pub pass: bool,
}

fn check_family_fits(model: &SwitchedNetworkModel, family: &SwitchingFamily) -> Result<()> {
    if model.n == 0 {
        return Err(Error::config("model.dimension", "state dimension must be at least 1"));
    }
    if family.mode_count() > model.mode_count() {
        return Err(Error::config(
            "switching",
            format!("family emits {} modes, model defines {}", family.mode_count(), model.mode_count()),
        ));
    }
    Ok(())
}

/// Check `Π ⪯ 0` for every mode and case.
pub fn check_thm4(
    model: &SwitchedNetworkModel,
    cert: &CertificateThm4,
    family: &SwitchingFamily,
    rates: &RateMap,
    tolerance: SemidefTolerance,
) -> Result<Thm4Report> {
    check_family_fits(model, family)?;
    cert.validate(model.n, model.mode_count())?;
    let mut cases = Vec::new();
    let mut mode_lambda_max = vec![None; model.mode_count()];
    for k in 0..model.mode_count() {
        let chis = if k < family.mode_count() {
            chi_cases(family, &cert.p, ModeId(k), rates)?
        } else {
            Vec::new()
        };
        for (c, chi) in chis.into_iter().enumerate() {
            let pi = build_pi_with(model, cert, ModeId(k), &chi.matrix)?;
            let report = SemidefReport::from_matrix(&pi, tolerance.threshold(&pi))?;
            let slot: &mut Option<f64> = &mut mode_lambda_max[k];
            *slot = Some(slot.map_or(report.lambda_max, |v: f64| v.max(report.lambda_max)));
            cases.push(CaseReport {
                mode: k,
                case: c,
                conservative: chi.conservative,
                report,
            });
        }
    }
    summarize(cases, mode_lambda_max)
}

fn summarize(cases: Vec<CaseReport>, mode_lambda_max: Vec<Option<f64>>) -> Result<Thm4Report> {
    let worst = cases
        .iter()
        .max_by(|a, b| a.report.lambda_max.total_cmp(&b.report.lambda_max))
        .ok_or_else(|| Error::config("switching", "the family visits no mode of the model"))?;
    Ok(Thm4Report {
        worst_lambda_max: worst.report.lambda_max,
        worst_mode: worst.mode,
        conservative: cases.iter().any(|c| c.conservative),
        pass: cases.iter().all(|c| c.report.pass),
        mode_lambda_max,
        cases,
    })
}

/// Assemble `(M, N)` for `mode` with the switching term `chi`.
pub fn build_mn_with(model: &SwitchedNetworkModel, cert: &CertificateThm5, mode: ModeId, chi: &Mat) -> Result<(Mat, Mat)> {
    let k = mode.0;
    let par = model.mode(mode)?;
    let p = cert.p.get(k).ok_or_else(|| Error::Dimension(format!("no P for mode {k}")))?;
    let v = cert.v.get(k).ok_or_else(|| Error::Dimension(format!("no V for mode {k}")))?;
    let w = cert.w.get(k).ok_or_else(|| Error::Dimension(format!("no W for mode {k}")))?;
    if v.iter().chain(w.iter()).any(|x| *x == 0.0 || !x.is_finite()) {
        return Err(Error::CertificateStructure(format!("V({k}) and W({k}) must be invertible")));
    }
    let g = model.activation.gain_matrix();
    let g2 = &g * &g;
    let d = par.d_matrix();
    let p_norm = spectral_norm(p);
    let v_inv = Mat::from_diagonal(&v.map(|x| 1.0 / x));
    let w_inv = Mat::from_diagonal(&w.map(|x| 1.0 / x));
    let (alpha, beta, a) = (cert.nu.alpha_nu, cert.nu.beta_nu_thm5, par.bound.a);

    let pd = p * &d;
    let pa = p * &par.a;
    let pb = p * &par.b;
    let m = p * alpha - (&pd + pd.transpose())
        + &g2 * (a * p_norm)
        + &pa * &v_inv * pa.transpose()
        + &g * Mat::from_diagonal(v) * &g
        + &pb * &w_inv * pb.transpose()
        + chi;
    let nmat = (&g * Mat::from_diagonal(w) * &g + &g2 * (a * p_norm)) * beta;
    Ok((check_assembled(&m, &format!("M({k})"))?, check_assembled(&nmat, &format!("N({k})"))?))
}

/// `(M, N)` for every conditional-law case of `mode`.
pub fn build_mn(
    model: &SwitchedNetworkModel,
    cert: &CertificateThm5,
    family: &SwitchingFamily,
    rates: &RateMap,
    mode: ModeId,
) -> Result<Vec<(Mat, Mat, bool)>> {
    cert.validate(model.n, model.mode_count())?;
    chi_cases(family, &cert.p, mode, rates)?
        .into_iter()
        .map(|chi| {
            let (m, n) = build_mn_with(model, cert, mode, &chi.matrix)?;
            Ok((m, n, chi.conservative))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub from: usize,
    pub to: usize,
    pub report: SemidefReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thm5Report {
    /// `M + κP ⪯ 0` per mode and case.
    pub m_checks: Vec<CaseReport>,
    /// `N − (κ′/ρ₁)P ⪯ 0` per mode.
    pub n_checks: Vec<CaseReport>,
    /// `P(ξ) ⪯ ρ₁P(ξ′)` for every ordered pair of distinct modes.
    pub pair_checks: Vec<PairReport>,
    pub worst_lambda_max: f64,
    pub conservative: bool,
    pub pass: bool,
}

pub fn check_thm5(
    model: &SwitchedNetworkModel,
    cert: &CertificateThm5,
    family: &SwitchingFamily,
    rates: &RateMap,
    tolerance: SemidefTolerance,
) -> Result<Thm5Report> {
    check_family_fits(model, family)?;
    cert.validate(model.n, model.mode_count())?;
    let mut m_checks = Vec::new();
    let mut n_checks = Vec::new();
    for k in 0..model.mode_count() {
        let chis = if k < family.mode_count() {
            chi_cases(family, &cert.p, ModeId(k), rates)?
        } else {
            Vec::new()
        };
        for (c, chi) in chis.into_iter().enumerate() {
            let (m, n) = build_mn_with(model, cert, ModeId(k), &chi.matrix)?;
            let lhs = m + &cert.p[k] * cert.kappa;
            m_checks.push(CaseReport {
                mode: k,
                case: c,
                conservative: chi.conservative,
                report: SemidefReport::from_matrix(&lhs, tolerance.threshold(&lhs))?,
            });
            if c == 0 {
                let lhs = n - &cert.p[k] * (cert.kappa_prime / cert.rho1);
                n_checks.push(CaseReport {
                    mode: k,
                    case: 0,
                    conservative: false,
                    report: SemidefReport::from_matrix(&lhs, tolerance.threshold(&lhs))?,
                });
            }
        }
    }
    if m_checks.is_empty() {
        return Err(Error::config("switching", "the family visits no mode of the model"));
    }
    let mut pair_checks = Vec::new();
    for i in 0..model.mode_count() {
        for j in 0..model.mode_count() {
            if i == j {
                continue;
            }
            let rhs = &cert.p[j] * cert.rho1;
            let diff = symmetrize(&(&cert.p[i] - &rhs));
            pair_checks.push(PairReport {
                from: i,
                to: j,
                report: loewner_leq(&cert.p[i], &rhs, tolerance.threshold(&diff))?,
            });
        }
    }
    let all = m_checks
        .iter()
        .chain(&n_checks)
        .map(|c| &c.report)
        .chain(pair_checks.iter().map(|p| &p.report));
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    for r in all {
        worst = worst.max(r.lambda_max);
        pass &= r.pass;
    }
    Ok(Thm5Report {
        conservative: m_checks.iter().any(|c| c.conservative),
        m_checks,
        n_checks,
        pair_checks,
        worst_lambda_max: worst,
        pass,
    })
}

/// Plain-text matrix: one row per line, space-separated, 17 significant digits.
pub fn format_matrix(m: &Mat) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

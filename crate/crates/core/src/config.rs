//! JSON experiment configuration and its translation into model objects.

use serde::{Deserialize, Serialize};

use crate::analysis::{ClassifySettings, Coefficient, HalanayProblem, LyapunovV1Spec};
use crate::certificates::{CertificateThm4, CertificateThm5, SemidefTolerance};
use crate::dynamics::{
    Activation, DelayFunction, ModeParams, Noise, NoiseBound, NuFunction, NuKind, SwitchedNetworkModel, TimeGrid,
};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, Mat, Vector};
use crate::sim::{InitialSegment, SimSettings};
use crate::switching::{ModeId, RateMap, SwitchingFamily};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub switching: SwitchingConfig,
    pub delay: DelayConfig,
    pub nu: NuConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateConfig>,
    pub simulation: SimulationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halanay: Option<HalanayConfig>,
    #[serde(default)]
    pub classification: ClassifySettings,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub activation: ActivationConfig,
    pub noise: NoiseConfig,
    /// Free-text record of how the noise bound constants were obtained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bound_derivation: Option<String>,
    pub modes: Vec<ModeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationConfig {
    Tanh {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gains: Option<Vec<f64>>,
    },
}

impl Default for ActivationConfig {
    fn default() -> Self {
        ActivationConfig::Tanh { gains: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    DelayedOutput,
    LinearMix { c1: Vec<Rows>, c2: Vec<Rows> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    /// Diagonal of `D`.
    pub d: Vec<f64>,
    pub a: Rows,
    pub b: Rows,
    pub noise_bound: NoiseBoundConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBoundConfig {
    pub a: f64,
    pub e: Rows,
    pub f: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingConfig {
    pub family: FamilyConfig,
    pub rates: Vec<f64>,
    /// Upper bound on the rates; defaults to their maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(default)]
    pub initial_mode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Iid { dist: Vec<f64> },
    Markov { transition: Rows },
    HiddenMarkov { transition: Rows, emission: Rows, initial_hidden: usize },
    ReflectedMaxWalk,
    FixedSequence { modes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayConfig {
    Constant {
        value: f64,
    },
    Affine {
        slope: f64,
        offset: f64,
        /// Accept `slope ≥ 1` (simulation only; flagged for certificates).
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        allow_steep: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuShape {
    Exponential { alpha: f64 },
    Power { alpha: f64 },
    Log,
    LogLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuConfig {
    pub shape: NuShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_nu_thm4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_nu_thm5: Option<f64>,
    /// Right end of the validation grid; defaults to the simulation horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thm4: Option<Thm4Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thm5: Option<Thm5Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<ToleranceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm4Config {
    pub p: Vec<Rows>,
    /// Diagonal of `Z`.
    pub z: Vec<f64>,
    pub q: Rows,
    pub r: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm5Config {
    pub p: Vec<Rows>,
    /// Diagonals of `V(ξ)`.
    pub v: Vec<Vec<f64>>,
    /// Diagonals of `W(ξ)`.
    pub w: Vec<Vec<f64>>,
    pub rho1: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default)]
    pub absolute: f64,
    #[serde(default)]
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub step: f64,
    pub horizon: f64,
    pub trials: usize,
    pub seed: u64,
    pub initial: InitialSegment,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    Constant { value: f64 },
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl CoefficientConfig {
    fn build(&self) -> Coefficient {
        match self {
            CoefficientConfig::Constant { value } => Coefficient::Constant(*value),
            CoefficientConfig::Piecewise { breaks, values } => Coefficient::Piecewise {
                breaks: breaks.clone(),
                values: values.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalanayConfig {
    pub alpha: CoefficientConfig,
    pub beta: CoefficientConfig,
    pub eta: f64,
    pub j0: f64,
    pub u0: f64,
    pub step: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub samples: usize,
    pub radius: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            samples: 1000,
            radius: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Used when no `--out` is given.
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "out".into(),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

/// Fully built experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: SwitchedNetworkModel,
    pub family: SwitchingFamily,
    pub rates: RateMap,
    pub initial_mode: ModeId,
    pub delay: DelayFunction,
    pub nu: NuFunction,
    pub grid: TimeGrid,
    pub thm4: Option<CertificateThm4>,
    pub thm5: Option<CertificateThm5>,
    pub tolerance: SemidefTolerance,
    pub settings: SimSettings,
    pub trials: usize,
    pub seed: u64,
    pub initial: InitialSegment,
    pub epsilons: Vec<f64>,
    pub record_every: usize,
    pub halanay: Option<(HalanayProblem, f64, f64)>,
    pub classification: ClassifySettings,
    pub validation: ValidationConfig,
}

impl Experiment {
    /// `V₁` built from the thm4 certificate, if one is configured.
    pub fn v1_spec(&self) -> Option<LyapunovV1Spec> {
        self.thm4
            .as_ref()
            .map(|c| LyapunovV1Spec::from_certificate(c, self.model.activation.clone()))
    }
}

fn matrix(rows: &Rows, n: usize, key: &str) -> Result<Mat> {
    let m = from_rows(rows).map_err(|_| Error::config(key, "ragged matrix rows"))?;
    if m.shape() != (n, n) {
        return Err(Error::config(key, format!("expected {n}x{n}, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(m)
}

fn matrices(list: &[Rows], n: usize, modes: usize, key: &str) -> Result<Vec<Mat>> {
    if list.len() != modes {
        return Err(Error::config(key, format!("expected one matrix per mode ({modes}), got {}", list.len())));
    }
    list.iter()
        .enumerate()
        .map(|(k, r)| matrix(r, n, &format!("{key}[{k}]")))
        .collect()
}

fn diagonal(v: &[f64], n: usize, key: &str) -> Result<Vector> {
    if v.len() != n {
        return Err(Error::config(key, format!("expected {n} diagonal entries, got {}", v.len())));
    }
    Ok(Vector::from_vec(v.to_vec()))
}

/// Certificate errors raised while building are reported under `section`.
fn structural(section: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::CertificateStructure(m) | Error::Dimension(m) => Error::config(section, m),
        other => other.within(section),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            Error::config(if key == "." { String::new() } else { key }, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    fn build_model(&self) -> Result<SwitchedNetworkModel> {
        let mc = &self.model;
        let first = mc.modes.first().ok_or_else(|| Error::config("model.modes", "at least one mode required"))?;
        let n = first.d.len();
        if n == 0 {
            return Err(Error::config("model.modes[0].d", "state dimension must be at least 1"));
        }
        let mut modes = Vec::with_capacity(mc.modes.len());
        for (k, m) in mc.modes.iter().enumerate() {
            let key = format!("model.modes[{k}]");
            modes.push(ModeParams {
                d: diagonal(&m.d, n, &format!("{key}.d"))?,
                a: matrix(&m.a, n, &format!("{key}.a"))?,
                b: matrix(&m.b, n, &format!("{key}.b"))?,
                bound: NoiseBound {
                    a: m.noise_bound.a,
                    e: matrix(&m.noise_bound.e, n, &format!("{key}.noise_bound.e"))?,
                    f: matrix(&m.noise_bound.f, n, &format!("{key}.noise_bound.f"))?,
                },
            });
        }
        let activation = match &mc.activation {
            ActivationConfig::Tanh { gains: None } => Activation::tanh(n),
            ActivationConfig::Tanh { gains: Some(g) } => Activation {
                kind: crate::dynamics::ActivationKind::Tanh,
                gains: g.clone(),
            },
        };
        let noise = match &mc.noise {
            NoiseConfig::DelayedOutput => Noise::DelayedOutput,
            NoiseConfig::LinearMix { c1, c2 } => Noise::LinearMix {
                c1: matrices(c1, n, modes.len(), "model.noise.c1")?,
                c2: matrices(c2, n, modes.len(), "model.noise.c2")?,
            },
        };
        SwitchedNetworkModel::new(modes, activation, noise)
    }

    fn build_switching(&self, modes: usize) -> Result<(SwitchingFamily, RateMap, ModeId)> {
        let sc = &self.switching;
        let family = match &sc.family {
            FamilyConfig::Iid { dist } => SwitchingFamily::iid(dist.clone()),
            FamilyConfig::Markov { transition } => SwitchingFamily::markov(transition.clone()),
            FamilyConfig::HiddenMarkov {
                transition,
                emission,
                initial_hidden,
            } => SwitchingFamily::hidden_markov(transition.clone(), emission.clone(), *initial_hidden),
            FamilyConfig::ReflectedMaxWalk => Ok(SwitchingFamily::ReflectedMaxWalk),
            FamilyConfig::FixedSequence { modes } => SwitchingFamily::fixed(modes.clone()),
        }
        .map_err(|e| e.within("switching.family"))?;
        if family.mode_count() > modes {
            return Err(Error::config(
                "switching.family",
                format!("family emits {} modes but the model defines {modes}", family.mode_count()),
            ));
        }
        if sc.rates.len() != modes {
            return Err(Error::config("switching.rates", format!("expected {modes} rates, got {}", sc.rates.len())));
        }
        let mu0 = sc.mu0.unwrap_or_else(|| sc.rates.iter().copied().fold(0.0, f64::max));
        let rates = RateMap::new(sc.rates.clone(), mu0).map_err(|e| e.within("switching"))?;
        let initial = ModeId(sc.initial_mode);
        family.initial_state(initial).map_err(|e| e.within("switching"))?;
        Ok((family, rates, initial))
    }

    fn build_delay(&self) -> Result<DelayFunction> {
        match self.delay {
            DelayConfig::Constant { value } => DelayFunction::constant(value),
            DelayConfig::Affine {
                slope,
                offset,
                allow_steep: false,
            } => DelayFunction::affine(slope, offset),
            DelayConfig::Affine {
                slope,
                offset,
                allow_steep: true,
            } => DelayFunction::affine_steep(slope, offset),
        }
    }

    fn build_nu(&self, delay: &DelayFunction) -> Result<(NuFunction, TimeGrid)> {
        let nc = &self.nu;
        let kind = match nc.shape {
            NuShape::Exponential { alpha } => NuKind::exponential(alpha),
            NuShape::Power { alpha } => NuKind::power(alpha, delay),
            NuShape::Log => NuKind::log(delay),
            NuShape::LogLog => NuKind::log_log(delay),
        }
        .map_err(|e| match e {
            Error::Config { message, .. } => Error::config("nu.shape", message),
            other => other,
        })?;
        let horizon = nc.grid_horizon.unwrap_or(self.simulation.horizon);
        let points = nc.grid_points.unwrap_or(TimeGrid::DEFAULT_POINTS);
        let grid = TimeGrid::new(0.0, horizon, points).map_err(|e| Error::config("nu.grid_horizon", e.to_string()))?;
        let nu = NuFunction::declared(kind, nc.alpha_nu, nc.beta_nu_thm4, nc.beta_nu_thm5, delay, &grid).map_err(|e| {
            match e {
                Error::Validation { message, .. } => Error::config("nu", message),
                other => other,
            }
        })?;
        Ok((nu, grid))
    }

    /// Cross-validate every section and build the model objects.
    pub fn build(&self) -> Result<Experiment> {
        let model = self.build_model()?;
        let n = model.n;
        let modes = model.mode_count();
        let (family, rates, initial_mode) = self.build_switching(modes)?;
        let delay = self.build_delay()?;
        let (nu, grid) = self.build_nu(&delay)?;

        let sim = &self.simulation;
        let settings = SimSettings::new(sim.horizon, sim.step)?;
        sim.initial.validate(n)?;
        if sim.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::config("simulation.epsilons", "epsilons must be positive"));
        }
        let record_every = sim.record_every.unwrap_or(1);
        if record_every == 0 {
            return Err(Error::config("simulation.record_every", "must be at least 1"));
        }

        let (mut thm4, mut thm5, mut tolerance) = (None, None, SemidefTolerance::default());
        if let Some(cc) = &self.certificate {
            if let Some(t) = cc.tolerance {
                tolerance = SemidefTolerance {
                    absolute: t.absolute,
                    relative: t.relative,
                };
            }
            if let Some(c) = &cc.thm4 {
                let key = "certificate.thm4";
                let cert = CertificateThm4 {
                    p: matrices(&c.p, n, modes, &format!("{key}.p"))?,
                    z: diagonal(&c.z, n, &format!("{key}.z"))?,
                    q: matrix(&c.q, n, &format!("{key}.q"))?,
                    r: matrices(&c.r, n, modes, &format!("{key}.r"))?,
                    nu: nu.clone(),
                };
                cert.validate(n, modes).map_err(structural(key))?;
                thm4 = Some(cert);
            }
            if let Some(c) = &cc.thm5 {
                let key = "certificate.thm5";
                if c.v.len() != modes || c.w.len() != modes {
                    return Err(Error::config(key, format!("V and W need {modes} diagonals each")));
                }
                let cert = CertificateThm5 {
                    p: matrices(&c.p, n, modes, &format!("{key}.p"))?,
                    v: c.v.iter().enumerate().map(|(k, v)| diagonal(v, n, &format!("{key}.v[{k}]"))).collect::<Result<_>>()?,
                    w: c.w.iter().enumerate().map(|(k, w)| diagonal(w, n, &format!("{key}.w[{k}]"))).collect::<Result<_>>()?,
                    rho1: c.rho1,
                    kappa: c.kappa,
                    kappa_prime: c.kappa_prime,
                    nu: nu.clone(),
                };
                cert.validate(n, modes).map_err(structural(key))?;
                thm5 = Some(cert);
            }
        }

        let halanay = match &self.halanay {
            Some(h) => {
                if !(h.step > 0.0 && h.horizon > 0.0) {
                    return Err(Error::config("halanay", "step and horizon must be positive"));
                }
                Some((
                    HalanayProblem {
                        alpha: h.alpha.build(),
                        beta: h.beta.build(),
                        eta: h.eta,
                        j0: h.j0,
                        delay: delay.clone(),
                        u0: h.u0,
                    },
                    h.step,
                    h.horizon,
                ))
            }
            None => None,
        };

        Ok(Experiment {
            model,
            family,
            rates,
            initial_mode,
            delay,
            nu,
            grid,
            thm4,
            thm5,
            tolerance,
            settings,
            trials: sim.trials,
            seed: sim.seed,
            initial: sim.initial.clone(),
            epsilons: sim.epsilons.clone(),
            record_every,
            halanay,
            classification: self.classification.clone(),
            validation: self.validation.clone(),
        })
    }
}

/// Bundled network example with a constant delay.
pub const NETWORK_CONSTANT_DELAY: &str = include_str!("../fixtures/network_constant_delay.json");
/// Bundled network example with an affine delay.
pub const NETWORK_AFFINE_DELAY: &str = include_str!("../fixtures/network_affine_delay.json");

mod common;

use coxswitch::analysis::{
    classify_stability, dynkin_residual, generator_v1_with_chi, halanay_bound_check, halanay_integrate, mc_ensemble,
    supermartingale_check, v1_series, Coefficient, DynkinSetup, HalanayProblem, LyapunovV1Spec, McSetup, McStats,
};
use coxswitch::certificates::chi_term;
use coxswitch::config::Experiment;
use coxswitch::dynamics::{Activation, DelayFunction, DelaySystem, LinearDelaySystem, LinearMode, NuFunction, NuKind};
use coxswitch::linalg::{lambda_min, Mat, Vector};
use coxswitch::rng::{substream, Stream};
use coxswitch::sim::{integrate, InitialSegment, SimSettings};
use coxswitch::switching::{sample_path, ModeId, RateMap, SwitchingFamily};
use proptest::prelude::*;

fn flat_weight() -> NuFunction {
    NuFunction::for_evaluation(NuKind::Exponential { alpha: 0.0 })
}

fn frozen_pair() -> LinearDelaySystem {
    let zero = LinearMode {
        drift: Mat::zeros(2, 2),
        delayed: Mat::zeros(2, 2),
        diffusion: Mat::zeros(2, 1),
    };
    LinearDelaySystem::new(vec![zero.clone(), zero]).unwrap()
}

fn pure_jump_spec() -> LyapunovV1Spec {
    LyapunovV1Spec {
        p: vec![
            Mat::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 1.0]),
            Mat::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 2.0]),
        ],
        z: Vector::zeros(2),
        q: Mat::zeros(2, 2),
        nu: flat_weight(),
        activation: Activation::tanh(2),
    }
}

fn pure_jump_residual(trials: usize, seed: u64) -> coxswitch::analysis::DynkinReport {
    let spec = pure_jump_spec();
    let sys = frozen_pair();
    let fam = SwitchingFamily::markov(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
    let rates = RateMap::new(vec![2.0, 1.0], 2.0).unwrap();
    let delay = DelayFunction::constant(1.0).unwrap();
    let initial = InitialSegment::constant(vec![1.0, -0.5]);
    dynkin_residual(&DynkinSetup {
        spec: &spec,
        system: &sys,
        family: &fam,
        rates: &rates,
        initial_mode: ModeId(0),
        delay: &delay,
        initial: &initial,
        settings: SimSettings::new(5.0, 0.01).unwrap(),
        trials,
        seed,
        slack_constant: 1.0,
    })
    .unwrap()
}

#[test]
fn pure_jump_dynkin_residual_is_mc_noise() {
    let r = pure_jump_residual(2000, 1);
    assert!(r.residual.abs() <= 3.0 * r.se, "{r:?}");
    assert!(!r.conservative);
    assert!(r.se > 0.0);
}

#[test]
fn pure_jump_error_shrinks_like_inverse_root_n() {
    let ns = [100usize, 1000, 10_000];
    let se: Vec<f64> = ns.iter().map(|&n| pure_jump_residual(n, 2).se).collect();
    let slope = (se[2].ln() - se[0].ln()) / ((ns[2] as f64).ln() - (ns[0] as f64).ln());
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope} from {se:?}");
}

fn linear_residual(h: f64) -> f64 {
    let sys = LinearDelaySystem::new(vec![LinearMode {
        drift: Mat::from_element(1, 1, -1.0),
        delayed: Mat::from_element(1, 1, 0.5),
        diffusion: Mat::zeros(1, 1),
    }])
    .unwrap();
    let spec = LyapunovV1Spec {
        p: vec![Mat::from_element(1, 1, 1.0)],
        z: Vector::from_element(1, 0.3),
        q: Mat::from_element(1, 1, 0.5),
        nu: NuFunction::for_evaluation(NuKind::Exponential { alpha: 0.1 }),
        activation: Activation::tanh(1),
    };
    let fam = SwitchingFamily::iid(vec![1.0]).unwrap();
    let rates = RateMap::new(vec![1e-9], 1e-9).unwrap();
    let delay = DelayFunction::constant(1.0).unwrap();
    let initial = InitialSegment::constant(vec![1.0]);
    let r = dynkin_residual(&DynkinSetup {
        spec: &spec,
        system: &sys,
        family: &fam,
        rates: &rates,
        initial_mode: ModeId(0),
        delay: &delay,
        initial: &initial,
        settings: SimSettings::new(5.0, h).unwrap(),
        trials: 2,
        seed: 0,
        slack_constant: 1.0,
    })
    .unwrap();
    assert_eq!(r.se, 0.0);
    r.residual
}

#[test]
fn deterministic_dynkin_residual_is_first_order() {
    let res: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&h| linear_residual(h).abs()).collect();
    for w in res.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.8, "order {order} from {res:?}");
    }
}

fn generator_along_trajectory(e: &Experiment, horizon: f64) {
    let spec = e.v1_spec().unwrap();
    let path = sample_path(&e.family, &e.rates, e.initial_mode, horizon, 5).unwrap();
    let traj = integrate(
        &e.model,
        &e.delay,
        &e.initial,
        &path,
        &SimSettings::new(horizon, 1e-3).unwrap(),
        &mut substream(5, 0, Stream::Noise),
    )
    .unwrap();
    let mut delayed = vec![0.0; 2];
    let mut checked = 0;
    for k in (0..traj.len()).step_by(7) {
        let t = traj.times[k];
        let state = &path.states[path.interval_at(t).unwrap()];
        let chi = chi_term(&e.family, &spec.p, state, &e.rates).unwrap();
        traj.state_at(e.delay.lagged(t), &mut delayed);
        let x = traj.state(k);
        let a = generator_v1_with_chi(&spec, &e.model, &e.delay, &chi.matrix, x, &delayed, traj.modes[k], t);
        let scale = spec.nu.value(t) * (x.iter().map(|v| v * v).sum::<f64>() + delayed.iter().map(|v| v * v).sum::<f64>());
        assert!(a <= 1e-9 * scale.max(1e-300), "t = {t}: generator {a}");
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn generator_is_nonpositive_on_certified_networks() {
    generator_along_trajectory(&common::constant_case(), 10.0);
    generator_along_trajectory(&common::affine_case(), 10.0);
}

fn network_stats(e: &Experiment, trials: usize, horizon: f64, h: f64) -> McStats {
    let spec = e.v1_spec().unwrap();
    mc_ensemble(&McSetup {
        system: &e.model,
        family: &e.family,
        rates: &e.rates,
        initial_mode: e.initial_mode,
        delay: &e.delay,
        initial: &e.initial,
        nu: &e.nu,
        settings: SimSettings::new(horizon, h).unwrap(),
        trials,
        seed: e.seed,
        epsilons: e.epsilons.clone(),
        record_every: 1,
        v1: Some(&spec),
    })
    .unwrap()
}

#[test]
fn weakened_decay_breaks_supermartingale_property() {
    let e = common::constant_case();
    let ok = network_stats(&e, 50, 10.0, 0.01);
    assert!(supermartingale_check(&ok).unwrap().pass);

    let mut weak = e.clone();
    let d = weak.model.modes[1].d.clone() * 0.01;
    weak.model = weak.model.with_mode_params(1, |m| m.d = d);
    let stats = network_stats(&weak, 50, 10.0, 0.01);
    let r = supermartingale_check(&stats).unwrap();
    assert!(!r.pass, "{r:?}");
    assert!(r.worst_violation > 0.0);
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let e = common::constant_case();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| network_stats(&e, 150, 2.0, 0.01))
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    let c1 = classify_stability(&a, &e.nu, &e.classification);
    let c2 = classify_stability(&a, &e.nu, &e.classification);
    assert_eq!(serde_json::to_string(&c1).unwrap(), serde_json::to_string(&c2).unwrap());
}

#[test]
fn too_few_trials_is_config_error() {
    let e = common::constant_case();
    let r = mc_ensemble(&McSetup {
        system: &e.model,
        family: &e.family,
        rates: &e.rates,
        initial_mode: e.initial_mode,
        delay: &e.delay,
        initial: &e.initial,
        nu: &e.nu,
        settings: SimSettings::new(1.0, 0.01).unwrap(),
        trials: 1,
        seed: 0,
        epsilons: vec![],
        record_every: 1,
        v1: None,
    });
    assert!(matches!(r, Err(coxswitch::Error::Config { .. })));
}

fn halanay(alpha: f64, beta: f64, j0: f64, u0: f64) -> HalanayProblem {
    HalanayProblem {
        alpha: Coefficient::Constant(alpha),
        beta: Coefficient::Constant(beta),
        eta: alpha - beta,
        j0,
        delay: DelayFunction::constant(1.0).unwrap(),
        u0,
    }
}

/// Root of `r = α − β e^{rτ}` on `[0, α − β]`.
fn characteristic_rate(alpha: f64, beta: f64, tau: f64) -> f64 {
    let f = |r: f64| r - alpha + beta * (r * tau).exp();
    let (mut lo, mut hi) = (0.0, alpha - beta);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn halanay_decay_rate_matches_characteristic_root() {
    let h = 1e-3;
    for (alpha, beta) in [(2.0, 1.0), (3.0, 0.5), (1.5, 1.2)] {
        let s = halanay_integrate(&halanay(alpha, beta, 0.0, 1.0), h, 30.0).unwrap();
        let at = |t: f64| s.values[(t / h).round() as usize];
        let rate = -(at(30.0).ln() - at(20.0).ln()) / 10.0;
        let root = characteristic_rate(alpha, beta, 1.0);
        assert!(rate >= root - 10.0 * h, "α={alpha} β={beta}: {rate} vs {root}");
        assert!(rate <= root + 0.05, "α={alpha} β={beta}: {rate} vs {root}");
        assert!(s.values.windows(2).skip(2000).all(|w| w[1] < w[0]));
    }
}

#[test]
fn halanay_unforced_stays_below_initial_value() {
    let (r, s) = halanay_bound_check(&halanay(2.0, 1.0, 0.0, 1.0), 1e-3, 10.0).unwrap();
    assert!(r.pass);
    assert!(r.sup_u <= 1.0);
    assert!(*s.values.last().unwrap() < 0.1);
}

#[test]
fn halanay_gap_violation_is_reported() {
    let mut p = halanay(2.0, 1.5, 1.0, 1.0);
    p.eta = 1.0;
    let err = halanay_bound_check(&p, 1e-3, 5.0).unwrap_err();
    assert!(matches!(err, coxswitch::Error::Validation { .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn v1_dominates_weighted_quadratic(seed in any::<u64>(), z in 0.0f64..3.0, q in 0.0f64..3.0, alpha in 0.0f64..0.5) {
        let mut rng = substream(seed, 0, Stream::Sampling);
        let p0 = common::random_spd(&mut rng, 2, 0.1);
        let p1 = common::random_spd(&mut rng, 2, 0.1);
        let spec = LyapunovV1Spec {
            p: vec![p0, p1],
            z: Vector::from_element(2, z),
            q: Mat::identity(2, 2) * q,
            nu: NuFunction::for_evaluation(NuKind::Exponential { alpha }),
            activation: Activation::tanh(2),
        };
        let mode = |a: f64| LinearMode {
            drift: Mat::identity(2, 2) * a,
            delayed: Mat::from_element(2, 2, 0.2),
            diffusion: Mat::from_element(2, 1, 0.5),
        };
        let sys = LinearDelaySystem::new(vec![mode(-1.0), mode(0.3)]).unwrap();
        let fam = SwitchingFamily::ReflectedMaxWalk;
        let rates = RateMap::new(vec![4.0, 1.0], 4.0).unwrap();
        let delay = DelayFunction::affine(0.1, 1.0).unwrap();
        let path = sample_path(&fam, &rates, ModeId(0), 5.0, seed).unwrap();
        let traj = integrate(
            &sys,
            &delay,
            &InitialSegment::constant(vec![0.7, -1.1]),
            &path,
            &SimSettings::new(5.0, 0.01).unwrap(),
            &mut substream(seed, 0, Stream::Noise),
        ).unwrap();
        let v = v1_series(&spec, &delay, &traj).unwrap();
        prop_assert_eq!(sys.dim(), 2);
        for (k, vk) in v.iter().enumerate() {
            let m = traj.modes[k];
            let x = traj.state(k);
            let bound = spec.nu.value(traj.times[k]) * lambda_min(&spec.p[m.0]).unwrap() * (x[0] * x[0] + x[1] * x[1]);
            prop_assert!(*vk >= bound * (1.0 - 1e-12), "k = {}: {} < {}", k, vk, bound);
        }
    }
}

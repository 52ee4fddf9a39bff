//! C ABI over `coxswitch`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_*`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`CoxStatus`]; on failure [`cox_last_error_message`] describes the
//! error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coxswitch::analysis::{mc_ensemble, McSetup, McStats};
use coxswitch::certificates::check_thm4;
use coxswitch::config::{Experiment, ExperimentConfig, NETWORK_AFFINE_DELAY, NETWORK_CONSTANT_DELAY};
use coxswitch::sim::SimSettings;
use coxswitch::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Invalid configuration, dimensions or certificate structure.
    Config = 3,
    /// A numerical validation failed.
    Validation = 4,
    /// A trajectory left the divergence guard.
    Divergence = 5,
    /// The caller's buffer is shorter than the data.
    BufferTooSmall = 6,
    /// The requested data is not available (for example `V₁` without a certificate).
    Unavailable = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

/// Bundled network examples.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoxCase {
    ConstantDelay = 0,
    AffineDelay = 1,
}

/// Ensemble series that can be copied out of a [`CoxMcStats`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoxSeries {
    Times = 0,
    MeanX2 = 1,
    SeX2 = 2,
    NuMeanX2 = 3,
    MeanV = 4,
    SeV = 5,
}

/// Parsed and validated experiment.
pub struct CoxExperiment {
    inner: Experiment,
}

/// Monte Carlo ensemble statistics.
pub struct CoxMcStats {
    inner: McStats,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|e| {
        let mut bytes = e.into_vec();
        bytes.retain(|&b| b != 0);
        CString::new(bytes).unwrap_or_default()
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CoxStatus {
    match e {
        Error::Validation { .. } => CoxStatus::Validation,
        Error::Divergence { .. } => CoxStatus::Divergence,
        _ => CoxStatus::Config,
    }
}

fn fail(e: Error) -> CoxStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

/// Run `f` with panics converted to [`CoxStatus::Internal`].
fn guard(f: impl FnOnce() -> CoxStatus) -> CoxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            CoxStatus::Internal
        }
    }
}

fn null(what: &str) -> CoxStatus {
    set_error(format!("{what} is null"));
    CoxStatus::NullPointer
}

fn build(text: &str, out: *mut *mut CoxExperiment) -> CoxStatus {
    match ExperimentConfig::from_json(text).and_then(|c| c.build()) {
        Ok(inner) => {
            // SAFETY: checked non-null by the callers
            unsafe { *out = Box::into_raw(Box::new(CoxExperiment { inner })) };
            CoxStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Message for the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cox_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cox_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a JSON experiment config into a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cox_experiment_from_json(json: *const c_char, out: *mut *mut CoxExperiment) -> CoxStatus {
    guard(|| {
        if json.is_null() {
            return null("json");
        }
        if out.is_null() {
            return null("out");
        }
        match CStr::from_ptr(json).to_str() {
            Ok(text) => build(text, out),
            Err(e) => {
                set_error(format!("config is not UTF-8: {e}"));
                CoxStatus::InvalidUtf8
            }
        }
    })
}

/// Load one of the bundled network examples.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cox_experiment_bundled(case: CoxCase, out: *mut *mut CoxExperiment) -> CoxStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let text = match case {
            CoxCase::ConstantDelay => NETWORK_CONSTANT_DELAY,
            CoxCase::AffineDelay => NETWORK_AFFINE_DELAY,
        };
        build(text, out)
    })
}

/// Release an experiment handle. Null is ignored.
///
/// # Safety
/// `exp` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cox_experiment_free(exp: *mut CoxExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Override the simulation step, horizon, trial count and seed.
///
/// # Safety
/// `exp` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cox_experiment_set_simulation(
    exp: *mut CoxExperiment,
    step: f64,
    horizon: f64,
    trials: usize,
    seed: u64,
) -> CoxStatus {
    guard(|| {
        let Some(exp) = exp.as_mut() else {
            return null("exp");
        };
        match SimSettings::new(horizon, step) {
            Ok(s) => {
                exp.inner.settings = s;
                exp.inner.trials = trials;
                exp.inner.seed = seed;
                CoxStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Check the block-matrix certificate. Writes the largest eigenvalue over
/// all modes and cases and whether it is within tolerance (1 or 0).
///
/// # Safety
/// `exp` must be a valid handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cox_verify_thm4(
    exp: *const CoxExperiment,
    lambda_max: *mut f64,
    pass: *mut i32,
) -> CoxStatus {
    guard(|| {
        let Some(exp) = exp.as_ref() else {
            return null("exp");
        };
        if lambda_max.is_null() || pass.is_null() {
            return null("output pointer");
        }
        let e = &exp.inner;
        let Some(cert) = e.thm4.as_ref() else {
            set_error("experiment has no thm4 certificate".into());
            return CoxStatus::Unavailable;
        };
        match check_thm4(&e.model, cert, &e.family, &e.rates, e.tolerance) {
            Ok(r) => {
                *lambda_max = r.worst_lambda_max;
                *pass = i32::from(r.pass);
                CoxStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Run the Monte Carlo ensemble, including `V₁` when a certificate exists.
///
/// # Safety
/// `exp` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cox_mc_run(exp: *const CoxExperiment, out: *mut *mut CoxMcStats) -> CoxStatus {
    guard(|| {
        let Some(exp) = exp.as_ref() else {
            return null("exp");
        };
        if out.is_null() {
            return null("out");
        }
        let e = &exp.inner;
        let v1 = e.v1_spec();
        let setup = McSetup {
            system: &e.model,
            family: &e.family,
            rates: &e.rates,
            initial_mode: e.initial_mode,
            delay: &e.delay,
            initial: &e.initial,
            nu: &e.nu,
            settings: e.settings,
            trials: e.trials,
            seed: e.seed,
            epsilons: e.epsilons.clone(),
            record_every: e.record_every,
            v1: v1.as_ref(),
        };
        match mc_ensemble(&setup) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CoxMcStats { inner }));
                CoxStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Number of recorded time points, or 0 for a null handle.
///
/// # Safety
/// `stats` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cox_mc_len(stats: *const CoxMcStats) -> usize {
    stats.as_ref().map_or(0, |s| s.inner.times.len())
}

/// Number of trials that diverged, or 0 for a null handle.
///
/// # Safety
/// `stats` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cox_mc_diverged(stats: *const CoxMcStats) -> usize {
    stats.as_ref().map_or(0, |s| s.inner.diverged)
}

/// Copy one series into `buf` (capacity `len`).
///
/// # Safety
/// `stats` must be a valid handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cox_mc_copy_series(
    stats: *const CoxMcStats,
    series: CoxSeries,
    buf: *mut f64,
    len: usize,
) -> CoxStatus {
    guard(|| {
        let Some(stats) = stats.as_ref() else {
            return null("stats");
        };
        if buf.is_null() {
            return null("buf");
        }
        let s = &stats.inner;
        let data: &[f64] = match series {
            CoxSeries::Times => &s.times,
            CoxSeries::MeanX2 => &s.mean_x2,
            CoxSeries::SeX2 => &s.se_x2,
            CoxSeries::NuMeanX2 => &s.nu_mean_x2,
            CoxSeries::MeanV | CoxSeries::SeV => {
                let v = if series == CoxSeries::MeanV { &s.mean_v } else { &s.se_v };
                match v {
                    Some(v) => v,
                    None => {
                        set_error("ensemble has no V₁ series".into());
                        return CoxStatus::Unavailable;
                    }
                }
            }
        };
        if len < data.len() {
            set_error(format!("buffer holds {len} values, series has {}", data.len()));
            return CoxStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        CoxStatus::Ok
    })
}

/// Release ensemble statistics. Null is ignored.
///
/// # Safety
/// `stats` must come from [`cox_mc_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cox_mc_free(stats: *mut CoxMcStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

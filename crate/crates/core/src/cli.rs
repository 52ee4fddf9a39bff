//! Command-line experiment driver.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    classify_stability, halanay_bound_check, mc_ensemble, supermartingale_check, Classification, McSetup,
    SupermartingaleReport,
};
use crate::certificates::{build_pi_with, chi_cases, check_thm4, check_thm5, format_matrix, Thm4Report};
use crate::config::{Experiment, ExperimentConfig, NETWORK_AFFINE_DELAY, NETWORK_CONSTANT_DELAY};
use crate::dynamics::{nu_constants, validate_delay, validate_hypotheses};
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::sim::integrate;
use crate::switching::{sample_path_with, ModeId};

/// Environment variable setting the worker thread count.
pub const THREADS_ENV: &str = "COXSWITCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "coxswitch", version, about = "Delayed stochastic systems under Cox-modulated switching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trajectory and write it as CSV.
    Simulate(RunArgs),
    /// Run a Monte Carlo ensemble and write statistics.
    Mc(RunArgs),
    /// Check the block-matrix certificate.
    #[command(name = "verify-thm4")]
    VerifyThm4(RunArgs),
    /// Check the (M, N) certificate.
    #[command(name = "verify-thm5")]
    VerifyThm5(RunArgs),
    /// Integrate the Halanay comparison dynamics and check the bound.
    Halanay(RunArgs),
    /// Validate delay, weight function and model hypotheses.
    Validate(RunArgs),
    /// Run a bundled network example end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (defaults to the config's output.directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Write every assembled matrix as plain text.
    #[arg(long)]
    pub dump_pi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Constant,
    Affine,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_enum, default_value = "constant")]
    pub case: Case,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Integration step; coarser than 0.001 trades accuracy for speed.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub dump_pi: bool,
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    Fail = 1,
    ConfigError = 2,
}

impl Status {
    fn from_verdict(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    /// Exit status for an error: numerical verdicts map to 1, everything else to 2.
    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::Validation { .. } | Error::Divergence { .. } => Status::Fail,
            _ => Status::ConfigError,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    config: String,
    started_unix: f64,
    finished_unix: f64,
    threads: usize,
    version: &'a str,
}

/// Apply command-line overrides and build the experiment.
fn load(cfg: &mut ExperimentConfig, seed: Option<u64>, step: Option<f64>, trials: Option<usize>) -> Result<Experiment> {
    if let Some(s) = seed {
        cfg.simulation.seed = s;
    }
    if let Some(h) = step {
        cfg.simulation.step = h;
    }
    if let Some(n) = trials {
        cfg.simulation.trials = n;
    }
    cfg.build()
}

fn out_dir(out: Option<&PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = out.cloned().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn simulate(exp: &Experiment, dir: &Path) -> Result<Status> {
    let mut sw = substream(exp.seed, 0, Stream::Switching);
    let path = sample_path_with(&exp.family, &exp.rates, exp.initial_mode, exp.settings.horizon, &mut sw)?;
    let mut noise = substream(exp.seed, 0, Stream::Noise);
    let traj = integrate(&exp.model, &exp.delay, &exp.initial, &path, &exp.settings, &mut noise)?;
    traj.write_csv(create_file(&dir.join("trajectory.csv"))?)?;
    fs::write(dir.join("switching.csv"), path.to_table())?;
    println!("simulate: {} points, {} switches", traj.len(), path.jump_count());
    Ok(Status::Pass)
}

#[derive(Serialize)]
struct McSummary {
    trials: usize,
    diverged: usize,
    diverged_trials: Vec<usize>,
    step: f64,
    horizon: f64,
    seed: u64,
    final_mean_x2: f64,
    classification: Classification,
    supermartingale: Option<SupermartingaleReport>,
}

fn mc(exp: &Experiment, dir: &Path, csv_name: &str, json_name: &str) -> Result<McSummary> {
    let v1 = exp.v1_spec();
    let setup = McSetup {
        system: &exp.model,
        family: &exp.family,
        rates: &exp.rates,
        initial_mode: exp.initial_mode,
        delay: &exp.delay,
        initial: &exp.initial,
        nu: &exp.nu,
        settings: exp.settings,
        trials: exp.trials,
        seed: exp.seed,
        epsilons: exp.epsilons.clone(),
        record_every: exp.record_every,
        v1: v1.as_ref(),
    };
    let stats = mc_ensemble(&setup)?;
    stats.write_csv(create_file(&dir.join(csv_name))?)?;
    let classification = classify_stability(&stats, &exp.nu, &exp.classification);
    let supermartingale = if stats.mean_v.is_some() {
        Some(supermartingale_check(&stats)?)
    } else {
        None
    };
    let summary = McSummary {
        trials: stats.trials,
        diverged: stats.diverged,
        diverged_trials: stats.diverged_trials.clone(),
        step: stats.step,
        horizon: stats.horizon,
        seed: stats.seed,
        final_mean_x2: *stats.mean_x2.last().unwrap_or(&f64::NAN),
        classification,
        supermartingale,
    };
    write_json(&dir.join(json_name), &summary)?;
    println!(
        "mc: {} trials ({} diverged), final mean |x|^2 = {:.6e}, mean-square {}, nu-mean-square {} (M = {:.6e})",
        summary.trials,
        summary.diverged,
        summary.final_mean_x2,
        verdict(summary.classification.mean_square),
        verdict(summary.classification.nu_mean_square),
        summary.classification.diagnostics.nu_sup
    );
    for w in &summary.classification.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    Ok(summary)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

fn verify_thm4(exp: &Experiment, dir: &Path, dump: bool) -> Result<Thm4Report> {
    let cert = exp
        .thm4
        .as_ref()
        .ok_or_else(|| Error::config("certificate.thm4", "no thm4 certificate configured"))?;
    let report = check_thm4(&exp.model, cert, &exp.family, &exp.rates, exp.tolerance)?;
    write_json(&dir.join("thm4_report.json"), &report)?;
    if dump {
        for k in 0..exp.model.mode_count().min(exp.family.mode_count()) {
            for (c, chi) in chi_cases(&exp.family, &cert.p, ModeId(k), &exp.rates)?.iter().enumerate() {
                let pi = build_pi_with(&exp.model, cert, ModeId(k), &chi.matrix)?;
                fs::write(dir.join(format!("pi_mode{k}_case{c}.txt")), format_matrix(&pi))?;
            }
        }
    }
    for (k, v) in report.mode_lambda_max.iter().enumerate() {
        if let Some(v) = v {
            println!("verify-thm4: mode {k} lambda_max = {v:.6}");
        }
    }
    println!(
        "verify-thm4: worst lambda_max = {:.6} (mode {}){} -> {}",
        report.worst_lambda_max,
        report.worst_mode,
        if report.conservative { " [conservative]" } else { "" },
        verdict(report.pass)
    );
    Ok(report)
}

fn verify_thm5(exp: &Experiment, dir: &Path, dump: bool) -> Result<Status> {
    let cert = exp
        .thm5
        .as_ref()
        .ok_or_else(|| Error::config("certificate.thm5", "no thm5 certificate configured"))?;
    let report = check_thm5(&exp.model, cert, &exp.family, &exp.rates, exp.tolerance)?;
    write_json(&dir.join("thm5_report.json"), &report)?;
    if dump {
        for k in 0..exp.model.mode_count().min(exp.family.mode_count()) {
            for (c, chi) in chi_cases(&exp.family, &cert.p, ModeId(k), &exp.rates)?.iter().enumerate() {
                let (m, n) = crate::certificates::build_mn_with(&exp.model, cert, ModeId(k), &chi.matrix)?;
                fs::write(dir.join(format!("m_mode{k}_case{c}.txt")), format_matrix(&m))?;
                fs::write(dir.join(format!("n_mode{k}_case{c}.txt")), format_matrix(&n))?;
            }
        }
    }
    println!("verify-thm5: worst lambda_max = {:.6} -> {}", report.worst_lambda_max, verdict(report.pass));
    Ok(Status::from_verdict(report.pass))
}

fn halanay(exp: &Experiment, dir: &Path) -> Result<Status> {
    let (problem, h, horizon) = exp
        .halanay
        .as_ref()
        .ok_or_else(|| Error::config("halanay", "no halanay section configured"))?;
    let (report, series) = halanay_bound_check(problem, *h, *horizon)?;
    write_json(&dir.join("halanay_report.json"), &report)?;
    series.write_csv(create_file(&dir.join("halanay_series.csv"))?)?;
    println!(
        "halanay: sup u = {:.6}, bound = {:.6}, slack = {:.3e} -> {}",
        report.sup_u,
        report.bound,
        report.slack,
        verdict(report.pass)
    );
    Ok(Status::from_verdict(report.pass))
}

#[derive(Serialize)]
struct ValidationBundle {
    delay: crate::dynamics::DelayReport,
    nu: crate::dynamics::NuConstants,
    nu_used: NuUsed,
    hypotheses: crate::dynamics::HypothesisReport,
    pass: bool,
}

#[derive(Serialize)]
struct NuUsed {
    alpha_nu: f64,
    beta_nu_thm4: f64,
    beta_nu_thm5: f64,
}

fn validate(exp: &Experiment, dir: &Path) -> Result<Status> {
    let delay = validate_delay(&exp.delay, &exp.grid)?;
    let nu = nu_constants(&exp.nu.kind, &exp.delay, &exp.grid)?;
    let p = exp.thm4.as_ref().map(|c| c.p.clone()).or_else(|| exp.thm5.as_ref().map(|c| c.p.clone()));
    let hypotheses = validate_hypotheses(&exp.model, exp.validation.samples, exp.validation.radius, exp.seed, p.as_deref())?;
    let pass = hypotheses.passed() && !delay.flagged();
    let bundle = ValidationBundle {
        nu_used: NuUsed {
            alpha_nu: exp.nu.alpha_nu,
            beta_nu_thm4: exp.nu.beta_nu_thm4,
            beta_nu_thm5: exp.nu.beta_nu_thm5,
        },
        delay,
        nu,
        hypotheses,
        pass,
    };
    write_json(&dir.join("validation_report.json"), &bundle)?;
    let text = validation_text(&bundle);
    fs::write(dir.join("validation_report.txt"), &text)?;
    print!("{text}");
    Ok(Status::from_verdict(pass))
}

fn validation_text(b: &ValidationBundle) -> String {
    let mut lines = vec![
        format!("delay.tau_star: {}", b.delay.tau_star_est),
        format!("delay.tau_b: {}", b.delay.tau_b_est),
        format!("delay.tau_prime_max: {}", b.delay.tau_prime_max),
        format!(
            "delay.derivative_at_least_one: {}",
            b.delay.derivative_at_least_one.map_or("none".to_string(), |t| t.to_string())
        ),
        format!("nu.alpha_nu: {}", b.nu.alpha_nu),
        format!("nu.beta_nu_thm4: {}", b.nu.beta_nu_thm4),
        format!("nu.beta_nu_thm5: {}", b.nu.beta_nu_thm5),
        format!("nu.grid_spacing: {}", b.nu.grid_spacing),
        format!("nu.used.alpha_nu: {}", b.nu_used.alpha_nu),
        format!("nu.used.beta_nu_thm4: {}", b.nu_used.beta_nu_thm4),
        format!("nu.used.beta_nu_thm5: {}", b.nu_used.beta_nu_thm5),
        format!("hypotheses.samples: {}", b.hypotheses.samples),
        format!("hypotheses.radius: {}", b.hypotheses.radius),
        format!("hypotheses.regularity: {}", b.hypotheses.regularity),
        format!("hypotheses.output.zero_at_origin: {}", b.hypotheses.output.zero_at_origin),
        format!("hypotheses.output.max_gain_excess: {}", b.hypotheses.output.max_gain_excess),
        format!("hypotheses.trace_bound.min_slack: {}", b.hypotheses.trace_bound.min_slack),
        format!("hypotheses.trace_bound.violation: {}", b.hypotheses.trace_bound.violation.is_some()),
    ];
    if let Some(w) = &b.hypotheses.weighted_bound {
        lines.push(format!("hypotheses.weighted_bound.min_slack: {}", w.min_slack));
        lines.push(format!("hypotheses.weighted_bound.violation: {}", w.violation.is_some()));
    }
    lines.push(format!("pass: {}", b.pass));
    lines.join("\n") + "\n"
}

#[derive(Serialize)]
struct ReproduceSummary {
    case: Case,
    step: f64,
    horizon: f64,
    trials: usize,
    lambda_max: f64,
    certificate_pass: bool,
    final_mean_x2: f64,
    mean_square: bool,
    nu_mean_square: bool,
    supermartingale_pass: Option<bool>,
}

/// Step the bundled examples integrate with unless told otherwise.
pub const REPRODUCE_STEP: f64 = 0.001;

fn reproduce(args: &ReproduceArgs) -> Result<Status> {
    let text = match args.case {
        Case::Constant => NETWORK_CONSTANT_DELAY,
        Case::Affine => NETWORK_AFFINE_DELAY,
    };
    let mut cfg = ExperimentConfig::from_json(text)?;
    cfg.simulation.horizon = 100.0;
    let step = args.step.unwrap_or(REPRODUCE_STEP);
    if step > REPRODUCE_STEP {
        eprintln!("warning: step {step} is coarser than {REPRODUCE_STEP}; results are a faster approximation");
    }
    let exp = load(&mut cfg, args.seed, Some(step), args.trials)?;
    fs::create_dir_all(&args.out)?;
    let thm4 = verify_thm4(&exp, &args.out, args.dump_pi)?;
    let summary = mc(&exp, &args.out, "decay_curve.csv", "mc_summary.json")?;
    write_json(&args.out.join("classification.json"), &summary.classification)?;
    let out = ReproduceSummary {
        case: args.case,
        step: exp.settings.step,
        horizon: exp.settings.horizon,
        trials: summary.trials,
        lambda_max: thm4.worst_lambda_max,
        certificate_pass: thm4.pass,
        final_mean_x2: summary.final_mean_x2,
        mean_square: summary.classification.mean_square,
        nu_mean_square: summary.classification.nu_mean_square,
        supermartingale_pass: summary.supermartingale.as_ref().map(|s| s.pass),
    };
    write_json(&args.out.join("reproduce_summary.json"), &out)?;
    Ok(Status::from_verdict(thm4.pass))
}

fn run_config(name: &str, args: &RunArgs) -> Result<(Status, PathBuf)> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    let exp = load(&mut cfg, args.seed, args.step, args.trials)?;
    let dir = out_dir(args.out.as_ref(), &cfg)?;
    let status = match name {
        "simulate" => simulate(&exp, &dir)?,
        "mc" => {
            mc(&exp, &dir, "mc_stats.csv", "mc_summary.json")?;
            Status::Pass
        }
        "verify-thm4" => Status::from_verdict(verify_thm4(&exp, &dir, args.dump_pi)?.pass),
        "verify-thm5" => verify_thm5(&exp, &dir, args.dump_pi)?,
        "halanay" => halanay(&exp, &dir)?,
        "validate" => validate(&exp, &dir)?,
        _ => unreachable!("unknown subcommand {name}"),
    };
    Ok((status, dir))
}

/// Run a parsed command line, writing artifacts and a `run.meta.json` sidecar.
pub fn run(cli: &Cli) -> Result<Status> {
    let started = unix_now();
    let (name, config, result) = match &cli.command {
        Command::Reproduce(a) => ("reproduce", format!("bundled:{:?}", a.case).to_lowercase(), reproduce(a).map(|s| (s, a.out.clone()))),
        Command::Simulate(a) => ("simulate", a.config.display().to_string(), run_config("simulate", a)),
        Command::Mc(a) => ("mc", a.config.display().to_string(), run_config("mc", a)),
        Command::VerifyThm4(a) => ("verify-thm4", a.config.display().to_string(), run_config("verify-thm4", a)),
        Command::VerifyThm5(a) => ("verify-thm5", a.config.display().to_string(), run_config("verify-thm5", a)),
        Command::Halanay(a) => ("halanay", a.config.display().to_string(), run_config("halanay", a)),
        Command::Validate(a) => ("validate", a.config.display().to_string(), run_config("validate", a)),
    };
    let (status, dir) = result?;
    let meta = RunMeta {
        command: name,
        config,
        started_unix: started,
        finished_unix: unix_now(),
        threads: rayon::current_num_threads(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&dir.join("run.meta.json"), &meta)?;
    Ok(status)
}

/// Configure the global thread pool from `COXSWITCH_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::config(THREADS_ENV, format!("expected a thread count, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(THREADS_ENV, e.to_string()))?;
    }
    Ok(())
}

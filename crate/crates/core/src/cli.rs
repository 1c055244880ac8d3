//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 numeric divergence (outputs still written), 4 stability not certified.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::delay::{read_trace, write_trace};
use crate::error::{Error, Result};
use crate::predictor::Gains;
use crate::sim::{
    batch_runs, compute_metrics, run_with, trial_seeds, BatchResult, ControllerKind, DelayTraces, Metrics,
    MetricsSummary, Scenario,
};
use crate::stability::{
    build_all_output_delays, search_feasible_p, spectral_margins, FeedbackForm, InfeasibilityReport, SearchOptions,
    SearchOutcome, StabilityCertificate,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

pub const LOG_ENV: &str = "DELAYNET_LOG_LEVEL";

#[derive(Debug, Parser)]
#[command(
    name = "delaynet",
    version,
    about = "Networked control under bounded input and output delays",
    after_help = "Exit codes: 0 success, 1 runtime failure, 2 configuration error, \
                  3 numeric divergence (outputs still written), 4 stability not certified.\n\
                  Log level: DELAYNET_LOG_LEVEL=error|warn|info|debug."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop scenario and write its log and summary.
    Simulate(RunArgs),
    /// Run repeated trials per controller and write metrics and quartiles.
    Batch(RunArgs),
    /// Search for a common matrix-inequality certificate over all output delays.
    Stability(StabilityArgs),
    /// Write the bounds and operators of the interconnected model.
    Norms(StabilityArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Override the controller (batch: run only this controller).
    #[arg(long, value_parser = ["proposed", "lqr", "measured-delay-predictor"])]
    pub controller: Option<String>,
    /// Override the number of batch trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Directory with delay traces written by an earlier run to replay.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Decay rate in (0, 1].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Unit-circle grid size for the H-infinity bounds.
    #[arg(long)]
    pub grid: Option<usize>,
}

/// Errors carry the exit code they map to.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Dimension(_) | Error::DelayOutOfBounds { .. } => {
                EXIT_CONFIG
            }
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<i32, Failure>;

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs a parsed invocation and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Batch(args) => cmd_batch(&args),
        Command::Stability(args) => cmd_stability(&args),
        Command::Norms(args) => cmd_norms(&args),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("delaynet: {}", f.message);
            f.code
        }
    }
}

fn load(common: &CommonArgs) -> Result<Scenario> {
    if !common.config.is_file() {
        return Err(Error::Config(format!(
            "config file {} not found",
            common.config.display()
        )));
    }
    let mut cfg = crate::sim::ScenarioConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Scenario::from_config(cfg)
}

fn out_dir(common: &CommonArgs) -> Result<PathBuf> {
    std::fs::create_dir_all(&common.out)?;
    Ok(common.out.clone())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    println!("{}", path.display());
    Ok(())
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    write_text(path, &text)
}

fn write_traces(dir: &Path, stem: &str, traces: &DelayTraces) -> Result<()> {
    for (suffix, trace) in [("input", &traces.input), ("output", &traces.output)] {
        let path = dir.join(format!("{stem}_{suffix}.txt"));
        write_trace(&path, trace)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn read_traces(dir: &Path, stem: &str) -> Result<DelayTraces> {
    let read = |suffix: &str| {
        let path = dir.join(format!("{stem}_{suffix}.txt"));
        read_trace(&path).map_err(|e| Error::Config(format!("cannot replay {}: {e}", path.display())))
    };
    Ok(DelayTraces {
        input: read("input")?,
        output: read("output")?,
    })
}

fn controller_override(arg: &Option<String>) -> Result<Option<ControllerKind>> {
    arg.as_deref().map(str::parse).transpose()
}

#[derive(Serialize)]
struct RunSummary<'a> {
    controller: &'a str,
    seed: u64,
    config_hash: &'a str,
    horizon: usize,
    metrics: &'a Metrics,
}

fn cmd_simulate(args: &RunArgs) -> CliResult {
    let sc = load(&args.common)?;
    let kind = controller_override(&args.controller)?.unwrap_or(sc.config.controller);
    let replay = args.replay.as_deref().map(|d| read_traces(d, "delays")).transpose()?;
    let out = out_dir(&args.common)?;
    let log = run_with(&sc, kind, sc.config.seed, replay.as_ref())?;
    let metrics = compute_metrics(&log)?;

    write_text(&out.join("log.csv"), &log.to_csv())?;
    write_traces(&out, "delays", &log.traces())?;
    write_toml(
        &out.join("summary.toml"),
        &RunSummary {
            controller: kind.name(),
            seed: sc.config.seed,
            config_hash: &sc.config_hash,
            horizon: sc.config.horizon,
            metrics: &metrics,
        },
    )?;
    if metrics.diverged {
        eprintln!(
            "delaynet: state exceeded the divergence threshold at step {}",
            metrics.divergence_step.unwrap_or_default()
        );
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BatchSummaryFile<'a> {
    config_hash: &'a str,
    seed: u64,
    trials: usize,
    controllers: Vec<ControllerSummary<'a>>,
}

#[derive(Serialize)]
struct ControllerSummary<'a> {
    controller: &'a str,
    #[serde(flatten)]
    summary: &'a MetricsSummary,
}

fn metrics_csv(results: &[BatchResult]) -> String {
    let mut out = String::from(
        "controller,trial,seed,mean_abs_offset,mean_abs_heading,rms_offset,rms_heading,diverged,divergence_step\n",
    );
    for batch in results {
        for t in &batch.trials {
            let m = &t.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                batch.controller,
                t.trial,
                t.seed,
                m.mean_abs_offset,
                m.mean_abs_heading,
                m.rms_offset,
                m.rms_heading,
                m.diverged,
                m.divergence_step.map(|s| s.to_string()).unwrap_or_default()
            ));
        }
    }
    out
}

fn cmd_batch(args: &RunArgs) -> CliResult {
    let sc = load(&args.common)?;
    let trials = args.trials.unwrap_or(sc.config.batch.trials);
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()).into());
    }
    let controllers = match controller_override(&args.controller)? {
        Some(kind) => vec![kind],
        None => sc.config.batch.controllers.clone(),
    };
    if controllers.is_empty() {
        return Err(Error::Config("batch.controllers is empty".into()).into());
    }
    let seeds = trial_seeds(sc.config.seed, trials);
    let mut replay: Option<Vec<DelayTraces>> = match &args.replay {
        Some(dir) => Some(
            (0..trials)
                .map(|i| read_traces(&dir.join("traces"), &format!("trial_{i:03}")))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let out = out_dir(&args.common)?;

    let mut results = Vec::with_capacity(controllers.len());
    for kind in controllers {
        info!("batch: {trials} trials of {kind}");
        let batch = batch_runs(&sc, kind, &seeds, replay.as_deref())?;
        // Every controller sees the delay sequences of the first one.
        if replay.is_none() {
            replay = Some(batch.trials.iter().map(|t| t.traces.clone()).collect());
        }
        results.push(batch);
    }

    write_text(&out.join("metrics.csv"), &metrics_csv(&results))?;
    let traces_dir = out.join("traces");
    std::fs::create_dir_all(&traces_dir).map_err(Error::from)?;
    for (i, t) in replay.iter().flatten().enumerate() {
        write_traces(&traces_dir, &format!("trial_{i:03}"), t)?;
    }
    write_toml(
        &out.join("summary.toml"),
        &BatchSummaryFile {
            config_hash: &sc.config_hash,
            seed: sc.config.seed,
            trials,
            controllers: results
                .iter()
                .map(|b| ControllerSummary {
                    controller: b.controller.name(),
                    summary: &b.summary,
                })
                .collect(),
        },
    )?;
    Ok(EXIT_OK)
}

fn stability_inputs(args: &StabilityArgs) -> Result<(Scenario, Gains, f64, usize)> {
    let sc = load(&args.common)?;
    let beta = args.beta.unwrap_or(sc.config.stability.beta);
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1], got {beta}")));
    }
    let grid = args.grid.unwrap_or(sc.config.stability.grid);
    if grid == 0 {
        return Err(Error::Config("grid must be positive".into()));
    }
    let (k, l) = sc.predictor_gains()?;
    let gains = Gains::new(&sc.model, &sc.bounds, k, l)?;
    Ok((sc, gains, beta, grid))
}

#[derive(Serialize)]
struct SpectralEntry {
    d_o: usize,
    rho_ctrl: f64,
    rho_obs: f64,
}

fn spectral_table(sc: &Scenario, gains: &Gains) -> Result<Vec<SpectralEntry>> {
    sc.bounds
        .output_range()
        .map(|d_o| {
            let (rho_ctrl, rho_obs) = spectral_margins(&sc.model, gains, d_o)?;
            Ok(SpectralEntry { d_o, rho_ctrl, rho_obs })
        })
        .collect()
}

#[derive(Serialize)]
struct CertificateFile<'a> {
    config_hash: &'a str,
    spectral: Vec<SpectralEntry>,
    certificate: &'a StabilityCertificate,
}

#[derive(Serialize)]
struct InfeasibleFile<'a> {
    config_hash: &'a str,
    spectral: Vec<SpectralEntry>,
    report: &'a InfeasibilityReport,
}

fn cmd_stability(args: &StabilityArgs) -> CliResult {
    let (sc, gains, beta, grid) = stability_inputs(args)?;
    let out = out_dir(&args.common)?;
    let systems: Vec<(usize, FeedbackForm)> = build_all_output_delays(&sc.model, &sc.unc, &gains, &sc.bounds, grid)?
        .into_iter()
        .map(|s| (s.d_o, s.form))
        .collect();
    let opts = SearchOptions {
        max_iter: sc.config.stability.max_iter,
        ..SearchOptions::default()
    };
    let spectral = spectral_table(&sc, &gains)?;
    match search_feasible_p(&systems, beta, opts)? {
        SearchOutcome::Certified(cert) => {
            write_toml(
                &out.join("certificate.toml"),
                &CertificateFile {
                    config_hash: &sc.config_hash,
                    spectral,
                    certificate: &cert,
                },
            )?;
            Ok(EXIT_OK)
        }
        SearchOutcome::Infeasible(report) => {
            write_toml(
                &out.join("infeasible.toml"),
                &InfeasibleFile {
                    config_hash: &sc.config_hash,
                    spectral,
                    report: &report,
                },
            )?;
            eprintln!(
                "delaynet: no certificate found (best margin {:.3e}, feedthrough norm {:.3})",
                report.margin, report.feedthrough_norm
            );
            Ok(EXIT_INFEASIBLE)
        }
    }
}

#[derive(Serialize)]
struct NormEntry {
    d_o: usize,
    mu: [f64; 7],
    beta1: Vec<Vec<f64>>,
    beta2: Vec<Vec<f64>>,
    beta3: Vec<Vec<f64>>,
    upsilon: Vec<Vec<f64>>,
    feedthrough_norm: f64,
    rho_ctrl: f64,
    rho_obs: f64,
}

#[derive(Serialize)]
struct NormsFile<'a> {
    config_hash: &'a str,
    grid: usize,
    instances: Vec<NormEntry>,
}

fn cmd_norms(args: &StabilityArgs) -> CliResult {
    let (sc, gains, _, grid) = stability_inputs(args)?;
    let out = out_dir(&args.common)?;
    let rows = crate::linalg::to_rows;
    let instances = build_all_output_delays(&sc.model, &sc.unc, &gains, &sc.bounds, grid)?
        .into_iter()
        .map(|s| {
            let (rho_ctrl, rho_obs) = spectral_margins(&sc.model, &gains, s.d_o)?;
            Ok(NormEntry {
                d_o: s.d_o,
                mu: s.mu,
                beta1: rows(&s.beta1),
                beta2: rows(&s.beta2),
                beta3: rows(&s.beta3),
                upsilon: rows(&s.upsilon),
                feedthrough_norm: s.form.feedthrough_norm(),
                rho_ctrl,
                rho_obs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_toml(
        &out.join("norms.toml"),
        &NormsFile {
            config_hash: &sc.config_hash,
            grid,
            instances,
        },
    )?;
    Ok(EXIT_OK)
}

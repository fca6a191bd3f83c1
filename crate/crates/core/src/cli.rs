//! Configuration-driven front end: one command per invocation, a JSON report, CSV data
//! files and a manifest per run.
//!
//! Config files look like
//!
//! ```json
//! { "seed": 7, "modelPath": "models/harmonic_1d.json",
//!   "params": { "epsList": [0.5, 0.25, 0.125], "t": 1.0, "nPaths": 4000 } }
//! ```
//!
//! with the model given inline under `"model"` or by path (relative to the config file).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::characteristics::{characteristics_sweep, BigJumpTest, CharacteristicsConfig, TruncationFn};
use crate::convergence::{classify_longtime, convergence_sweep, drift_admissibility, ks_pass_rate};
use crate::effective::{corrector_solve, long_run_covariance, sigma_bar, sigma_effective, sigma_levy_model};
use crate::error::{Error, Result};
use crate::exit::{dirichlet_sweep, exit_samples, DirichletProblem, Domain, ExitConfig, ExitProcess, ScalarFn, MAX_STEPS};
use crate::model::{validate_model, Model, ValidatedModel};
use crate::report::{sha256_hex, to_json_string, write_csv, write_json, Manifest, SummaryRow, TOOL_VERSION};
use crate::rng::derive_seed;
use crate::schema::ModelSpec;
use crate::sim::{simulate_paths, write_paths_csv, SimConfig};
use crate::stats::{covariance, ks_two_sample, linear_fit};
use crate::torus::{
    grid_generator, occupation_invariant, stationary_residual, stationary_solve, tv_decay, write_tv_csv,
    InvariantMeasure, OccupationConfig, TorusGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Simulate,
    Invariant,
    Sigma,
    Levy,
    Corrector,
    Characteristics,
    Converge,
    Exit,
    Dirichlet,
    Classify,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::Simulate => "simulate",
            Self::Invariant => "invariant",
            Self::Sigma => "sigma",
            Self::Levy => "levy",
            Self::Corrector => "corrector",
            Self::Characteristics => "characteristics",
            Self::Converge => "converge",
            Self::Exit => "exit",
            Self::Dirichlet => "dirichlet",
            Self::Classify => "classify",
            Self::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "homog-jump", version, about = "Periodic homogenization experiments for jump-diffusions")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Experiment config (JSON). Optional for `report`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent. Defaults to the config's `out` or `./out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Must match the command line when given.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Params {
    pub eps: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    /// Cells per axis; one entry is used for every axis.
    pub resolution: Option<Vec<usize>>,
    /// Occupation horizon (invariant, sigma) or long-run horizon (corrector).
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub chains: Option<usize>,
    pub times: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub domain: Option<DomainSpec>,
    pub potential: Option<String>,
    pub source: Option<String>,
    pub boundary: Option<String>,
    pub max_steps: Option<usize>,
    pub truncation_delta: Option<f64>,
    pub test_delta: Option<f64>,
    /// Overrides the computed Σ (row lists).
    pub sigma: Option<Vec<Vec<f64>>>,
    pub repetitions: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum DomainSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

impl DomainSpec {
    fn build(&self) -> Result<Domain> {
        match self {
            Self::Ball { center, radius } => Domain::ball(center.clone(), *radius),
            Self::Box { lower, upper } => Domain::cube(lower.clone(), upper.clone()),
            Self::Annulus { center, inner, outer } => Domain::annulus(center.clone(), *inner, *outer),
        }
    }
}

/// Outcome of a successful run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    /// A statistical check failed.
    Fail,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Self::Pass => 0,
            Self::Fail => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
        }
    }
}

/// Everything a command writes into its report file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommandReport {
    pub command: String,
    pub config_sha256: String,
    pub model_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub status: String,
    #[serde(default)]
    pub error: Option<String>,
    pub summary: Vec<SummaryRow>,
    pub result: Value,
}

struct Output {
    passed: bool,
    summary: Vec<SummaryRow>,
    result: Value,
    /// Set when the command produced a report but must still fail (e.g. validation).
    error: Option<Error>,
}

impl Output {
    fn new(passed: bool, summary: Vec<SummaryRow>, result: Value) -> Self {
        Self { passed, summary, result, error: None }
    }
}

fn row(command: Command, label: impl Into<String>, values: &[(&str, f64)], verdict: bool) -> SummaryRow {
    SummaryRow {
        command: command.name().into(),
        label: label.into(),
        values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        verdict: if verdict { "pass" } else { "fail" }.into(),
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Run one command in a thread pool capped at `--threads`.
pub fn run(cli: &Cli) -> Result<Status> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(cli))
}

fn run_inner(cli: &Cli) -> Result<Status> {
    if cli.command == Command::Report {
        let out = match (&cli.out, &cli.config) {
            (Some(o), _) => o.clone(),
            (None, Some(c)) => load_config(c)?.0.out.unwrap_or_else(|| PathBuf::from("out")),
            (None, None) => PathBuf::from("out"),
        };
        return report(&out);
    }
    let config_path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let (config, config_sha) = load_config(config_path)?;
    if let Some(c) = config.command {
        if c != cli.command {
            return Err(Error::Config(format!("config is for `{}`, command line asks for `{}`", c.name(), cli.command.name())));
        }
    }
    let model = load_model(&config, config_path)?;
    let model_sha = sha256_hex(to_json_string(&ModelSpec::from_model(&model))?.as_bytes());
    let out = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    let cmd = cli.command;
    log::info!("running {} with seed {}", cmd.name(), config.seed);
    let result = execute(cmd, model, &config, &out);
    let (status, output) = match result {
        Ok(o) => {
            let s = if o.error.is_some() {
                "error"
            } else if o.passed {
                "pass"
            } else {
                "fail"
            };
            (s, o)
        }
        Err(e) => ("error", Output { passed: false, summary: vec![], result: Value::Null, error: Some(e) }),
    };
    let report_file = format!("{}.report.json", cmd.name());
    let report = CommandReport {
        command: cmd.name().into(),
        config_sha256: config_sha.clone(),
        model_sha256: model_sha.clone(),
        seed: config.seed,
        tool_version: TOOL_VERSION.into(),
        status: status.into(),
        error: output.error.as_ref().map(|e| e.to_string()),
        summary: output.summary,
        result: output.result,
    };
    write_json(&out.join(&report_file), &report)?;
    let manifest = Manifest {
        command: cmd.name().into(),
        config_sha256: config_sha,
        model_sha256: model_sha,
        seed: config.seed,
        tool_version: TOOL_VERSION.into(),
        status: status.into(),
        report_file,
    };
    write_json(&out.join(format!("{}.manifest.json", cmd.name())), &manifest)?;
    match output.error {
        Some(e) => Err(e),
        None => Ok(if output.passed { Status::Pass } else { Status::Fail }),
    }
}

/// Read and parse a config; returns it with the SHA-256 of the file bytes.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Parse(format!("{} is not UTF-8", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok((config, sha256_hex(&bytes)))
}

fn load_model(config: &ExperimentConfig, config_path: &Path) -> Result<Model> {
    match (&config.model, &config.model_path) {
        (Some(spec), None) => spec.to_model(),
        (None, Some(p)) => {
            let path = if p.is_absolute() { p.clone() } else { config_path.parent().unwrap_or(Path::new(".")).join(p) };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let spec: ModelSpec = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            spec.to_model()
        }
        (Some(_), Some(_)) => Err(Error::Config("give either `model` or `modelPath`, not both".into())),
        (None, None) => Err(Error::Config("missing `model` or `modelPath`".into())),
    }
}

fn execute(cmd: Command, model: Model, config: &ExperimentConfig, out: &Path) -> Result<Output> {
    if cmd == Command::Validate {
        return cmd_validate(&model);
    }
    let model = ValidatedModel::new(model)?;
    let p = &config.params;
    let seed = config.seed;
    match cmd {
        Command::Simulate => cmd_simulate(&model, p, seed, out),
        Command::Invariant => cmd_invariant(&model, p, seed, out),
        Command::Sigma => cmd_sigma(&model, p, seed, out),
        Command::Levy => cmd_levy(&model),
        Command::Corrector => cmd_corrector(&model, p, seed, out),
        Command::Characteristics => cmd_characteristics(&model, p, seed, out),
        Command::Converge => cmd_converge(&model, p, seed, out),
        Command::Exit => cmd_exit(&model, p, seed, out),
        Command::Dirichlet => cmd_dirichlet(&model, p, seed, out),
        Command::Classify => cmd_classify(&model, p),
        Command::Validate | Command::Report => unreachable!("handled above"),
    }
}

fn cmd_validate(model: &Model) -> Result<Output> {
    let report = validate_model(model);
    let summary = report
        .checks
        .iter()
        .map(|c| SummaryRow {
            command: "validate".into(),
            label: c.condition.to_string(),
            values: c.witness.map(|w| vec![("witness".to_string(), w)]).unwrap_or_default(),
            verdict: serde_json::to_value(c.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        })
        .collect();
    let error = report.first_failure().map(|f| Error::Validation { condition: f.condition, detail: f.detail.clone() });
    Ok(Output { passed: report.passed, summary, result: to_value(&report)?, error })
}

fn default_resolution(d: usize) -> usize {
    if d == 1 {
        64
    } else {
        32
    }
}

fn oracle_resolution(d: usize) -> usize {
    if d == 1 {
        crate::torus::ORACLE_RES_1D
    } else {
        crate::torus::ORACLE_RES_2D
    }
}

fn grid_for(model: &ValidatedModel, res: Option<&Vec<usize>>, default: usize) -> Result<TorusGrid> {
    let d = model.dim();
    let res = match res {
        None => vec![default; d],
        Some(r) if r.len() == 1 => vec![r[0]; d],
        Some(r) => r.clone(),
    };
    TorusGrid::new(model.period().clone(), res)
}

fn cmd_simulate(model: &ValidatedModel, p: &Params, seed: u64, out: &Path) -> Result<Output> {
    let d = model.dim();
    let cfg = SimConfig::new(p.dt.unwrap_or(0.01), p.t.unwrap_or(1.0), p.n_paths.unwrap_or(100), seed)
        .with_epsilon(p.eps.unwrap_or(1.0));
    let x0 = p.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let paths = simulate_paths(model, &x0, &cfg)?;
    let file = std::io::BufWriter::new(std::fs::File::create(out.join("simulate_paths.csv"))?);
    write_paths_csv(&paths, file)?;
    let ends: Vec<Vec<f64>> = paths.iter().map(|p| p.states.last().cloned().unwrap_or_default()).collect();
    let jumps: usize = paths.iter().map(|p| p.jump_marks.len()).sum();
    let mean: Vec<f64> = (0..d).map(|k| ends.iter().map(|e| e[k]).sum::<f64>() / ends.len() as f64).collect();
    let cov = if ends.len() >= 3 { Some(row_major(&covariance(&ends)?.cov)) } else { None };
    let result = json!({
        "eps": cfg.epsilon, "t": cfg.horizon, "dt": cfg.dt, "nPaths": cfg.n_paths,
        "endpointMean": mean, "endpointCov": cov, "jumps": jumps, "pathsFile": "simulate_paths.csv",
    });
    let summary = vec![row(Command::Simulate, "paths", &[("nPaths", cfg.n_paths as f64), ("jumps", jumps as f64)], true)];
    Ok(Output::new(true, summary, result))
}

fn default_times(model: &ValidatedModel) -> Vec<f64> {
    let tau = model.period().as_slice().iter().copied().fold(0.0, f64::max);
    (1..=10).map(|k| 0.02 * k as f64 * tau * tau).collect()
}

fn occupation(model: &ValidatedModel, grid: &TorusGrid, p: &Params, seed: u64) -> Result<InvariantMeasure> {
    let horizon = p.horizon.unwrap_or(2e4);
    let cfg = OccupationConfig {
        burn_in: p.burn_in.unwrap_or(0.1 * horizon),
        horizon,
        dt: p.dt.unwrap_or(0.005),
        seed,
        chains: p.chains.unwrap_or(1),
    };
    occupation_invariant(model, grid, &cfg)
}

fn cmd_invariant(model: &ValidatedModel, p: &Params, seed: u64, out: &Path) -> Result<Output> {
    let grid = grid_for(model, p.resolution.as_ref(), default_resolution(model.dim()))?;
    let occ = occupation(model, &grid, p, seed)?;
    occ.write_csv(&out.join("invariant_occupation.csv"))?;
    let mut result = json!({ "cells": grid.n_cells(), "resolution": grid.resolution() });
    let mut summary = Vec::new();
    let passed = match grid_generator(model, &grid) {
        Ok(q) => {
            let pi = stationary_solve(&q)?;
            pi.write_csv(&out.join("invariant_grid.csv"))?;
            let tv = occ.tv(&pi)?;
            let times = p.times.clone().unwrap_or_else(|| default_times(model));
            let decay = tv_decay(&q, &pi, &times)?;
            write_tv_csv(&out.join("invariant_tv_decay.csv"), &decay)?;
            let logs: Vec<(f64, f64)> = decay.iter().filter(|(_, v)| *v > 0.0).map(|(t, v)| (*t, v.ln())).collect();
            let fit = linear_fit(&logs);
            let monotone = decay.windows(2).all(|w| w[1].1 <= w[0].1);
            let ok = tv <= 0.03 && fit.slope < 0.0 && monotone;
            result["gridSolve"] = json!({
                "residual": stationary_residual(&q, &pi), "droppedAtoms": q.dropped_atoms,
                "tvOccupationVsGrid": tv, "tvDecay": decay, "logTvSlope": fit.slope,
                "logTvIntercept": fit.intercept, "logTvR2": fit.r2, "monotone": monotone,
            });
            summary.push(row(Command::Invariant, "occupation vs grid", &[("tv", tv)], tv <= 0.03));
            summary.push(row(Command::Invariant, "tv decay", &[("slope", fit.slope), ("r2", fit.r2)], fit.slope < 0.0 && monotone));
            ok
        }
        Err(Error::Unsupported(why)) => {
            result["gridSolve"] = json!({ "skipped": why });
            summary.push(row(Command::Invariant, "occupation only", &[("cells", grid.n_cells() as f64)], true));
            true
        }
        Err(e) => return Err(e),
    };
    Ok(Output::new(passed, summary, result))
}

/// Σ used by the statistical commands: an explicit override, the corrector route for a
/// non-constant drift, the Lévy formula for constant coefficients, or the grid formula.
fn resolve_sigma(model: &ValidatedModel, p: &Params) -> Result<(DMatrix<f64>, &'static str)> {
    let d = model.dim();
    if let Some(rows) = &p.sigma {
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension(format!("params.sigma must be {d}x{d}")));
        }
        return Ok((DMatrix::from_fn(d, d, |i, j| rows[i][j]), "given"));
    }
    let grid = || grid_for(model, p.resolution.as_ref(), oracle_resolution(d));
    if !model.drift().is_constant() {
        let corr = corrector_solve(model, &grid()?)?;
        return Ok((sigma_bar(model, &corr, &corr.pi)?.sigma, "corrector"));
    }
    let constant = model.diffusion().is_constant() && model.jumps().iter().all(|f| f.intensity.is_constant());
    if constant {
        return Ok((sigma_levy_model(model)?.1.sigma, "levy"));
    }
    let grid = grid()?;
    let pi = stationary_solve(&grid_generator(model, &grid)?)?;
    Ok((sigma_effective(model, &pi)?.sigma, "gridFormula"))
}

fn cmd_sigma(model: &ValidatedModel, p: &Params, seed: u64, out: &Path) -> Result<Output> {
    let d = model.dim();
    let grid = grid_for(model, p.resolution.as_ref(), oracle_resolution(d))?;
    let grid_pi = match grid_generator(model, &grid) {
        Ok(q) => Some(stationary_solve(&q)?),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let occ = if grid_pi.is_none() || p.horizon.is_some() { Some(occupation(model, &grid, p, seed)?) } else { None };
    let primary = grid_pi.as_ref().or(occ.as_ref()).expect("one route is always available");
    primary.write_csv(&out.join("sigma_pi.csv"))?;
    let sigma = sigma_effective(model, primary)?;
    let drift = drift_admissibility(model, primary);
    let mut result = json!({ "sigma": sigma.export(), "drift": drift });
    let mut summary = vec![row(Command::Sigma, "sigma", &sigma_values(&sigma.sigma), true)];
    let mut passed = true;
    if let (Some(_), Some(o)) = (&grid_pi, &occ) {
        let s_occ = sigma_effective(model, o)?;
        let rel = (&s_occ.sigma - &sigma.sigma).amax() / sigma.sigma.amax();
        passed = rel <= 0.02;
        result["occupation"] = json!({ "sigma": s_occ.export(), "relativeDifference": rel });
        summary.push(row(Command::Sigma, "occupation route", &[("relDiff", rel)], passed));
    }
    Ok(Output::new(passed, summary, result))
}

fn sigma_values(s: &DMatrix<f64>) -> Vec<(&'static str, f64)> {
    const NAMES: [&str; 9] = ["s11", "s12", "s13", "s21", "s22", "s23", "s31", "s32", "s33"];
    let d = s.nrows();
    if d > 3 {
        return vec![("s11", s[(0, 0)])];
    }
    (0..d).flat_map(|i| (0..d).map(move |j| (NAMES[3 * i + j], s[(i, j)]))).collect()
}

fn cmd_levy(model: &ValidatedModel) -> Result<Output> {
    let (centering, sigma) = sigma_levy_model(model)?;
    let result = json!({ "centering": centering.as_slice(), "sigma": sigma.export() });
    Ok(Output::new(true, vec![row(Command::Levy, "sigma", &sigma_values(&sigma.sigma), true)], result))
}

fn cmd_corrector(model: &ValidatedModel, p: &Params, seed: u64, out: &Path) -> Result<Output> {
    let d = model.dim();
    let grid = grid_for(model, p.resolution.as_ref(), oracle_resolution(d))?;
    let corr = corrector_solve(model, &grid)?;
    corr.write_csv(&out.join("corrector_beta.csv"))?;
    let sbar = sigma_bar(model, &corr, &corr.pi)?;
    let mut result = json!({ "bbar": corr.bbar, "residual": corr.residual, "sigmaBar": sbar.export() });
    let mut summary = vec![row(Command::Corrector, "sigma bar", &sigma_values(&sbar.sigma), true)];
    let mut passed = true;
    if let Some(horizon) = p.horizon {
        let est = long_run_covariance(model, horizon, p.n_paths.unwrap_or(4000), seed, p.dt.unwrap_or(0.01))?;
        let rel = (&est.cov - &sbar.sigma).amax() / sbar.sigma.amax();
        passed = rel <= 0.05;
        result["monteCarlo"] = json!({
            "horizon": horizon, "cov": row_major(&est.cov), "se": row_major(&est.se), "relativeDifference": rel,
        });
        summary.push(row(Command::Corrector, "long-run MC", &[("relDiff", rel)], passed));
    }
    Ok(Output::new(passed, summary, result))
}

fn eps_list(p: &Params) -> Vec<f64> {
    p.eps_list.clone().unwrap_or_else(|| vec![0.5, 0.25, 0.125])
}

fn cmd_characteristics(model: &ValidatedModel, p: &Params, seed: u64, out: &Path) -> Result<Output> {
    let (sigma, method) = resolve_sigma(model, p)?;
    let eps = eps_list(p);
    let mut base = CharacteristicsConfig::new(eps[0], p.t.unwrap_or(1.0), p.n_paths.unwrap_or(10_000), seed, p.dt.unwrap_or(0.05));
    if let Some(delta) = p.truncation_delta {
        base.truncation = TruncationFn::new(delta)?;
    }
    if let Some(delta) = p.test_delta {
        base.test = BigJumpTest::new(delta)?;
    }
    let sweep = characteristics_sweep(model, &eps, &base, &sigma)?;
    write_csv(
        &out.join("characteristics.csv"),
        &["eps", "bhDeviation", "bhSe", "ctildeDeviation", "ctildeSe", "bigJumpFlow", "bigJumpFlowSe"],
        sweep.estimates.iter().zip(&sweep.bh_deviation).zip(&sweep.ctilde_deviation).map(|((e, b), c)| {
            vec![e.eps, b.0, b.1, c.0, c.1, e.g_n, e.g_n_se]
        }),
    )?;
    let summary = sweep
        .estimates
        .iter()
        .zip(&sweep.bh_deviation)
        .zip(&sweep.ctilde_deviation)
        .map(|((e, b), c)| {
            row(
                Command::Characteristics,
                format!("eps={}", e.eps),
                &[("eps", e.eps), ("bh", b.0), ("bhSe", b.1), ("ctilde", c.0), ("ctildeSe", c.1), ("flow", e.g_n)],
                sweep.passed,
            )
        })
        .collect();
    let mut result = to_value(&sweep)?;
    result["sigmaMethod"] = json!(method);
    Ok(Output::new(sweep.passed, summary, result))
}

fn cmd_converge(model: &ValidatedModel, p: &Params, seed: u64, out: &Path) -> Result<Output> {
    let (sigma, method) = resolve_sigma(model, p)?;
    let eps = eps_list(p);
    let (t, n, dt) = (p.t.unwrap_or(1.0), p.n_paths.unwrap_or(4000), p.dt.unwrap_or(0.05));
    let sweep = convergence_sweep(model, &sigma, &eps, t, n, seed, dt)?;
    write_csv(
        &out.join("converge.csv"),
        &["eps", "cfDistance", "cfSe", "covError", "covErrorSe", "minKsP"],
        sweep.reports.iter().map(|r| vec![r.eps.unwrap_or(f64::NAN), r.cf_distance, r.cf_se, r.cov_error, r.cov_error_se, r.min_ks_p()]),
    )?;
    let mut summary: Vec<SummaryRow> = sweep
        .reports
        .iter()
        .map(|r| {
            let e = r.eps.unwrap_or(f64::NAN);
            row(
                Command::Converge,
                format!("eps={e}"),
                &[("eps", e), ("cfDistance", r.cf_distance), ("cfSe", r.cf_se), ("minKsP", r.min_ks_p())],
                r.passed,
            )
        })
        .collect();
    let mut passed = sweep.passed;
    let mut result = to_value(&sweep)?;
    result["sigma"] = json!(row_major(&sigma));
    result["sigmaMethod"] = json!(method);
    if let Some(reps) = p.repetitions {
        let last = *eps.last().expect("nonempty");
        let (rate, min_p) = ks_pass_rate(model, &sigma, last, t, n, derive_seed(seed, 0xC0), dt, reps)?;
        passed &= rate >= 0.95;
        result["repetitions"] = json!({ "eps": last, "count": reps, "passRate": rate, "minKsP": min_p });
        summary.push(row(Command::Converge, "repetitions", &[("passRate", rate)], rate >= 0.95));
    }
    Ok(Output::new(passed, summary, result))
}

fn exit_domain(model: &ValidatedModel, p: &Params) -> Result<Domain> {
    let domain = match &p.domain {
        Some(spec) => spec.build()?,
        None => Domain::unit_ball(model.dim()),
    };
    if domain.dim() != model.dim() {
        return Err(Error::Dimension(format!("domain has dimension {}, model {}", domain.dim(), model.dim())));
    }
    Ok(domain)
}

fn exit_config(p: &Params, seed: u64, default_n: usize) -> ExitConfig {
    ExitConfig {
        n: p.n_paths.unwrap_or(default_n),
        dt: p.dt.unwrap_or(1e-3),
        seed,
        max_steps: p.max_steps.unwrap_or(MAX_STEPS),
    }
}

fn cmd_exit(model: &ValidatedModel, p: &Params, seed: u64, out: &Path) -> Result<Output> {
    let (sigma, method) = resolve_sigma(model, p)?;
    let domain = exit_domain(model, p)?;
    let x0 = p.x0.clone().unwrap_or_else(|| vec![0.0; model.dim()]);
    let base = exit_config(p, seed, 4000);
    let reference =
        exit_samples(&ExitProcess::brownian(&sigma)?, &domain, &x0, &ExitConfig { seed: derive_seed(seed, 0), ..base.clone() })?;
    reference.write_csv(&out.join("exit_brownian.csv"))?;
    let ref_times = reference.times();
    let (ref_mean, ref_se) = reference.mean_time();
    let mut rows = vec![vec![0.0, ref_mean, ref_se, 0.0, 1.0, reference.censored as f64]];
    let mut summary = vec![row(Command::Exit, "brownian", &[("meanTime", ref_mean), ("se", ref_se)], true)];
    let mut runs = Vec::new();
    let eps = eps_list(p);
    for (k, &e) in eps.iter().enumerate() {
        let run = exit_samples(
            &ExitProcess::scaled(model.clone(), e)?,
            &domain,
            &x0,
            &ExitConfig { seed: derive_seed(seed, 1 + k as u64), ..base.clone() },
        )?;
        run.write_csv(&out.join(format!("exit_eps{k}.csv")))?;
        let (mean, se) = run.mean_time();
        let ks = ks_two_sample(&run.times(), &ref_times);
        rows.push(vec![e, mean, se, ks.statistic, ks.p_value, run.censored as f64]);
        summary.push(row(
            Command::Exit,
            format!("eps={e}"),
            &[("eps", e), ("meanTime", mean), ("se", se), ("ksP", ks.p_value)],
            ks.p_value > 0.01,
        ));
        runs.push(json!({ "eps": e, "meanTime": mean, "se": se, "ksStatistic": ks.statistic, "ksP": ks.p_value, "censored": run.censored }));
    }
    write_csv(&out.join("exit.csv"), &["eps", "meanTime", "se", "ksStatistic", "ksP", "censored"], rows.clone())?;
    let passed = rows.last().is_some_and(|r| r[4] > 0.01);
    let result = json!({
        "sigma": row_major(&sigma), "sigmaMethod": method,
        "brownian": { "meanTime": ref_mean, "se": ref_se, "censored": reference.censored },
        "scaled": runs,
    });
    Ok(Output::new(passed, summary, result))
}

fn cmd_dirichlet(model: &ValidatedModel, p: &Params, seed: u64, out: &Path) -> Result<Output> {
    let d = model.dim();
    let (sigma, method) = resolve_sigma(model, p)?;
    let problem = DirichletProblem {
        domain: exit_domain(model, p)?,
        a: ScalarFn::parse(p.potential.as_deref().unwrap_or("0"), d)?,
        f: ScalarFn::parse(p.source.as_deref().unwrap_or("-1"), d)?,
        g: ScalarFn::parse(p.boundary.as_deref().unwrap_or("0"), d)?,
    };
    let x0 = p.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let sweep = dirichlet_sweep(model, &sigma, &problem, &x0, &eps_list(p), &exit_config(p, seed, 20_000))?;
    write_csv(
        &out.join("dirichlet.csv"),
        &["eps", "value", "se", "gap", "combinedSe"],
        std::iter::once(vec![0.0, sweep.reference.value, sweep.reference.se, 0.0, sweep.reference.se]).chain(
            sweep.values.iter().zip(&sweep.eps).zip(sweep.gaps.iter().zip(&sweep.combined_se)).map(|((v, e), (g, s))| {
                vec![*e, v.value, v.se, *g, *s]
            }),
        ),
    )?;
    let mut summary = vec![row(
        Command::Dirichlet,
        "homogenized",
        &[("value", sweep.reference.value), ("se", sweep.reference.se)],
        true,
    )];
    for ((v, e), (g, s)) in sweep.values.iter().zip(&sweep.eps).zip(sweep.gaps.iter().zip(&sweep.combined_se)) {
        summary.push(row(
            Command::Dirichlet,
            format!("eps={e}"),
            &[("eps", *e), ("value", v.value), ("gap", *g), ("combinedSe", *s)],
            sweep.passed,
        ));
    }
    let mut result = to_value(&sweep)?;
    result["sigma"] = json!(row_major(&sigma));
    result["sigmaMethod"] = json!(method);
    Ok(Output::new(sweep.passed, summary, result))
}

fn cmd_classify(model: &ValidatedModel, p: &Params) -> Result<Output> {
    let (sigma, method) = resolve_sigma(model, p)?;
    let verdict = classify_longtime(model.dim(), &sigma)?;
    let mut result = json!({ "sigma": row_major(&sigma), "sigmaMethod": method, "verdict": verdict });
    if let Ok(grid) = grid_for(model, p.resolution.as_ref(), default_resolution(model.dim())) {
        if let Ok(q) = grid_generator(model, &grid) {
            result["drift"] = to_value(&drift_admissibility(model, &stationary_solve(&q)?))?;
        }
    }
    let label = format!("{:?}", verdict.classification).to_lowercase();
    let summary = vec![row(Command::Classify, label, &[("d", model.dim() as f64)], true)];
    Ok(Output::new(true, summary, result))
}

/// Merge every manifest in `dir` into `summary.json`, `summary.txt` and
/// `summary_plot.csv`. Refuses mixed model hashes.
pub fn report(dir: &Path) -> Result<Status> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Config(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".manifest.json")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no manifests found in {}", dir.display())));
    }
    let mut manifests = Vec::new();
    let mut rows = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("corrupt manifest {}: {e}", f.display())))?;
        let rpath = dir.join(&m.report_file);
        let rtext = std::fs::read_to_string(&rpath).map_err(|e| Error::Config(format!("missing report {}: {e}", rpath.display())))?;
        let r: CommandReport =
            serde_json::from_str(&rtext).map_err(|e| Error::Parse(format!("corrupt report {}: {e}", rpath.display())))?;
        if r.config_sha256 != m.config_sha256 || r.model_sha256 != m.model_sha256 {
            return Err(Error::Config(format!("report {} does not match its manifest", rpath.display())));
        }
        rows.extend(r.summary);
        manifests.push(m);
    }
    let hashes: BTreeSet<&str> = manifests.iter().map(|m| m.model_sha256.as_str()).collect();
    if hashes.len() > 1 {
        return Err(Error::Config(format!("refusing to merge runs on {} different models", hashes.len())));
    }
    let all_pass = manifests.iter().all(|m| m.status == "pass");
    write_json(&dir.join("summary.json"), &json!({ "manifests": manifests, "rows": rows, "allPassed": all_pass }))?;
    std::fs::write(dir.join("summary.txt"), summary_table(&rows))?;
    let mut csv = String::from("command,label,key,value\n");
    for r in &rows {
        for (k, v) in &r.values {
            let _ = writeln!(csv, "{},{},{},{}", r.command, r.label, k, crate::report::fmt_f64(*v));
        }
    }
    std::fs::write(dir.join("summary_plot.csv"), csv)?;
    Ok(if all_pass { Status::Pass } else { Status::Fail })
}

fn summary_table(rows: &[SummaryRow]) -> String {
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            let vals = r.values.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect::<Vec<_>>().join(" ");
            [r.command.clone(), r.label.clone(), r.verdict.clone(), vals]
        })
        .collect();
    let header = ["command", "label", "verdict", "values"];
    let mut w = header.map(str::len);
    for c in &cells {
        for k in 0..4 {
            w[k] = w[k].max(c[k].len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, c: [&str; 4]| {
        let _ = writeln!(s, "{:<w0$}  {:<w1$}  {:<w2$}  {}", c[0], c[1], c[2], c[3], w0 = w[0], w1 = w[1], w2 = w[2]);
    };
    line(&mut s, header);
    let _ = writeln!(s, "{}", "-".repeat(w[0] + w[1] + w[2] + w[3] + 6));
    for c in &cells {
        line(&mut s, [&c[0], &c[1], &c[2], &c[3]]);
    }
    s
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

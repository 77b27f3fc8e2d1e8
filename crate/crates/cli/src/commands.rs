use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use atlas_stefan::atlas::{simulate, PathRecord, SimConfig};
use atlas_stefan::initial::{sample_lattice, sample_ppp, write_samples_csv};
use atlas_stefan::mass_profile::{Grid, MassProfile};
use atlas_stefan::mild::{battery_3x3, solve_boundary, weak_form_residual, BetaRef, Snapshots};
use atlas_stefan::splitting::{error_certificate, run, EnvelopePair};
use atlas_stefan::verify::{
    compare, faulty_cut, property_suite_with, selfsimilar_boundary, ComparisonReport, PdeReference, SuiteOptions,
    SuiteReport,
};

use crate::config::{
    load, InitSpec, Method, PropsConfig, ResolvedSimulate, SimulateConfig, SolveConfig, SuiteSpec, VerifyConfig,
};
use crate::manifest::RunManifest;
use crate::CliError;

/// Whether the checks a command ran all passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

pub struct Ctx {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub pool: rayon::ThreadPool,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn grid_of(spec: &atlas_stefan::splitting::GridSpec) -> Result<Grid, CliError> {
    spec.build().map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct SplitSummary {
    sigma_end: f64,
    certificate_measured: f64,
    certificate_bound: f64,
    /// The bound plus the `3h sup v` quadrature allowance.
    certificate_allowance: f64,
    sandwich_excess: f64,
    delta: f64,
    steps: usize,
    warnings: Vec<String>,
}

fn write_splitting(pair: &EnvelopePair, dir: &Path) -> Result<SplitSummary, CliError> {
    std::fs::create_dir_all(dir)?;
    pair.write_path_csv(&dir.join("path.csv"))?;
    for k in 0..pair.snapshots.len() {
        pair.write_snapshot_csv(k, &dir.join(format!("snapshot_{k}.csv")))?;
    }
    let rc = &pair.config;
    let gap = pair.gap.iter().copied().fold(0.0, f64::max);
    let cert = error_certificate(pair, rc.grid.x_hi);
    let summary = SplitSummary {
        sigma_end: *pair.sigma_hat.values().last().expect("nonempty path"),
        certificate_measured: gap.max(cert.measured),
        certificate_bound: cert.bound,
        certificate_allowance: cert.bound + 3.0 * rc.grid.h * pair.sup_v,
        sandwich_excess: pair.sandwich_excess,
        delta: rc.delta,
        steps: rc.steps,
        warnings: rc.warnings.clone(),
    };
    write_json(&dir.join("certificate.json"), &summary)?;
    Ok(summary)
}

#[derive(Serialize)]
struct MildSummary {
    sigma_end: f64,
    steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<atlas_stefan::mild::ResidualReport>,
}

fn solve_mild(cfg: &SolveConfig, v0: &MassProfile, dir: &Path) -> Result<MildSummary, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = solve_boundary(v0, cfg.horizon, cfg.mild_steps)?;
    path.write_csv(&dir.join("sigma.csv"), "t,sigma")?;
    let mut times = cfg.snapshot_times.clone();
    times.extend([0.0, cfg.horizon]);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let snaps = Snapshots::from_mild(v0, &path, &times, *v0.grid())?;
    for (k, p) in snaps.profiles.iter().enumerate() {
        p.write_csv(&dir.join(format!("profile_{k}.csv")))?;
    }
    let residual = match &cfg.residual {
        Some(r) => {
            let grid = grid_of(&r.grid)?;
            let ts: Vec<f64> = (0..=r.times).map(|k| k as f64 * cfg.horizon / r.times as f64).collect();
            let snaps = Snapshots::from_mild(v0, &path, &ts, grid)?;
            let end = *path.values().last().expect("nonempty path");
            let rep = weak_form_residual(&snaps, BetaRef::Path(&path), v0, &battery_3x3(end, r.xw, cfg.horizon))?;
            rep.write_json(&dir.join("residual.json"))?;
            Some(rep)
        }
        None => None,
    };
    Ok(MildSummary { sigma_end: *path.values().last().expect("nonempty path"), steps: cfg.mild_steps, residual })
}

pub fn solve(config: &Path, ctx: &Ctx) -> Result<Outcome, CliError> {
    let (cfg, raw): (SolveConfig, _) = load(config)?;
    cfg.validate()?;
    std::fs::create_dir_all(&ctx.out)?;
    let v0 = cfg.v0.profile(grid_of(&cfg.grid)?)?;
    let results: Vec<Result<serde_json::Value, CliError>> = ctx.pool.install(|| {
        cfg.methods
            .par_iter()
            .map(|m| match m {
                Method::Splitting => {
                    let pair = run(&v0, &cfg.split())?;
                    Ok(serde_json::to_value(write_splitting(&pair, &ctx.out.join("splitting"))?)?)
                }
                Method::Mild => Ok(serde_json::to_value(solve_mild(&cfg, &v0, &ctx.out.join("mild"))?)?),
            })
            .collect()
    });
    let mut summary = serde_json::Map::new();
    for (m, r) in cfg.methods.iter().zip(results) {
        let key = serde_json::to_value(m)?.as_str().expect("unit variant").to_string();
        summary.insert(key, r?);
    }
    write_json(&ctx.out.join("summary.json"), &summary)?;
    RunManifest::write("solve", &raw, None, &cfg, &ctx.out)?;
    Ok(Outcome::Pass)
}

fn initial_positions(res: &ResolvedSimulate, run: &SimConfig) -> Result<Vec<f64>, CliError> {
    let mut xs = match (&res.init, &res.v0) {
        (InitSpec::Points { x }, _) => x.clone(),
        (InitSpec::Ppp, Some(d)) => sample_ppp(d, run.n, run.seed, res.x_cov)?,
        (InitSpec::Lattice, Some(d)) => sample_lattice(d, run.n, res.x_cov)?,
        _ => return Err(CliError::Config("v0 is required for generated configurations".into())),
    };
    xs.sort_by(f64::total_cmp);
    Ok(xs)
}

pub fn simulate_cmd(config: &Path, ctx: &Ctx) -> Result<Outcome, CliError> {
    let (cfg, raw): (SimulateConfig, _) = load(config)?;
    let res = cfg.resolve(ctx.seed)?;
    std::fs::create_dir_all(&ctx.out)?;
    let results: Vec<Result<(), CliError>> = ctx.pool.install(|| {
        res.runs
            .par_iter()
            .map(|rc| {
                let dir = ctx.out.join(format!("seed_{}", rc.seed));
                std::fs::create_dir_all(&dir)?;
                let init = initial_positions(&res, rc)?;
                write_samples_csv(&init, &dir.join("initial.csv"))?;
                simulate(&init, rc)?.write_dir(&dir)?;
                Ok(())
            })
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>, _>>()?;
    RunManifest::write("simulate", &raw, ctx.seed, &res, &ctx.out)?;
    Ok(Outcome::Pass)
}

fn run_suite(spec: &SuiteSpec, seed: Option<u64>) -> Result<SuiteReport, CliError> {
    let cut = match spec.mutation.as_deref() {
        None => MassProfile::cut,
        Some("faulty_cut") => faulty_cut,
        Some(other) => return Err(CliError::Config(format!("unknown mutation `{other}`"))),
    };
    Ok(property_suite_with(SuiteOptions {
        seed: seed.unwrap_or(spec.seed),
        trials: spec.trials,
        solver_checks: spec.solver_checks && spec.trials > 0,
        cut,
    }))
}

#[derive(Serialize)]
struct CompareSummary {
    reports: Vec<ComparisonReport>,
    d2_pass_fraction: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<SuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    compare: Option<CompareSummary>,
    oracle: Vec<(f64, f64)>,
    warnings: Vec<String>,
    pass: bool,
}

fn write_comparisons_csv(path: &Path, reports: &[ComparisonReport]) -> Result<(), CliError> {
    let mut s = String::from("n,seed,D1,D2,beta_distance\n");
    for r in reports {
        s += &format!("{},{},{},{},{}\n", r.n, r.seed, r.d1, r.d2, r.beta_distance);
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn verify_cmd(config: &Path, ctx: &Ctx) -> Result<Outcome, CliError> {
    let (cfg, raw): (VerifyConfig, _) = load(config)?;
    std::fs::create_dir_all(&ctx.out)?;
    let mut warnings = Vec::new();
    if cfg.suite.is_none() && cfg.compare.is_none() && cfg.oracle.is_empty() {
        warnings.push("nothing to verify: the config names no suite, comparison or oracle".to_string());
    }
    let suite = cfg.suite.as_ref().map(|s| run_suite(s, ctx.seed)).transpose()?;
    let oracle = cfg
        .oracle
        .iter()
        .map(|&l| Ok((l, selfsimilar_boundary(l)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let compare_summary = match &cfg.compare {
        None => None,
        Some(c) => {
            let base = config.parent().unwrap_or(Path::new("."));
            let records = ctx.pool.install(|| {
                c.records.par_iter().map(|d| PathRecord::read_dir(&base.join(d))).collect::<Result<Vec<_>, _>>()
            })?;
            if records.is_empty() {
                warnings.push("comparison lists no records".to_string());
            }
            let grid = grid_of(&c.reference.grid)?;
            let v0 = c.reference.v0.profile(grid)?;
            let horizon = records.iter().map(|r| r.config.horizon).fold(0.0, f64::max);
            let reports = if records.is_empty() {
                Vec::new()
            } else {
                let sigma = solve_boundary(&v0, horizon, c.reference.steps)?;
                ctx.pool.install(|| {
                    records
                        .par_iter()
                        .map(|rec| {
                            let times: Vec<f64> = rec.checkpoints.iter().map(|(t, _)| *t).collect();
                            let pde = PdeReference::from_mild(&v0, &sigma, &times, grid)?;
                            Ok(compare(rec, &pde, c.r_max)?)
                        })
                        .collect::<Result<Vec<_>, CliError>>()
                })?
            };
            write_comparisons_csv(&ctx.out.join("comparisons.csv"), &reports)?;
            let d2_max = c.d2_max.unwrap_or(f64::INFINITY);
            let hits = reports.iter().filter(|r| r.d2 <= d2_max).count();
            let frac = if reports.is_empty() { 1.0 } else { hits as f64 / reports.len() as f64 };
            Some(CompareSummary { reports, d2_pass_fraction: frac, pass: frac >= c.d2_fraction.unwrap_or(0.0) })
        }
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let pass = suite.as_ref().map_or(true, |s| s.pass) && compare_summary.as_ref().map_or(true, |c| c.pass);
    let report = VerifyReport { suite, compare: compare_summary, oracle, warnings, pass };
    write_json(&ctx.out.join("verify_report.json"), &report)?;
    RunManifest::write("verify", &raw, ctx.seed, &cfg, &ctx.out)?;
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

pub fn props(config: Option<&Path>, ctx: &Ctx) -> Result<Outcome, CliError> {
    let (cfg, raw): (PropsConfig, Vec<u8>) = match config {
        Some(p) => load(p)?,
        None => (PropsConfig::default(), b"{}".to_vec()),
    };
    let trials = cfg.trials.unwrap_or(100);
    let spec = SuiteSpec {
        seed: cfg.seed.unwrap_or(0),
        trials,
        solver_checks: cfg.solver_checks.unwrap_or(trials > 0),
        mutation: None,
    };
    std::fs::create_dir_all(&ctx.out)?;
    let report = run_suite(&spec, ctx.seed)?;
    write_json(&ctx.out.join("props_report.json"), &report)?;
    let mut csv = String::from("check,trials,violations,worst\n");
    for c in &report.checks {
        csv += &format!("{},{},{},{}\n", c.name, c.trials, c.violations, c.worst);
    }
    std::fs::write(ctx.out.join("props_summary.csv"), csv)?;
    RunManifest::write("props", &raw, ctx.seed, &spec, &ctx.out)?;
    Ok(if report.pass { Outcome::Pass } else { Outcome::Fail })
}

//! JSON run configurations. Optional fields are filled in by `resolve`, and
//! the resolved form is what gets echoed into the manifest.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use atlas_stefan::atlas::{coverage_point, min_window, BetaBins, SimConfig};
use atlas_stefan::initial::{InitialDescriptor, V0Model};
use atlas_stefan::splitting::{GridSpec, SplitConfig};
use atlas_stefan::verify::selfsimilar_boundary;

use crate::CliError;

/// Reads a config file, keeping the raw bytes for the digest.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>), CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_slice(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Splitting,
    Mild,
}

fn both() -> Vec<Method> {
    vec![Method::Splitting, Method::Mild]
}

fn mild_steps() -> usize {
    400
}

/// Weak-form check on the mild output: snapshots on `grid` at `times + 1`
/// uniform instants, bumps of half-width `xw` around the final boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualSpec {
    pub grid: GridSpec,
    pub times: usize,
    pub xw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub v0: InitialDescriptor,
    pub delta: f64,
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "both")]
    pub methods: Vec<Method>,
    #[serde(default = "mild_steps")]
    pub mild_steps: usize,
    #[serde(default)]
    pub residual: Option<ResidualSpec>,
}

impl SolveConfig {
    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            t0: self.t0,
            snapshot_times: self.snapshot_times.clone(),
            ..SplitConfig::new(self.delta, self.big_delta, self.horizon, self.grid)
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.v0.validate()?;
        if self.methods.is_empty() {
            return Err(CliError::Config("methods is empty".into()));
        }
        if self.mild_steps == 0 {
            return Err(CliError::Config("mild_steps must be at least 1".into()));
        }
        if let Some(r) = &self.residual {
            if r.times < 2 || !(r.xw > 0.0) {
                return Err(CliError::Config("residual needs times >= 2 and xw > 0".into()));
            }
        }
        self.split().resolve()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Poisson process of intensity `n dv0`.
    Ppp,
    /// Deterministic points `v0^{-1}(i/n)`.
    Lattice,
    /// Explicit positions.
    Points { x: Vec<f64> },
}

fn ppp() -> InitSpec {
    InitSpec::Ppp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub v0: Option<InitialDescriptor>,
    #[serde(default = "ppp")]
    pub init: InitSpec,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default, rename = "N_total")]
    pub n_total: Option<usize>,
    #[serde(default)]
    pub window_width: Option<f64>,
    /// Upper estimate of the boundary over [0, T], used for coverage.
    #[serde(default)]
    pub sigma_upper: Option<f64>,
    #[serde(default)]
    pub checkpoint_times: Option<Vec<f64>>,
    #[serde(default)]
    pub record_stride: Option<usize>,
    #[serde(default)]
    pub beta_bins: Option<BetaBins>,
}

/// Simulation settings with every value explicit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSimulate {
    pub v0: Option<InitialDescriptor>,
    pub init: InitSpec,
    pub sigma_upper: f64,
    pub x_cov: f64,
    /// Expected count of truncated particles that could reach the boundary.
    pub truncation_bound: f64,
    pub runs: Vec<SimConfig>,
}

impl SimulateConfig {
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<ResolvedSimulate, CliError> {
        if let Some(d) = &self.v0 {
            d.validate()?;
        } else if !matches!(self.init, InitSpec::Points { .. }) {
            return Err(CliError::Config("v0 is required unless init is explicit points".into()));
        }
        if let InitSpec::Points { x } = &self.init {
            if x.is_empty() {
                return Err(CliError::Config("init.points is empty".into()));
            }
        }
        if self.n == 0 || !(self.horizon > 0.0) {
            return Err(CliError::Config("need n >= 1 and T > 0".into()));
        }
        let seeds = match seed_override {
            Some(s) => vec![s],
            None if self.seeds.is_empty() => vec![0],
            None => self.seeds.clone(),
        };
        let sigma_upper = match (self.sigma_upper, &self.v0) {
            (Some(s), _) => s,
            // the similarity boundary is monotone, so its end value bounds it
            (None, Some(InitialDescriptor { model: V0Model::Linear { lambda }, .. })) => {
                (selfsimilar_boundary(*lambda)? * self.horizon.sqrt()).max(0.0)
            }
            (None, _) => 0.0,
        };
        let dt = self.dt.unwrap_or(self.horizon / 20000.0);
        let window_width = self.window_width.unwrap_or_else(|| min_window(self.n, dt, self.horizon));
        let x_cov = coverage_point(sigma_upper, window_width);
        let n_total = match (&self.init, self.n_total, &self.v0) {
            (_, Some(k), _) => k,
            (InitSpec::Points { x }, None, _) => x.len(),
            (_, None, Some(d)) => (self.n as f64 * d.v0(x_cov)).ceil() as usize,
            (_, None, None) => unreachable!("checked above"),
        };
        let truncation_bound = match &self.v0 {
            Some(d) if !matches!(self.init, InitSpec::Points { .. }) => {
                atlas_stefan::atlas::truncation_bound(d, self.n, x_cov, sigma_upper, self.horizon)
            }
            _ => 0.0,
        };
        let runs = seeds
            .iter()
            .map(|&seed| SimConfig {
                n: self.n,
                dt,
                horizon: self.horizon,
                n_total,
                window_width,
                seed,
                checkpoint_times: self
                    .checkpoint_times
                    .clone()
                    .unwrap_or_else(|| (0..=4).map(|k| k as f64 * self.horizon / 4.0).collect()),
                record_stride: self.record_stride.unwrap_or(10),
                beta_bins: self.beta_bins.unwrap_or(BetaBins { x_lo: -1.0, x_hi: 1.0, nx: 100, nt: 50 }),
            })
            .collect::<Vec<_>>();
        for r in &runs {
            r.resolve()?;
        }
        Ok(ResolvedSimulate { v0: self.v0.clone(), init: self.init.clone(), sigma_upper, x_cov, truncation_bound, runs })
    }
}

fn suite_trials() -> usize {
    100
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "suite_trials")]
    pub trials: usize,
    #[serde(default = "yes")]
    pub solver_checks: bool,
    /// Swap in a deliberately broken cut (`"faulty_cut"`) to confirm the
    /// suite notices.
    #[serde(default)]
    pub mutation: Option<String>,
}

/// Continuum reference for particle records: the mild solution from `v0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub v0: InitialDescriptor,
    pub grid: GridSpec,
    #[serde(default = "mild_steps")]
    pub steps: usize,
}

fn r_max() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    /// Directories written by `simulate` (one per seed), relative to the
    /// config file.
    pub records: Vec<PathBuf>,
    pub reference: ReferenceSpec,
    #[serde(default = "r_max")]
    pub r_max: u32,
    /// Pass when at least `d2_fraction` of the records have `D2 <= d2_max`.
    #[serde(default)]
    pub d2_max: Option<f64>,
    #[serde(default)]
    pub d2_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub suite: Option<SuiteSpec>,
    #[serde(default)]
    pub compare: Option<CompareSpec>,
    /// λ values at which to report the self-similar coefficient.
    #[serde(default)]
    pub oracle: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropsConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub solver_checks: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(body: &str) -> SimulateConfig {
        serde_json::from_str(body).unwrap()
    }

    #[test]
    fn simulate_defaults_are_filled_in() {
        let c = sim(r#"{"v0": {"model": {"kind": "linear", "lambda": 1.0}}, "n": 100, "T": 0.04}"#);
        let r = c.resolve(None).unwrap();
        assert_eq!(r.runs.len(), 1);
        let run = &r.runs[0];
        assert_eq!(run.seed, 0);
        assert!((run.dt - 0.04 / 20000.0).abs() < 1e-18);
        assert_eq!(run.checkpoint_times.len(), 5);
        assert_eq!(run.window_width, min_window(100, run.dt, 0.04));
        // supercooled case: the boundary moves right by a(1)·√T
        assert!((r.sigma_upper - 0.6120031809624808 * 0.2).abs() < 1e-9);
        assert!(run.n_total >= 100);
    }

    #[test]
    fn seed_override_replaces_the_list() {
        let c = sim(r#"{"v0": {"model": {"kind": "linear", "lambda": 4.0}}, "n": 10, "T": 0.01, "seeds": [1, 2]}"#);
        assert_eq!(c.resolve(None).unwrap().runs.len(), 2);
        let r = c.resolve(Some(9)).unwrap();
        assert_eq!(r.runs.iter().map(|x| x.seed).collect::<Vec<_>>(), vec![9]);
        assert_eq!(r.sigma_upper, 0.0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(serde_json::from_str::<SimulateConfig>(r#"{"n": 10, "T": 1, "nn": 3}"#).is_err());
        assert!(sim(r#"{"n": 10, "T": 0.1}"#).resolve(None).is_err());
        assert!(sim(r#"{"init": {"kind": "points", "x": []}, "n": 1, "T": 0.1}"#).resolve(None).is_err());
        assert!(sim(r#"{"init": {"kind": "points", "x": [0]}, "n": 0, "T": 0.1}"#).resolve(None).is_err());
    }

    #[test]
    fn explicit_points_set_the_particle_count() {
        let c = sim(r#"{"init": {"kind": "points", "x": [0, 0.5, 1]}, "n": 3, "T": 0.01}"#);
        let r = c.resolve(None).unwrap();
        assert_eq!(r.runs[0].n_total, 3);
        assert_eq!(r.truncation_bound, 0.0);
    }
}

//! Initial data: descriptors for v0 and generators of the particle
//! configuration (Poisson point process or deterministic lattice), plus an
//! empirical check of the exponential tail bound on unit-interval counts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, usage, Error, Result};
use crate::mass_profile::{Grid, MassProfile, TailModel};
use crate::rng::{substream, PPP_STREAM};

/// Cumulative mass function of the initial measure, zero on (-∞, 0].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum V0Model {
    /// `lambda * x`
    Linear { lambda: f64 },
    /// `c * x^p`
    Power { c: f64, p: f64 },
    /// Piecewise linear through `(x[i], v[i])` starting at the origin,
    /// continued linearly past the last point.
    Table { x: Vec<f64>, v: Vec<f64> },
}

impl V0Model {
    pub fn validate(&self) -> Result<()> {
        match self {
            V0Model::Linear { lambda } if !(*lambda > 0.0 && lambda.is_finite()) => {
                config(format!("linear model needs lambda > 0, got {lambda}"))
            }
            V0Model::Power { c, p } if !(*c > 0.0 && *p > 0.0 && c.is_finite() && p.is_finite()) => {
                config(format!("power model needs c > 0 and p > 0, got c={c}, p={p}"))
            }
            V0Model::Table { x, v } => {
                if x.len() != v.len() || x.len() < 2 {
                    return config("table needs at least two (x, v) pairs of equal length");
                }
                if x[0] != 0.0 || v[0] != 0.0 {
                    return config("table must start at (0, 0)");
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return config("table x must be strictly increasing");
                }
                if v.windows(2).any(|w| !(w[1] >= w[0])) || v.iter().any(|y| !y.is_finite()) {
                    return config("table v must be finite and nondecreasing");
                }
                let n = x.len();
                if !(v[n - 1] > v[n - 2]) {
                    return config("table must end with a positive slope so that the mass diverges");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            V0Model::Linear { lambda } => lambda * x,
            V0Model::Power { c, p } => c * x.powf(*p),
            V0Model::Table { x: xs, v } => {
                let n = xs.len();
                let k = xs.partition_point(|s| *s <= x).clamp(1, n - 1);
                let (x0, x1, v0, v1) = (xs[k - 1], xs[k], v[k - 1], v[k]);
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Generalized inverse `inf{x : v0(x) >= m}`, exact for every model.
    pub fn inverse(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return 0.0;
        }
        match self {
            V0Model::Linear { lambda } => m / lambda,
            V0Model::Power { c, p } => (m / c).powf(1.0 / p),
            V0Model::Table { x, v } => {
                let n = x.len();
                let k = v.partition_point(|s| *s < m).clamp(1, n - 1);
                let (x0, x1, v0, v1) = (x[k - 1], x[k], v[k - 1], v[k]);
                x0 + (m - v0) / (v1 - v0) * (x1 - x0)
            }
        }
    }

    fn tail(&self) -> TailModel {
        match self {
            V0Model::Linear { lambda } => TailModel::Linear { intercept: 0.0, slope: *lambda },
            V0Model::Power { c, p } => TailModel::Power { coef: *c, exponent: *p },
            V0Model::Table { x, v } => {
                let n = x.len();
                let slope = (v[n - 1] - v[n - 2]) / (x[n - 1] - x[n - 2]);
                TailModel::Linear { intercept: v[n - 1] - slope * x[n - 1], slope }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDescriptor {
    pub model: V0Model,
    /// Declared λ0 with `v0(x) >= λ0 x`.
    #[serde(default)]
    pub lambda0_floor: Option<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl InitialDescriptor {
    pub fn new(model: V0Model) -> Self {
        Self { model, lambda0_floor: None, metadata: BTreeMap::new() }
    }

    pub fn linear(lambda: f64) -> Self {
        Self { lambda0_floor: Some(lambda), ..Self::new(V0Model::Linear { lambda }) }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Some(l) = self.lambda0_floor {
            if !(l > 0.0) {
                return config(format!("lambda0_floor must be positive, got {l}"));
            }
        }
        Ok(())
    }

    pub fn v0(&self, x: f64) -> f64 {
        self.model.eval(x)
    }

    pub fn inverse(&self, m: f64) -> f64 {
        self.model.inverse(m)
    }

    /// v0 on `grid` with the model's own tail. A table must end inside the grid.
    pub fn profile(&self, grid: Grid) -> Result<MassProfile> {
        self.validate()?;
        if let V0Model::Table { x, .. } = &self.model {
            let last = *x.last().unwrap();
            if grid.x_hi < last {
                return usage(format!("grid ends at {} before the last table point {last}", grid.x_hi));
            }
        }
        MassProfile::from_fn(grid, self.model.tail(), |x| self.v0(x))
    }

    /// Whether `v0(x) >= λ0 x` at every nonnegative grid node. True when no
    /// floor is declared.
    pub fn floor_holds(&self, grid: &Grid) -> bool {
        let Some(l) = self.lambda0_floor else { return true };
        grid.nodes().filter(|x| *x >= 0.0).all(|x| self.v0(x) >= l * x * (1.0 - 1e-12))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let d: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        d.validate()?;
        Ok(d)
    }
}

/// Atoms of a PPP with intensity `n dv0`, all positions up to `x_cov`,
/// as `v0^{-1}(Γ_i / n)` with Γ the arrival times of a unit-rate process.
pub fn sample_ppp(desc: &InitialDescriptor, n: usize, seed: u64, x_cov: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    desc.validate()?;
    let expected = desc.v0(x_cov) * n as f64;
    if !(expected <= 2e8) {
        return Err(Error::Overflow(format!("about {expected:.3e} atoms below {x_cov}, more than the 2e8 cap")));
    }
    let mut rng = substream(seed, PPP_STREAM);
    let mut gamma = 0.0;
    let mut out = Vec::new();
    loop {
        gamma += rng.sample::<f64, _>(Exp1);
        let x = desc.inverse(gamma / n as f64);
        if !x.is_finite() {
            return Err(Error::Config(format!("inversion of v0 failed at mass {}", gamma / n as f64)));
        }
        if x > x_cov {
            return Ok(out);
        }
        out.push(x);
    }
}

/// `x_i = f(i/n)` for `i < count`.
pub fn sample_deterministic(f: impl Fn(f64) -> f64, n: usize, count: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    if f(0.0) != 0.0 {
        return config(format!("lattice map must send 0 to 0, got {}", f(0.0)));
    }
    let xs: Vec<f64> = (0..count).map(|i| f(i as f64 / n as f64)).collect();
    if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().any(|x| !x.is_finite()) {
        return config("lattice map must be finite and strictly increasing");
    }
    Ok(xs)
}

/// Lattice `x_i = v0^{-1}(i/n)` up to `x_cov`.
pub fn sample_lattice(desc: &InitialDescriptor, n: usize, x_cov: f64) -> Result<Vec<f64>> {
    desc.validate()?;
    let count = (desc.v0(x_cov) * n as f64).floor() as usize + 1;
    let mut xs = sample_deterministic(|u| desc.inverse(u), n, count)?;
    xs.retain(|x| *x <= x_cov);
    Ok(xs)
}

pub fn write_samples_csv(xs: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x")?;
    for x in xs {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<(f64,)>().map(|r| Ok(r?.0)).collect()
}

/// Constants of the exponential tail bound built from a per-unit-interval
/// intensity bound `v0(j+1) - v0(j) <= α (1 + j^m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConstants {
    pub alpha: f64,
    pub m: f64,
    /// `e^α - 1`
    pub a: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub c: f64,
}

/// `α` is the smallest constant valid on `j = 0..=j_max`; `C = e^{αa}`, `c = α`.
pub fn prop01_constants(desc: &InitialDescriptor, m: f64, j_max: usize) -> TailConstants {
    let alpha = (0..=j_max)
        .map(|j| {
            let j = j as f64;
            (desc.v0(j + 1.0) - desc.v0(j)) / (1.0 + j.powf(m))
        })
        .fold(0.0, f64::max);
    let a = alpha.exp_m1();
    TailConstants { alpha, m, a, big_c: (alpha * a).exp(), c: alpha }
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize) -> (f64, f64) {
    let z = 1.959963984540054;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailCheck {
    pub n_list: Vec<usize>,
    pub m: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub c: f64,
    pub trials: usize,
    /// Intervals `[j, j+1]` for `j = 0..=j_max`.
    pub j_max: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub n: usize,
    pub j: usize,
    pub y: f64,
    pub exceed: usize,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub trials: usize,
    pub cells: Vec<TailCell>,
    pub pass: bool,
}

impl TailReport {
    pub fn failures(&self) -> impl Iterator<Item = &TailCell> {
        self.cells.iter().filter(|c| !c.pass)
    }
}

/// Empirical `P(μ^n_0[j, j+1] / (1 + j^m) > y)` against `C e^{-cy}`. A cell
/// fails when the lower Wilson bound of the exceedance frequency lies above
/// the bound. `sampler(n, seed)` returns the atoms of one configuration.
pub fn check_tail_bound(
    sampler: impl Fn(usize, u64) -> Result<Vec<f64>>,
    spec: &TailCheck,
) -> Result<TailReport> {
    if spec.trials < 100 {
        return usage(format!("tail check needs at least 100 trials, got {}", spec.trials));
    }
    if !(spec.big_c > 0.0 && spec.c > 0.0) {
        return usage("tail constants C and c must be positive");
    }
    // y values around the point where the bound drops below one
    let y0 = spec.big_c.ln().max(0.0) / spec.c;
    let ys: Vec<f64> = [-0.5, 0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0]
        .iter()
        .map(|k| (y0 + k / spec.c).max(0.0))
        .collect();
    let mut cells = Vec::new();
    for (ni, &n) in spec.n_list.iter().enumerate() {
        let nj = spec.j_max + 1;
        let mut ratios = vec![Vec::with_capacity(spec.trials); nj];
        for trial in 0..spec.trials {
            let seed = spec.seed.wrapping_add((ni as u64) << 32).wrapping_add(trial as u64);
            let xs = sampler(n, seed)?;
            let mut counts = vec![0usize; nj];
            for &x in &xs {
                for (j, c) in counts.iter_mut().enumerate() {
                    if x >= j as f64 && x <= j as f64 + 1.0 {
                        *c += 1;
                    }
                }
            }
            for (j, c) in counts.iter().enumerate() {
                ratios[j].push(*c as f64 / n as f64 / (1.0 + (j as f64).powf(spec.m)));
            }
        }
        for (j, rs) in ratios.iter().enumerate() {
            for &y in &ys {
                let exceed = rs.iter().filter(|r| **r > y).count();
                let (wilson_lo, wilson_hi) = wilson(exceed, spec.trials);
                let bound = spec.big_c * (-spec.c * y).exp();
                cells.push(TailCell { n, j, y, exceed, wilson_lo, wilson_hi, bound, pass: wilson_lo <= bound });
            }
        }
    }
    let pass = cells.iter().all(|c| c.pass);
    Ok(TailReport { trials: spec.trials, cells, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_in(xs: &[f64], a: f64, b: f64) -> usize {
        xs.iter().filter(|x| **x >= a && **x <= b).count()
    }

    #[test]
    fn models_invert_exactly() {
        let models = [
            V0Model::Linear { lambda: 2.0 },
            V0Model::Power { c: 1.0, p: 2.0 },
            V0Model::Table { x: vec![0.0, 1.0, 2.0], v: vec![0.0, 0.5, 3.0] },
        ];
        for m in &models {
            m.validate().unwrap();
            for x in [0.1, 0.7, 1.5, 4.0] {
                assert!((m.inverse(m.eval(x)) - x).abs() < 1e-12, "{m:?} {x}");
            }
            assert_eq!(m.eval(-1.0), 0.0);
        }
        assert!(V0Model::Table { x: vec![0.0, 1.0], v: vec![0.0, 0.0] }.validate().is_err());
        assert!(V0Model::Table { x: vec![0.0, 1.0, 0.5], v: vec![0.0, 1.0, 2.0] }.validate().is_err());
        assert!(V0Model::Linear { lambda: -1.0 }.validate().is_err());
    }

    #[test]
    fn descriptor_json_round_trip_and_rejects_unknown_keys() {
        let d = InitialDescriptor::linear(2.0);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<InitialDescriptor>(&s).unwrap(), d);
        let bad = r#"{"model": {"kind": "linear", "lambda": 2.0, "lamda": 1.0}}"#;
        assert!(serde_json::from_str::<InitialDescriptor>(bad).is_err());
        let p: InitialDescriptor = serde_json::from_str(r#"{"model": {"kind": "power", "c": 1, "p": 2}}"#).unwrap();
        assert_eq!(p.v0(3.0), 9.0);
    }

    #[test]
    fn floor_check_and_profile() {
        let g = Grid::new(-1.0, 3.0, 0.01).unwrap();
        let d = InitialDescriptor::linear(2.0);
        assert!(d.floor_holds(&g));
        let mut p = InitialDescriptor::new(V0Model::Power { c: 1.0, p: 2.0 });
        p.lambda0_floor = Some(0.5);
        assert!(!p.floor_holds(&g));
        let v = p.profile(g).unwrap();
        assert!((v.eval(2.0) - 4.0).abs() < 1e-12);
        assert!((v.eval(4.0) - 16.0).abs() < 1e-12);
        let t = InitialDescriptor::new(V0Model::Table { x: vec![0.0, 5.0], v: vec![0.0, 1.0] });
        assert!(t.profile(g).is_err());
    }

    #[test]
    fn single_atom_uses_first_arrival() {
        let d = InitialDescriptor::linear(2.0);
        let xs = sample_ppp(&d, 1, 11, 1e9).unwrap_err();
        assert!(matches!(xs, Error::Overflow(_)));
        let xs = sample_ppp(&d, 1, 11, 50.0).unwrap();
        let g1: f64 = substream(11, PPP_STREAM).sample(Exp1);
        assert_eq!(xs[0], g1 / 2.0);
        assert!(xs.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(sample_ppp(&d, 1, 11, 50.0).unwrap(), xs);
    }

    #[test]
    fn ppp_counts_have_poisson_mean() {
        let d = InitialDescriptor::linear(2.0);
        let n = 50;
        let seeds = 200;
        let total: usize = (0..seeds).map(|s| count_in(&sample_ppp(&d, n, s, 1.5).unwrap(), 0.0, 1.0)).sum();
        let mean = total as f64 / seeds as f64;
        assert!((mean - 100.0).abs() < 3.0 * 100f64.sqrt(), "{mean}");
        // power model: count in [0, b] is Poisson(n b^2)
        let p = InitialDescriptor::new(V0Model::Power { c: 1.0, p: 2.0 });
        let total: usize = (0..seeds).map(|s| count_in(&sample_ppp(&p, n, s, 1.0).unwrap(), 0.0, 0.8)).sum();
        let mean = total as f64 / seeds as f64;
        let want = n as f64 * 0.64;
        assert!((mean - want).abs() < 4.0 * (want / seeds as f64).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn ppp_increments_are_uncorrelated() {
        let d = InitialDescriptor::linear(2.0);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for s in 0..400 {
            let xs = sample_ppp(&d, 20, s, 1.0).unwrap();
            a.push(count_in(&xs, 0.0, 0.5) as f64);
            b.push(xs.iter().filter(|x| **x > 0.5).count() as f64);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
        let corr = cov / (20.0 * 20.0f64).sqrt();
        assert!(corr.abs() < 3.0 / 20.0, "{corr}");
    }

    #[test]
    fn lattice_counts_within_one_over_n() {
        let xs = sample_deterministic(|u| u, 10, 5).unwrap();
        assert_eq!(xs, vec![0.0, 0.1, 0.2, 0.3, 0.4]);
        assert!(sample_deterministic(|u| 1.0 - u, 10, 5).is_err());
        assert!(sample_deterministic(|u| (u - 0.5).powi(2), 10, 5).is_err());
        let d = InitialDescriptor::new(V0Model::Power { c: 1.0, p: 2.0 });
        for n in [7, 50, 300] {
            let xs = sample_lattice(&d, n, 4.0).unwrap();
            for j in 0..4 {
                let mu = count_in(&xs, 0.0, j as f64) as f64 / n as f64;
                assert!((mu - d.v0(j as f64)).abs() <= 1.0 / n as f64 + 1e-12, "{n} {j} {mu}");
            }
        }
    }

    #[test]
    fn tail_constants_for_density_two() {
        let k = prop01_constants(&InitialDescriptor::linear(2.0), 0.0, 20);
        assert_eq!(k.alpha, 1.0);
        assert!((k.a - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        assert!((k.big_c - k.a.exp()).abs() < 1e-12);
    }

    #[test]
    fn tail_check_passes_ppp_and_lattice_and_catches_clumps() {
        let d = InitialDescriptor::linear(2.0);
        let k = prop01_constants(&d, 0.0, 20);
        let spec = TailCheck { n_list: vec![1, 4, 16], m: 0.0, big_c: k.big_c, c: k.c, trials: 200, j_max: 3, seed: 5 };
        let r = check_tail_bound(|n, s| sample_ppp(&d, n, s, 5.0), &spec).unwrap();
        assert!(r.pass, "{:?}", r.failures().next());
        let r = check_tail_bound(|n, _| sample_lattice(&d, n, 5.0), &spec).unwrap();
        assert!(r.pass);
        let clumpy = |n: usize, s: u64| {
            let mut xs = sample_ppp(&d, n, s, 5.0)?;
            if s % 10 == 0 {
                xs.extend(std::iter::repeat_n(0.5, 40 * n));
                xs.sort_by(f64::total_cmp);
            }
            Ok(xs)
        };
        let r = check_tail_bound(clumpy, &spec).unwrap();
        assert!(!r.pass);
        assert!(check_tail_bound(clumpy, &TailCheck { trials: 50, ..spec }).is_err());
    }

    #[test]
    fn wilson_interval_brackets_the_rate() {
        let (lo, hi) = wilson(10, 100);
        assert!(lo < 0.1 && hi > 0.1);
        assert!((lo - 0.0552).abs() < 1e-3 && (hi - 0.1744).abs() < 1e-3);
        assert!(wilson(0, 100).0 < 1e-15);
    }

    #[test]
    fn samples_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.csv");
        let xs = sample_ppp(&InitialDescriptor::linear(2.0), 30, 3, 1.0).unwrap();
        write_samples_csv(&xs, &f).unwrap();
        assert_eq!(read_samples_csv(&f).unwrap(), xs);
    }
}

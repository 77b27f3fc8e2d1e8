//! Upper and lower splitting schemes that bracket the solution of the
//! free boundary problem in the ≼ order.
//!
//! The upper scheme alternates heat flow with removal of the leftmost δ of
//! integral, `v⁺_n = C_δ S_δ v⁺_{n-1}`; the lower scheme removes a band at
//! depth Δ instead, `v⁻_n = C_{Δ,δ} S_δ v⁻_{n-1}`, and carries a slack ladder
//! `ℓ_n`. The location of each upper cut is the discrete free boundary σ̂.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryPath;
use crate::error::{config, domain, Error, Result};
use crate::heat::{smooth, KernelSpec};
use crate::mass_profile::{Grid, MassProfile};

/// Grid window given by its end points and spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub h: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.x_lo, self.x_hi, self.h)
    }
}

/// Window `[-0.5 - 8√T, x_needed + 8√T]`, where `x_needed` is the point by
/// which the initial profile has accumulated twice the mass absorbed up to T.
pub fn default_window(x_needed: f64, horizon: f64, h: f64) -> GridSpec {
    let pad = 8.0 * horizon.sqrt();
    GridSpec { x_lo: -0.5 - pad, x_hi: x_needed + pad, h }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub delta: f64,
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    /// Length of the initial period with full ladder increments; default 2δ.
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub grid: GridSpec,
    /// Times at which both envelopes are kept; the final time is always kept.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

/// Validated configuration with δ adjusted so that T/δ is an integer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSplit {
    pub delta: f64,
    pub big_delta: f64,
    pub t0: f64,
    pub horizon: f64,
    pub steps: usize,
    pub grid: Grid,
    pub snapshot_steps: Vec<usize>,
    pub warnings: Vec<String>,
}

impl SplitConfig {
    pub fn new(delta: f64, big_delta: f64, horizon: f64, grid: GridSpec) -> Self {
        Self { delta, big_delta, t0: None, horizon, grid, snapshot_times: Vec::new() }
    }

    pub fn resolve(&self) -> Result<ResolvedSplit> {
        let positive = [("delta", self.delta), ("Delta", self.big_delta), ("T", self.horizon)];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                return config(format!("{name} must be positive and finite, got {x}"));
            }
        }
        if self.delta > self.horizon {
            return config(format!("delta {} exceeds T {}", self.delta, self.horizon));
        }
        let grid = self.grid.build().map_err(|e| Error::Config(e.to_string()))?;
        let steps = (self.horizon / self.delta).round().max(1.0) as usize;
        let delta = self.horizon / steps as f64;
        let t0 = self.t0.unwrap_or(2.0 * delta);
        if !(t0 >= 0.0) {
            return config(format!("t0 must be nonnegative, got {t0}"));
        }
        let mut warnings = Vec::new();
        if (delta - self.delta).abs() > 1e-12 * self.delta {
            warnings.push(format!("delta adjusted to {delta} so that T/delta = {steps}"));
        }
        if delta >= self.big_delta / 24.0 {
            warnings.push(format!(
                "delta {delta} is not below Delta/24 = {}; the sandwich bound is checked empirically",
                self.big_delta / 24.0
            ));
        }
        let leak = self.horizon * (-self.big_delta.powi(5) / delta).exp();
        if leak > self.big_delta {
            warnings.push(format!("ladder slack T e^(-Delta^5/delta) = {leak:.3e} exceeds Delta"));
        }
        let mut snapshot_steps: Vec<usize> = self
            .snapshot_times
            .iter()
            .map(|t| (t / delta).round().clamp(0.0, steps as f64) as usize)
            .collect();
        snapshot_steps.push(steps);
        snapshot_steps.sort_unstable();
        snapshot_steps.dedup();
        Ok(ResolvedSplit {
            delta,
            big_delta: self.big_delta,
            t0,
            horizon: self.horizon,
            steps,
            grid,
            snapshot_steps,
            warnings,
        })
    }
}

/// Both envelopes at one recorded step.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub upper: MassProfile,
    pub lower: MassProfile,
    pub ladder: f64,
}

#[derive(Debug, Clone)]
pub struct EnvelopePair {
    pub config: ResolvedSplit,
    pub snapshots: Vec<Snapshot>,
    /// `ℓ_n` for n = 0..=steps.
    pub ladder: Vec<f64>,
    /// Upper-scheme cut locations at t = nδ (the value at 0 is the initial
    /// support edge).
    pub sigma_hat: BoundaryPath,
    /// `sup_r (V_lower - V_upper)(r) + ℓ_n` for every step.
    pub gap: Vec<f64>,
    /// Largest excess of `V_lower - V_upper` over Δ across all steps; the
    /// sandwich `upper ≼ lower mod Δ` needs this at or below quadrature level.
    pub sandwich_excess: f64,
    /// Largest `sup v` over the run, for quadrature tolerances.
    pub sup_v: f64,
}

/// One upper step; returns the new profile and its cut location.
pub fn step_upper(v: &MassProfile, delta: f64) -> Result<(MassProfile, f64)> {
    let s = smooth(v, delta)?;
    check_left_room(&s, delta)?;
    let gamma = s.gamma_quantile(delta)?;
    Ok((s.cut(delta)?, gamma))
}

/// One lower step n >= 1; returns the new profile and the ladder increment.
pub fn step_lower(v: &MassProfile, big_delta: f64, delta: f64, n: usize, t0: f64) -> Result<(MassProfile, f64)> {
    if n == 0 {
        return domain("lower steps are numbered from 1");
    }
    let s = smooth(v, delta)?;
    check_left_room(&s, delta)?;
    let early = ((n - 1) as f64) * delta < t0 - 1e-9 * delta;
    let inc = if early { delta } else { delta * (-big_delta.powi(5) / delta).exp() };
    Ok((s.cut_band(big_delta, delta)?, inc))
}

/// The smoothed profile must not have spread into the last kernel radius at
/// the left edge, or mass would silently leave the window.
fn check_left_room(v: &MassProfile, delta: f64) -> Result<()> {
    let g = v.grid();
    let room = KernelSpec::new(delta)?.radius;
    let floor = 1e-13 * v.sup();
    if let Some(i) = v.values().iter().position(|x| *x > floor) {
        if g.node(i) < g.x_lo + room {
            return Err(Error::Overflow(format!(
                "profile support reached the left window edge at x = {}; widen the grid",
                g.node(i)
            )));
        }
    }
    Ok(())
}

/// Runs both schemes to T.
pub fn run(v0: &MassProfile, cfg: &SplitConfig) -> Result<EnvelopePair> {
    let rc = cfg.resolve()?;
    run_resolved(v0, rc)
}

pub fn run_resolved(v0: &MassProfile, rc: ResolvedSplit) -> Result<EnvelopePair> {
    let grid = rc.grid;
    let v0 = if v0.grid().same_as(&grid) { v0.clone() } else { v0.resample(grid)? };
    if !v0.is_nonnegative(0.0) {
        return domain("initial profile must be nonnegative");
    }
    let mut upper = v0.clone();
    let mut lower = v0.clone();
    let mut ladder = vec![0.0];
    let mut times = vec![0.0];
    let mut sigma = vec![boundary_from_profile(&v0, None).unwrap_or(0.0)];
    let mut gap = vec![0.0];
    let mut sandwich_excess = f64::NEG_INFINITY;
    let mut sup_v = v0.sup();
    let mut snapshots = Vec::new();
    let mut next_snap = rc.snapshot_steps.iter().peekable();
    if next_snap.peek() == Some(&&0) {
        snapshots.push(Snapshot { step: 0, t: 0.0, upper: upper.clone(), lower: lower.clone(), ladder: 0.0 });
        next_snap.next();
    }
    for n in 1..=rc.steps {
        let (u, gamma) = step_upper(&upper, rc.delta)?;
        let (l, inc) = step_lower(&lower, rc.big_delta, rc.delta, n, rc.t0)?;
        upper = u;
        lower = l;
        let ell = ladder[n - 1] + inc;
        ladder.push(ell);
        times.push(n as f64 * rc.delta);
        sigma.push(gamma);
        let diff = lower
            .cumulative()
            .iter()
            .zip(upper.cumulative())
            .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
        gap.push(diff.max(0.0) + ell);
        sandwich_excess = sandwich_excess.max(diff - rc.big_delta);
        sup_v = sup_v.max(upper.sup()).max(lower.sup());
        if !(upper.values().iter().chain(lower.values()).all(|x| x.is_finite())) {
            return Err(Error::Numerical(format!("non-finite profile at step {n}")));
        }
        if next_snap.peek() == Some(&&n) {
            snapshots.push(Snapshot {
                step: n,
                t: n as f64 * rc.delta,
                upper: upper.clone(),
                lower: lower.clone(),
                ladder: ell,
            });
            next_snap.next();
        }
    }
    Ok(EnvelopePair {
        sigma_hat: BoundaryPath::new(times, sigma)?,
        config: rc,
        snapshots,
        ladder,
        gap,
        sandwich_excess,
        sup_v,
    })
}

/// Left edge of the support: the first node above `eps`, moved back into
/// the preceding cell by linear interpolation. `None` when `v <= eps` on the grid.
pub fn boundary_from_profile(v: &MassProfile, eps: Option<f64>) -> Option<f64> {
    let eps = eps.unwrap_or(10.0 * f64::EPSILON * v.sup());
    let vals = v.values();
    let k = vals.iter().position(|x| *x > eps)?;
    let g = v.grid();
    if k == 0 {
        return Some(g.x_lo);
    }
    let (a, b) = (vals[k - 1], vals[k]);
    let f = ((eps - a) / (b - a)).clamp(0.0, 1.0);
    Some(g.node(k - 1) + f * g.h)
}

/// Measured bracket width next to the analytic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `sup_n (V_lower(r) - V_upper(r) + ℓ_n)` over the recorded snapshots.
    pub measured: f64,
    /// `Δ + t0 + δ + T e^{-Δ⁵/δ}`.
    pub bound: f64,
}

pub fn analytic_bound(rc: &ResolvedSplit) -> f64 {
    rc.big_delta + rc.t0 + rc.delta + rc.horizon * (-rc.big_delta.powi(5) / rc.delta).exp()
}

pub fn error_certificate(pair: &EnvelopePair, r: f64) -> Certificate {
    let measured = pair
        .snapshots
        .iter()
        .map(|s| (s.lower.integral_left(r) - s.upper.integral_left(r)).max(0.0) + s.ladder)
        .fold(0.0, f64::max);
    Certificate { measured, bound: analytic_bound(&pair.config) }
}

impl EnvelopePair {
    /// Half-step readout `S_{δ/2} v⁺` of a snapshot: the upper profile taken
    /// midway through its next heat phase, which centres the O(√δ) boundary
    /// layer left by the cut.
    pub fn readout(&self, k: usize) -> Result<MassProfile> {
        smooth(&self.snapshots[k].upper, 0.5 * self.config.delta)
    }

    /// Final-time snapshot.
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("final snapshot is always recorded")
    }

    /// Writes `t,sigma_hat,ladder,mass_absorbed`.
    pub fn write_path_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,sigma_hat,ladder,mass_absorbed")?;
        let d = self.config.delta;
        for (n, (t, s)) in self.sigma_hat.times().iter().zip(self.sigma_hat.values()).enumerate() {
            writeln!(w, "{t},{s},{},{}", self.ladder[n], n as f64 * d)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `x,v_upper,v_lower` for one snapshot.
    pub fn write_snapshot_csv(&self, k: usize, path: &Path) -> Result<()> {
        let s = &self.snapshots[k];
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "x,v_upper,v_lower")?;
        for (i, x) in s.upper.grid().nodes().enumerate() {
            writeln!(w, "{x},{},{}", s.upper.values()[i], s.lower.values()[i])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass_profile::{precede_mod, TailModel};

    fn linear(lambda: f64, h: f64) -> MassProfile {
        MassProfile::linear(Grid::new(-2.0, 3.0, h).unwrap(), lambda).unwrap()
    }

    #[test]
    fn boundary_from_profile_examples() {
        let g = Grid::new(-1.0, 2.0, 1e-3).unwrap();
        let v = MassProfile::from_fn(g, TailModel::Linear { intercept: -0.6, slope: 2.0 }, |x| {
            2.0 * (x - 0.3).max(0.0)
        })
        .unwrap();
        assert!((boundary_from_profile(&v, None).unwrap() - 0.3).abs() < 1e-3);
        let z = MassProfile::new(g, vec![0.0; g.count], TailModel::Zero).unwrap();
        assert_eq!(boundary_from_profile(&z, None), None);
    }

    #[test]
    fn upper_step_removes_delta() {
        let v = linear(2.0, 1e-3);
        let (u, gamma) = step_upper(&v, 1e-3).unwrap();
        let s = smooth(&v, 1e-3).unwrap();
        assert!((s.grid_mass() - u.grid_mass() - 1e-3).abs() < 1e-12);
        assert!((s.integral_left(gamma) - 1e-3).abs() < 1e-12);
        assert!(gamma > 0.0 && gamma < 0.1);
    }

    #[test]
    fn lower_ladder_increments() {
        let v = linear(2.0, 1e-3);
        let (delta, big) = (1e-3, 0.1);
        let (_, i1) = step_lower(&v, big, delta, 1, 2.0 * delta).unwrap();
        let (_, i2) = step_lower(&v, big, delta, 2, 2.0 * delta).unwrap();
        let (_, i3) = step_lower(&v, big, delta, 3, 2.0 * delta).unwrap();
        assert_eq!(i1, delta);
        assert_eq!(i2, delta);
        assert!((i3 - delta * (-1e-5f64 / 1e-3).exp()).abs() < 1e-18);
        assert!(step_lower(&v, big, delta, 0, 0.0).is_err());
    }

    #[test]
    fn bound_formula() {
        let cfg = SplitConfig {
            t0: Some(0.01),
            ..SplitConfig::new(1e-3, 0.1, 0.25, GridSpec { x_lo: -1.0, x_hi: 1.0, h: 0.01 })
        };
        let rc = cfg.resolve().unwrap();
        let want = 0.111 + 0.25 * (-0.01f64).exp();
        assert!((analytic_bound(&rc) - want).abs() < 1e-12);
        assert!(!rc.warnings.is_empty());
    }

    #[test]
    fn config_rejects_bad_values() {
        let g = GridSpec { x_lo: -1.0, x_hi: 1.0, h: 0.01 };
        assert!(SplitConfig::new(0.0, 0.1, 0.25, g).resolve().is_err());
        assert!(SplitConfig::new(1e-3, 0.1, -1.0, g).resolve().is_err());
        assert!(SplitConfig::new(1.0, 0.1, 0.25, g).resolve().is_err());
        let rc = SplitConfig::new(0.0011, 0.1, 0.25, g).resolve().unwrap();
        assert_eq!(rc.steps, 227);
        assert!((rc.delta * 227.0 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn stationary_case_stays_near_zero() {
        let cfg = SplitConfig::new(2e-3, 0.1, 0.05, GridSpec { x_lo: -3.0, x_hi: 3.0, h: 2e-3 });
        let pair = run(&linear(2.0, 2e-3).resample(cfg.grid.build().unwrap()).unwrap(), &cfg).unwrap();
        assert!(pair.sigma_hat.sup_abs() < 0.03);
        assert!(pair.sandwich_excess < 3.0 * 2e-3 * pair.sup_v);
        // cut location never passes γ^{4δ} of the previous profile
        let last = pair.last();
        let (_, g) = step_upper(&last.upper, pair.config.delta).unwrap();
        assert!(g <= last.upper.gamma_quantile(4.0 * pair.config.delta).unwrap() + 2e-3);
    }

    #[test]
    fn narrow_window_overflows() {
        let g = GridSpec { x_lo: -0.05, x_hi: 2.0, h: 1e-3 };
        let cfg = SplitConfig::new(1e-3, 0.1, 0.05, g);
        let v0 = MassProfile::linear(g.build().unwrap(), 2.0).unwrap();
        assert!(matches!(run(&v0, &cfg), Err(Error::Overflow(_))));
    }

    #[test]
    fn upper_is_below_lower_mod_delta() {
        let cfg = SplitConfig::new(2e-3, 0.1, 0.02, GridSpec { x_lo: -3.0, x_hi: 3.0, h: 2e-3 });
        let v0 = MassProfile::linear(cfg.grid.build().unwrap(), 1.0).unwrap();
        let pair = run(&v0, &cfg).unwrap();
        let s = pair.last();
        let c = precede_mod(&s.upper, &s.lower, 0.1, None).unwrap();
        assert!(c.holds, "{c:?}");
    }
}

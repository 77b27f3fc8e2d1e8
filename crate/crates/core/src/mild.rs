//! Boundary-integral solver for the mild form
//! `v(x,t) = S_t v0(x) - ∫_0^t p_{t-s}(σ_s - x) ds`, plus residual checks of
//! the weak form and of complementarity.
//!
//! The boundary is marched in time: at each step the history of earlier
//! boundary pieces is frozen, and the new endpoint σ_m solves
//! `v(σ_m, t_m) = 0` with the last piece running linearly from σ_{m-1} to
//! σ_m. Because every history piece is final when it is used, a second
//! (outer) correction pass would reproduce the same path.

use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryHistogramMeasure, BoundaryPath};
use crate::error::{domain, usage, Error, Result};
use crate::heat::{potential_between, segment_potential, HeatFlow};
use crate::mass_profile::{Grid, MassProfile};
use crate::special::GaussRule;
use crate::splitting::boundary_from_profile;

/// Mild-form reconstruction from a given boundary. May be negative when the
/// boundary is not the true one.
pub fn duhamel_profile(v0: &MassProfile, sigma: &BoundaryPath, t: f64, grid: Grid) -> Result<MassProfile> {
    if !(t > 0.0) {
        return domain(format!("profile time must be positive, got {t}"));
    }
    if !sigma.covers(0.0, t) {
        return usage(format!("boundary path does not cover [0, {t}]"));
    }
    let flow = HeatFlow::new(v0);
    let mut values = Vec::with_capacity(grid.count);
    for x in grid.nodes() {
        values.push(flow.eval(t, x)? - potential_between(sigma, 0.0, t, t, x));
    }
    MassProfile::signed(grid, values, v0.tail().smooth(t))
}

/// Mild form restarted from the profile at τ: `S_{t-τ} v_τ - ∫_τ^t p_{t-s}(σ_s - x) ds`.
pub fn restart_profile(v_tau: &MassProfile, sigma: &BoundaryPath, tau: f64, t: f64, grid: Grid) -> Result<MassProfile> {
    if !(tau < t) {
        return domain(format!("restart needs tau < t, got {tau} and {t}"));
    }
    if !sigma.covers(tau, t) {
        return usage(format!("boundary path does not cover [{tau}, {t}]"));
    }
    let flow = HeatFlow::new(v_tau);
    let mut values = Vec::with_capacity(grid.count);
    for x in grid.nodes() {
        values.push(flow.eval(t - tau, x)? - potential_between(sigma, tau, t, t, x));
    }
    MassProfile::signed(grid, values, v_tau.tail().smooth(t - tau))
}

/// Marches the boundary up to `horizon` through the `steps` equal step
/// times. Since the boundary starts like `a√t`, the quadratic times
/// `T (i/steps)²` are marched as well; on them the path is close to linear
/// and early chords do not cut into the empty region. The returned path
/// carries both sets of nodes.
pub fn solve_boundary(v0: &MassProfile, horizon: f64, steps: usize) -> Result<BoundaryPath> {
    if !(horizon > 0.0) || steps == 0 {
        return domain(format!("need T > 0 and at least one step, got T={horizon}, steps={steps}"));
    }
    let flow = HeatFlow::new(v0);
    let dt = horizon / steps as f64;
    let s0 = boundary_from_profile(v0, None).unwrap_or(0.0);
    let mut targets: Vec<f64> = (1..=steps).map(|m| m as f64 * dt).collect();
    let j = steps as f64;
    targets.extend((1..steps).map(|i| horizon * (i as f64 / j).powi(2)));
    targets.sort_by(f64::total_cmp);
    targets.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * dt);
    let mut times = vec![0.0];
    let mut sig = vec![s0];
    for tm in targets {
        let m = times.len();
        let (tp, sp) = (times[m - 1], sig[m - 1]);
        let residual = |x: f64| -> Result<f64> {
            let mut hist = 0.0;
            for k in 1..m {
                hist += segment_potential(times[k - 1], sig[k - 1], times[k], sig[k], tm, x);
            }
            Ok(flow.eval(tm, x)? - hist - segment_potential(tp, sp, tm, x, tm, x))
        };
        let root = bracketed_secant(residual, sp, 5.0 * (tm - tp).sqrt(), m)?;
        times.push(tm);
        sig.push(root);
    }
    BoundaryPath::new(times, sig)
}

/// Root of `f` near `guess`: bracket `guess ± width` (doubled up to four
/// times), then Illinois-modified regula falsi.
fn bracketed_secant(f: impl Fn(f64) -> Result<f64>, guess: f64, width: f64, step: usize) -> Result<f64> {
    let mut w = width;
    let (mut a, mut b, mut fa, mut fb);
    let mut tries = 0;
    loop {
        a = guess - w;
        b = guess + w;
        fa = f(a)?;
        fb = f(b)?;
        if fa * fb <= 0.0 {
            break;
        }
        tries += 1;
        if tries > 4 {
            return Err(Error::Numerical(format!(
                "no sign change for the boundary at step {step} within ±{w}"
            )));
        }
        w *= 2.0;
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)?;
        if !fc.is_finite() {
            return Err(Error::Numerical(format!("non-finite residual at step {step}")));
        }
        if fc == 0.0 || (b - a).abs() < 1e-14 {
            return Ok(c);
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
            b = c;
            fb = fc;
            side = 0;
        } else {
            b = c;
            fb = fc;
            side += 1;
            if side >= 1 {
                fa *= 0.5;
            }
        }
        if (b - a).abs() < 1e-13 * (1.0 + b.abs()) {
            return Ok(b);
        }
    }
    Ok(b)
}

/// Profiles on a shared grid at increasing times starting from 0.
#[derive(Debug, Clone)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub profiles: Vec<MassProfile>,
}

impl Snapshots {
    pub fn new(times: Vec<f64>, profiles: Vec<MassProfile>) -> Result<Self> {
        if times.len() != profiles.len() || times.len() < 2 {
            return usage("snapshots need at least two matching times and profiles");
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return usage("snapshot times must start at 0 and increase");
        }
        for p in &profiles[1..] {
            p.grid().check_same(profiles[0].grid())?;
        }
        Ok(Self { times, profiles })
    }

    /// Mild-form profiles from `sigma` at `times` (the first must be 0).
    pub fn from_mild(v0: &MassProfile, sigma: &BoundaryPath, times: &[f64], grid: Grid) -> Result<Self> {
        let mut profiles = Vec::with_capacity(times.len());
        for &t in times {
            profiles.push(if t == 0.0 { v0.resample(grid)? } else { duhamel_profile(v0, sigma, t, grid)? });
        }
        Self::new(times.to_vec(), profiles)
    }

    pub fn grid(&self) -> &Grid {
        self.profiles[0].grid()
    }
}

/// Boundary measure in either of its two representations.
#[derive(Debug, Clone, Copy)]
pub enum BetaRef<'a> {
    /// `δ_{σ(t)} dt`
    Path(&'a BoundaryPath),
    Histogram(&'a BoundaryHistogramMeasure),
}

/// Product test function `b((x - xc)/xw) b((t - tc)/tw)` with the C² bump
/// `b(z) = (1 - z²)³` on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestBump {
    pub xc: f64,
    pub xw: f64,
    pub tc: f64,
    pub tw: f64,
}

fn bump(z: f64) -> (f64, f64, f64) {
    if z.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - z * z;
    (q * q * q, -6.0 * z * q * q, -6.0 * q * q + 24.0 * z * z * q)
}

impl TestBump {
    pub fn phi(&self, x: f64, t: f64) -> f64 {
        bump((x - self.xc) / self.xw).0 * bump((t - self.tc) / self.tw).0
    }

    /// `∂_t φ + ½ ∂_xx φ`
    pub fn generator(&self, x: f64, t: f64) -> f64 {
        let (bx, _, bxx) = bump((x - self.xc) / self.xw);
        let (bt, btd, _) = bump((t - self.tc) / self.tw);
        bx * btd / self.tw + 0.5 * bxx / (self.xw * self.xw) * bt
    }
}

/// 3×3 lattice of bumps around `xc` (spacing and half-width `xw`), with time
/// centres 0, T/3, 2T/3 and half-width T/3. The first row straddles t = 0
/// and so exercises the initial-condition term.
pub fn battery_3x3(xc: f64, xw: f64, horizon: f64) -> Vec<TestBump> {
    let tw = horizon / 3.0;
    let mut out = Vec::with_capacity(9);
    for k in 0..3 {
        for i in 0..3 {
            out.push(TestBump { xc: xc + (i as f64 - 1.0) * xw, xw, tc: k as f64 * tw, tw });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub weak_form_max: f64,
    pub complementarity: f64,
    pub test_count: usize,
    /// Largest of the three terms of the identity over the battery; the
    /// unit for relative residual thresholds.
    pub scale: f64,
}

/// Simpson weights on the snapshot times when they are uniform with an even
/// number of intervals, trapezoid weights otherwise.
fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len() - 1;
    let dt = times[1] - times[0];
    let uniform = times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() < 1e-9 * dt);
    let mut w = vec![0.0; n + 1];
    if uniform && n % 2 == 0 {
        for (k, wk) in w.iter_mut().enumerate() {
            *wk = dt / 3.0 * if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        }
    } else {
        for k in 0..n {
            let d = times[k + 1] - times[k];
            w[k] += 0.5 * d;
            w[k + 1] += 0.5 * d;
        }
    }
    w
}

fn beta_integral(beta: BetaRef<'_>, f: impl Fn(f64, f64) -> f64, t_end: f64) -> f64 {
    match beta {
        BetaRef::Path(p) => {
            let rule = GaussRule::new(8);
            let times = p.times();
            let mut acc = 0.0;
            for w in times.windows(2) {
                let (a, b) = (w[0], w[1].min(t_end));
                if b > a {
                    acc += rule.integrate(a, b, |t| f(p.eval(t), t));
                }
            }
            acc
        }
        BetaRef::Histogram(h) => {
            let mut acc = 0.0;
            for k in 0..h.nt() {
                let tm = 0.5 * (h.t_edges[k] + h.t_edges[k + 1]);
                for i in 0..h.nx() {
                    let m = h.mass[k][i];
                    if m != 0.0 {
                        acc += m * f(0.5 * (h.x_edges[i] + h.x_edges[i + 1]), tm);
                    }
                }
            }
            acc
        }
    }
}

/// `∫_a^b g v dx` for the piecewise-linear interpolant of `v`, cell by
/// cell, exact when `g` is a polynomial of degree at most 6 on each cell.
fn pair_integral(rule: &GaussRule, v: &MassProfile, a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
    let grid = v.grid();
    let first = ((a - grid.x_lo) / grid.h).floor().max(0.0) as usize;
    let mut acc = 0.0;
    let mut i = first;
    while i + 1 < grid.count {
        let (lo, hi) = (grid.node(i).max(a), grid.node(i + 1).min(b));
        if lo >= b {
            break;
        }
        if hi > lo {
            acc += rule.integrate(lo, hi, |x| g(x) * v.eval(x));
        }
        i += 1;
    }
    acc
}

/// Defect of `-∫⟨∂_tφ + ½∂_xxφ, v⟩dt = ⟨φ(·,0), v0⟩ - ∫φ dβ` over a battery,
/// together with the complementarity integral `∫ |v(σ_t, t)| dt`.
pub fn weak_form_residual(
    snaps: &Snapshots,
    beta: BetaRef<'_>,
    v0: &MassProfile,
    battery: &[TestBump],
) -> Result<ResidualReport> {
    let grid = *snaps.grid();
    let t_end = *snaps.times.last().unwrap();
    for b in battery {
        if b.xc - b.xw < grid.x_lo || b.xc + b.xw > grid.x_hi {
            return usage(format!("test bump {b:?} leaves the grid [{}, {}]", grid.x_lo, grid.x_hi));
        }
        if b.tc + b.tw > t_end + 1e-12 || b.tc - b.tw < -b.tw {
            return usage(format!("test bump {b:?} leaves the time window [0, {t_end}]"));
        }
    }
    let wt = time_weights(&snaps.times);
    let rule = GaussRule::new(4);
    let v0 = v0.resample(grid)?;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for b in battery {
        let mut bulk = 0.0;
        for (k, p) in snaps.profiles.iter().enumerate() {
            let t = snaps.times[k];
            bulk += wt[k] * pair_integral(&rule, p, b.xc - b.xw, b.xc + b.xw, |x| b.generator(x, t));
        }
        let init = pair_integral(&rule, &v0, b.xc - b.xw, b.xc + b.xw, |x| b.phi(x, 0.0));
        let absorbed = beta_integral(beta, |x, t| b.phi(x, t), t_end);
        let defect = -bulk - init + absorbed;
        worst = worst.max(defect.abs());
        scale = scale.max(bulk.abs()).max(init.abs()).max(absorbed.abs());
    }
    let complementarity = match beta {
        BetaRef::Path(p) => complementarity(snaps, p),
        BetaRef::Histogram(_) => f64::NAN,
    };
    Ok(ResidualReport { weak_form_max: worst, complementarity, test_count: battery.len(), scale })
}

/// `∫_0^T |v(σ_t, t)| dt` on the snapshot times.
pub fn complementarity(snaps: &Snapshots, sigma: &BoundaryPath) -> f64 {
    let wt = time_weights(&snaps.times);
    snaps
        .profiles
        .iter()
        .zip(&snaps.times)
        .zip(&wt)
        .map(|((p, t), w)| w * p.eval(sigma.eval(*t)).abs())
        .sum()
}

/// Reads `t,sigma` written by [`BoundaryPath::write_csv`].
pub fn read_boundary_csv(path: &std::path::Path) -> Result<BoundaryPath> {
    BoundaryPath::read_csv(path)
}

impl ResidualReport {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(-2.0, 3.0, 2e-3).unwrap()
    }

    #[test]
    fn stationary_boundary_stays_at_zero() {
        let v0 = MassProfile::linear(grid(), 2.0).unwrap();
        let path = solve_boundary(&v0, 0.25, 100).unwrap();
        assert!(path.sup_abs() < 1e-9, "{}", path.sup_abs());
        let v = duhamel_profile(&v0, &path, 0.25, grid()).unwrap();
        for (x, y) in grid().nodes().zip(v.values()) {
            assert!((y - 2.0 * x.max(0.0)).abs() < 1e-4, "{x} {y}");
        }
    }

    #[test]
    fn restart_agrees_with_direct() {
        let v0 = MassProfile::linear(grid(), 2.0).unwrap();
        let path = solve_boundary(&v0, 0.25, 50).unwrap();
        let mid = duhamel_profile(&v0, &path, 0.125, grid()).unwrap();
        let a = restart_profile(&mid, &path, 0.125, 0.25, grid()).unwrap();
        let b = duhamel_profile(&v0, &path, 0.25, grid()).unwrap();
        let worst = a.values().iter().zip(b.values()).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn shifted_boundaries_show_up_in_the_profile() {
        let v0 = MassProfile::linear(grid(), 2.0).unwrap();
        // absorbing inside the support leaves mass at the boundary
        let right = BoundaryPath::new(vec![0.0, 0.25], vec![0.1, 0.1]).unwrap();
        let v = duhamel_profile(&v0, &right, 0.25, grid()).unwrap();
        assert!(v.eval(0.1) > 0.1, "{}", v.eval(0.1));
        // absorbing where there is no mass drives the profile negative
        let left = BoundaryPath::new(vec![0.0, 0.25], vec![-0.1, -0.1]).unwrap();
        let v = duhamel_profile(&v0, &left, 0.25, grid()).unwrap();
        assert!(v.eval(-0.1) < -0.05, "{}", v.eval(-0.1));
        let still = BoundaryPath::new(vec![0.0, 0.25], vec![0.0, 0.0]).unwrap();
        let a = restart_profile(&v0, &still, 0.0, 0.25, grid()).unwrap();
        let b = duhamel_profile(&v0, &still, 0.25, grid()).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn errors_on_bad_arguments() {
        let v0 = MassProfile::linear(grid(), 2.0).unwrap();
        let path = BoundaryPath::new(vec![0.0, 0.1], vec![0.0, 0.0]).unwrap();
        assert!(duhamel_profile(&v0, &path, 0.0, grid()).is_err());
        assert!(duhamel_profile(&v0, &path, 0.2, grid()).is_err());
        assert!(restart_profile(&v0, &path, 0.1, 0.1, grid()).is_err());
        assert!(solve_boundary(&v0, 0.1, 0).is_err());
    }

    #[test]
    fn exact_stationary_pair_has_tiny_residual() {
        let g = Grid::new(-1.0, 2.0, 1e-3).unwrap();
        let v0 = MassProfile::linear(g, 2.0).unwrap();
        let times: Vec<f64> = (0..=60).map(|k| k as f64 * 0.25 / 60.0).collect();
        let profiles = times.iter().map(|_| v0.clone()).collect();
        let snaps = Snapshots::new(times.clone(), profiles).unwrap();
        let path = BoundaryPath::new(times.clone(), vec![0.0; times.len()]).unwrap();
        let battery = battery_3x3(0.0, 0.3, 0.25);
        let r = weak_form_residual(&snaps, BetaRef::Path(&path), &v0, &battery).unwrap();
        assert!(r.weak_form_max < 1e-4, "{r:?}");
        assert_eq!(r.test_count, 9);
        assert_eq!(r.complementarity, 0.0);
        // a bump away from everything has zero residual
        let quiet = [TestBump { xc: -0.6, xw: 0.3, tc: 0.125, tw: 0.1 }];
        let r = weak_form_residual(&snaps, BetaRef::Path(&path), &v0, &quiet).unwrap();
        assert!(r.weak_form_max < 1e-15);
        let wide = [TestBump { xc: 1.9, xw: 0.3, tc: 0.125, tw: 0.1 }];
        assert!(weak_form_residual(&snaps, BetaRef::Path(&path), &v0, &wide).is_err());
    }

    #[test]
    fn wrong_boundary_is_detected() {
        let g = Grid::new(-1.0, 2.0, 1e-3).unwrap();
        let v0 = MassProfile::linear(g, 2.0).unwrap();
        let times: Vec<f64> = (0..=60).map(|k| k as f64 * 0.25 / 60.0).collect();
        let profiles = times.iter().map(|_| v0.clone()).collect();
        let snaps = Snapshots::new(times.clone(), profiles).unwrap();
        let shifted = BoundaryPath::new(times.clone(), vec![0.1; times.len()]).unwrap();
        let r = weak_form_residual(&snaps, BetaRef::Path(&shifted), &v0, &battery_3x3(0.0, 0.3, 0.25)).unwrap();
        assert!(r.weak_form_max > 1e-2, "{r:?}");
        assert!(r.complementarity > 0.04);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let b = TestBump { xc: 0.1, xw: 0.4, tc: 0.2, tw: 0.1 };
        let (x, t, e) = (0.23, 0.17, 1e-5);
        let dt = (b.phi(x, t + e) - b.phi(x, t - e)) / (2.0 * e);
        let e2 = 1e-4;
        let dxx = (b.phi(x + e2, t) - 2.0 * b.phi(x, t) + b.phi(x - e2, t)) / (e2 * e2);
        let g = b.generator(x, t);
        assert!((g - (dt + 0.5 * dxx)).abs() < 1e-6 * g.abs().max(1.0), "{g} {dt} {dxx}");
    }
}

//! Cumulative mass profiles on a uniform grid.
//!
//! A profile stores node values of a function `v` that vanishes left of the
//! grid, is the piecewise-linear interpolant of the node values on the grid,
//! and follows an analytic [`TailModel`] right of it. Every integral computed
//! here is exact for that interpolant, which is what lets the cut operators
//! remove exactly the requested amount of integral.

mod flat;
mod io;

pub use flat::{d_flat_r, d_star, DStar, Measure};
pub(crate) use flat::flat_from_masses;

use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Error, Result};

/// Uniform grid `x_lo, x_lo + h, ..., x_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub h: f64,
    pub count: usize,
}

impl Grid {
    /// Grid from its end points; `x_hi` is snapped to the nearest node.
    pub fn new(x_lo: f64, x_hi: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !x_lo.is_finite() || !x_hi.is_finite() {
            return usage(format!("bad grid x_lo={x_lo} x_hi={x_hi} h={h}"));
        }
        let cells = ((x_hi - x_lo) / h).round();
        if cells < 1.0 {
            return usage("grid needs at least two nodes");
        }
        Self::with_count(x_lo, h, cells as usize + 1)
    }

    pub fn with_count(x_lo: f64, h: f64, count: usize) -> Result<Self> {
        if count < 2 || !(h > 0.0) {
            return usage(format!("bad grid count={count} h={h}"));
        }
        Ok(Self { x_lo, x_hi: x_lo + (count - 1) as f64 * h, h, count })
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.node(i))
    }

    /// Nearest node index, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.x_lo) / self.h).round();
        k.clamp(0.0, (self.count - 1) as f64) as usize
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.count == other.count
            && (self.x_lo - other.x_lo).abs() <= 1e-12 * (1.0 + self.x_lo.abs())
            && (self.h - other.h).abs() <= 1e-12 * self.h
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            usage(format!("grid mismatch: {self:?} vs {other:?}"))
        }
    }
}

/// Behaviour of a profile right of the last grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailModel {
    Zero,
    /// `intercept + slope * x`
    Linear { intercept: f64, slope: f64 },
    /// `coef * x^exponent` for x > 0.
    Power { coef: f64, exponent: f64 },
    /// `sum_k coeffs[k] * x^k`; produced by smoothing integer power tails.
    Polynomial { coeffs: Vec<f64> },
}

impl TailModel {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TailModel::Zero => 0.0,
            TailModel::Linear { intercept, slope } => intercept + slope * x,
            TailModel::Power { coef, exponent } => coef * x.max(0.0).powf(*exponent),
            TailModel::Polynomial { coeffs } => horner(coeffs, x),
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match self {
            TailModel::Zero => 0.0,
            TailModel::Linear { slope, .. } => *slope,
            TailModel::Power { coef, exponent } => {
                if x <= 0.0 {
                    0.0
                } else {
                    coef * exponent * x.powf(exponent - 1.0)
                }
            }
            TailModel::Polynomial { coeffs } => {
                let d: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
                horner(&d, x)
            }
        }
    }

    /// Exact integral over [a, b].
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            TailModel::Zero => 0.0,
            TailModel::Linear { intercept, slope } => {
                intercept * (b - a) + 0.5 * slope * (b * b - a * a)
            }
            TailModel::Power { coef, exponent } => {
                let p1 = exponent + 1.0;
                coef * (b.max(0.0).powf(p1) - a.max(0.0).powf(p1)) / p1
            }
            TailModel::Polynomial { coeffs } => {
                let prim: Vec<f64> = std::iter::once(0.0)
                    .chain(coeffs.iter().enumerate().map(|(k, c)| c / (k + 1) as f64))
                    .collect();
                horner(&prim, b) - horner(&prim, a)
            }
        }
    }

    /// Heat flow for time `t` applied to the tail function on the whole line.
    ///
    /// Polynomials (and integer powers) are smoothed exactly through Gaussian
    /// moments. A non-integer power tail is returned unchanged; its smoothing
    /// correction is of order `t * x^(p-2)`, negligible where tails are used.
    pub fn smooth(&self, t: f64) -> TailModel {
        let poly = match self {
            TailModel::Zero => return TailModel::Zero,
            TailModel::Linear { .. } => return self.clone(),
            TailModel::Power { coef, exponent } => {
                if exponent.fract() != 0.0 || *exponent < 0.0 {
                    return self.clone();
                }
                let p = *exponent as usize;
                let mut c = vec![0.0; p + 1];
                c[p] = *coef;
                c
            }
            TailModel::Polynomial { coeffs } => coeffs.clone(),
        };
        TailModel::Polynomial { coeffs: smooth_polynomial(&poly, t) }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Coefficients of `E[q(x + sqrt(t) Z)]`.
fn smooth_polynomial(coeffs: &[f64], t: f64) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.len()];
    for (k, &ck) in coeffs.iter().enumerate() {
        // E[(x+sZ)^k] = sum over even m of C(k,m) x^(k-m) s^m (m-1)!!
        let mut m = 0;
        while m <= k {
            let moment = double_factorial_odd(m) * t.powi(m as i32 / 2);
            out[k - m] += ck * binomial(k, m) * moment;
            m += 2;
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn double_factorial_odd(m: usize) -> f64 {
    // (m-1)!! for even m; 1 for m = 0
    (1..m).step_by(2).fold(1.0, |acc, j| acc * j as f64)
}

/// Node values plus tail, with cached cumulative integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct MassProfile {
    grid: Grid,
    values: Vec<f64>,
    tail: TailModel,
    cum: Vec<f64>,
}

/// Outcome of an order comparison `u ≼ v mod ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderCertificate {
    pub holds: bool,
    /// Node where `V_v - V_u - ℓ` is largest.
    pub worst_r: f64,
    pub worst_gap: f64,
}

/// Empirical measure with equal atom weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    atoms: Vec<f64>,
    weight: f64,
}

impl PointMeasure {
    pub fn new(mut atoms: Vec<f64>, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return domain(format!("atom weight must be positive, got {weight}"));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return domain("non-finite atom");
        }
        atoms.sort_by(f64::total_cmp);
        Ok(Self { atoms, weight })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Mass of `(-inf, x]`.
    pub fn mass_left(&self, x: f64) -> f64 {
        self.atoms.partition_point(|a| *a <= x) as f64 * self.weight
    }
}

impl MassProfile {
    /// Nonnegative profile; the tail must join the last node continuously.
    pub fn new(grid: Grid, values: Vec<f64>, tail: TailModel) -> Result<Self> {
        let p = Self::signed(grid, values, tail)?;
        if let Some(v) = p.values.iter().find(|v| **v < 0.0) {
            return domain(format!("negative profile value {v}"));
        }
        let last = *p.values.last().unwrap();
        let joint = p.tail.eval(grid.x_hi);
        if (joint - last).abs() > 1e-6 * (1.0 + last.abs()) {
            return domain(format!("tail value {joint} does not match last node {last}"));
        }
        Ok(p)
    }

    /// Profile without the sign and tail checks, for diagnostics such as a
    /// Duhamel reconstruction from a trial boundary.
    pub fn signed(grid: Grid, values: Vec<f64>, tail: TailModel) -> Result<Self> {
        if values.len() != grid.count {
            return usage(format!("{} values for a grid of {} nodes", values.len(), grid.count));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite profile value".into()));
        }
        let mut cum = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * grid.h * (w[0] + w[1]);
            cum.push(acc);
        }
        Ok(Self { grid, values, tail, cum })
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(grid: Grid, tail: TailModel, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values, tail)
    }

    /// `lambda * x_+` with the matching linear tail.
    pub fn linear(grid: Grid, lambda: f64) -> Result<Self> {
        let tail = TailModel::Linear { intercept: 0.0, slope: lambda };
        Self::from_fn(grid, tail, |x| lambda * x.max(0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> &TailModel {
        &self.tail
    }

    /// Cumulative integrals from `x_lo` to each node.
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.values.iter().all(|v| *v >= -tol)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g.x_lo {
            return 0.0;
        }
        if x >= g.x_hi {
            return if x == g.x_hi { self.values[g.count - 1] } else { self.tail.eval(x) };
        }
        let s = (x - g.x_lo) / g.h;
        let k = (s.floor() as usize).min(g.count - 2);
        let f = s - k as f64;
        self.values[k] + f * (self.values[k + 1] - self.values[k])
    }

    /// `∫_{-inf}^{r} v`.
    pub fn integral_left(&self, r: f64) -> f64 {
        let g = &self.grid;
        if r <= g.x_lo {
            return 0.0;
        }
        if r >= g.x_hi {
            return self.cum[g.count - 1] + self.tail.integral(g.x_hi, r);
        }
        let s = (r - g.x_lo) / g.h;
        let k = (s.floor() as usize).min(g.count - 2);
        let t = r - g.node(k);
        let slope = (self.values[k + 1] - self.values[k]) / g.h;
        self.cum[k] + t * self.values[k] + 0.5 * slope * t * t
    }

    /// Integral over the grid only.
    pub fn grid_mass(&self) -> f64 {
        self.cum[self.grid.count - 1]
    }

    /// Leftmost `a` with `∫_{-inf}^a v = delta`.
    ///
    /// For `delta = 0` this is the left grid edge.
    pub fn gamma_quantile(&self, delta: f64) -> Result<f64> {
        if !(delta >= 0.0) {
            return domain(format!("quantile level must be nonnegative, got {delta}"));
        }
        if delta == 0.0 {
            return Ok(self.grid.x_lo);
        }
        let k = self.cell_of_level(delta)?;
        let h = self.grid.h;
        let rem = delta - self.cum[k];
        let a = self.values[k];
        let s = (self.values[k + 1] - a) / h;
        let disc = (a * a + 2.0 * s * rem).max(0.0);
        let denom = a + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * rem / denom } else { h };
        Ok(self.grid.node(k) + t.clamp(0.0, h))
    }

    /// Cell `k` with `cum[k] < level <= cum[k+1]`.
    fn cell_of_level(&self, level: f64) -> Result<usize> {
        let i = self.cum.partition_point(|c| *c < level);
        if i >= self.cum.len() {
            return Err(Error::Overflow(format!(
                "level {level} exceeds the grid integral {}",
                self.grid_mass()
            )));
        }
        Ok(i.max(1) - 1)
    }

    /// Node `j` and its new value such that zeroing the nodes before `j` and
    /// resetting node `j` removes exactly `m` of integral.
    fn split(&self, m: f64) -> Result<(usize, f64)> {
        if m <= 0.0 {
            return Ok((0, self.values[0]));
        }
        let h = self.grid.h;
        let k = self.cell_of_level(m)?;
        let w = (self.cum[k + 1] - m) / h - 0.5 * self.values[k + 1];
        if w >= 0.0 {
            return Ok((k, w));
        }
        if k + 2 >= self.grid.count {
            return Err(Error::Overflow(format!("level {m} reaches the right grid edge")));
        }
        let w = (self.cum[k + 2] - m) / h - 0.5 * self.values[k + 2];
        Ok((k + 1, w.max(0.0)))
    }

    /// `C_δ v`: remove the leftmost `delta` units of integral.
    pub fn cut(&self, delta: f64) -> Result<MassProfile> {
        if !(delta >= 0.0) {
            return domain(format!("cut size must be nonnegative, got {delta}"));
        }
        let (j, w) = self.split(delta)?;
        let mut values = self.values.clone();
        values[..j].iter_mut().for_each(|v| *v = 0.0);
        values[j] = w.max(0.0);
        Self::signed(self.grid, values, self.tail.clone())
    }

    /// `C_{Δ,δ} v`: keep the first `big_delta` of integral, remove the next
    /// `delta`, keep the rest.
    pub fn cut_band(&self, big_delta: f64, delta: f64) -> Result<MassProfile> {
        if !(big_delta >= 0.0 && delta >= 0.0) {
            return domain(format!("band needs nonnegative depth and width, got {big_delta}, {delta}"));
        }
        let (j1, w1) = self.split(big_delta)?;
        let (j2, w2) = self.split(big_delta + delta)?;
        // v - C_Δ v + C_{Δ+δ} v, node by node
        let mut values = self.values.clone();
        for (i, v) in values.iter_mut().enumerate() {
            let keep_left = if i < j1 { *v } else if i == j1 { *v - w1 } else { 0.0 };
            let keep_right = if i < j2 { 0.0 } else if i == j2 { w2 } else { *v };
            *v = (keep_left + keep_right).max(0.0);
        }
        Self::signed(self.grid, values, self.tail.clone())
    }

    /// Same function on another grid; values beyond this grid come from the tail.
    pub fn resample(&self, grid: Grid) -> Result<MassProfile> {
        let values = grid.nodes().map(|x| self.eval(x)).collect();
        Self::signed(grid, values, self.tail.clone())
    }
}

/// Tests `u ≼ v mod ℓ`, i.e. `V_v(r) <= V_u(r) + ℓ` at every node.
///
/// Without an explicit tolerance the quadrature tolerance
/// `3h * max(sup u, sup v)` is used.
pub fn precede_mod(u: &MassProfile, v: &MassProfile, ell: f64, tol: Option<f64>) -> Result<OrderCertificate> {
    u.grid.check_same(&v.grid)?;
    if !(ell >= 0.0) {
        return domain(format!("order slack must be nonnegative, got {ell}"));
    }
    let tol = tol.unwrap_or(3.0 * u.grid.h * u.sup().max(v.sup()));
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_i = 0;
    for (i, (cu, cv)) in u.cum.iter().zip(&v.cum).enumerate() {
        let gap = cv - cu - ell;
        if gap > worst_gap {
            worst_gap = gap;
            worst_i = i;
        }
    }
    Ok(OrderCertificate { holds: worst_gap <= tol, worst_r: u.grid.node(worst_i), worst_gap })
}

/// Right-continuous CDF of a point measure, sampled on `grid`.
pub fn cdf_of_points(mu: &PointMeasure, grid: Grid) -> Result<MassProfile> {
    let values: Vec<f64> = grid.nodes().map(|x| mu.mass_left(x)).collect();
    let last = *values.last().unwrap();
    MassProfile::new(grid, values, TailModel::Linear { intercept: last, slope: 0.0 })
}

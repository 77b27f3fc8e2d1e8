//! Bounded-Lipschitz distance restricted to test functions vanishing right of r.
//!
//! Both measures are reduced to signed masses `w_j` on grid nodes. For a fixed
//! split of the unit norm budget into a sup bound `A` and a Lipschitz bound
//! `B`, the optimal test function solves a chain LP
//!
//! ```text
//! max Σ f_j w_j   s.t.  |f_j| <= A,  |f_{j+1} - f_j| <= B h,  f = 0 from r on
//! ```
//!
//! which is solved exactly with a slope-trick dynamic program over concave
//! piecewise-linear value functions. The optimal value is concave in `B`, so
//! the outer maximisation over `A + B = 1` is a golden-section search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Grid, MassProfile, PointMeasure};
use crate::error::{domain, usage, Result};

/// A measure that can be reduced to node masses.
#[derive(Debug, Clone, Copy)]
pub enum Measure<'a> {
    /// The measure whose distribution function is the profile.
    Profile(&'a MassProfile),
    Points(&'a PointMeasure),
}

impl<'a> From<&'a MassProfile> for Measure<'a> {
    fn from(v: &'a MassProfile) -> Self {
        Measure::Profile(v)
    }
}

impl<'a> From<&'a PointMeasure> for Measure<'a> {
    fn from(p: &'a PointMeasure) -> Self {
        Measure::Points(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DStar {
    pub value: f64,
    /// Contribution bound of the dropped scales, `2^-r_max`.
    pub truncation: f64,
}

/// Node masses on `grid`.
///
/// A profile's cell mass is split evenly between the two end nodes (nearest
/// node binning of a uniform density); atoms go to their nearest node, which
/// moves each unit of mass by at most `h/2`.
pub(crate) fn node_masses(m: Measure<'_>, grid: &Grid) -> Result<Vec<f64>> {
    let mut w = vec![0.0; grid.count];
    match m {
        Measure::Profile(v) => {
            v.grid().check_same(grid)?;
            let vals = v.values();
            w[0] = vals[0];
            for j in 0..grid.count - 1 {
                let half = 0.5 * (vals[j + 1] - vals[j]);
                w[j] += half;
                w[j + 1] += half;
            }
        }
        Measure::Points(p) => {
            for &a in p.atoms() {
                if a > grid.x_hi + 0.5 * grid.h {
                    break;
                }
                w[grid.nearest(a)] += p.weight();
            }
        }
    }
    Ok(w)
}

/// `d_{*,r}(μ, ν)`: sup of `|μ(f) - ν(f)|` over `‖f‖_∞ + Lip(f) <= 1` with
/// `f = 0` on `[r, ∞)`.
pub fn d_flat_r<'a, 'b>(
    grid: &Grid,
    mu: impl Into<Measure<'a>>,
    nu: impl Into<Measure<'b>>,
    r: f64,
) -> Result<f64> {
    let a = node_masses(mu.into(), grid)?;
    let b = node_masses(nu.into(), grid)?;
    let w: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    flat_from_masses(grid, &w, r)
}

pub(crate) fn flat_from_masses(grid: &Grid, w: &[f64], r: f64) -> Result<f64> {
    if !r.is_finite() {
        return domain(format!("cutoff must be finite, got {r}"));
    }
    if r > grid.x_hi + 0.5 * grid.h {
        return usage(format!("cutoff {r} lies beyond the grid end {}", grid.x_hi));
    }
    // last node strictly left of r
    let free = ((r - grid.x_lo) / grid.h).ceil();
    if free < 1.0 {
        return Ok(0.0);
    }
    let k = (free as usize - 1).min(grid.count - 1);
    let tail_gap = r - grid.node(k);
    let w = &w[..=k];
    if w.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let value = |b: f64| chain_lp(w, 1.0 - b, b * grid.h, b * tail_gap).0;
    Ok(golden_max(value, 0.0, 1.0))
}

/// `d_* = Σ_{r=1}^{r_max} 2^-r (1 ∧ d_{*,r})`.
pub fn d_star<'a, 'b>(
    grid: &Grid,
    mu: impl Into<Measure<'a>>,
    nu: impl Into<Measure<'b>>,
    r_max: u32,
) -> Result<DStar> {
    if r_max == 0 {
        return domain("r_max must be at least 1");
    }
    let a = node_masses(mu.into(), grid)?;
    let b = node_masses(nu.into(), grid)?;
    let w: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let mut value = 0.0;
    for r in 1..=r_max {
        let d = flat_from_masses(grid, &w, r as f64)?;
        value += 0.5f64.powi(r as i32) * d.min(1.0);
    }
    Ok(DStar { value, truncation: 0.5f64.powi(r_max as i32) })
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = f(lo).max(f(hi));
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..90 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    best = best.max(f1).max(f2);
    best
}

/// Concave piecewise-linear function on `[-a, a]`.
///
/// Breakpoints left of the maximiser live in `left` and the rest in `right`;
/// positions are stored relative to a lazy shift per deque.
struct Concave {
    a: f64,
    /// Slope of the first segment.
    s0: f64,
    left: VecDeque<(f64, f64)>,
    right: VecDeque<(f64, f64)>,
    off_l: f64,
    off_r: f64,
    sum_l: f64,
}

impl Concave {
    fn new(a: f64) -> Self {
        Self {
            a,
            s0: 0.0,
            left: VecDeque::new(),
            right: VecDeque::new(),
            off_l: 0.0,
            off_r: 0.0,
            sum_l: 0.0,
        }
    }

    /// Slope just right of the last left breakpoint.
    fn slope_l(&self) -> f64 {
        self.s0 - self.sum_l
    }

    fn argmax(&self) -> f64 {
        if self.slope_l() <= 0.0 {
            -self.a
        } else if let Some(&(p, _)) = self.right.front() {
            p + self.off_r
        } else {
            self.a
        }
    }

    /// Adds `w * f`.
    fn add_linear(&mut self, w: f64) {
        self.s0 += w;
        while let Some(&(p, d)) = self.right.front() {
            if self.slope_l() - d > 0.0 {
                self.right.pop_front();
                self.left.push_back((p + self.off_r - self.off_l, d));
                self.sum_l += d;
            } else {
                break;
            }
        }
        // Rounding in the test above can move a breakpoint with zero slope
        // after it; window_max relies on slope_l > 0 or an empty left deque.
        while self.slope_l() <= 0.0 {
            match self.left.pop_back() {
                Some((p, d)) => {
                    self.sum_l -= d;
                    self.right.push_front((p + self.off_l - self.off_r, d));
                }
                None => break,
            }
        }
    }

    /// Replaces g by `f ↦ max_{|y - f| <= c} g(y)`.
    fn window_max(&mut self, c: f64) {
        let sl = self.slope_l();
        if sl <= 0.0 {
            self.off_r += c;
            if self.s0 < 0.0 {
                self.right.push_front((-self.a + c - self.off_r, -self.s0));
                self.s0 = 0.0;
                self.sum_l = 0.0;
            }
        } else if let Some((p, d)) = self.right.pop_front() {
            let p = p + self.off_r;
            self.off_l -= c;
            self.off_r += c;
            if d - sl > 0.0 {
                self.right.push_front((p + c - self.off_r, d - sl));
            }
            self.right.push_front((p - c - self.off_r, sl));
        } else {
            self.off_l -= c;
            self.right.push_front((self.a - c - self.off_r, sl));
        }
        self.clip();
    }

    fn clip(&mut self) {
        while let Some(&(p, d)) = self.left.front() {
            if p + self.off_l < -self.a {
                self.left.pop_front();
                self.s0 -= d;
                self.sum_l -= d;
            } else {
                break;
            }
        }
        if self.left.is_empty() {
            self.sum_l = 0.0;
            while let Some(&(p, d)) = self.right.front() {
                if p + self.off_r < -self.a {
                    self.right.pop_front();
                    self.s0 -= d;
                } else {
                    break;
                }
            }
        }
        while let Some(&(p, _)) = self.right.back() {
            if p + self.off_r >= self.a {
                self.right.pop_back();
            } else {
                break;
            }
        }
    }
}

/// Exact optimum of the chain LP for fixed bounds; returns value and maximiser.
pub(crate) fn chain_lp(w: &[f64], a: f64, step: f64, last_gap: f64) -> (f64, Vec<f64>) {
    if w.is_empty() || a <= 0.0 || last_gap <= 0.0 {
        return (0.0, vec![0.0; w.len()]);
    }
    let mut g = Concave::new(a);
    let mut arg = Vec::with_capacity(w.len());
    for (j, &wj) in w.iter().enumerate() {
        if j > 0 {
            g.window_max(step);
        }
        g.add_linear(wj);
        arg.push(g.argmax());
    }
    let k = w.len() - 1;
    let mut f = vec![0.0; w.len()];
    f[k] = arg[k].clamp(-last_gap.min(a), last_gap.min(a));
    for j in (0..k).rev() {
        f[j] = arg[j].clamp(f[j + 1] - step, f[j + 1] + step).clamp(-a, a);
    }
    let value = f.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
    (value, f)
}

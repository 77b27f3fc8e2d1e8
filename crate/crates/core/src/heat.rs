//! Heat semigroup `S_t` of `½∂_xx` acting on mass profiles, and boundary
//! heat potentials.
//!
//! A profile is the sum of a step at `x_lo`, ramps `(x - x_j)_+` at every node
//! where the interpolant changes slope, and a right-tail remainder. Each piece
//! has a closed-form Gaussian convolution, so smoothing is exact for the
//! interpolant up to the truncation of the kernel at eight standard
//! deviations (relative weight `erfc(8/√2) ≈ 1.2e-15`).

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::boundary::BoundaryPath;
use crate::error::{domain, usage, Result};
use crate::mass_profile::{MassProfile, TailModel};
use crate::special::{norm_cdf, norm_pdf, norm_sf, ramp_excess, ramp_smooth, GaussRule};

/// Kernel truncation in standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 8.0;

/// Truncated Gaussian kernel for time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub t: f64,
    /// Support radius `8√t`.
    pub radius: f64,
    /// Mass of the kernel outside the radius.
    pub truncation_error: f64,
}

impl KernelSpec {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return domain(format!("heat time must be positive, got {t}"));
        }
        Ok(Self {
            t,
            radius: TRUNCATION_SIGMAS * t.sqrt(),
            truncation_error: libm::erfc(TRUNCATION_SIGMAS / std::f64::consts::SQRT_2),
        })
    }
}

/// `p_t(x) = (2πt)^{-1/2} exp(-x²/2t)`.
pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("heat kernel needs t > 0, got {t}"));
    }
    Ok((-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt())
}

fn gauss16() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(16))
}

/// Ramp decomposition of a profile, reusable for many heat evaluations.
pub struct HeatFlow<'a> {
    v: &'a MassProfile,
    /// Node index and slope jump, for jumps that matter at double precision.
    jumps: Vec<(usize, f64)>,
    step: f64,
    /// Remainder right of the grid: `alpha + beta (y - x_hi)` plus `curved`.
    alpha: f64,
    beta: f64,
    curved: Option<TailModel>,
    last_slope: f64,
}

impl<'a> HeatFlow<'a> {
    pub fn new(v: &'a MassProfile) -> Self {
        let g = v.grid();
        let vals = v.values();
        let h = g.h;
        let n = g.count;
        let slopes: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut raw = Vec::with_capacity(n - 1);
        raw.push(slopes[0]);
        for j in 1..n - 1 {
            raw.push(slopes[j] - slopes[j - 1]);
        }
        // Second differences at this level are rounding noise of straight
        // segments; dropping them keeps linear pieces exactly linear.
        let noise = 2e-15 * v.sup();
        let jumps = raw
            .iter()
            .enumerate()
            .filter(|(_, a)| a.abs() * h > noise)
            .map(|(j, a)| (j, *a))
            .collect();
        let tail = v.tail();
        let last = vals[n - 1];
        let last_slope = slopes[n - 2];
        let alpha = tail.eval(g.x_hi) - last;
        let beta = tail.slope(g.x_hi) - last_slope;
        let curved = match tail {
            TailModel::Zero | TailModel::Linear { .. } => None,
            TailModel::Power { exponent, .. } if *exponent == 1.0 || *exponent == 0.0 => None,
            TailModel::Polynomial { coeffs } if coeffs.len() <= 2 => None,
            other => Some(other.clone()),
        };
        Self { v, jumps, step: vals[0], alpha, beta, curved, last_slope }
    }

    /// Value of the ramp expansion itself (the interpolant on the grid, its
    /// linear continuation beyond).
    fn base(&self, x: f64) -> f64 {
        let g = self.v.grid();
        if x < g.x_lo {
            0.0
        } else if x <= g.x_hi {
            self.v.eval(x)
        } else {
            self.v.values()[g.count - 1] + self.last_slope * (x - g.x_hi)
        }
    }

    /// Tail remainder contribution `∫_{x_hi}^∞ p_t(y - x) R(y) dy`.
    fn tail_term(&self, s: f64, x: f64) -> f64 {
        let x_hi = self.v.grid().x_hi;
        let y = x - x_hi;
        let mut out = 0.0;
        if y > -40.0 * s {
            out += self.alpha * norm_cdf(y / s) + self.beta * ramp_smooth(y, s);
        }
        if let Some(tail) = &self.curved {
            if y > -12.0 * s {
                let (t0, d0) = (tail.eval(x_hi), tail.slope(x_hi));
                let q = |z: f64| tail.eval(z) - t0 - d0 * (z - x_hi);
                let top = x.max(x_hi) + 12.0 * s;
                let panels = ((top - x_hi) / s).ceil().max(1.0) as usize;
                let w = (top - x_hi) / panels as f64;
                for k in 0..panels {
                    let a = x_hi + k as f64 * w;
                    out += gauss16().integrate(a, a + w, |z| norm_pdf((z - x) / s) / s * q(z));
                }
            }
        }
        out
    }

    /// `S_t v(x)` at an arbitrary point.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        let spec = KernelSpec::new(t)?;
        let s = t.sqrt();
        let g = self.v.grid();
        let mut out = self.base(x);
        // step at x_lo: v_0 (Φ(z) - 1{z >= 0})
        if self.step != 0.0 {
            let z = (x - g.x_lo) / s;
            out += self.step * if z >= 0.0 { -norm_sf(z) } else { norm_cdf(z) };
        }
        let lo = ((x - spec.radius - g.x_lo) / g.h).ceil().max(0.0) as usize;
        let hi = (x + spec.radius - g.x_lo) / g.h;
        if hi >= 0.0 {
            let hi = hi.floor() as usize;
            let start = self.jumps.partition_point(|(j, _)| *j < lo);
            for &(j, a) in &self.jumps[start..] {
                if j > hi {
                    break;
                }
                out += a * s * ramp_excess((x - g.node(j)) / s);
            }
        }
        Ok(out + self.tail_term(s, x))
    }
}

/// `S_t v0` evaluated at one point.
pub fn smooth_initial(v0: &MassProfile, t: f64, x: f64) -> Result<f64> {
    HeatFlow::new(v0).eval(t, x)
}

/// `S_δ v` on the grid of `v`, with the tail smoothed analytically.
///
/// Nonnegative input gives nonnegative output (rounding is clamped).
pub fn smooth(v: &MassProfile, delta: f64) -> Result<MassProfile> {
    let spec = KernelSpec::new(delta)?;
    let flow = HeatFlow::new(v);
    let g = *v.grid();
    let s = delta.sqrt();
    let n = g.count;
    let k_max = (spec.radius / g.h).ceil() as usize;
    let table: Vec<f64> = (0..=k_max).map(|k| s * ramp_excess(k as f64 * g.h / s)).collect();
    let mut out = v.values().to_vec();
    for &(j, a) in &flow.jumps {
        let lo = j.saturating_sub(k_max);
        let hi = (j + k_max).min(n - 1);
        for (i, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *o += a * table[i.abs_diff(j)];
        }
    }
    if flow.step != 0.0 {
        for (i, o) in out.iter_mut().enumerate() {
            let z = i as f64 * g.h / s;
            if z > 40.0 {
                break;
            }
            *o -= flow.step * norm_sf(z);
        }
    }
    for i in (0..n).rev() {
        let x = g.node(i);
        if g.x_hi - x > 40.0 * s {
            break;
        }
        out[i] += flow.tail_term(s, x);
    }
    if v.is_nonnegative(0.0) {
        out.iter_mut().for_each(|o| *o = o.max(0.0));
    }
    MassProfile::signed(g, out, v.tail().smooth(delta))
}

/// `∫_0^t p_{t-s}(σ_s - x) ds` for a piecewise-linear boundary path.
///
/// Each path cell is integrated in the variable `u = √(t - s)`, which removes
/// the `(t-s)^{-1/2}` singularity, with 16-point Gauss-Legendre panels refined
/// around the scale `|σ - x|` where the integrand turns on.
pub fn boundary_potential(path: &BoundaryPath, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("potential needs t > 0, got {t}"));
    }
    if !path.covers(0.0, t) {
        return usage(format!("boundary path does not cover [0, {t}]"));
    }
    Ok(potential_between(path, 0.0, t, t, x))
}

/// Potential restricted to source times `s ∈ [from, to]`, observed at time `t >= to`.
pub(crate) fn potential_between(path: &BoundaryPath, from: f64, to: f64, t: f64, x: f64) -> f64 {
    let times = path.times();
    let mut acc = 0.0;
    let start = times.partition_point(|s| *s <= from).saturating_sub(1);
    for i in start..times.len().saturating_sub(1) {
        let ta = times[i].max(from);
        let tb = times[i + 1].min(to);
        if times[i] >= to {
            break;
        }
        if tb <= ta {
            continue;
        }
        acc += segment_potential(ta, path.eval(ta), tb, path.eval(tb), t, x);
    }
    acc
}

/// Potential of the straight boundary piece from `(ta, sa)` to `(tb, sb)`.
pub(crate) fn segment_potential(ta: f64, sa: f64, tb: f64, sb: f64, t: f64, x: f64) -> f64 {
    let ua = (t - ta).max(0.0).sqrt();
    let ub = (t - tb).max(0.0).sqrt();
    if ua <= ub {
        return 0.0;
    }
    let (da, db) = (sa - x, sb - x);
    let dmin = if da * db <= 0.0 { 0.0 } else { da.abs().min(db.abs()) };
    if dmin * dmin > 120.0 * ua * ua {
        return 0.0;
    }
    let rate = (sb - sa) / (tb - ta);
    let f = |u: f64| {
        let d = sa + rate * (t - u * u - ta) - x;
        (-d * d / (2.0 * u * u)).exp()
    };
    let d = db.abs();
    let mut cuts = [ub, ua, ua, ua, ua];
    let mut m = 1;
    for c in [0.25 * d, d, 4.0 * d] {
        if c > ub && c < ua {
            cuts[m] = c;
            m += 1;
        }
    }
    cuts[m] = ua;
    let rule = gauss16();
    let mut acc = 0.0;
    for k in 0..m {
        acc += rule.integrate(cuts[k], cuts[k + 1], f);
    }
    acc * (2.0 / PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass_profile::Grid;

    fn ramp(h: f64, lambda: f64) -> MassProfile {
        MassProfile::linear(Grid::new(-2.0, 3.0, h).unwrap(), lambda).unwrap()
    }

    #[test]
    fn kernel_basics() {
        assert!((heat_kernel(1.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(heat_kernel(0.0, 1.0).is_err());
        assert!(heat_kernel(-1.0, 1.0).is_err());
        let k = KernelSpec::new(0.04).unwrap();
        assert!((k.radius - 1.6).abs() < 1e-12);
        assert!(k.truncation_error < 2e-15);
    }

    #[test]
    fn smoothing_a_ramp() {
        // S_t x_+ (0) = √(t/2π)
        let v = ramp(1e-3, 1.0);
        let s = smooth(&v, 0.01).unwrap();
        assert!((s.eval(0.0) - 0.039_894_228_040_143_27).abs() < 1e-12);
        let v2 = ramp(1e-3, 2.0);
        assert!((smooth_initial(&v2, 0.25, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn linear_function_is_invariant_away_from_edges() {
        let g = Grid::new(1.0, 5.0, 0.01).unwrap();
        let v = MassProfile::from_fn(g, TailModel::Linear { intercept: 0.0, slope: 1.0 }, |x| x).unwrap();
        let s = smooth(&v, 0.01).unwrap();
        for (x, y) in g.nodes().zip(s.values()) {
            if x > 1.8 {
                assert!((y - x).abs() < 1e-12, "{x} {y}");
            }
        }
    }

    #[test]
    fn smoothing_conserves_mass_and_monotonicity() {
        let v = ramp(0.01, 2.0).cut(0.3).unwrap();
        let s = smooth(&v, 0.02).unwrap();
        assert!(s.values().windows(2).all(|w| w[1] >= w[0] - 1e-14));
        // mass to the right edge shifts only by what moves through it
        let r = 1.5;
        let direct = s.integral_left(r);
        // ∫_{-∞}^r S v = E[∫_{-∞}^{r+√t Z} v]: midpoint quadrature in Z
        let rule = GaussRule::new(32);
        let sd = 0.02f64.sqrt();
        let want: f64 = (0..20)
            .map(|k| {
                let a = -10.0 + k as f64;
                rule.integrate(a, a + 1.0, |z| norm_pdf(z) * v.integral_left(r + sd * z))
            })
            .sum();
        // the node samples integrate with trapezoid error (h²/12) (S v)'(r), slope 2 here
        let trap = 0.01f64.powi(2) / 12.0 * 2.0;
        assert!((direct - want - trap).abs() < 1e-8, "{direct} {want}");
    }

    #[test]
    fn semigroup_law() {
        let v = ramp(1e-3, 1.0);
        let a = smooth(&smooth(&v, 0.01).unwrap(), 0.02).unwrap();
        let b = smooth(&v, 0.03).unwrap();
        let worst = a
            .grid()
            .nodes()
            .zip(a.values().iter().zip(b.values()))
            .filter(|(x, _)| *x > -0.5 && *x < 1.5)
            .fold(0.0f64, |m, (_, (p, q))| m.max((p - q).abs()));
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn power_tail_is_smoothed_through_the_edge() {
        let g = Grid::new(-1.0, 1.0, 1e-3).unwrap();
        let tail = TailModel::Power { coef: 1.0, exponent: 2.0 };
        let v = MassProfile::from_fn(g, tail, |x| x.max(0.0).powi(2)).unwrap();
        let t = 0.01;
        let s = smooth(&v, t).unwrap();
        // E[(x + √t Z)_+^2] = (x² + t) Φ(x/√t) + x√t φ(x/√t)
        let exact = |x: f64| {
            let z = x / t.sqrt();
            (x * x + t) * norm_cdf(z) + x * t.sqrt() * norm_pdf(z)
        };
        for &x in &[0.0, 0.5, 0.99, 1.0] {
            let got = s.eval(x);
            assert!((got - exact(x)).abs() < 5e-7, "x={x}: {got} vs {}", exact(x));
        }
        let far = HeatFlow::new(&v).eval(t, 1.3).unwrap();
        assert!((far - exact(1.3)).abs() < 5e-7);
    }

    #[test]
    fn potential_of_a_fixed_boundary() {
        let t = 0.25;
        let p = BoundaryPath::new(vec![0.0, 0.1, 0.25], vec![0.0, 0.0, 0.0]).unwrap();
        let want = (2.0 * t / PI).sqrt();
        assert!((boundary_potential(&p, t, 0.0).unwrap() - want).abs() < 1e-14);
        // off the boundary: ∫_0^t p_s(x) ds = √(2t/π) e^{-x²/2t} - |x| erfc(|x|/√(2t))
        let x = 0.05;
        let exact = want * (-x * x / (2.0 * t)).exp() - x * libm::erfc(x / (2.0 * t).sqrt());
        assert!((boundary_potential(&p, t, x).unwrap() - exact).abs() < 1e-12);
        assert!(boundary_potential(&p, 0.3, 0.0).is_err());
        assert!(boundary_potential(&p, 0.0, 0.0).is_err());
    }

    #[test]
    fn potential_is_bounded() {
        let p = BoundaryPath::new(vec![0.0, 0.05, 0.1], vec![0.0, 0.2, -0.1]).unwrap();
        for &x in &[-0.3, -0.1, 0.0, 0.1, 0.2] {
            let u = boundary_potential(&p, 0.1, x).unwrap();
            assert!(u >= 0.0 && u <= (2.0 * 0.1 / PI).sqrt() + 1e-14);
        }
    }
}

//! Gaussian helpers and Gauss-Legendre rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail 1 - Φ(z), accurate for large z.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// `E[(y + sZ)_+]` for standard normal Z: the heat flow of a unit ramp.
pub fn ramp_smooth(y: f64, s: f64) -> f64 {
    let z = y / s;
    if z >= 0.0 {
        y + s * ramp_excess(z)
    } else {
        s * ramp_excess(-z)
    }
}

/// `φ(z) - z(1 - Φ(z))` for z >= 0, the amount by which smoothing lifts a
/// ramp at distance z standard deviations from its kink.
pub fn ramp_excess(z: f64) -> f64 {
    let z = z.abs();
    if z > 38.0 {
        return 0.0;
    }
    (norm_pdf(z) - z * norm_sf(z)).max(0.0)
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess followed by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped onto [a, b], reusing precomputed reference nodes.
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::new(16);
        // degree 31 is the exactness limit of a 16-point rule
        let got = rule.integrate(0.0, 2.0, |x| x.powi(31));
        let want = 2f64.powi(32) / 32.0;
        assert!((got - want).abs() / want < 1e-13);
        let (_, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ramp_smooth_matches_quadrature() {
        let rule = GaussRule::new(64);
        for &(y, s) in &[(0.0, 0.1), (0.05, 0.1), (-0.2, 0.1), (0.9, 0.3)] {
            let q: f64 = (0..40)
                .map(|k| {
                    let a = -10.0 + 0.5 * k as f64;
                    rule.integrate(a, a + 0.5, |z| norm_pdf(z) * (y + s * z).max(0.0))
                })
                .sum();
            assert!((ramp_smooth(y, s) - q).abs() < 1e-12, "{y} {s}");
        }
    }

    #[test]
    fn tails_are_consistent() {
        assert!((norm_cdf(1.3) + norm_sf(1.3) - 1.0).abs() < 1e-15);
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert_eq!(ramp_excess(50.0), 0.0);
    }
}

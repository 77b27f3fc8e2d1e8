//! Boundary paths and boundary occupation histograms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

/// Piecewise-linear path `t ↦ σ(t)` through its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl BoundaryPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return usage(format!("path needs matching nonempty samples, got {} and {}", times.len(), values.len()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return usage("path times must be strictly increasing");
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite path sample".into()));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        let eps = 1e-12 * (1.0 + b.abs());
        self.times[0] <= a + eps && self.t_end() >= b - eps
    }

    /// Linear interpolation, constant extrapolation outside the samples.
    pub fn eval(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|s| *s <= t);
        if i == 0 {
            return self.values[0];
        }
        if i == self.times.len() {
            return *self.values.last().unwrap();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let f = (t - t0) / (t1 - t0);
        self.values[i - 1] + f * (self.values[i] - self.values[i - 1])
    }

    /// Largest absolute value over the samples.
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest jump between consecutive samples.
    pub fn max_jump(&self) -> f64 {
        self.values.windows(2).fold(0.0, |m, w| m.max((w[1] - w[0]).abs()))
    }

    pub fn write_csv(&self, path: &Path, header: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{header}")?;
        for (t, s) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{s}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the first two columns of a headed CSV.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let (mut times, mut values) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Usage(format!("bad path row {:?}", rec)))
            };
            times.push(parse(0)?);
            values.push(parse(1)?);
        }
        Self::new(times, values)
    }
}

/// Space-time histogram of a boundary occupation measure; `mass[t][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryHistogramMeasure {
    pub x_edges: Vec<f64>,
    pub t_edges: Vec<f64>,
    pub mass: Vec<Vec<f64>>,
}

impl BoundaryHistogramMeasure {
    pub fn zeros(x_edges: Vec<f64>, t_edges: Vec<f64>) -> Result<Self> {
        if x_edges.len() < 2 || t_edges.len() < 2 {
            return usage("histogram needs at least one bin per axis");
        }
        if x_edges.windows(2).chain(t_edges.windows(2)).any(|w| !(w[1] > w[0])) {
            return usage("histogram edges must increase");
        }
        let mass = vec![vec![0.0; x_edges.len() - 1]; t_edges.len() - 1];
        Ok(Self { x_edges, t_edges, mass })
    }

    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn nt(&self) -> usize {
        self.t_edges.len() - 1
    }

    /// Bin containing x, clamped to the outer bins.
    pub fn x_bin(&self, x: f64) -> usize {
        let i = self.x_edges.partition_point(|e| *e <= x);
        i.clamp(1, self.nx()) - 1
    }

    pub fn t_bin(&self, t: f64) -> usize {
        let i = self.t_edges.partition_point(|e| *e <= t);
        i.clamp(1, self.nt()) - 1
    }

    pub fn add(&mut self, x: f64, t: f64, m: f64) {
        let (i, k) = (self.x_bin(x), self.t_bin(t));
        self.mass[k][i] += m;
    }

    pub fn slab_mass(&self, k: usize) -> f64 {
        self.mass[k].iter().sum()
    }

    pub fn total(&self) -> f64 {
        (0..self.nt()).map(|k| self.slab_mass(k)).sum()
    }

    /// Fraction of the mass lying within `bins` space bins of `center(t)`,
    /// with the centre evaluated at each time-bin midpoint.
    pub fn concentration(&self, center: impl Fn(f64) -> f64, bins: usize) -> f64 {
        let mut near = 0.0;
        for k in 0..self.nt() {
            let tm = 0.5 * (self.t_edges[k] + self.t_edges[k + 1]);
            let c = self.x_bin(center(tm));
            let lo = c.saturating_sub(bins);
            let hi = (c + bins).min(self.nx() - 1);
            near += self.mass[k][lo..=hi].iter().sum::<f64>();
        }
        let total = self.total();
        if total > 0.0 {
            near / total
        } else {
            0.0
        }
    }

    /// Histogram of `δ_{σ(t)} dt`, integrating each time bin with `sub` samples.
    pub fn from_path(path: &BoundaryPath, x_edges: Vec<f64>, t_edges: Vec<f64>, sub: usize) -> Result<Self> {
        let mut h = Self::zeros(x_edges, t_edges)?;
        let sub = sub.max(1);
        for k in 0..h.nt() {
            let (a, b) = (h.t_edges[k], h.t_edges[k + 1]);
            let dt = (b - a) / sub as f64;
            for s in 0..sub {
                let t = a + (s as f64 + 0.5) * dt;
                let i = h.x_bin(path.eval(t));
                h.mass[k][i] += dt;
            }
        }
        Ok(h)
    }

    /// Writes `x_bin,t_bin,mass` rows (bin indices) and an edge sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "x_bin,t_bin,mass")?;
        for (k, row) in self.mass.iter().enumerate() {
            for (i, m) in row.iter().enumerate() {
                if *m != 0.0 {
                    writeln!(w, "{i},{k},{m}")?;
                }
            }
        }
        w.flush()?;
        #[derive(Serialize)]
        struct Edges<'a> {
            x_edges: &'a [f64],
            t_edges: &'a [f64],
        }
        let meta = Edges { x_edges: &self.x_edges, t_edges: &self.t_edges };
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Edges {
            x_edges: Vec<f64>,
            t_edges: Vec<f64>,
        }
        let e: Edges = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        let mut h = Self::zeros(e.x_edges, e.t_edges)?;
        let mut rdr = csv::Reader::from_path(path)?;
        for row in rdr.deserialize() {
            let (i, k, m): (usize, usize, f64) = row?;
            if i >= h.nx() || k >= h.nt() {
                return usage(format!("bin ({i},{k}) out of range"));
            }
            h.mass[k][i] = m;
        }
        Ok(h)
    }
}

/// `n + 1` equally spaced edges over `[a, b]`.
pub fn uniform_edges(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_interpolates_linearly() {
        let p = BoundaryPath::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(1.5), 1.0);
        assert_eq!(p.eval(3.0), 0.0);
        assert_eq!(p.max_jump(), 2.0);
        assert!(p.covers(0.0, 2.0) && !p.covers(0.0, 2.1));
        assert!(BoundaryPath::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn histogram_of_constant_path_is_a_column() {
        let p = BoundaryPath::new(vec![0.0, 1.0], vec![0.25, 0.25]).unwrap();
        let h = BoundaryHistogramMeasure::from_path(&p, uniform_edges(0.0, 1.0, 4), uniform_edges(0.0, 1.0, 5), 10)
            .unwrap();
        for k in 0..5 {
            assert!((h.slab_mass(k) - 0.2).abs() < 1e-12);
            assert!((h.mass[k][1] - 0.2).abs() < 1e-12);
        }
        assert!((h.concentration(|_| 0.3, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("beta.csv");
        let mut h = BoundaryHistogramMeasure::zeros(uniform_edges(-1.0, 1.0, 8), uniform_edges(0.0, 1.0, 2)).unwrap();
        h.add(0.1, 0.2, 0.125);
        h.add(-5.0, 0.9, 0.5);
        h.write_csv(&f).unwrap();
        assert_eq!(BoundaryHistogramMeasure::read_csv(&f).unwrap(), h);
    }
}

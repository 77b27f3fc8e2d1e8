//! Finite Atlas system: Brownian particles where the current leftmost one
//! gets drift n. Explicit Euler–Maruyama in time with an active window:
//! particles far right of the minimum are frozen and later advanced by one
//! exact Gaussian increment from their own stream.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::boundary::{uniform_edges, BoundaryHistogramMeasure, BoundaryPath};
use crate::error::{config, usage, Error, Result};
use crate::initial::InitialDescriptor;
use crate::mass_profile::PointMeasure;
use crate::rng::substream;

/// Space binning of the boundary occupation histogram; time bins split the
/// horizon into `nt` equal slabs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaBins {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Particles kept from the sorted initial configuration.
    #[serde(rename = "N_total")]
    pub n_total: usize,
    pub window_width: f64,
    pub seed: u64,
    pub checkpoint_times: Vec<f64>,
    #[serde(default = "one")]
    pub record_stride: usize,
    pub beta_bins: BetaBins,
}

fn one() -> usize {
    1
}

/// Smallest window allowed for a horizon and drift.
pub fn min_window(n: usize, dt: f64, horizon: f64) -> f64 {
    10.0 * horizon.sqrt() + n as f64 * dt
}

/// Right end of the generated configuration: the boundary estimate plus the window.
pub fn coverage_point(sigma_upper: f64, window_width: f64) -> f64 {
    sigma_upper + window_width
}

/// Expected number of particles the truncation at `x_cov` removes that
/// reach `sigma_upper` before `horizon`:
/// `∫_{x_cov}^∞ n dv0(x) · P(inf_{s≤T} W_s ≤ σ - x)`.
pub fn truncation_bound(desc: &InitialDescriptor, n: usize, x_cov: f64, sigma_upper: f64, horizon: f64) -> f64 {
    let s = (2.0 * horizon).sqrt();
    let steps = 4000;
    let span = 20.0 * horizon.sqrt();
    let dx = span / steps as f64;
    (0..steps)
        .map(|k| {
            let x = x_cov + k as f64 * dx;
            let mass = desc.v0(x + dx) - desc.v0(x);
            n as f64 * mass * libm::erfc((x + 0.5 * dx - sigma_upper) / s)
        })
        .sum()
}

impl SimConfig {
    /// Standard settings: dt = T/20000, the narrowest allowed window, N_total
    /// from the coverage rule, five checkpoints and a histogram over [-1, 1].
    pub fn standard(desc: &InitialDescriptor, n: usize, horizon: f64, seed: u64, sigma_upper: f64) -> Self {
        let dt = horizon / 20000.0;
        let window_width = min_window(n, dt, horizon);
        let x_cov = coverage_point(sigma_upper, window_width);
        Self {
            n,
            dt,
            horizon,
            n_total: (n as f64 * desc.v0(x_cov)).ceil() as usize,
            window_width,
            seed,
            checkpoint_times: (0..=4).map(|k| k as f64 * horizon / 4.0).collect(),
            record_stride: 10,
            beta_bins: BetaBins { x_lo: -1.0, x_hi: 1.0, nx: 100, nt: 50 },
        }
    }

    /// Step count and checkpoint step indices.
    pub fn resolve(&self) -> Result<(usize, Vec<usize>)> {
        if self.n == 0 {
            return config("n must be at least 1");
        }
        if !(self.dt > 0.0 && self.horizon > 0.0) || self.dt > self.horizon {
            return config(format!("need 0 < dt <= T, got dt={}, T={}", self.dt, self.horizon));
        }
        let steps = (self.horizon / self.dt).round() as usize;
        if ((steps as f64 * self.dt) - self.horizon).abs() > 1e-9 * self.horizon {
            return config(format!("T={} is not a whole number of steps dt={}", self.horizon, self.dt));
        }
        let need = min_window(self.n, self.dt, self.horizon);
        if self.window_width < need * (1.0 - 1e-12) {
            return config(format!("window_width {} is below 10√T + n·dt = {need}", self.window_width));
        }
        let b = &self.beta_bins;
        if b.nx == 0 || b.nt == 0 || !(b.x_hi > b.x_lo) {
            return config("beta_bins need nx, nt > 0 and x_hi > x_lo");
        }
        if steps % b.nt != 0 {
            return config(format!("{steps} steps do not split into {} equal time bins", b.nt));
        }
        if self.record_stride == 0 {
            return config("record_stride must be at least 1");
        }
        let mut cps = Vec::new();
        for &t in &self.checkpoint_times {
            let k = (t / self.dt).round();
            if !(0.0..=steps as f64).contains(&k) || (k * self.dt - t).abs() > 1e-9 * self.horizon.max(1.0) {
                return config(format!("checkpoint {t} is not a step time in [0, T]"));
            }
            cps.push(k as usize);
        }
        cps.sort_unstable();
        cps.dedup();
        Ok((steps, cps))
    }
}

#[derive(Debug, Clone, Copy)]
struct Frozen {
    x: f64,
    slot: usize,
}

// min-heap on position
impl Ord for Frozen {
    fn cmp(&self, other: &Self) -> Ordering {
        other.x.total_cmp(&self.x).then(other.slot.cmp(&self.slot))
    }
}
impl PartialOrd for Frozen {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for Frozen {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frozen {}

/// Named particles indexed by sorted initial slot, each with its own stream.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pos: Vec<f64>,
    /// Time of the last exact update of each particle.
    updated: Vec<f64>,
    rngs: Vec<Pcg64>,
    active: Vec<usize>,
    frozen: BinaryHeap<Frozen>,
    is_active: Vec<bool>,
    t: f64,
    steps: u64,
    n: usize,
    window: f64,
    leader: usize,
    leak: f64,
    reactivations: u64,
}

/// `(index, position)` of the minimum, lowest index on ties.
pub fn leftmost(pos: &[f64]) -> (usize, f64) {
    let mut best = (0, pos[0]);
    for (i, &x) in pos.iter().enumerate().skip(1) {
        if x < best.1 {
            best = (i, x);
        }
    }
    best
}

/// Consecutive differences of the sorted positions.
pub fn gaps(pos: &[f64]) -> Vec<f64> {
    let mut s = pos.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).map(|w| w[1] - w[0]).collect()
}

impl Ensemble {
    /// Positions are sorted first; slot i draws from stream `(seed, i)`.
    pub fn new(init: &[f64], n: usize, seed: u64, window: f64) -> Result<Self> {
        if init.is_empty() {
            return usage("ensemble needs at least one particle");
        }
        if init.iter().any(|x| !x.is_finite()) {
            return usage("non-finite initial position");
        }
        let mut pos = init.to_vec();
        pos.sort_by(f64::total_cmp);
        let count = pos.len();
        let x0 = pos[0];
        let mut e = Self {
            updated: vec![0.0; count],
            rngs: (0..count).map(|i| substream(seed, i as u64)).collect(),
            active: Vec::new(),
            frozen: BinaryHeap::new(),
            is_active: vec![false; count],
            t: 0.0,
            steps: 0,
            n,
            window,
            leader: 0,
            leak: 0.0,
            reactivations: 0,
            pos,
        };
        for i in 0..count {
            if e.pos[i] <= x0 + window {
                e.active.push(i);
                e.is_active[i] = true;
            } else {
                e.frozen.push(Frozen { x: e.pos[i], slot: i });
            }
        }
        Ok(e)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Current leftmost particle. Frozen particles lie at least a window
    /// right of it, so only active ones are scanned.
    pub fn leftmost(&self) -> (usize, f64) {
        (self.leader, self.pos[self.leader])
    }

    /// Summed probability bound that a frozen particle would have been
    /// leftmost before its reactivation.
    pub fn leak_bound(&self) -> f64 {
        self.leak
    }

    pub fn reactivations(&self) -> u64 {
        self.reactivations
    }

    /// Exact Gaussian catch-up of a frozen particle to the current time.
    fn catch_up(&mut self, slot: usize) {
        let elapsed = self.t - self.updated[slot];
        if elapsed > 0.0 {
            let z: f64 = self.rngs[slot].sample(StandardNormal);
            self.pos[slot] += elapsed.sqrt() * z;
            self.leak += libm::erfc(self.window / (2.0 * elapsed).sqrt());
            self.updated[slot] = self.t;
        }
    }

    /// Advances one explicit step: drift on the pre-step leftmost, Gaussian
    /// increments on every active particle, then window bookkeeping. Returns
    /// the pre-step leftmost position.
    pub fn step(&mut self, dt: f64) -> Result<f64> {
        let lead = self.leader;
        let x_lead = self.pos[lead];
        let sd = dt.sqrt();
        let drift = self.n as f64 * dt;
        let (mut best, mut best_x) = (usize::MAX, f64::INFINITY);
        for &i in &self.active {
            let z: f64 = self.rngs[i].sample(StandardNormal);
            let mut x = self.pos[i] + sd * z;
            if i == lead {
                x += drift;
            }
            self.pos[i] = x;
            if x < best_x || (x == best_x && i < best) {
                best = i;
                best_x = x;
            }
        }
        self.t += dt;
        self.steps += 1;
        if !best_x.is_finite() {
            return Err(Error::Numerical(format!("non-finite position at step {} (t = {})", self.steps, self.t)));
        }
        for &i in &self.active {
            self.updated[i] = self.t;
        }
        // bring in frozen particles the window has reached
        while let Some(f) = self.frozen.peek().copied() {
            if f.x > best_x + self.window {
                break;
            }
            self.frozen.pop();
            self.catch_up(f.slot);
            self.is_active[f.slot] = true;
            self.active.push(f.slot);
            self.reactivations += 1;
            let x = self.pos[f.slot];
            if x < best_x || (x == best_x && f.slot < best) {
                best = f.slot;
                best_x = x;
            }
        }
        self.leader = best;
        if self.steps % 64 == 0 {
            self.freeze_far(best_x);
        }
        Ok(x_lead)
    }

    /// Freezes active particles more than two windows right of the minimum.
    fn freeze_far(&mut self, min_x: f64) {
        let cut = min_x + 2.0 * self.window;
        let (pos, is_active, frozen) = (&self.pos, &mut self.is_active, &mut self.frozen);
        self.active.retain(|&i| {
            if pos[i] > cut {
                is_active[i] = false;
                frozen.push(Frozen { x: pos[i], slot: i });
                false
            } else {
                true
            }
        });
    }

    /// All positions at the current time; frozen particles are caught up
    /// and stay frozen.
    pub fn positions(&mut self) -> Vec<f64> {
        let frozen: Vec<Frozen> = std::mem::take(&mut self.frozen).into_vec();
        for f in &frozen {
            self.catch_up(f.slot);
        }
        self.frozen = frozen.into_iter().map(|f| Frozen { x: self.pos[f.slot], slot: f.slot }).collect();
        self.pos.clone()
    }
}

/// Output of one simulation run.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub config: SimConfig,
    pub y0: BoundaryPath,
    pub beta_hist: BoundaryHistogramMeasure,
    /// `(t, μ^n_t)` at each checkpoint.
    pub checkpoints: Vec<(f64, PointMeasure)>,
    pub gaps0: Vec<f64>,
    pub summary: SimSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub particles: usize,
    pub steps: usize,
    /// `n · (total β mass)`, equal to `n T` by construction.
    pub drift_total: f64,
    pub beta_total: f64,
    pub leak_bound: f64,
    pub reactivations: u64,
    pub sup_abs_y0: f64,
}

/// Runs `Atlas(n)` from `init` (nonnegative, sorted) to T.
pub fn simulate(init: &[f64], cfg: &SimConfig) -> Result<PathRecord> {
    let (steps, cps) = cfg.resolve()?;
    if init.is_empty() {
        return usage("initial configuration is empty");
    }
    if init.windows(2).any(|w| w[1] < w[0]) || init[0] < 0.0 {
        return usage("initial configuration must be sorted and nonnegative");
    }
    let init = &init[..init.len().min(cfg.n_total.max(1))];
    let mut e = Ensemble::new(init, cfg.n, cfg.seed, cfg.window_width)?;
    let b = cfg.beta_bins;
    let mut hist =
        BoundaryHistogramMeasure::zeros(uniform_edges(b.x_lo, b.x_hi, b.nx), uniform_edges(0.0, cfg.horizon, b.nt))?;
    let per_bin = steps / b.nt;
    let weight = 1.0 / cfg.n as f64;
    let mut checkpoints = Vec::with_capacity(cps.len());
    let mut next_cp = 0;
    let mut ts = vec![0.0];
    let mut ys = vec![e.leftmost().1];
    let take_checkpoint = |e: &mut Ensemble, k: usize| -> Result<(f64, PointMeasure)> {
        Ok((k as f64 * cfg.dt, PointMeasure::new(e.positions(), weight)?))
    };
    if cps.first() == Some(&0) {
        checkpoints.push(take_checkpoint(&mut e, 0)?);
        next_cp = 1;
    }
    let gaps0 = gaps(init);
    for k in 1..=steps {
        let x = e.step(cfg.dt)?;
        let tb = (k - 1) / per_bin;
        let xb = hist.x_bin(x);
        hist.mass[tb][xb] += cfg.dt;
        if k % cfg.record_stride == 0 || k == steps {
            ts.push(k as f64 * cfg.dt);
            ys.push(e.leftmost().1);
        }
        if next_cp < cps.len() && cps[next_cp] == k {
            checkpoints.push(take_checkpoint(&mut e, k)?);
            next_cp += 1;
        }
    }
    let y0 = BoundaryPath::new(ts, ys)?;
    let beta_total = hist.total();
    let summary = SimSummary {
        particles: e.len(),
        steps,
        drift_total: cfg.n as f64 * beta_total,
        beta_total,
        leak_bound: e.leak_bound(),
        reactivations: e.reactivations(),
        sup_abs_y0: y0.sup_abs(),
    };
    Ok(PathRecord { config: cfg.clone(), y0, beta_hist: hist, checkpoints, gaps0, summary })
}

impl PathRecord {
    /// Writes `y0.csv` (`t,Y0`), `beta.csv`, one `checkpoint_<k>.csv` per
    /// checkpoint, `config.json` and `summary.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        self.y0.write_csv(&dir.join("y0.csv"), "t,Y0")?;
        files.push("y0.csv".to_string());
        self.beta_hist.write_csv(&dir.join("beta.csv"))?;
        files.extend(["beta.csv".to_string(), "beta.json".to_string()]);
        for (k, (_, mu)) in self.checkpoints.iter().enumerate() {
            let name = format!("checkpoint_{k}.csv");
            mu.write_csv(&dir.join(&name))?;
            files.push(name);
            files.push(format!("checkpoint_{k}.json"));
        }
        let mut w = BufWriter::new(File::create(dir.join("gaps0.csv"))?);
        writeln!(w, "gap")?;
        for g in &self.gaps0 {
            writeln!(w, "{g}")?;
        }
        w.flush()?;
        files.push("gaps0.csv".to_string());
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)? + "\n")?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)? + "\n")?;
        files.extend(["config.json".to_string(), "summary.json".to_string()]);
        Ok(files)
    }

    /// Reads back what [`PathRecord::write_dir`] wrote.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let config: SimConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("config.json"))?)?;
        let summary: SimSummary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
        let y0 = BoundaryPath::read_csv(&dir.join("y0.csv"))?;
        let beta_hist = BoundaryHistogramMeasure::read_csv(&dir.join("beta.csv"))?;
        let (_, cps) = config.resolve()?;
        let mut checkpoints = Vec::new();
        for (k, step) in cps.iter().enumerate() {
            let mu = PointMeasure::read_csv(&dir.join(format!("checkpoint_{k}.csv")))?;
            checkpoints.push((*step as f64 * config.dt, mu));
        }
        let mut rdr = csv::Reader::from_path(dir.join("gaps0.csv"))?;
        let gaps0 = rdr.deserialize::<(f64,)>().map(|r| Ok(r?.0)).collect::<Result<Vec<_>>>()?;
        Ok(Self { config, y0, beta_hist, checkpoints, gaps0, summary })
    }
}

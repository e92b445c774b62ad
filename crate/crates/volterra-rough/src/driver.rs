// SPDX-License-Identifier: MIT OR Apache-2.0

//! Discretized driver paths.
//!
//! A driver is a path `q : [0, T] -> R^{d+1}` sampled on a grid and
//! interpolated piecewise-linearly.  Component `0` is always pinned to
//! the time path `q^0(r) = r`, so decoration `0` on a tree node stands
//! for a drift integral `dr`.  Components `1..=d` are free: smooth test
//! paths built from closures, data imported from CSV, or fractional
//! Brownian motion sampled by exact Cholesky factorization of its
//! covariance.
//!
//! Grids start at `0` and are strictly increasing; dyadic refinement
//! splits every cell in half per level, which is the refinement notion
//! used by all quadrature limits in this crate.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// A strictly increasing time grid `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// Uniform grid on `[0, t_end]` with `cells` cells.
    pub fn uniform(t_end: f64, cells: usize) -> Result<Grid> {
        if !(t_end > 0.0) || cells == 0 {
            return Err(Error::validation(format!(
                "uniform grid needs t_end > 0 and cells > 0; got ({t_end}, {cells})"
            )));
        }
        let points = (0..=cells)
            .map(|j| t_end * j as f64 / cells as f64)
            .collect();
        Ok(Grid { points })
    }

    /// Grid from explicit points; must start at `0`, be strictly
    /// increasing, and contain at least two points.
    pub fn from_points(points: Vec<f64>) -> Result<Grid> {
        if points.len() < 2 {
            return Err(Error::validation("grid needs at least two points"));
        }
        if points[0] != 0.0 {
            return Err(Error::validation(format!(
                "grid must start at 0; got {}",
                points[0]
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::validation(format!(
                    "grid not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Grid { points })
    }

    /// Number of grid points (`cells + 1`).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; grids have at least two points.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.points.len() - 1
    }

    /// The grid points.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// The `i`-th grid point.
    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Final time `T`.
    pub fn t_end(&self) -> f64 {
        *self.points.last().expect("grids are nonempty")
    }

    /// Largest cell width.
    pub fn mesh(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Dyadic refinement: split every cell into `2^levels` equal parts.
    pub fn refined(&self, levels: u32) -> Grid {
        let parts = 1usize << levels;
        if parts == 1 {
            return self.clone();
        }
        let mut points = Vec::with_capacity(self.cells() * parts + 1);
        for w in self.points.windows(2) {
            for p in 0..parts {
                points.push(w[0] + (w[1] - w[0]) * p as f64 / parts as f64);
            }
        }
        points.push(self.t_end());
        Grid { points }
    }

    /// Index of the grid point equal to `t`, up to a relative tolerance
    /// of `1e-9` (times map to indices; intermediate times are errors).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * self.t_end().max(1.0);
        let i = self.points.partition_point(|&p| p < t);
        for cand in [i.saturating_sub(1), i] {
            if cand < self.points.len() && (self.points[cand] - t).abs() <= tol {
                return Ok(cand);
            }
        }
        Err(Error::validation(format!("time {t} is not a grid point")))
    }

    /// Index of the cell containing `t` (clamped to the last cell for
    /// `t = T`).  `t` must lie in `[0, T]`.
    pub fn cell_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.t_end()).contains(&t) {
            return Err(Error::validation(format!(
                "time {t} outside [0, {}]",
                self.t_end()
            )));
        }
        let i = self
            .points
            .partition_point(|&p| p <= t)
            .saturating_sub(1)
            .min(self.cells() - 1);
        Ok(i)
    }
}

// ---------------------------------------------------------------------------
// Driver paths
// ---------------------------------------------------------------------------

/// A sampled driver path `q : [0, T] -> R^{d+1}` with `q^0(r) = r`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriverPath {
    grid: Grid,
    /// `values[c][j]` is component `c` at grid point `j`; `values[0]`
    /// equals the grid exactly.
    values: Vec<Vec<f64>>,
}

impl DriverPath {
    /// Build a path from its non-time components `q^1..q^d` (each one
    /// value per grid point).  The time component is added automatically.
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<DriverPath> {
        for (i, c) in components.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(Error::validation(format!(
                    "component {} has {} samples for a grid of {} points",
                    i + 1,
                    c.len(),
                    grid.len()
                )));
            }
            if let Some(bad) = c.iter().find(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "component {} contains a non-finite sample {bad}",
                    i + 1
                )));
            }
        }
        let mut values = Vec::with_capacity(components.len() + 1);
        values.push(grid.points().to_vec());
        values.extend(components);
        Ok(DriverPath { grid, values })
    }

    /// Sample non-time components from a closure: `f(i, t)` is `q^i(t)`
    /// for `i` in `1..=d`.
    pub fn from_fn(grid: Grid, d: usize, f: impl Fn(usize, f64) -> f64) -> Result<DriverPath> {
        let components = (1..=d)
            .map(|i| grid.points().iter().map(|&t| f(i, t)).collect())
            .collect();
        DriverPath::new(grid, components)
    }

    /// Number of non-time components `d`.
    pub fn dim(&self) -> usize {
        self.values.len() - 1
    }

    /// The underlying grid.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Component `i` (0 is time), one value per grid point.
    pub fn component(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Component `i` at grid index `j`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Increment `q^i(t_{j1}) - q^i(t_{j0})`.
    pub fn increment(&self, i: usize, j0: usize, j1: usize) -> f64 {
        self.values[i][j1] - self.values[i][j0]
    }

    /// Piecewise-linear slope of component `i` on cell `j`.
    pub fn slope(&self, i: usize, j: usize) -> f64 {
        (self.values[i][j + 1] - self.values[i][j]) / (self.grid.point(j + 1) - self.grid.point(j))
    }

    /// Piecewise-linear evaluation of component `i` at time `t`.
    pub fn eval(&self, i: usize, t: f64) -> Result<f64> {
        let j = self.grid.cell_of(t)?;
        Ok(self.values[i][j] + self.slope(i, j) * (t - self.grid.point(j)))
    }

    /// Linear interpolation onto the dyadically refined grid.
    pub fn refined(&self, levels: u32) -> DriverPath {
        let grid = self.grid.refined(levels);
        let parts = 1usize << levels;
        let components = (1..self.values.len())
            .map(|c| {
                let mut out = Vec::with_capacity(grid.len());
                for j in 0..self.grid.cells() {
                    let (a, b) = (self.values[c][j], self.values[c][j + 1]);
                    for p in 0..parts {
                        out.push(a + (b - a) * p as f64 / parts as f64);
                    }
                }
                out.push(*self.values[c].last().expect("components are nonempty"));
                out
            })
            .collect();
        DriverPath::new(grid, components).expect("refinement preserves validity")
    }

    /// The path with all non-time components scaled by `lambda`.
    pub fn scale_non_time(&self, lambda: f64) -> DriverPath {
        let components = (1..self.values.len())
            .map(|c| self.values[c].iter().map(|v| lambda * v).collect())
            .collect();
        DriverPath::new(self.grid.clone(), components).expect("scaling preserves validity")
    }

    /// Empirical Hölder seminorm: max over grid pairs of
    /// `|q_t - q_s| / |t - s|^alpha` (Euclidean norm over all
    /// components, time included).
    pub fn holder_estimate(&self, alpha: f64) -> Result<f64> {
        if !(0.0 < alpha && alpha <= 1.0) {
            return Err(Error::validation(format!(
                "Hölder exponent must lie in (0, 1]; got {alpha}"
            )));
        }
        let n = self.grid.len();
        let mut best = 0.0f64;
        for s in 0..n {
            for t in s + 1..n {
                let mut sq = 0.0;
                for c in &self.values {
                    let d = c[t] - c[s];
                    sq += d * d;
                }
                let gap = self.grid.point(t) - self.grid.point(s);
                let ratio = sq.sqrt() / gap.powf(alpha);
                if ratio > best {
                    best = ratio;
                }
            }
        }
        Ok(best)
    }

    /// [`DriverPath::holder_estimate`] for a single component.
    pub fn component_holder(&self, i: usize, alpha: f64) -> Result<f64> {
        if !(0.0 < alpha && alpha <= 1.0) {
            return Err(Error::validation(format!(
                "Hölder exponent must lie in (0, 1]; got {alpha}"
            )));
        }
        let n = self.grid.len();
        let mut best = 0.0f64;
        for s in 0..n {
            for t in s + 1..n {
                let gap = self.grid.point(t) - self.grid.point(s);
                let ratio = (self.values[i][t] - self.values[i][s]).abs() / gap.powf(alpha);
                if ratio > best {
                    best = ratio;
                }
            }
        }
        Ok(best)
    }

    /// Write the path as CSV with header `t,q0,...,qd`.
    pub fn to_csv(&self, w: &mut impl Write) -> Result<()> {
        let mut line = String::from("t");
        for c in 0..self.values.len() {
            write!(line, ",q{c}").expect("writing to a String cannot fail");
        }
        writeln!(w, "{line}")?;
        for j in 0..self.grid.len() {
            let mut line = format!("{:.17e}", self.grid.point(j));
            for c in &self.values {
                write!(line, ",{:.17e}", c[j]).expect("writing to a String cannot fail");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Read a path written by [`DriverPath::to_csv`].  The `q0` column
    /// must agree with `t` to within `1e-9` and is then pinned exactly.
    pub fn from_csv(r: impl BufRead) -> Result<DriverPath> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::validation("empty driver CSV"))??;
        let columns: Vec<&str> = header.trim().split(',').collect();
        if columns.len() < 2 || columns[0] != "t" || columns[1] != "q0" {
            return Err(Error::validation(format!(
                "driver CSV header must start with `t,q0`; got `{header}`"
            )));
        }
        let d = columns.len() - 2;
        let mut points = Vec::new();
        let mut components: Vec<Vec<f64>> = vec![Vec::new(); d];
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != columns.len() {
                return Err(Error::validation(format!(
                    "driver CSV row {}: expected {} fields, got {}",
                    lineno + 2,
                    columns.len(),
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::validation(format!("driver CSV row {}: {e}", lineno + 2))
                })
            };
            let t = parse(fields[0])?;
            let q0 = parse(fields[1])?;
            if (q0 - t).abs() > 1e-9 {
                return Err(Error::validation(format!(
                    "driver CSV row {}: time component q0 = {q0} deviates from t = {t}",
                    lineno + 2
                )));
            }
            points.push(t);
            for (c, comp) in components.iter_mut().enumerate() {
                comp.push(parse(fields[c + 2])?);
            }
        }
        DriverPath::new(Grid::from_points(points)?, components)
    }
}

// ---------------------------------------------------------------------------
// Fractional Brownian motion
// ---------------------------------------------------------------------------

/// Exact fractional-Brownian-motion sampler on a fixed grid.
///
/// The covariance `R(s, t) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2` over
/// the non-zero grid points is Cholesky-factored once (O(N^3)); each
/// sample is then one matrix-vector product with seeded Gaussians, so
/// Monte Carlo over seeds is cheap.  Exactness over speed: no circulant
/// approximation, no tuning.
pub struct FbmSampler {
    grid: Grid,
    hurst: f64,
    factor: DMatrix<f64>,
}

impl FbmSampler {
    /// Factor the covariance for Hurst index `hurst` in `(0, 1)`.
    pub fn new(hurst: f64, grid: &Grid) -> Result<FbmSampler> {
        if !(0.0 < hurst && hurst < 1.0) {
            return Err(Error::validation(format!(
                "Hurst index must lie in (0, 1); got {hurst}"
            )));
        }
        let n = grid.cells();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let s = grid.point(i + 1);
            let t = grid.point(j + 1);
            0.5 * (s.powf(2.0 * hurst) + t.powf(2.0 * hurst) - (t - s).abs().powf(2.0 * hurst))
        });
        let chol = cov.cholesky().ok_or_else(|| {
            Error::diagnostic(format!(
                "fBm covariance (H = {hurst}, N = {n}) is numerically non-positive"
            ))
        })?;
        Ok(FbmSampler { grid: grid.clone(), hurst, factor: chol.l() })
    }

    /// The Hurst index.
    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// One sample path (starting at 0), deterministic per seed.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let n = self.grid.cells();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        let path = &self.factor * z;
        let mut out = Vec::with_capacity(n + 1);
        out.push(0.0);
        out.extend(path.column(0).iter());
        out
    }
}

/// One fBm sample on `grid`: factorization plus a single draw.  Use
/// [`FbmSampler`] directly when drawing many paths on the same grid.
pub fn sample_fbm(hurst: f64, grid: &Grid, seed: u64) -> Result<Vec<f64>> {
    Ok(FbmSampler::new(hurst, grid)?.sample(seed))
}

// ---------------------------------------------------------------------------

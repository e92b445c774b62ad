// SPDX-License-Identifier: MIT OR Apache-2.0

//! Driver construction from config.
//!
//! Four driver kinds are supported:
//!
//! * `smooth` — a fixed family of smooth test signals (deterministic),
//! * `brownian` — independent Brownian components (seeded),
//! * `fbm` — fractional Brownian components with a Hurst index (seeded),
//! * `csv` — read back a previously exported driver file.
//!
//! Seeded drivers draw component `i` from seed `seed + i`, so adding a
//! component never perturbs the existing ones.

use std::io::BufReader;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use volterra_rough::{DriverPath, Error, FbmSampler, Grid, Result};

use crate::config::ExperimentConfig;

/// The smooth test component family: bounded, C^∞, and with distinct
/// shapes per component so mixed iterated integrals are non-degenerate.
pub fn smooth_component(i: usize, t: f64) -> f64 {
    match i % 3 {
        1 => t - (2.0 * std::f64::consts::PI * t).sin() / (2.0 * std::f64::consts::PI),
        2 => 0.5 * (std::f64::consts::PI * t).sin(),
        _ => t / (1.0 + t),
    }
}

/// Builds the driver described by the `[driver]` section.
pub fn build_driver(cfg: &ExperimentConfig) -> Result<DriverPath> {
    let kind = cfg.get("driver.kind").unwrap_or("smooth");
    if kind == "csv" {
        let path: String = cfg.require("driver.path")?;
        return load_driver_csv(Path::new(&path));
    }
    let cells: usize = cfg.get_or("driver.cells", 256)?;
    let t_end: f64 = cfg.get_or("driver.t_end", 1.0)?;
    let d: usize = cfg.get_or("driver.d", 1)?;
    if cells == 0 || !(t_end > 0.0) {
        return Err(Error::validation(
            "driver.cells must be positive and driver.t_end > 0",
        ));
    }
    let grid = Grid::uniform(t_end, cells)?;
    let amplitude: f64 = cfg.get_or("driver.amplitude", 1.0)?;
    let seed: u64 = cfg.get_or("driver.seed", 0)?;
    let mut driver = match kind {
        "smooth" => DriverPath::from_fn(grid, d, smooth_component)?,
        "brownian" => brownian_driver(grid, d, seed),
        "fbm" => {
            let hurst: f64 = cfg.get_or("driver.hurst", 0.5)?;
            fbm_driver(grid, d, hurst, seed)?
        }
        other => {
            return Err(Error::validation(format!(
                "unknown driver.kind `{other}` (expected smooth, brownian, fbm, or csv)"
            )))
        }
    };
    if amplitude != 1.0 {
        driver = driver.scale_non_time(amplitude);
    }
    Ok(driver)
}

/// Brownian driver: independent components, each a cumulative sum of
/// `sqrt(dt) * N(0,1)` increments from its own seeded stream.
pub fn brownian_driver(grid: Grid, d: usize, seed: u64) -> DriverPath {
    let mut components = Vec::with_capacity(d);
    for i in 0..d {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        values.push(acc);
        for j in 0..grid.cells() {
            let dt = grid.point(j + 1) - grid.point(j);
            let z: f64 = StandardNormal.sample(&mut rng);
            acc += dt.sqrt() * z;
            values.push(acc);
        }
        components.push(values);
    }
    DriverPath::new(grid, components).expect("components match the grid by construction")
}

/// Fractional Brownian driver with exact-covariance sampling per
/// component.
pub fn fbm_driver(grid: Grid, d: usize, hurst: f64, seed: u64) -> Result<DriverPath> {
    let sampler = FbmSampler::new(hurst, &grid)?;
    let components = (0..d)
        .map(|i| sampler.sample(seed.wrapping_add(i as u64)))
        .collect();
    DriverPath::new(grid, components)
}

/// Reads a driver from its CSV export.
pub fn load_driver_csv(path: &Path) -> Result<DriverPath> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::validation(format!("cannot open driver csv {}: {e}", path.display()))
    })?;
    DriverPath::from_csv(BufReader::new(file))
}

/// Restriction of a driver to every `2^levels`-th grid point.  The
/// result is the same path sampled on the coarser grid, which is the
/// right notion of "one path at several resolutions" for refinement
/// studies.
pub fn subsample(driver: &DriverPath, levels: u32) -> Result<DriverPath> {
    let stride = 1usize << levels;
    let grid = driver.grid();
    if grid.cells() % stride != 0 {
        return Err(Error::validation(format!(
            "cannot coarsen a {}-cell grid by 2^{levels}",
            grid.cells()
        )));
    }
    let coarse_points: Vec<f64> = (0..=grid.cells() / stride)
        .map(|j| grid.point(j * stride))
        .collect();
    let coarse = Grid::from_points(coarse_points)?;
    let components = (1..=driver.dim())
        .map(|i| {
            (0..=grid.cells() / stride)
                .map(|j| driver.value(i, j * stride))
                .collect()
        })
        .collect();
    DriverPath::new(coarse, components)
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! The tree-indexed lift of a driver.
//!
//! A lift packages, for every rooted-form tree up to a truncation grade
//! `n`, the three-parameter family `z^{h,τ}_{ts}` of iterated Volterra
//! integrals of one driver against one kernel.  Conceptually each tree
//! owns a table over the simplex `s ≤ t ≤ τ` of grid points; since a
//! dense table is cubic in the grid size and downstream consumers
//! (sewing, rough integration, the solver) only touch dyadic families of
//! pairs, entries are computed on demand by [`TreeQuadrature`] and
//! memoized.  External times `τ` need not lie on the grid — values are
//! evaluated exactly rather than interpolated.
//!
//! # The splitting identity
//!
//! Iterated Volterra integrals satisfy a Chen-type identity over an
//! intermediate time `u`: the integral over `(s, t)` is recovered from
//! the admissible cuts of the tree, where each cut's trunk is integrated
//! over `(u, t)` and each pruned piece, evaluated as a function of its
//! attachment node's running variable, is integrated over `(s, u)`:
//!
//! ```text
//!     z^{h,τ}_{ts} = Σ_cuts  (trunk over (u,t), each piece's profile
//!                             z^{piece,·}_{us} weighting its attachment
//!                             node; root attachments evaluate at τ).
//! ```
//!
//! When both sides are discretized by the *same* left-point rule on the
//! same grid with `u` a grid point, the identity is exact: the cut terms
//! partition the discrete index set, so the residual is floating-point
//! rounding regardless of the mesh.  That exactness is a strong check of
//! the cut enumeration but says nothing about the continuum statement.
//! [`chen_residual`] therefore evaluates the pruned pieces
//! [`PIECE_REFINE_EXTRA`] dyadic levels finer than the trunk: the two
//! sides are then independent approximations of the same continuum
//! object and their gap vanishes at the quadrature's convergence rate.
//!
//! [`VolterraLift::chen_report`] samples residuals over random
//! quadruples `(s, u, t, τ)` and calibrates a tolerance against the
//! residual one refinement level finer, where quadrature error is
//! smaller: a conforming lift has residuals within
//! [`ChenReport::TOLERANCE_FACTOR`] of the finer level.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coproduct::coproduct;
use crate::driver::DriverPath;
use crate::error::{Error, Result};
use crate::kernel::VolterraKernel;
use crate::quadrature::TreeQuadrature;
use crate::tree::{enumerate_trees, DecoratedTree};

/// Upper bound on the number of trees a lift will enumerate; beyond
/// this the truncation level is clearly out of desk scale.
const MAX_LIFT_TREES: usize = 100_000;

/// Extra dyadic refinement applied to pruned pieces when measuring the
/// splitting defect.  Two levels quarter the pieces' quadrature error,
/// so the measured residual tracks the trunk grid's discretization
/// order instead of collapsing to the exact same-grid rearrangement.
pub const PIECE_REFINE_EXTRA: u32 = 2;

/// The splitting identity's right-hand side: each cut's trunk is
/// integrated over `(u, t)` on the trunk engine, with pruned-piece
/// profiles over `(s, u)` — computed on the (possibly finer) piece
/// engine — weighting the attachment nodes.  Indices refer to the trunk
/// grid; the piece grid must refine it dyadically.
fn chen_rhs(
    trunk_engine: &TreeQuadrature,
    piece_engine: &TreeQuadrature,
    h: &DecoratedTree,
    s: usize,
    u: usize,
    t: usize,
    tau: f64,
) -> Result<f64> {
    let grid = trunk_engine.driver().grid();
    let pcells = piece_engine.driver().grid().cells();
    if pcells % grid.cells() != 0 {
        return Err(Error::validation(format!(
            "piece grid ({pcells} cells) does not refine the trunk grid ({} cells)",
            grid.cells()
        )));
    }
    let factor = pcells / grid.cells();
    let floor = grid.point(u);
    let mut total = 0.0;
    for term in coproduct(h) {
        let mut root_factor = 1.0;
        let mut weights: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for piece in &term.pruned {
            if piece.attach == 0 {
                root_factor *=
                    piece_engine.profile(&piece.tree, s * factor, u * factor, &[tau])?[0];
            } else {
                // Profile of the piece over every grid point the trunk
                // integration can consult (entries below u are clamped;
                // they are never read).
                let taus: Vec<f64> = grid.points().iter().map(|&x| x.max(floor)).collect();
                weights.insert(
                    piece.attach,
                    piece_engine.profile(&piece.tree, s * factor, u * factor, &taus)?,
                );
            }
        }
        total += root_factor * trunk_engine.integral_weighted(&term.trunk, &weights, u, t, tau)?;
    }
    Ok(total)
}

/// Defect of the splitting identity between a trunk engine and a piece
/// engine (indices on the trunk grid, `s < u < t ≤ τ`).  Pass the same
/// engine twice to observe the exact same-grid rearrangement.
pub fn splitting_defect(
    trunk_engine: &TreeQuadrature,
    piece_engine: &TreeQuadrature,
    h: &DecoratedTree,
    s: usize,
    u: usize,
    t: usize,
    tau: f64,
) -> Result<f64> {
    if !(s < u && u < t) {
        return Err(Error::validation(format!(
            "splitting requires s < u < t; got {s}, {u}, {t}"
        )));
    }
    let lhs = trunk_engine.integral(h, s, t, tau)?;
    let rhs = chen_rhs(trunk_engine, piece_engine, h, s, u, t, tau)?;
    Ok((lhs - rhs).abs())
}

/// Defect of the splitting identity for one tree at one quadruple
/// `s < u < t ≤ τ` (times, resolved on the grid refined by `refine`),
/// with pieces evaluated [`PIECE_REFINE_EXTRA`] levels finer.
pub fn chen_residual(
    h: &DecoratedTree,
    kernel: &VolterraKernel,
    driver: &DriverPath,
    s: f64,
    u: f64,
    t: f64,
    tau: f64,
    refine: u32,
) -> Result<f64> {
    let engine = TreeQuadrature::new(driver, kernel, refine)?;
    let pieces = TreeQuadrature::new(driver, kernel, refine + PIECE_REFINE_EXTRA)?;
    let grid = engine.driver().grid();
    let (si, ui, ti) = (grid.index_of(s)?, grid.index_of(u)?, grid.index_of(t)?);
    splitting_defect(&engine, &pieces, h, si, ui, ti, tau)
}

/// Sampled splitting-identity diagnostics for a lift.
#[derive(Clone, Debug)]
pub struct ChenReport {
    /// Max residual per tree over the sampled quadruples, at the lift's
    /// own refinement.
    pub residuals: Vec<(DecoratedTree, f64)>,
    /// The same quantity one dyadic refinement level finer: an estimate
    /// of pure quadrature error.
    pub finer_residuals: Vec<(DecoratedTree, f64)>,
    /// The sampled quadruples `(s, u, t, τ)` as grid indices plus time.
    pub quadruples: Vec<(usize, usize, usize, f64)>,
}

impl ChenReport {
    /// A residual is conforming when it is at most this factor above
    /// the finer level's residual: self-calibrating against quadrature
    /// error, since no absolute constant is available a priori.
    pub const TOLERANCE_FACTOR: f64 = 10.0;

    /// Additive floor under the calibrated tolerance, absorbing rounding
    /// noise when the finer residual is at machine-precision scale.
    pub const TOLERANCE_FLOOR: f64 = 1e-12;

    /// Per-tree tolerance: `TOLERANCE_FACTOR · max(finer residual, floor)`.
    pub fn tolerance_for(&self, idx: usize) -> f64 {
        Self::TOLERANCE_FACTOR * self.finer_residuals[idx].1.max(Self::TOLERANCE_FLOOR)
    }

    /// Largest calibrated tolerance across trees (a global acceptance
    /// bound for external consumers).
    pub fn tolerance(&self) -> f64 {
        (0..self.residuals.len())
            .map(|i| self.tolerance_for(i))
            .fold(Self::TOLERANCE_FACTOR * Self::TOLERANCE_FLOOR, f64::max)
    }

    /// Largest residual across trees at the lift's own refinement.
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    /// Whether every tree's residual is within its calibrated tolerance.
    pub fn conforming(&self) -> bool {
        self.residuals
            .iter()
            .enumerate()
            .all(|(i, (_, r))| *r <= self.tolerance_for(i))
    }
}

impl fmt::Display for ChenReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "splitting-identity report over {} quadruples:",
            self.quadruples.len()
        )?;
        for (i, (tree, r)) in self.residuals.iter().enumerate() {
            writeln!(
                f,
                "  {tree}: residual {r:.3e} (finer {:.3e}, tolerance {:.3e})",
                self.finer_residuals[i].1,
                self.tolerance_for(i)
            )?;
        }
        write!(f, "  conforming: {}", self.conforming())
    }
}

/// Tree-indexed lift of one driver against one kernel, truncated at
/// grade `n`, with memoized on-demand tables.
pub struct VolterraLift {
    engine: TreeQuadrature,
    finer: TreeQuadrature,
    alpha: f64,
    gamma: f64,
    level: usize,
    trees: Vec<DecoratedTree>,
    index: BTreeMap<DecoratedTree, usize>,
    cache: Mutex<HashMap<(usize, usize, usize, u64), f64>>,
}

impl VolterraLift {
    /// Build a lift: enumerate all trees of grade ≤ `n` decorated by the
    /// driver's components, bind the quadrature engine at `refine`
    /// dyadic levels, and validate the truncation condition
    /// `(n+1)(α−γ) + γ > 1` that makes grade-`n` remainders summable.
    pub fn build(
        kernel: &VolterraKernel,
        driver: &DriverPath,
        alpha: f64,
        gamma: f64,
        n: usize,
        refine: u32,
    ) -> Result<VolterraLift> {
        if !(0.0 < alpha && alpha <= 1.0) {
            return Err(Error::validation(format!(
                "driver regularity must lie in (0, 1]; got {alpha}"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::validation(format!(
                "kernel order must lie in [0, 1); got {gamma}"
            )));
        }
        let rho = alpha - gamma;
        if !(rho > 0.0) {
            return Err(Error::validation(format!(
                "driver regularity {alpha} must exceed kernel order {gamma}"
            )));
        }
        if !((n as f64 + 1.0) * rho + gamma > 1.0) {
            return Err(Error::validation(format!(
                "truncation level {n} too small: (n+1)(α−γ)+γ = {} ≤ 1",
                (n as f64 + 1.0) * rho + gamma
            )));
        }
        if n == 0 {
            return Err(Error::validation("truncation level must be at least 1"));
        }
        let trees: Vec<DecoratedTree> = enumerate_trees(n, driver.dim(), Some(MAX_LIFT_TREES))?
            .into_iter()
            .flatten()
            .collect();
        let index = trees
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(VolterraLift {
            engine: TreeQuadrature::new(driver, kernel, refine)?,
            finer: TreeQuadrature::new(driver, kernel, refine + 1)?,
            alpha,
            gamma,
            level: n,
            trees,
            index,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Driver regularity exponent α.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Kernel singularity order γ.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Per-grade regularity gain ρ = α − γ.
    pub fn rho(&self) -> f64 {
        self.alpha - self.gamma
    }

    /// Truncation grade `n`.
    pub fn level(&self) -> usize {
        self.level
    }

    /// All indexing trees, grade ≤ `n`, in canonical order.
    pub fn trees(&self) -> &[DecoratedTree] {
        &self.trees
    }

    /// The (refined) driver underlying the tables.
    pub fn driver(&self) -> &DriverPath {
        self.engine.driver()
    }

    /// The kernel underlying the tables.
    pub fn kernel(&self) -> &VolterraKernel {
        self.engine.kernel()
    }

    /// The quadrature engine the tables are computed with.
    pub fn engine(&self) -> &TreeQuadrature {
        &self.engine
    }

    /// Table entry `z^{h,τ}_{ts}` (grid indices `s ≤ t`, external time
    /// `τ ≥ t`), memoized.
    pub fn value(&self, h: &DecoratedTree, s: usize, t: usize, tau: f64) -> Result<f64> {
        let &idx = self.index.get(h).ok_or_else(|| {
            Error::validation(format!(
                "tree `{h}` is not in the lift's index set (grade ≤ {})",
                self.level
            ))
        })?;
        let key = (idx, s, t, tau.to_bits());
        if let Some(&v) = self.cache.lock().expect("lift cache poisoned").get(&key) {
            return Ok(v);
        }
        let v = self.engine.integral(h, s, t, tau)?;
        self.cache.lock().expect("lift cache poisoned").insert(key, v);
        Ok(v)
    }

    /// Defect of the splitting identity for `h` at grid indices
    /// `s < u < t` and external time `τ`, at the lift's own refinement
    /// (pieces [`PIECE_REFINE_EXTRA`] levels finer).
    pub fn splitting_residual(
        &self,
        h: &DecoratedTree,
        s: usize,
        u: usize,
        t: usize,
        tau: f64,
    ) -> Result<f64> {
        let pieces =
            TreeQuadrature::new(self.engine.driver(), self.kernel(), PIECE_REFINE_EXTRA)?;
        splitting_defect(&self.engine, &pieces, h, s, u, t, tau)
    }

    /// Sample `quadruples` random splitting points `(s, u, t, τ)` and
    /// report the max residual per tree, both at the lift's refinement
    /// and one level finer (for tolerance calibration).  Deterministic
    /// per seed.
    pub fn chen_report(&self, quadruples: usize, seed: u64) -> Result<ChenReport> {
        if quadruples == 0 {
            return Err(Error::validation("need at least one sampled quadruple"));
        }
        let grid = self.engine.driver().grid();
        let cells = grid.cells();
        if cells < 4 {
            return Err(Error::validation("grid too coarse to sample s < u < t"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut quads = Vec::with_capacity(quadruples);
        for _ in 0..quadruples {
            // Three distinct interior indices, then a τ at or past t.
            let mut idx = [0usize; 3];
            loop {
                for v in idx.iter_mut() {
                    *v = rng.gen_range(0..=cells);
                }
                idx.sort_unstable();
                if idx[0] < idx[1] && idx[1] < idx[2] {
                    break;
                }
            }
            let tau = grid.point(idx[2]) + rng.gen_range(0.0..grid.t_end());
            quads.push((idx[0], idx[1], idx[2], tau));
        }

        let pieces =
            TreeQuadrature::new(self.engine.driver(), self.kernel(), PIECE_REFINE_EXTRA)?;
        let finer_pieces =
            TreeQuadrature::new(self.finer.driver(), self.kernel(), PIECE_REFINE_EXTRA)?;
        let mut residuals = Vec::with_capacity(self.trees.len());
        let mut finer_residuals = Vec::with_capacity(self.trees.len());
        for h in &self.trees {
            let mut worst = 0.0f64;
            let mut worst_finer = 0.0f64;
            for &(s, u, t, tau) in &quads {
                worst = worst.max(splitting_defect(&self.engine, &pieces, h, s, u, t, tau)?);
                // Same split one dyadic level finer.
                worst_finer = worst_finer.max(splitting_defect(
                    &self.finer,
                    &finer_pieces,
                    h,
                    2 * s,
                    2 * u,
                    2 * t,
                    tau,
                )?);
            }
            residuals.push((h.clone(), worst));
            finer_residuals.push((h.clone(), worst_finer));
        }
        Ok(ChenReport { residuals, finer_residuals, quadruples: quads })
    }
}

// ---------------------------------------------------------------------------

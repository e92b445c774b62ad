// SPDX-License-Identifier: MIT OR Apache-2.0

//! Volterra sewing and the convolution product `*` between singular-kernel
//! integrals and multi-parameter coefficient functions.
//!
//! # Function classes
//!
//! | Type                  | Shape                          | Role                                   |
//! |-----------------------|--------------------------------|----------------------------------------|
//! | [`VolterraFunction`]  | `z(s, t, tau)`, `s <= t`       | two-time increment with an upper time  |
//! | [`MultiParamFunction`]| `y(s, r_1 .. r_n)`             | coefficient with `n` upper arguments   |
//! | [`AbstractIntegrand`] | `Xi(v, s, t, tau)`             | germ fed to the sewing map             |
//!
//! A [`VolterraFunction`] carries declared exponents `(alpha, gamma)`.  Its
//! size is measured by two empirical norms, evaluated on grid samples:
//!
//! * [`empirical_norm_1`]: the supremum of
//!   `|z(s,t,tau)| / min(|tau-t|^-gamma |t-s|^alpha, |tau-s|^rho)` with
//!   `rho = alpha - gamma`;
//! * [`empirical_norm_12`]: the supremum over a lattice of auxiliary
//!   exponents `eta in [0,1]`, `zeta in [0, rho)` of the analogous quotient
//!   for the upper-time difference `z(s,t,tau) - z(s,t,tau')`.
//!
//! A [`MultiParamFunction`] is measured per upper slot by
//! [`empirical_norm_multi`], which varies one upper argument at a time.
//!
//! # Sewing
//!
//! [`sewing_integrate`] forms Riemann sums of an [`AbstractIntegrand`] over
//! dyadic partitions of `[s, t]`,
//!
//! ```text
//! S_l = sum over the 2^l sub-intervals [u, w] of Xi(v, u, w, tau),
//! ```
//!
//! and accepts the finest sum as the integral value when, over the last
//! three levels, the successive differences `|S_{l+1} - S_l|` never grow by
//! more than a factor of two per step, do not grow overall, and end below
//! the requested tolerance (differences at the rounding floor always count
//! as converged).  A sequence that fails this test produces a diagnostic
//! error carrying the full level table; no value is returned silently.  The declared exponent triple
//! `(beta, kappa, theta)` of the integrand is used to report the remainder
//! quotient `|value - Xi(v,s,t,tau)| / shape` with
//! `shape = min(|tau-t|^-kappa |t-s|^beta |s-v|^-theta, |tau-v|^(beta-kappa-theta))`,
//! the shape in which the sewing remainder is expected to be bounded.
//!
//! # The convolution product
//!
//! [`star_base`] convolves a [`VolterraFunction`] `z` against the upper
//! argument of another one, `y`:
//!
//! ```text
//! (z * y)(s, u, t, tau) = lim over partitions P of [u, t] of
//!                         sum_{[u', v'] in P} z(u', v', tau) y(s, u, u').
//! ```
//!
//! [`star_tree`] extends this to a lift slice `z^h` against a coefficient
//! `y` with one upper argument per labeled node of `h`.  Each partition
//! interval `[u, v]` of `[s, t]` contributes the germ
//!
//! ```text
//! z^h(u, v, tau) * y(s, u, .., u)
//!   + sum over proper cuts of h:
//!       [trunk contracted over [u, v] at cell resolution]
//!       against [pieces convolved over [s, u] into the slots they prune],
//! ```
//!
//! where a piece attached at a trunk node is rooted at that node's running
//! integration variable and a piece attached at the root is rooted at
//! `tau`, exactly as recorded in the coproduct's attachment data.  The
//! recursion consumes those attachment maps verbatim and terminates because
//! every cut strictly lowers the grade; nesting deeper than the grade of
//! the original tree is reported as an error.
//!
//! On a fixed grid the germs partition the simplex index set of the
//! left-point quadrature sums, so for coefficients that are constant in
//! their upper arguments the dyadic levels agree to rounding and the
//! product collapses to `z^h(s, t, tau) * y` exactly; genuine convergence
//! behaviour is exercised by upper-argument-dependent coefficients.
//!
//! # Determinism
//!
//! All interval reductions run in ascending sub-interval order, so repeated
//! runs produce bitwise-identical values regardless of thread settings.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::coproduct::coproduct_detailed;
use crate::driver::Grid;
use crate::error::{Error, Result};
use crate::lift::VolterraLift;
use crate::tree::DecoratedTree;

/// Largest tree grade accepted by the convolution recursion.
///
/// The slot vector carrying node bindings is a fixed-size array of
/// `MAX_STAR_GRADE + 1` entries; grades beyond this are far outside the
/// range in which dense tree convolution is computable anyway.
pub const MAX_STAR_GRADE: usize = 7;

/// Points per axis of the `(eta, zeta)` lattice used by the two-parameter
/// empirical norms.
const NORM_LATTICE: usize = 8;

/// The sampled `zeta` range stops short of its open upper end `rho` by
/// `rho / ZETA_MARGIN`.
const ZETA_MARGIN: f64 = 16.0;

/// Relative rounding floor for Cauchy differences: successive partition
/// sums closer than this (scaled by the value) are considered converged.
const DIFF_FLOOR_SCALE: f64 = 1e-13;

/// Number of trailing refinement differences that must decrease for a
/// sequence to be accepted.
const CAUCHY_WINDOW: usize = 3;

/// Hard cap on the number of dyadic levels (2^20 sub-intervals).
const LEVEL_HARD_CAP: u32 = 20;

// ---------------------------------------------------------------------------
// The delta operator
// ---------------------------------------------------------------------------

/// Second-order increment of a two-parameter function:
/// `delta(f, s, u, t) = f(s,t) - f(u,t) - f(s,u)`.
///
/// Additive functions of the interval are sent to zero exactly.
pub fn delta<F: Fn(usize, usize) -> f64>(f: F, s: usize, u: usize, t: usize) -> f64 {
    f(s, t) - f(u, t) - f(s, u)
}

// ---------------------------------------------------------------------------
// VolterraFunction
// ---------------------------------------------------------------------------

/// A two-time increment family `z(s, t, tau)` with declared exponents.
///
/// `s <= t` are grid indices and `tau >= point(t)` is a real upper time.
/// The declared pair `(alpha, gamma)` states the expected size
/// `|z(s,t,tau)| ~ min(|tau-t|^-gamma |t-s|^alpha, |tau-s|^(alpha-gamma))`;
/// it is not enforced pointwise but is used as the reference shape by the
/// empirical norms.  Evaluations must vanish for `s == t`; the norms never
/// sample coincident base times.
pub struct VolterraFunction<'a> {
    grid: Grid,
    alpha: f64,
    gamma: f64,
    eval: Box<dyn Fn(usize, usize, f64) -> f64 + Send + Sync + 'a>,
}

impl<'a> VolterraFunction<'a> {
    /// Wraps an evaluation closure.  Requires `gamma in [0, 1)`,
    /// `alpha > gamma`, and `alpha <= 3` (iterated integrals of trees of
    /// modest grade have effective exponents above one, so the usual cap
    /// `alpha <= 1` is not imposed).
    pub fn new(
        grid: &Grid,
        alpha: f64,
        gamma: f64,
        eval: impl Fn(usize, usize, f64) -> f64 + Send + Sync + 'a,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::validation(format!(
                "kernel exponent gamma = {gamma} must lie in [0, 1)"
            )));
        }
        if !(alpha > gamma && alpha <= 3.0) {
            return Err(Error::validation(format!(
                "increment exponent alpha = {alpha} must lie in (gamma, 3]"
            )));
        }
        Ok(Self { grid: grid.clone(), alpha, gamma, eval: Box::new(eval) })
    }

    /// The slice of a lift through one tree, as a two-time family.
    ///
    /// The declared exponents are `(|h| rho + gamma, gamma)` where
    /// `rho = alpha - gamma` comes from the lift: each extra node of the
    /// tree raises the increment order by `rho`.
    ///
    /// # Panics
    ///
    /// Evaluating the returned function panics if `h` is not one of the
    /// trees carried by the lift; membership is checked here, so the
    /// panic is unreachable through this constructor.
    pub fn from_lift(lift: &'a VolterraLift, h: &DecoratedTree) -> Result<Self> {
        if !lift.trees().contains(h) {
            return Err(Error::validation(format!(
                "tree {h} is not carried by the lift (grade cap {})",
                lift.level()
            )));
        }
        let alpha = h.grade() as f64 * lift.rho() + lift.gamma();
        let tree = h.clone();
        Self::new(lift.driver().grid(), alpha, lift.gamma(), move |s, t, tau| {
            lift.value(&tree, s, t, tau)
                .expect("lift evaluation validated by construction")
        })
    }

    /// The grid on which base times live.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Declared increment exponent.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Declared singularity exponent.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Declared gap `alpha - gamma`.
    pub fn rho(&self) -> f64 {
        self.alpha - self.gamma
    }

    /// Evaluates `z(s, t, tau)` for grid indices `s <= t`.
    pub fn value(&self, s: usize, t: usize, tau: f64) -> f64 {
        (self.eval)(s, t, tau)
    }

    /// The upper-time difference `z(s,t,tau) - z(s,t,tau2)`.
    pub fn upper_difference(&self, s: usize, t: usize, tau: f64, tau2: f64) -> f64 {
        self.value(s, t, tau) - self.value(s, t, tau2)
    }

    /// Second-order increment in the base pair at fixed upper time.
    pub fn delta(&self, s: usize, u: usize, t: usize, tau: f64) -> f64 {
        delta(|a, b| self.value(a, b, tau), s, u, t)
    }
}

impl fmt::Debug for VolterraFunction<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolterraFunction")
            .field("alpha", &self.alpha)
            .field("gamma", &self.gamma)
            .field("cells", &self.grid.cells())
            .finish()
    }
}

/// Supremum of `|z| / min(|tau-t|^-gamma |t-s|^alpha, |tau-s|^rho)` over
/// grid samples `s < t <= tau`, stepping base and upper indices by
/// `stride` (clamped to at least 1).
///
/// The first branch of the denominator is `+inf` when `tau == t` and
/// `gamma > 0`, so the diagonal is measured by the second branch alone;
/// no sample divides by zero.  Restricting a function to a coarser grid
/// only removes samples, so the norm is monotone under refinement.
pub fn empirical_norm_1(z: &VolterraFunction<'_>, stride: usize) -> f64 {
    let step = stride.max(1);
    let n = z.grid().cells();
    let rho = z.rho();
    let mut sup: f64 = 0.0;
    for s in (0..n).step_by(step) {
        let ps = z.grid().point(s);
        for t in (s + 1..=n).step_by(step) {
            let pt = z.grid().point(t);
            let dt = pt - ps;
            for ti in (t..=n).step_by(step) {
                let tau = z.grid().point(ti);
                let near = (tau - pt).powf(-z.gamma()) * dt.powf(z.alpha());
                let far = (tau - ps).powf(rho);
                let den = near.min(far);
                if den > 0.0 && den.is_finite() {
                    sup = sup.max(z.value(s, t, tau).abs() / den);
                }
            }
        }
    }
    sup
}

/// Supremum of the upper-time difference quotient over grid samples
/// `s < t <= tau < tau'` and the fixed `(eta, zeta)` lattice
/// (`NORM_LATTICE` points per axis, `eta in [0,1]`,
/// `zeta in [0, rho - rho/16]`).
///
/// The reference shape is
/// `|tau-tau'|^eta |tau'-t|^(zeta-eta) *
///  min(|tau'-t|^(-gamma-zeta) |t-s|^alpha, |tau'-s|^(rho-zeta))`;
/// powers of a common base are combined before evaluation so coincident
/// arguments produce an infinite denominator (and a vanishing quotient)
/// rather than `0 * inf`.  Samples with `tau == tau'` are excluded.
pub fn empirical_norm_12(z: &VolterraFunction<'_>, stride: usize) -> f64 {
    let step = stride.max(1);
    let n = z.grid().cells();
    let rho = z.rho();
    let zeta_top = rho - rho / ZETA_MARGIN;
    let lattice: Vec<(f64, f64)> = norm_lattice(zeta_top);
    let mut sup: f64 = 0.0;
    for s in (0..n).step_by(step) {
        let ps = z.grid().point(s);
        for t in (s + 1..=n).step_by(step) {
            let pt = z.grid().point(t);
            let dt = pt - ps;
            for ti in (t..=n).step_by(step) {
                let tau = z.grid().point(ti);
                for tj in (ti + 1..=n).step_by(step) {
                    let tau2 = z.grid().point(tj);
                    let num = z.upper_difference(s, t, tau, tau2).abs();
                    if num == 0.0 {
                        continue;
                    }
                    for &(eta, zeta) in &lattice {
                        // |tau' - t| carries the exponent zeta - eta from the
                        // prefactor plus the exponent of the chosen branch.
                        let near = (tau2 - pt).powf(zeta - eta - z.gamma() - zeta)
                            * dt.powf(z.alpha());
                        let far =
                            (tau2 - pt).powf(zeta - eta) * (tau2 - ps).powf(rho - zeta);
                        let den = (tau2 - tau).powf(eta) * near.min(far);
                        if den > 0.0 && den.is_finite() {
                            sup = sup.max(num / den);
                        }
                    }
                }
            }
        }
    }
    sup
}

/// The `(eta, zeta)` sample lattice shared by the two-parameter norms.
fn norm_lattice(zeta_top: f64) -> Vec<(f64, f64)> {
    let m = NORM_LATTICE;
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        let eta = i as f64 / (m - 1) as f64;
        for j in 0..m {
            let zeta = zeta_top * j as f64 / (m - 1) as f64;
            out.push((eta, zeta));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// MultiParamFunction
// ---------------------------------------------------------------------------

/// A coefficient `y(s, r_1, .., r_n)` with one base grid time and `n`
/// real upper arguments.
///
/// When such a coefficient is convolved against a lift slice through a
/// tree `h`, the `k`-th upper argument corresponds to the `k`-th labeled
/// node of `h` in canonical preorder.
pub struct MultiParamFunction<'a> {
    grid: Grid,
    arity: usize,
    eval: Box<dyn Fn(usize, &[f64]) -> f64 + Send + Sync + 'a>,
}

impl<'a> MultiParamFunction<'a> {
    /// Wraps an evaluation closure with `1 <= arity <= MAX_STAR_GRADE`.
    pub fn new(
        grid: &Grid,
        arity: usize,
        eval: impl Fn(usize, &[f64]) -> f64 + Send + Sync + 'a,
    ) -> Result<Self> {
        if arity == 0 || arity > MAX_STAR_GRADE {
            return Err(Error::validation(format!(
                "coefficient arity {arity} must lie in 1..={MAX_STAR_GRADE}"
            )));
        }
        Ok(Self { grid: grid.clone(), arity, eval: Box::new(eval) })
    }

    /// The grid on which the base time lives.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of upper arguments.
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates the coefficient at base index `s` and upper arguments
    /// `args` (length must equal the arity).
    pub fn value(&self, s: usize, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.arity, "upper-argument count mismatch");
        (self.eval)(s, args)
    }
}

impl fmt::Debug for MultiParamFunction<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiParamFunction")
            .field("arity", &self.arity)
            .field("cells", &self.grid.cells())
            .finish()
    }
}

/// Empirical norm of a multi-parameter coefficient in its `k`-th upper
/// slot (1-based), against the exponent pair `(alpha, gamma)`.
///
/// Samples base pairs `s < t` and upper tuples from grid points at or
/// above `t` (the sector in which upper arguments dominate the base
/// pair), varies the `k`-th argument over a second strided point `u`,
/// and maximises
///
/// ```text
/// |y(t, ..r..) - y(s, ..r..) - y(t, ..u..) + y(s, ..u..)|
/// -------------------------------------------------------
///   |r-u|^eta |M-t|^(zeta-eta) min(|M-t|^(-gamma-zeta) |t-s|^alpha,
///                                  |M-s|^(alpha-gamma-zeta))
/// ```
///
/// over the same `(eta, zeta)` lattice as [`empirical_norm_12`], where
/// `M` is the minimum of all upper arguments including both `r` and `u`.
/// Coefficients that do not depend on slot `k` have norm zero.
pub fn empirical_norm_multi(
    y: &MultiParamFunction<'_>,
    k: usize,
    alpha: f64,
    gamma: f64,
    stride: usize,
) -> Result<f64> {
    if k == 0 || k > y.arity() {
        return Err(Error::validation(format!(
            "slot index {k} out of range for arity {}",
            y.arity()
        )));
    }
    if !(0.0..1.0).contains(&gamma) || alpha <= gamma {
        return Err(Error::validation(format!(
            "exponents (alpha, gamma) = ({alpha}, {gamma}) must satisfy 0 <= gamma < alpha"
        )));
    }
    let rho = alpha - gamma;
    let lattice = norm_lattice(rho - rho / ZETA_MARGIN);
    let step = stride.max(1);
    let n = y.grid().cells();
    let mut sup: f64 = 0.0;
    let mut args = vec![0.0; y.arity()];
    for s in (0..n).step_by(step) {
        let ps = y.grid().point(s);
        for t in (s + 1..=n).step_by(step) {
            let pt = y.grid().point(t);
            let dt = pt - ps;
            // Enumerate strided upper tuples with every argument >= point(t).
            let uppers: Vec<f64> =
                (t..=n).step_by(step).map(|i| y.grid().point(i)).collect();
            let tuples = cartesian_tuples(&uppers, y.arity());
            for tuple in &tuples {
                args.copy_from_slice(tuple);
                for &u in &uppers {
                    let r = tuple[k - 1];
                    if u >= r {
                        // (r, u) pairs are symmetric; visit each once.
                        continue;
                    }
                    let base = y.value(t, &args) - y.value(s, &args);
                    args[k - 1] = u;
                    let num = (base - (y.value(t, &args) - y.value(s, &args))).abs();
                    args[k - 1] = r;
                    if num == 0.0 {
                        continue;
                    }
                    let m = tuple
                        .iter()
                        .copied()
                        .chain(std::iter::once(u))
                        .fold(f64::INFINITY, f64::min);
                    for &(eta, zeta) in &lattice {
                        let near =
                            (m - pt).powf(-eta - gamma) * dt.powf(alpha);
                        let far = (m - pt).powf(zeta - eta) * (m - ps).powf(rho - zeta);
                        let den = (r - u).abs().powf(eta) * near.min(far);
                        if den > 0.0 && den.is_finite() {
                            sup = sup.max(num / den);
                        }
                    }
                }
            }
        }
    }
    Ok(sup)
}

/// All tuples of the given length drawn from `values` (with repetition),
/// in lexicographic order.
fn cartesian_tuples(values: &[f64], len: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for prefix in &out {
            for &v in values {
                let mut tuple = prefix.clone();
                tuple.push(v);
                next.push(tuple);
            }
        }
        out = next;
    }
    out
}

// ---------------------------------------------------------------------------
// AbstractIntegrand and the sewing map
// ---------------------------------------------------------------------------

/// Declared exponents of an abstract integrand: `(alpha, gamma, eta)` for
/// the size of the germ itself and `(beta, kappa, theta)` for the size of
/// its second-order increment, which must be better than first order
/// (`beta > 1`) with integrable singular weights (`kappa + theta < 1`)
/// for the Riemann sums to converge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SewingExponents {
    /// Increment order of the germ.
    pub alpha: f64,
    /// Upper-time singularity of the germ.
    pub gamma: f64,
    /// Lower spectator singularity of the germ.
    pub eta: f64,
    /// Increment order of the second-order increment (must exceed 1).
    pub beta: f64,
    /// Upper-time singularity of the second-order increment.
    pub kappa: f64,
    /// Lower spectator singularity of the second-order increment.
    pub theta: f64,
}

impl SewingExponents {
    /// Exponents with no spectator dependence (`eta = theta = 0`).
    pub fn simple(alpha: f64, gamma: f64, beta: f64, kappa: f64) -> Self {
        Self { alpha, gamma, eta: 0.0, beta, kappa, theta: 0.0 }
    }

    /// Checks the admissibility conditions required by the sewing map.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0) {
            return Err(Error::validation(format!(
                "second-order increment order beta = {} must exceed 1",
                self.beta
            )));
        }
        if !(self.kappa + self.theta > 0.0 && self.kappa + self.theta < 1.0)
            && !(self.kappa == 0.0 && self.theta == 0.0)
        {
            return Err(Error::validation(format!(
                "singularity budget kappa + theta = {} must lie in (0, 1) (or vanish)",
                self.kappa + self.theta
            )));
        }
        if !(self.gamma + self.eta < 1.0) {
            return Err(Error::validation(format!(
                "singularity budget gamma + eta = {} must lie below 1",
                self.gamma + self.eta
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 3.0 && self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::validation(format!(
                "germ exponents (alpha, gamma) = ({}, {}) out of range",
                self.alpha, self.gamma
            )));
        }
        Ok(())
    }
}

/// A germ `Xi(v, s, t, tau)` on the grid, ready for sewing.
///
/// `v <= s <= t` are grid indices (`v` is a spectator lower argument;
/// integrands without one simply ignore it) and `tau >= point(t)` is a
/// real upper time.
pub struct AbstractIntegrand<'a> {
    grid: Grid,
    exponents: SewingExponents,
    eval: Box<dyn Fn(usize, usize, usize, f64) -> f64 + Send + Sync + 'a>,
}

impl<'a> AbstractIntegrand<'a> {
    /// Wraps an evaluation closure after validating the declared
    /// exponents.
    pub fn new(
        grid: &Grid,
        exponents: SewingExponents,
        eval: impl Fn(usize, usize, usize, f64) -> f64 + Send + Sync + 'a,
    ) -> Result<Self> {
        exponents.validate()?;
        Ok(Self { grid: grid.clone(), exponents, eval: Box::new(eval) })
    }

    /// The grid on which time indices live.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The declared exponents.
    pub fn exponents(&self) -> SewingExponents {
        self.exponents
    }

    /// Evaluates the germ.
    pub fn value(&self, v: usize, s: usize, t: usize, tau: f64) -> f64 {
        (self.eval)(v, s, t, tau)
    }
}

impl fmt::Debug for AbstractIntegrand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AbstractIntegrand")
            .field("exponents", &self.exponents)
            .field("cells", &self.grid.cells())
            .finish()
    }
}

/// One dyadic level of a convergence run.
#[derive(Clone, Copy, Debug)]
pub struct LevelRow {
    /// Refinement index, counting from the single-interval sum.
    pub level: u32,
    /// Number of sub-intervals at this level.
    pub intervals: usize,
    /// Riemann sum at this level.
    pub sum: f64,
    /// `|sum - previous sum|`, absent on the first row.
    pub diff: Option<f64>,
    /// `diff / previous diff`, absent while a predecessor is missing or at
    /// the rounding floor.
    pub ratio: Option<f64>,
}

/// Level table, acceptance verdict, and empirical rate of a dyadic
/// refinement run.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    /// One row per computed level, coarsest first.
    pub rows: Vec<LevelRow>,
    /// Whether the acceptance rule held.
    pub accepted: bool,
    /// Mean of `log2(previous diff / diff)` over usable pairs: the
    /// empirical Cauchy rate per halving (`beta - 1` for a germ of
    /// second-order increment order `beta`).
    pub rate: Option<f64>,
    /// The last-difference threshold the run was assessed against.
    pub tolerance: f64,
    /// `|value - whole-interval germ| / expected remainder shape`, when
    /// the shape is finite and positive at the requested arguments.
    pub remainder_ratio: Option<f64>,
}

impl ConvergenceReport {
    /// The finest computed Riemann sum.
    pub fn value(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.sum)
    }

    /// The last refinement difference, if at least two levels ran.
    pub fn last_diff(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.diff)
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>5}  {:>9}  {:>24}  {:>12}  {:>8}", "level", "intervals", "sum", "diff", "ratio")?;
        for row in &self.rows {
            let diff = row.diff.map_or("-".to_string(), |d| format!("{d:.4e}"));
            let ratio = row.ratio.map_or("-".to_string(), |r| format!("{r:.4}"));
            writeln!(
                f,
                "{:>5}  {:>9}  {:>24.16e}  {:>12}  {:>8}",
                row.level, row.intervals, row.sum, diff, ratio
            )?;
        }
        write!(
            f,
            "accepted: {} (tolerance {:.1e}",
            if self.accepted { "yes" } else { "no" },
            self.tolerance
        )?;
        if let Some(rate) = self.rate {
            write!(f, ", rate {rate:.3}")?;
        }
        if let Some(rr) = self.remainder_ratio {
            write!(f, ", remainder ratio {rr:.3e}")?;
        }
        write!(f, ")")
    }
}

/// Value and convergence evidence of a sewing or convolution run.
#[derive(Clone, Debug)]
pub struct SewingResult {
    /// The accepted integral value (finest Riemann sum).
    pub value: f64,
    /// Level-by-level convergence record.
    pub report: ConvergenceReport,
}

/// Controls for dyadic refinement runs.
#[derive(Clone, Copy, Debug)]
pub struct SewingOptions {
    /// Deepest dyadic level to compute (level `l` uses `2^l` intervals);
    /// refinement also stops once intervals reach single cells.
    pub max_levels: u32,
    /// Acceptance threshold for the last refinement difference.
    pub tolerance: f64,
}

impl Default for SewingOptions {
    /// Sixteen levels (enough to reach single cells on grids up to 2^16)
    /// and a last-difference tolerance of `1e-6`.
    fn default() -> Self {
        Self { max_levels: 16, tolerance: 1e-6 }
    }
}

/// The sequence of interval counts for a span: powers of two up to the
/// level cap, plus a final cell-resolution row when the span is not a
/// power of two and the cap did not cut the sequence short.
pub(crate) fn interval_counts(span: usize, max_levels: u32) -> Vec<usize> {
    let cap = max_levels.min(LEVEL_HARD_CAP);
    let mut counts = Vec::new();
    let mut level = 0u32;
    while level <= cap && (1usize << level) <= span {
        counts.push(1usize << level);
        level += 1;
    }
    let reached = counts.last().copied().unwrap_or(1);
    if reached * 2 > span && reached < span {
        counts.push(span);
    }
    counts
}

/// The `k`-th boundary of an `n`-interval partition of `[s, s + span]`,
/// placed on grid indices.
pub(crate) fn chunk_bound(s: usize, span: usize, n: usize, k: usize) -> usize {
    s + span * k / n
}

/// Builds the level table and applies the acceptance rule: the last
/// [`CAUCHY_WINDOW`] differences must each be at the rounding floor or no
/// larger than their predecessor, and the final difference must be below
/// the tolerance.  A single-level run (nothing to refine) is accepted.
pub(crate) fn assess(sums: &[(usize, f64)], tolerance: f64) -> ConvergenceReport {
    let value = sums.last().map_or(0.0, |&(_, s)| s);
    let floor = DIFF_FLOOR_SCALE * (1.0 + value.abs());
    let mut rows: Vec<LevelRow> = Vec::with_capacity(sums.len());
    let mut diffs: Vec<f64> = Vec::new();
    for (i, &(intervals, sum)) in sums.iter().enumerate() {
        let diff = (i > 0).then(|| (sum - sums[i - 1].1).abs());
        if let Some(d) = diff {
            diffs.push(d);
        }
        let ratio = (diffs.len() >= 2 && diffs[diffs.len() - 2] > floor)
            .then(|| diffs[diffs.len() - 1] / diffs[diffs.len() - 2]);
        rows.push(LevelRow { level: i as u32, intervals, sum, diff, ratio });
    }
    let accepted = if diffs.is_empty() {
        true
    } else {
        let last = *diffs.last().expect("non-empty");
        let window = CAUCHY_WINDOW.min(diffs.len());
        let start = diffs.len() - window;
        // Ragged partitions of non-dyadic spans produce bounded bounces
        // in the difference sequence, so single steps may grow by at most
        // a factor of two, while the window as a whole must not grow.
        let bounded = (start..diffs.len())
            .all(|j| diffs[j] <= floor || j == 0 || diffs[j] <= 2.0 * diffs[j - 1]);
        let net = last <= diffs[start].max(floor) * (1.0 + 1e-9);
        bounded && net && last < tolerance
    };
    let mut rate_terms = Vec::new();
    for j in 1..diffs.len() {
        if diffs[j] > floor && diffs[j - 1] > floor {
            rate_terms.push((diffs[j - 1] / diffs[j]).log2());
        }
    }
    let rate = (!rate_terms.is_empty())
        .then(|| rate_terms.iter().sum::<f64>() / rate_terms.len() as f64);
    ConvergenceReport { rows, accepted, rate, tolerance, remainder_ratio: None }
}

/// The expected sewing-remainder shape
/// `min(|tau-t|^-kappa |t-s|^beta |s-v|^-theta, |tau-v|^(beta-kappa-theta))`
/// at real times, or `None` when degenerate.
pub(crate) fn remainder_shape(
    pv: f64,
    ps: f64,
    pt: f64,
    tau: f64,
    beta: f64,
    kappa: f64,
    theta: f64,
) -> Option<f64> {
    let near = (tau - pt).powf(-kappa) * (pt - ps).powf(beta) * (ps - pv).powf(-theta);
    let far = (tau - pv).powf(beta - kappa - theta);
    let shape = near.min(far);
    (shape.is_finite() && shape > 0.0).then_some(shape)
}

/// Integrates an abstract germ over `[s, t]` by dyadic Riemann sums.
///
/// Returns the finest sum together with the convergence record, or a
/// diagnostic error (carrying the level table) when the sums fail the
/// acceptance rule.  `v <= s` is the spectator lower argument; pass
/// `v = s` for integrands without one.
pub fn sewing_integrate(
    xi: &AbstractIntegrand<'_>,
    v: usize,
    s: usize,
    t: usize,
    tau: f64,
    opts: &SewingOptions,
) -> Result<SewingResult> {
    let grid = xi.grid();
    if v > s || s > t || t > grid.cells() {
        return Err(Error::validation(format!(
            "sewing arguments must satisfy v <= s <= t <= {} (got {v}, {s}, {t})",
            grid.cells()
        )));
    }
    if tau < grid.point(t) {
        return Err(Error::validation(format!(
            "upper time {tau} lies below the interval end {}",
            grid.point(t)
        )));
    }
    if opts.tolerance <= 0.0 {
        return Err(Error::validation("sewing tolerance must be positive"));
    }
    if s == t {
        let report = assess(&[(1, 0.0)], opts.tolerance);
        return Ok(SewingResult { value: 0.0, report });
    }
    let span = t - s;
    let sums: Vec<(usize, f64)> = interval_counts(span, opts.max_levels)
        .into_iter()
        .map(|n| {
            let mut acc = 0.0;
            for k in 0..n {
                let a = chunk_bound(s, span, n, k);
                let b = chunk_bound(s, span, n, k + 1);
                acc += xi.value(v, a, b, tau);
            }
            (n, acc)
        })
        .collect();
    let mut report = assess(&sums, opts.tolerance);
    let e = xi.exponents();
    report.remainder_ratio = remainder_shape(
        grid.point(v),
        grid.point(s),
        grid.point(t),
        tau,
        e.beta,
        e.kappa,
        e.theta,
    )
    .map(|shape| (report.value() - xi.value(v, s, t, tau)).abs() / shape);
    if !report.accepted {
        return Err(Error::diagnostic(format!(
            "sewing sums over [{s}, {t}] (tau = {tau}) are not Cauchy:\n{report}"
        )));
    }
    Ok(SewingResult { value: report.value(), report })
}

// ---------------------------------------------------------------------------
// star_base
// ---------------------------------------------------------------------------

/// Convolves `z` against the upper argument of `y` over `[u, t]`:
/// the limit of `sum z(u', v', tau) y(s, u, u')` over dyadic partitions
/// of `[u, t]` with cells `[u', v']`.
///
/// Requires `2 rho + gamma > 1` for `z`'s declared exponents (the
/// second-order increment of the germ has order `2 rho + gamma`, which
/// must exceed one for the sums to converge).  When `y` does not depend
/// on its upper argument and `z` is additive in its base pair, every
/// level equals `z(u, t, tau) * y(s, u, _)` and the run is accepted at
/// the rounding floor.
pub fn star_base(
    z: &VolterraFunction<'_>,
    y: &VolterraFunction<'_>,
    s: usize,
    u: usize,
    t: usize,
    tau: f64,
    opts: &SewingOptions,
) -> Result<SewingResult> {
    if z.grid() != y.grid() {
        return Err(Error::validation(
            "convolution factors must share one grid",
        ));
    }
    let grid = z.grid();
    if s > u || u > t || t > grid.cells() {
        return Err(Error::validation(format!(
            "convolution arguments must satisfy s <= u <= t <= {} (got {s}, {u}, {t})",
            grid.cells()
        )));
    }
    if tau < grid.point(t) {
        return Err(Error::validation(format!(
            "upper time {tau} lies below the interval end {}",
            grid.point(t)
        )));
    }
    let rho = z.rho();
    let beta = 2.0 * rho + z.gamma();
    if !(beta > 1.0) {
        return Err(Error::validation(format!(
            "declared exponents give convolution order {beta} <= 1; \
             the limit is not guaranteed"
        )));
    }
    if u == t {
        let report = assess(&[(1, 0.0)], opts.tolerance);
        return Ok(SewingResult { value: 0.0, report });
    }
    let span = t - u;
    let sums: Vec<(usize, f64)> = interval_counts(span, opts.max_levels)
        .into_iter()
        .map(|n| {
            let mut acc = 0.0;
            for k in 0..n {
                let a = chunk_bound(u, span, n, k);
                let b = chunk_bound(u, span, n, k + 1);
                acc += z.value(a, b, tau) * y.value(s, u, grid.point(a));
            }
            (n, acc)
        })
        .collect();
    let mut report = assess(&sums, opts.tolerance);
    report.remainder_ratio = remainder_shape(
        grid.point(s),
        grid.point(s),
        grid.point(t),
        tau,
        beta,
        z.gamma(),
        0.0,
    )
    .map(|shape| {
        (report.value() - z.value(u, t, tau) * y.value(s, u, grid.point(u))).abs() / shape
    });
    if !report.accepted {
        return Err(Error::diagnostic(format!(
            "convolution sums over [{u}, {t}] (tau = {tau}) are not Cauchy:\n{report}"
        )));
    }
    Ok(SewingResult { value: report.value(), report })
}

// ---------------------------------------------------------------------------
// star_tree: the recursive convolution against a lift slice
// ---------------------------------------------------------------------------

/// Node bindings by original-preorder slot; slot 0 is unused (the root
/// variable travels separately).
pub(crate) type Slots = [f64; MAX_STAR_GRADE + 1];

/// A cut of the working tree with its maps into original preorder.
struct PlanCut {
    trunk: DecoratedTree,
    /// Canonical trunk preorder index -> original preorder index.
    trunk_nodes: Vec<usize>,
    pieces: Vec<PlanPiece>,
}

/// One pruned piece; `nodes[0]` is the original index of the attachment
/// node (0 for the root).
struct PlanPiece {
    tree: DecoratedTree,
    nodes: Vec<usize>,
}

/// Shared state of one convolution run.
pub(crate) struct StarCtx<'c> {
    lift: &'c VolterraLift,
    grid: &'c Grid,
    /// Grade of the top tree; the recursion must never nest deeper.
    pub(crate) top: usize,
    cuts: RefCell<HashMap<DecoratedTree, Rc<Vec<PlanCut>>>>,
}

impl<'c> StarCtx<'c> {
    pub(crate) fn new(lift: &'c VolterraLift) -> Self {
        Self { lift, grid: lift.driver().grid(), top: 0, cuts: RefCell::new(HashMap::new()) }
    }

    /// Lift slice value for a working tree over `[a, b]` with root
    /// variable `xi`.
    fn z(&self, sigma: &DecoratedTree, a: usize, b: usize, xi: f64) -> Result<f64> {
        self.lift.value(sigma, a, b, xi)
    }

    /// Proper cuts of `sigma` (both sides non-trivial) with node maps,
    /// cached per tree.
    fn cuts(&self, sigma: &DecoratedTree) -> Rc<Vec<PlanCut>> {
        if let Some(plans) = self.cuts.borrow().get(sigma) {
            return Rc::clone(plans);
        }
        let plans: Vec<PlanCut> = coproduct_detailed(sigma)
            .into_iter()
            .filter(|d| !d.term.pruned.is_empty() && !d.term.trunk.is_unit())
            .map(|d| PlanCut {
                trunk: d.term.trunk,
                trunk_nodes: d.trunk_nodes,
                pieces: d
                    .term
                    .pruned
                    .into_iter()
                    .zip(d.pruned_nodes)
                    .map(|(p, nodes)| PlanPiece { tree: p.tree, nodes })
                    .collect(),
            })
            .collect();
        let plans = Rc::new(plans);
        self.cuts.borrow_mut().insert(sigma.clone(), Rc::clone(&plans));
        plans
    }
}

/// A piece with its slot map composed into the top tree's preorder
/// space; `attach` is `None` for root attachment.
pub(crate) struct BoundPiece {
    pub(crate) tree: DecoratedTree,
    pub(crate) map: Vec<usize>,
    pub(crate) attach: Option<usize>,
}

/// Evaluation closures over full slot assignments.
pub(crate) type ArgFn<'f> = &'f dyn Fn(&Slots) -> Result<f64>;

/// Sums the cell germs of `sigma` over `[a, b]` with root variable `xi`.
///
/// `map` sends `sigma`'s preorder indices to slot indices of the top
/// tree.  The unit tree contracts nothing and returns `w` unchanged.
pub(crate) fn star_span(
    ctx: &StarCtx<'_>,
    sigma: &DecoratedTree,
    map: &[usize],
    a: usize,
    b: usize,
    xi: f64,
    slots: &Slots,
    w: ArgFn<'_>,
    depth: usize,
) -> Result<f64> {
    if sigma.is_unit() {
        return w(slots);
    }
    if depth > ctx.top {
        return Err(Error::validation(format!(
            "convolution recursion nested deeper than the tree grade {}",
            ctx.top
        )));
    }
    let mut acc = 0.0;
    for l in a..b {
        acc += star_germ(ctx, sigma, map, a, l, l + 1, xi, slots, w, depth)?;
    }
    Ok(acc)
}

/// One germ of the convolution: the working tree's block over `[u, v]`
/// against `w` frozen at the left endpoint, plus one correction per
/// proper cut, whose pieces convolve over `[base, u]` and whose trunk
/// contracts over `[u, v]` at cell resolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn star_germ(
    ctx: &StarCtx<'_>,
    sigma: &DecoratedTree,
    map: &[usize],
    base: usize,
    u: usize,
    v: usize,
    xi: f64,
    slots: &Slots,
    w: ArgFn<'_>,
    depth: usize,
) -> Result<f64> {
    let r_u = ctx.grid.point(u);
    let mut frozen = *slots;
    for i in 1..=sigma.grade() {
        frozen[map[i]] = r_u;
    }
    let mut acc = ctx.z(sigma, u, v, xi)? * w(&frozen)?;
    for cut in ctx.cuts(sigma).iter() {
        let tmap: Vec<usize> =
            cut.trunk_nodes.iter().map(|&orig| map[orig]).collect();
        let pieces: Vec<BoundPiece> = cut
            .pieces
            .iter()
            .map(|p| BoundPiece {
                tree: p.tree.clone(),
                map: p.nodes.iter().map(|&orig| map[orig]).collect(),
                attach: (p.nodes[0] != 0).then(|| map[p.nodes[0]]),
            })
            .collect();
        let wcut = |bound: &Slots| -> Result<f64> {
            eval_pieces(ctx, &pieces, base, u, xi, bound, w, depth + 1)
        };
        acc += star_span(ctx, &cut.trunk, &tmap, u, v, xi, slots, &wcut, depth + 1)?;
    }
    Ok(acc)
}

/// Convolves a list of pruned pieces, one slot group at a time, over
/// `[base, upto]`, then hands the fully bound slots to `w`.  A piece
/// attached at a trunk node is rooted at that node's current binding; a
/// piece attached at the root is rooted at `xi`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn eval_pieces(
    ctx: &StarCtx<'_>,
    pieces: &[BoundPiece],
    base: usize,
    upto: usize,
    xi: f64,
    slots: &Slots,
    w: ArgFn<'_>,
    depth: usize,
) -> Result<f64> {
    match pieces.split_first() {
        None => w(slots),
        Some((piece, rest)) => {
            let xi_piece = match piece.attach {
                None => xi,
                Some(slot) => slots[slot],
            };
            let wn = |bound: &Slots| -> Result<f64> {
                eval_pieces(ctx, rest, base, upto, xi, bound, w, depth)
            };
            star_span(ctx, &piece.tree, &piece.map, base, upto, xi_piece, slots, &wn, depth)
        }
    }
}

/// Validates the common arguments of the tree convolution entry points.
fn check_star_tree(
    lift: &VolterraLift,
    h: &DecoratedTree,
    y: &MultiParamFunction<'_>,
    s: usize,
    t: usize,
    tau: f64,
) -> Result<()> {
    let grade = h.grade();
    if grade == 0 {
        return Err(Error::validation(
            "the unit tree has no convolution content; pass a tree with at least one node",
        ));
    }
    if grade > MAX_STAR_GRADE {
        return Err(Error::validation(format!(
            "tree grade {grade} exceeds the convolution cap {MAX_STAR_GRADE}"
        )));
    }
    if !lift.trees().contains(h) {
        return Err(Error::validation(format!(
            "tree {h} is not carried by the lift (grade cap {})",
            lift.level()
        )));
    }
    if y.arity() != grade {
        return Err(Error::validation(format!(
            "coefficient arity {} does not match the tree grade {grade}",
            y.arity()
        )));
    }
    let grid = lift.driver().grid();
    if y.grid() != grid {
        return Err(Error::validation(
            "coefficient and lift must share one grid",
        ));
    }
    if s > t || t > grid.cells() {
        return Err(Error::validation(format!(
            "base indices must satisfy s <= t <= {} (got {s}, {t})",
            grid.cells()
        )));
    }
    if tau < grid.point(t) {
        return Err(Error::validation(format!(
            "upper time {tau} lies below the interval end {}",
            grid.point(t)
        )));
    }
    Ok(())
}

/// Convolves the lift slice through `h` against a coefficient with one
/// upper argument per labeled node of `h` (in canonical preorder), over
/// `[s, t]` with upper time `tau`.
///
/// Dyadic germ sums are refined and assessed exactly as in
/// [`sewing_integrate`]; the reported remainder quotient compares
/// `value - z^h(s,t,tau) * y(s, point(s), ..)` against the shape
/// `min(|tau-t|^-gamma |t-s|^(|h| rho + gamma), |tau-s|^(|h| rho))` in
/// which the convolution's deviation from its leading block is expected
/// to be bounded.
pub fn star_tree(
    lift: &VolterraLift,
    h: &DecoratedTree,
    y: &MultiParamFunction<'_>,
    s: usize,
    t: usize,
    tau: f64,
    opts: &SewingOptions,
) -> Result<SewingResult> {
    check_star_tree(lift, h, y, s, t, tau)?;
    let grade = h.grade();
    let grid = lift.driver().grid();
    if s == t {
        let report = assess(&[(1, 0.0)], opts.tolerance);
        return Ok(SewingResult { value: 0.0, report });
    }
    let mut ctx = StarCtx::new(lift);
    ctx.top = grade;
    let idmap: Vec<usize> = (0..=grade).collect();
    let w_root = |slots: &Slots| -> Result<f64> { Ok(y.value(s, &slots[1..=grade])) };
    let blank = [f64::NAN; MAX_STAR_GRADE + 1];
    let span = t - s;
    let mut sums: Vec<(usize, f64)> = Vec::new();
    for n in interval_counts(span, opts.max_levels) {
        let mut acc = 0.0;
        for k in 0..n {
            let a = chunk_bound(s, span, n, k);
            let b = chunk_bound(s, span, n, k + 1);
            acc += star_germ(&ctx, h, &idmap, s, a, b, tau, &blank, &w_root, 0)?;
        }
        sums.push((n, acc));
    }
    let mut report = assess(&sums, opts.tolerance);
    let alpha_h = grade as f64 * lift.rho() + lift.gamma();
    let leading =
        lift.value(h, s, t, tau)? * y.value(s, &vec![grid.point(s); grade]);
    report.remainder_ratio = remainder_shape(
        grid.point(s),
        grid.point(s),
        grid.point(t),
        tau,
        alpha_h,
        lift.gamma(),
        0.0,
    )
    .map(|shape| (report.value() - leading).abs() / shape);
    if !report.accepted {
        return Err(Error::diagnostic(format!(
            "convolution germ sums for {h} over [{s}, {t}] (tau = {tau}) are not Cauchy:\n{report}"
        )));
    }
    Ok(SewingResult { value: report.value(), report })
}

/// Defect of the operator splitting identity at `u`: the second-order
/// increment, in the convolution interval, of the cell-resolution map
/// `[a, b] -> z^h over [a, b] convolved against y(s, ..)` minus the
/// cut-term reconstruction
///
/// ```text
/// sum over proper cuts: [trunk over [u, t]] * ([pieces over [s, u]] * y(s, ..)).
/// ```
///
/// The coefficient stays based at `s` throughout; only the interval is
/// split.  On a shared grid the germs partition the quadrature index
/// sets, so the defect is rounding-level; it is the operator counterpart
/// of the lift's splitting identity.
pub fn operator_chen_defect(
    lift: &VolterraLift,
    h: &DecoratedTree,
    y: &MultiParamFunction<'_>,
    s: usize,
    u: usize,
    t: usize,
    tau: f64,
) -> Result<f64> {
    check_star_tree(lift, h, y, s, t, tau)?;
    if u < s || u > t {
        return Err(Error::validation(format!(
            "split index {u} must lie inside [{s}, {t}]"
        )));
    }
    let grade = h.grade();
    let mut ctx = StarCtx::new(lift);
    ctx.top = grade;
    let idmap: Vec<usize> = (0..=grade).collect();
    let blank = [f64::NAN; MAX_STAR_GRADE + 1];
    let w_s = |slots: &Slots| -> Result<f64> { Ok(y.value(s, &slots[1..=grade])) };
    let f_ts = star_span(&ctx, h, &idmap, s, t, tau, &blank, &w_s, 0)?;
    let f_tu = star_span(&ctx, h, &idmap, u, t, tau, &blank, &w_s, 0)?;
    let f_us = star_span(&ctx, h, &idmap, s, u, tau, &blank, &w_s, 0)?;
    let lhs = f_ts - f_tu - f_us;
    // The germ of the whole block [u, t] with base s consists of the
    // leading term plus exactly the cut reconstruction; remove the
    // leading term to isolate the right-hand side.
    let germ = star_germ(&ctx, h, &idmap, s, u, t, tau, &blank, &w_s, 0)?;
    let leading = lift.value(h, u, t, tau)?
        * y.value(s, &vec![lift.driver().grid().point(u); grade]);
    let rhs = germ - leading;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::DriverPath;
    use crate::kernel::VolterraKernel;
    use crate::quadrature::TreeQuadrature;

    /// Smooth two-component driver on `[0, 1]`: a gentle polynomial and a
    /// sine arch, both with non-constant slopes.
    fn smooth_driver(cells: usize) -> DriverPath {
        let grid = Grid::uniform(1.0, cells).expect("grid");
        DriverPath::from_fn(grid, 2, |i, r| match i {
            1 => r + 0.25 * r * r,
            _ => (std::f64::consts::PI * r).sin() * 0.5,
        })
        .expect("driver")
    }

    fn fractional_kernel(gamma: f64) -> VolterraKernel {
        VolterraKernel::fractional(gamma).expect("kernel")
    }

    fn smooth_lift(cells: usize, level: usize) -> VolterraLift {
        let driver = smooth_driver(cells);
        VolterraLift::build(&fractional_kernel(0.25), &driver, 1.0, 0.25, level, 0)
            .expect("lift")
    }

    #[test]
    fn delta_of_an_additive_function_vanishes() {
        let grid = Grid::uniform(1.0, 16).expect("grid");
        let q = DriverPath::from_fn(grid, 1, |_, r| r * r - 0.5 * r).expect("driver");
        let f = |a: usize, b: usize| q.increment(1, a, b);
        for (s, u, t) in [(0, 4, 9), (1, 2, 16), (3, 10, 12)] {
            assert_eq!(delta(f, s, u, t), 0.0);
        }
    }

    #[test]
    fn delta_of_the_squared_increment_matches_the_worked_value() {
        // f(s, t) = (t - s)^2 on integer times: delta at (0, 1, 2) is
        // 4 - 1 - 1 = 2.
        let f = |a: usize, b: usize| ((b - a) as f64).powi(2);
        assert_eq!(delta(f, 0, 1, 2), 2.0);
    }

    #[test]
    fn exponent_validation_rejects_out_of_range_declarations() {
        let ok = SewingExponents::simple(1.0, 0.25, 1.75, 0.25);
        assert!(ok.validate().is_ok());
        let low_beta = SewingExponents::simple(1.0, 0.25, 1.0, 0.25);
        assert!(low_beta.validate().is_err());
        let heavy = SewingExponents { kappa: 0.7, theta: 0.5, ..ok };
        assert!(heavy.validate().is_err());
        let singular_germ = SewingExponents { gamma: 0.8, eta: 0.3, ..ok };
        assert!(singular_germ.validate().is_err());
        let grid = Grid::uniform(1.0, 8).expect("grid");
        assert!(AbstractIntegrand::new(&grid, low_beta, |_, _, _, _| 0.0).is_err());
    }

    #[test]
    fn norms_of_the_zero_function_vanish() {
        let grid = Grid::uniform(1.0, 16).expect("grid");
        let z = VolterraFunction::new(&grid, 1.0, 0.25, |_, _, _| 0.0).expect("z");
        assert_eq!(empirical_norm_1(&z, 1), 0.0);
        assert_eq!(empirical_norm_12(&z, 1), 0.0);
        let y = MultiParamFunction::new(&grid, 2, |_, _| 0.0).expect("y");
        assert_eq!(empirical_norm_multi(&y, 1, 1.0, 0.25, 1).expect("norm"), 0.0);
    }

    #[test]
    fn multi_norm_ignores_inactive_slots() {
        // A coefficient depending only on its first upper argument has
        // zero variation in the second slot and finite variation in the
        // first.
        let grid = Grid::uniform(1.0, 8).expect("grid");
        let y = MultiParamFunction::new(&grid, 2, |s, args| {
            s as f64 * 0.125 + args[0].powi(2)
        })
        .expect("y");
        let idle = empirical_norm_multi(&y, 2, 1.0, 0.25, 1).expect("slot 2");
        assert_eq!(idle, 0.0);
        let active = empirical_norm_multi(&y, 1, 1.0, 0.25, 1).expect("slot 1");
        assert!(active == 0.0, "base and slot variation do not mix: {active}");
        let mixed = MultiParamFunction::new(&grid, 2, |s, args| {
            (1.0 + s as f64 * 0.125) * args[0].powi(2)
        })
        .expect("mixed");
        let coupled = empirical_norm_multi(&mixed, 1, 1.0, 0.25, 1).expect("slot 1");
        assert!(coupled > 0.0 && coupled.is_finite(), "coupled norm {coupled}");
    }

    #[test]
    fn norm_of_the_linear_increment_is_one() {
        // z = t - s with alpha = 1, gamma = 0: the reference shape is
        // min(t - s, tau - s) = t - s at every sample, so the quotient is
        // identically one.
        let grid = Grid::uniform(1.0, 32).expect("grid");
        let z = VolterraFunction::new(&grid, 1.0, 0.0, |s, t, _| {
            grid.point(t) - grid.point(s)
        })
        .expect("z");
        let norm = empirical_norm_1(&z, 1);
        assert!((norm - 1.0).abs() < 1e-12, "norm = {norm}");
    }

    #[test]
    fn norms_are_monotone_under_grid_refinement() {
        // The same formula sampled on a refined grid (a superset of the
        // coarse points) can only enlarge the supremum.
        let coarse = Grid::uniform(1.0, 16).expect("grid");
        let fine = coarse.refined(1);
        let formula = |g: Grid| {
            move |s: usize, t: usize, tau: f64| {
                let dt = g.point(t) - g.point(s);
                dt.powf(0.8) * (1.0 + tau).recip()
            }
        };
        let zc =
            VolterraFunction::new(&coarse, 0.8, 0.25, formula(coarse.clone())).expect("zc");
        let zf = VolterraFunction::new(&fine, 0.8, 0.25, formula(fine.clone())).expect("zf");
        assert!(empirical_norm_1(&zf, 1) >= empirical_norm_1(&zc, 1));
        assert!(empirical_norm_12(&zf, 1) >= empirical_norm_12(&zc, 1));
    }

    #[test]
    fn constant_kernel_slices_have_no_upper_variation() {
        // With the constant kernel the single-node slice is q(t) - q(s),
        // independent of the upper time, so the two-parameter norm is 0.
        let driver = smooth_driver(24);
        let lift = VolterraLift::build(
            &VolterraKernel::constant(),
            &driver,
            1.0,
            0.0,
            1,
            0,
        )
        .expect("lift");
        let z = VolterraFunction::from_lift(&lift, &DecoratedTree::single(1)).expect("z");
        assert_eq!(empirical_norm_12(&z, 2), 0.0);
        assert!(empirical_norm_1(&z, 2) > 0.0);
    }

    #[test]
    fn sewing_reproduces_the_fractional_kernel_antiderivative() {
        // Germ k(tau, s) (t - s) for the time component: the limit is
        // int_s^t k(tau, r) dr with closed form
        // ((tau-s)^(1-g) - (tau-t)^(1-g)) / (1-g).
        let grid = Grid::uniform(1.0, 1024).expect("grid");
        let gamma = 0.25;
        let kernel = fractional_kernel(gamma);
        let exps = SewingExponents::simple(1.0, gamma, 2.0 - gamma, gamma);
        let xi = AbstractIntegrand::new(&grid, exps, |_, a, b, tau| {
            kernel.eval(tau, grid.point(a)) * (grid.point(b) - grid.point(a))
        })
        .expect("integrand");
        let (s, t, tau) = (0, 1024, 1.5);
        let opts = SewingOptions { max_levels: 16, tolerance: 1e-3 };
        let run = sewing_integrate(&xi, s, s, t, tau, &opts).expect("converges");
        let closed = ((tau - grid.point(s)).powf(1.0 - gamma)
            - (tau - grid.point(t)).powf(1.0 - gamma))
            / (1.0 - gamma);
        let rel = (run.value - closed).abs() / closed.abs();
        assert!(rel < 5e-3, "relative error {rel}");
        assert!(run.report.accepted);
        assert!(run.report.remainder_ratio.expect("shape is finite").is_finite());
    }

    #[test]
    fn sewing_of_a_constant_path_vanishes() {
        let grid = Grid::uniform(1.0, 64).expect("grid");
        let exps = SewingExponents::simple(1.0, 0.25, 1.75, 0.25);
        let xi = AbstractIntegrand::new(&grid, exps, |_, a, b, tau| {
            // Increment of a constant path under any kernel weight.
            let _ = (a, b, tau);
            0.0
        })
        .expect("integrand");
        let run =
            sewing_integrate(&xi, 0, 0, 64, 1.25, &SewingOptions::default()).expect("ok");
        assert_eq!(run.value, 0.0);
        for row in &run.report.rows {
            assert_eq!(row.sum, 0.0);
        }
    }

    #[test]
    fn sewing_output_is_additive_at_cell_resolution() {
        // The finest Riemann sums over [s, u], [u, t], and [s, t] share
        // the same cells, so the second-order increment of the sewn
        // integral vanishes to rounding.
        let grid = Grid::uniform(1.0, 256).expect("grid");
        let gamma = 0.25;
        let kernel = fractional_kernel(gamma);
        let driver = smooth_driver(256);
        let exps = SewingExponents::simple(1.0, gamma, 2.0 - gamma, gamma);
        let xi = AbstractIntegrand::new(&grid, exps, |_, a, b, tau| {
            kernel.eval(tau, grid.point(a)) * driver.increment(2, a, b)
        })
        .expect("integrand");
        let opts = SewingOptions { max_levels: 16, tolerance: 1e-2 };
        let tau = 1.25;
        let value = |a: usize, b: usize| {
            sewing_integrate(&xi, a, a, b, tau, &opts).expect("converges").value
        };
        let defect = delta(value, 0, 96, 256);
        let scale = value(0, 256).abs().max(1.0);
        assert!(
            defect.abs() <= 1e-12 * scale,
            "additivity defect {defect} at scale {scale}"
        );
    }

    #[test]
    fn sewing_diagnoses_non_cauchy_germs() {
        // A germ built from deterministic pseudo-noise has Riemann sums
        // that wander instead of converging.
        let grid = Grid::uniform(1.0, 256).expect("grid");
        let exps = SewingExponents::simple(1.0, 0.0, 1.5, 0.0);
        let xi = AbstractIntegrand::new(&grid, exps, |_, a, b, _| {
            let mix = (a.wrapping_mul(2654435761) ^ b.wrapping_mul(40503)) & 0xffff;
            mix as f64 / 65536.0 - 0.5
        })
        .expect("integrand");
        let err = sewing_integrate(&xi, 0, 0, 256, 1.0, &SewingOptions::default())
            .expect_err("must fail");
        let text = err.to_string();
        assert!(text.contains("not Cauchy"), "unexpected diagnostic: {text}");
    }

    #[test]
    fn sewing_rate_at_the_singular_corner_matches_rho() {
        // Germ k(tau, a) (b - a) with tau pinned at the interval end:
        // the kernel's diagonal singularity sits at the last cell, the
        // left-point sums converge at the reduced order rho = 1 - gamma,
        // and the Cauchy rate per halving approaches 0.75.
        let grid = Grid::uniform(1.0, 1024).expect("grid");
        let gamma = 0.25;
        let kernel = fractional_kernel(gamma);
        let exps = SewingExponents::simple(1.0, gamma, 2.0 - gamma, gamma);
        let xi = AbstractIntegrand::new(&grid, exps, |_, a, b, tau| {
            kernel.eval(tau, grid.point(a)) * (grid.point(b) - grid.point(a))
        })
        .expect("integrand");
        let opts = SewingOptions { max_levels: 10, tolerance: 1e-2 };
        let run = sewing_integrate(&xi, 0, 0, 1024, grid.point(1024), &opts)
            .expect("converges");
        // Use only the deeper levels (4 and up), where the asymptotic
        // rate has set in.
        let mut rates = Vec::new();
        for pair in run.report.rows.windows(2).skip(4) {
            if let (Some(d0), Some(d1)) = (pair[0].diff, pair[1].diff) {
                if d0 > 0.0 && d1 > 0.0 {
                    rates.push((d0 / d1).log2());
                }
            }
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        assert!(
            (mean - 0.75).abs() < 0.15,
            "empirical rate {mean}, expected about 0.75 (rates {rates:?})"
        );
    }

    #[test]
    fn star_base_freezes_to_a_tensor_product() {
        // y constant in its upper argument: every level is exactly
        // z(u, t, tau) * y(s, u), because the lift slice is additive in
        // its base pair.
        let lift = smooth_lift(64, 1);
        let z = VolterraFunction::from_lift(&lift, &DecoratedTree::single(1)).expect("z");
        let y_frozen = VolterraFunction::new(z.grid(), 1.0, 0.25, |s, u, _| {
            (u - s) as f64 * 0.01 + 0.5
        })
        .expect("y");
        let (s, u, t, tau) = (0, 16, 64, 1.25);
        let run = star_base(&z, &y_frozen, s, u, t, tau, &SewingOptions::default())
            .expect("converges");
        let product = z.value(u, t, tau) * y_frozen.value(s, u, 0.0);
        for row in &run.report.rows {
            assert!(
                (row.sum - product).abs() <= 1e-13 * product.abs().max(1.0),
                "level {} sum {} differs from product {product}",
                row.level,
                row.sum
            );
        }
    }

    #[test]
    fn star_base_with_constant_kernel_splits_into_increments() {
        // k = 1 makes both slices plain increments, so the convolution is
        // the product of increments over [u, t] and [s, u].
        let driver = smooth_driver(48);
        let lift =
            VolterraLift::build(&VolterraKernel::constant(), &driver, 1.0, 0.0, 2, 0)
                .expect("lift");
        let z = VolterraFunction::from_lift(&lift, &DecoratedTree::single(1)).expect("z");
        let y = VolterraFunction::from_lift(&lift, &DecoratedTree::single(2)).expect("y");
        let (s, u, t, tau) = (4, 20, 48, 1.0);
        let run =
            star_base(&z, &y, s, u, t, tau, &SewingOptions::default()).expect("converges");
        let expected = driver.increment(1, u, t) * driver.increment(2, s, u);
        assert!(
            (run.value - expected).abs() <= 1e-13 * expected.abs().max(1.0),
            "value {} vs product {expected}",
            run.value
        );
    }

    #[test]
    fn star_base_matches_weighted_quadrature_of_the_trunk() {
        // Independent evaluation: freeze the upper argument of y along
        // the grid and integrate the trunk with those weights using the
        // quadrature engine.
        let cells = 96;
        let driver = smooth_driver(cells);
        let kernel = fractional_kernel(0.25);
        let lift = VolterraLift::build(&kernel, &driver, 1.0, 0.25, 2, 0).expect("lift");
        let z = VolterraFunction::from_lift(&lift, &DecoratedTree::single(1)).expect("z");
        let y = VolterraFunction::from_lift(&lift, &DecoratedTree::single(2)).expect("y");
        let (s, u, t, tau) = (8, 32, 96, 1.5);
        let opts = SewingOptions { max_levels: 16, tolerance: 1e-2 };
        let run = star_base(&z, &y, s, u, t, tau, &opts).expect("converges");

        let engine = TreeQuadrature::new(&driver, &kernel, 0).expect("engine");
        let grid = driver.grid();
        let weights: Vec<f64> =
            (0..=cells).map(|l| y.value(s, u, grid.point(l.max(u)))).collect();
        let mut map = std::collections::BTreeMap::new();
        map.insert(1, weights);
        let oracle = engine
            .integral_weighted(&DecoratedTree::single(1), &map, u, t, tau)
            .expect("weighted");
        assert!(
            (run.value - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
            "star {} vs weighted quadrature {oracle}",
            run.value
        );
    }

    #[test]
    fn star_tree_on_a_single_node_equals_star_base() {
        let lift = smooth_lift(64, 1);
        let grid = lift.driver().grid().clone();
        let h = DecoratedTree::single(1);
        let z = VolterraFunction::from_lift(&lift, &h).expect("z");
        let profile = |r: f64| 1.0 + 0.3 * (2.0 * r).cos();
        let y_multi =
            MultiParamFunction::new(&grid, 1, move |_, args| profile(args[0])).expect("y");
        let y_two = VolterraFunction::new(&grid, 1.0, 0.25, move |_, _, upper| {
            profile(upper)
        })
        .expect("y2");
        let (s, t, tau) = (0, 64, 1.125);
        // The coefficient varies first-order in its upper argument, so on
        // a 64-cell grid the refinement stalls near 5e-3.
        let opts = SewingOptions { max_levels: 16, tolerance: 1e-1 };
        let a = star_tree(&lift, &h, &y_multi, s, t, tau, &opts).expect("tree");
        let b = star_base(&z, &y_two, s, s, t, tau, &opts).expect("base");
        assert_eq!(a.value, b.value, "identical germ sums must agree bitwise");
    }

    #[test]
    fn star_tree_with_frozen_coefficients_reproduces_the_lift() {
        // y independent of its upper arguments: the germs rearrange the
        // quadrature index sets exactly, so every dyadic level equals
        // z^h(s, t, tau) * y.
        let lift = smooth_lift(48, 3);
        let grid = lift.driver().grid().clone();
        let trees = [
            DecoratedTree::ladder(&[1, 2]),
            DecoratedTree::node(None, vec![DecoratedTree::leaf(1), DecoratedTree::leaf(2)]),
            DecoratedTree::ladder(&[1, 2, 2]),
            // Forest shape: a two-node chain next to a loose leaf.
            DecoratedTree::node(
                None,
                vec![
                    DecoratedTree::node(Some(1), vec![DecoratedTree::leaf(2)]),
                    DecoratedTree::leaf(1),
                ],
            ),
        ];
        let (s, t, tau) = (0, 48, 1.25);
        for h in &trees {
            let grade = h.grade();
            let y = MultiParamFunction::new(&grid, grade, |_, _| 0.75).expect("y");
            let run = star_tree(&lift, h, &y, s, t, tau, &SewingOptions::default())
                .unwrap_or_else(|e| panic!("star for {h}: {e}"));
            let expected = lift.value(h, s, t, tau).expect("lift value") * 0.75;
            let scale = expected.abs().max(1e-6);
            for row in &run.report.rows {
                assert!(
                    (row.sum - expected).abs() <= 1e-12 * scale.max(1.0),
                    "tree {h} level {}: {} vs {expected}",
                    row.level,
                    row.sum
                );
            }
        }
    }

    #[test]
    fn star_tree_matches_direct_quadrature_on_grade_two_trees() {
        // Hand-written double sums for the two grade-2 shapes, with a
        // coefficient that genuinely depends on both upper arguments.
        let cells = 72;
        let driver = smooth_driver(cells);
        let kernel = fractional_kernel(0.25);
        let lift = VolterraLift::build(&kernel, &driver, 1.0, 0.25, 2, 0).expect("lift");
        let grid = driver.grid().clone();
        let coeff = |r1: f64, r2: f64| 1.0 + 0.5 * r1 - 0.25 * r2 * r2;
        let y = MultiParamFunction::new(&grid, 2, move |_, args| coeff(args[0], args[1]))
            .expect("y");
        let (s, t, tau) = (0usize, 72usize, 1.5f64);
        let opts = SewingOptions { max_levels: 16, tolerance: 1e-3 };
        let dq = |i: usize, l: usize| driver.increment(i, l, l + 1);
        let r = |l: usize| grid.point(l);

        // Ladder with label 1 at the root-adjacent node and 2 on top:
        // sum_l k(tau, r_l) dq1(l) sum_{m < l} k(r_l, r_m) dq2(m) c(r_l, r_m).
        let ladder = DecoratedTree::ladder(&[1, 2]);
        let mut oracle = 0.0;
        for l in s..t {
            let mut inner = 0.0;
            for m in s..l {
                inner += kernel.eval(r(l), r(m)) * dq(2, m) * coeff(r(l), r(m));
            }
            oracle += kernel.eval(tau, r(l)) * dq(1, l) * inner;
        }
        let run = star_tree(&lift, &ladder, &y, s, t, tau, &opts).expect("ladder");
        assert!(
            (run.value - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
            "ladder: {} vs {oracle}",
            run.value
        );

        // Cherry: both nodes hang off the root, so both kernel factors
        // see tau and the index pairs fill the full square.
        let cherry =
            DecoratedTree::node(None, vec![DecoratedTree::leaf(1), DecoratedTree::leaf(2)]);
        let mut oracle = 0.0;
        for l in s..t {
            for m in s..t {
                oracle += kernel.eval(tau, r(l))
                    * dq(1, l)
                    * kernel.eval(tau, r(m))
                    * dq(2, m)
                    * coeff(r(l), r(m));
            }
        }
        let run = star_tree(&lift, &cherry, &y, s, t, tau, &opts).expect("cherry");
        assert!(
            (run.value - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
            "cherry: {} vs {oracle}",
            run.value
        );
    }

    #[test]
    fn the_convolution_is_linear_in_its_second_argument() {
        let lift = smooth_lift(40, 2);
        let grid = lift.driver().grid().clone();
        let h = DecoratedTree::ladder(&[1, 2]);
        let y1 = MultiParamFunction::new(&grid, 2, |_, a| a[0] * 0.5 + 1.0).expect("y1");
        let y2 = MultiParamFunction::new(&grid, 2, |_, a| (a[1] * 3.0).sin()).expect("y2");
        let (c1, c2) = (2.5, -0.75);
        let combo = MultiParamFunction::new(&grid, 2, move |_, a| {
            c1 * (a[0] * 0.5 + 1.0) + c2 * (a[1] * 3.0).sin()
        })
        .expect("combo");
        let (s, t, tau) = (0, 40, 1.0);
        let opts = SewingOptions { max_levels: 16, tolerance: 1e-3 };
        let v1 = star_tree(&lift, &h, &y1, s, t, tau, &opts).expect("y1").value;
        let v2 = star_tree(&lift, &h, &y2, s, t, tau, &opts).expect("y2").value;
        let vc = star_tree(&lift, &h, &combo, s, t, tau, &opts).expect("combo").value;
        let expected = c1 * v1 + c2 * v2;
        assert!(
            (vc - expected).abs() <= 1e-12 * expected.abs().max(1.0),
            "{vc} vs {expected}"
        );
    }

    #[test]
    fn operator_splitting_holds_on_the_grid() {
        // The cell germs partition the quadrature index sets, so the
        // operator splitting identity holds to rounding for every tree
        // up to grade three.
        let lift = smooth_lift(40, 3);
        let grid = lift.driver().grid().clone();
        let (s, u, t) = (0usize, 16usize, 40usize);
        let tau = 1.3;
        for h in lift.trees().to_vec() {
            let grade = h.grade();
            if grade == 0 || grade > 3 {
                continue;
            }
            let y = MultiParamFunction::new(&grid, grade, |base, args| {
                1.0 + 0.1 * base as f64 / 40.0
                    + args.iter().enumerate().map(|(i, &r)| r / (i + 2) as f64).sum::<f64>()
            })
            .expect("y");
            let defect = operator_chen_defect(&lift, &h, &y, s, u, t, tau)
                .unwrap_or_else(|e| panic!("defect for {h}: {e}"));
            let scale = lift.value(&h, s, t, tau).expect("value").abs().max(1.0);
            assert!(
                defect <= 1e-12 * scale,
                "operator splitting defect {defect} for {h} at scale {scale}"
            );
        }
    }

    #[test]
    fn convolution_remainders_track_the_expected_shape() {
        // ineq1-style stability: the remainder quotient reported by
        // star_tree stays bounded as the span halves, instead of growing
        // without bound.
        let lift = smooth_lift(64, 2);
        let grid = lift.driver().grid().clone();
        let h = DecoratedTree::ladder(&[1, 2]);
        let y = MultiParamFunction::new(&grid, 2, |_, a| (a[0] - a[1]).exp()).expect("y");
        let tau = 1.5;
        let opts = SewingOptions { max_levels: 16, tolerance: 1e-3 };
        let mut ratios = Vec::new();
        for span in [64usize, 32, 16, 8] {
            let run = star_tree(&lift, &h, &y, 0, span, tau, &opts).expect("converges");
            ratios.push(run.report.remainder_ratio.expect("finite shape"));
        }
        let max = ratios.iter().cloned().fold(0.0f64, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            max.is_finite() && max <= 100.0 * (min + 1e-6),
            "remainder quotients spread too far: {ratios:?}"
        );
    }

    #[test]
    fn star_rejects_mismatched_requests() {
        let lift = smooth_lift(32, 2);
        let grid = lift.driver().grid().clone();
        let h = DecoratedTree::ladder(&[1, 2]);
        let opts = SewingOptions::default();
        // Wrong arity.
        let y1 = MultiParamFunction::new(&grid, 1, |_, _| 1.0).expect("y1");
        assert!(star_tree(&lift, &h, &y1, 0, 32, 1.0, &opts).is_err());
        // Unit tree.
        let y2 = MultiParamFunction::new(&grid, 2, |_, _| 1.0).expect("y2");
        assert!(star_tree(&lift, &DecoratedTree::unit(), &y2, 0, 32, 1.0, &opts).is_err());
        // Tree beyond the lift's grade cap.
        let big = DecoratedTree::ladder(&[1, 2, 1]);
        assert!(star_tree(&lift, &big, &y2, 0, 32, 1.0, &opts).is_err());
        // Upper time below the interval end.
        assert!(star_tree(&lift, &h, &y2, 0, 32, 0.5, &opts).is_err());
        // Foreign grid.
        let other = Grid::uniform(2.0, 32).expect("grid");
        let y3 = MultiParamFunction::new(&other, 2, |_, _| 1.0).expect("y3");
        assert!(star_tree(&lift, &h, &y3, 0, 32, 1.0, &opts).is_err());
        // Mismatched grids in star_base.
        let z = VolterraFunction::from_lift(&lift, &DecoratedTree::single(1)).expect("z");
        let y4 = VolterraFunction::new(&other, 1.0, 0.25, |_, _, _| 1.0).expect("y4");
        assert!(star_base(&z, &y4, 0, 0, 32, 1.0, &opts).is_err());
        // Arity outside the supported range.
        assert!(MultiParamFunction::new(&grid, 0, |_, _| 1.0).is_err());
        assert!(MultiParamFunction::new(&grid, MAX_STAR_GRADE + 1, |_, _| 1.0).is_err());
    }
}

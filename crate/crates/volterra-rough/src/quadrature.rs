// SPDX-License-Identifier: MIT OR Apache-2.0

//! Quadrature of tree-indexed iterated Volterra integrals.
//!
//! A rooted-form tree `h` (unlabeled root, every other node decorated by
//! a driver component) stands for a nested integral: each labeled node
//! `v` with parent `p` contributes a kernel factor `k(r_p, r_v)` and a
//! driver increment `dq^{i_v}(r_v)`, the root's variable is the external
//! evaluation time `τ`, and the domain nests child variables below their
//! parents inside `(s, t)`:
//!
//! ```text
//!     z^{h,τ}_{ts} = ∫_{s < r_child < r_parent < t}
//!                    ∏_edges k(r_parent, r_child) ∏_nodes dq^{i_v}(r_v),
//! ```
//!
//! with `r_parent = τ` in the kernel factors of the root's children while
//! their domain stays `(s, t)`.  Merging trees at the root multiplies the
//! corresponding integrals, so the whole family is generated by the
//! root-child recursion `F_b(p) = ∫_s^p k(p, r) ∏ F_child(r) dq^i(r)`.
//!
//! # Discretization
//!
//! Everything is computed by the **left-point rule** on a dyadic
//! refinement of the driver grid: a node's variable runs over cell left
//! endpoints, its children's sums are truncated strictly below it, and
//! the kernel is therefore only ever evaluated at argument pairs at
//! least one cell apart — singular kernels stay finite without any
//! diagonal regularization.  The recursion computes one `O(N²)` table
//! per node, so a full tree evaluation costs `O(nodes · N²)`.
//!
//! Three evaluation modes share that recursion:
//!
//! | Mode | Entry point | What it does |
//! |------|-------------|--------------|
//! | plain | [`TreeQuadrature::integral`] | the tree integral at `(s, t, τ)` |
//! | partially evaluated | [`TreeQuadrature::integral_partial`] | freeze selected node variables at given times; frozen nodes contribute `k · q̇` point factors (right slope at grid kinks, flagged) and their neighbours' domains are sliced accordingly |
//! | weighted | [`TreeQuadrature::integral_weighted`] | multiply selected nodes' integrands by per-cell weights; summing the partially evaluated integrand over a node's cells with weight values reproduces this exactly |
//!
//! The partially evaluated form is what convolution-type identities
//! (Chen splittings) integrate over; the weighted form is its efficient
//! grid-level equivalent.

use std::collections::BTreeMap;

use crate::driver::DriverPath;
use crate::error::{Error, Result};
use crate::kernel::VolterraKernel;
use crate::tree::{DecoratedTree, Flat, Forest};

/// Hard cap on the number of grid cells after dyadic refinement.
///
/// Table construction is `O(N²)` per labeled node; beyond ~10⁶ cells a
/// single tree evaluation would need upwards of 10¹² operations, which
/// is never intentional at desk scale.  Requests beyond the cap are
/// validation errors rather than silent multi-hour stalls.
pub const MAX_REFINED_CELLS: usize = 1 << 20;

/// Kernel values on grid-point pairs are tabulated once per engine when
/// the lower-triangular table fits in `2²³` entries (64 MiB); beyond
/// that the kernel is evaluated on the fly.  The cutoff trades the
/// `powf`/`exp` cost per evaluation against memory growth that is
/// quadratic in the grid size.
const KERNEL_TABLE_MAX_ENTRIES: usize = 1 << 23;

/// Result of a partially evaluated tree integral.
#[derive(Clone, Debug)]
pub struct PartialIntegral {
    /// Value of the integrand with the frozen variables in place and all
    /// remaining variables integrated.
    pub value: f64,
    /// Frozen nodes (preorder indices) whose time landed exactly on a
    /// grid point, where the piecewise-linear slope is ambiguous and the
    /// right slope was used.
    pub kink_nodes: Vec<usize>,
}

/// Evaluation state of one tree node during the table recursion.
enum NodeEval {
    /// Variable frozen at `x`: as a function of the parent variable `p`
    /// the branch contributes `k(p, x) · coeff` when `p > x`, else `0`.
    Fixed { x: f64, coeff: f64 },
    /// Integrated node: `prod[l]` is weight × child values at the left
    /// point of cell `l`, `mass[l] = prod[l] · Δq(l)` the full-cell
    /// integrand mass, and `table[j]` (when the parent needs it) the
    /// branch value for parent variable at grid point `j`.
    Integrated {
        prod: Vec<f64>,
        mass: Vec<f64>,
        table: Option<Vec<f64>>,
    },
}

/// Prepared evaluation: everything below the root is integrated out, so
/// values for many external times `τ` cost `O(N)` each.
struct Prepared {
    root_children: Vec<NodeEval>,
    kinks: Vec<usize>,
    s: usize,
    t: usize,
}

/// Quadrature engine bound to one driver (optionally refined), one
/// kernel, and a precomputed kernel table.
pub struct TreeQuadrature {
    driver: DriverPath,
    kernel: VolterraKernel,
    /// Lower-triangular `k(t_j, t_l)`, `l < j`, row-major; `None` when
    /// the grid is too large to tabulate.
    ktab: Option<Vec<f64>>,
}

impl TreeQuadrature {
    /// Bind a driver and kernel, refining the driver grid by `refine`
    /// dyadic levels first.
    pub fn new(driver: &DriverPath, kernel: &VolterraKernel, refine: u32) -> Result<TreeQuadrature> {
        let cells = driver
            .grid()
            .cells()
            .checked_shl(refine)
            .unwrap_or(usize::MAX);
        if cells > MAX_REFINED_CELLS {
            return Err(Error::validation(format!(
                "refinement cap exceeded: {} cells after {refine} levels (cap {MAX_REFINED_CELLS})",
                cells
            )));
        }
        let driver = if refine == 0 { driver.clone() } else { driver.refined(refine) };
        let n = driver.grid().cells();
        let entries = n * (n + 1) / 2;
        let ktab = (entries <= KERNEL_TABLE_MAX_ENTRIES).then(|| {
            let mut tab = Vec::with_capacity(entries);
            for j in 1..=n {
                let tj = driver.grid().point(j);
                for l in 0..j {
                    tab.push(kernel.eval(tj, driver.grid().point(l)));
                }
            }
            tab
        });
        Ok(TreeQuadrature { driver, kernel: kernel.clone(), ktab })
    }

    /// The (refined) driver this engine integrates against.
    pub fn driver(&self) -> &DriverPath {
        &self.driver
    }

    /// The kernel this engine integrates against.
    pub fn kernel(&self) -> &VolterraKernel {
        &self.kernel
    }

    /// Kernel value on grid points `j > l`.
    fn kk(&self, j: usize, l: usize) -> f64 {
        match &self.ktab {
            Some(tab) => tab[j * (j - 1) / 2 + l],
            None => self
                .kernel
                .eval(self.driver.grid().point(j), self.driver.grid().point(l)),
        }
    }

    /// The tree integral `z^{h,τ}_{ts}` with `s`, `t` as grid indices.
    ///
    /// `s = t` is allowed and gives the empty-domain value (`1` for the
    /// unit tree, `0` otherwise).
    pub fn integral(&self, h: &DecoratedTree, s: usize, t: usize, tau: f64) -> Result<f64> {
        let prep = self.prepare(h, s, t, &BTreeMap::new(), &BTreeMap::new())?;
        self.check_tau(t, tau)?;
        Ok(self.value_at(&prep, tau))
    }

    /// The tree integral with the variables of `fixed` (preorder node
    /// index → time) frozen instead of integrated.
    ///
    /// A frozen node keeps its kernel factor, contributes the
    /// piecewise-linear slope `q̇` of its driver component instead of an
    /// increment, and slices its neighbours' domains at its time.  Times
    /// may lie anywhere in `[s, t)`; the left endpoint is allowed,
    /// matching the half-open cells of the left-point rule.  Frozen
    /// times exactly on grid points use the right slope and are reported
    /// in [`PartialIntegral::kink_nodes`].
    pub fn integral_partial(
        &self,
        h: &DecoratedTree,
        fixed: &BTreeMap<usize, f64>,
        s: usize,
        t: usize,
        tau: f64,
    ) -> Result<PartialIntegral> {
        let prep = self.prepare(h, s, t, fixed, &BTreeMap::new())?;
        self.check_tau(t, tau)?;
        Ok(PartialIntegral { value: self.value_at(&prep, tau), kink_nodes: prep.kinks })
    }

    /// The tree integral with selected nodes' integrands multiplied by
    /// per-cell weights (`weights[v][l]` applies at the left point of
    /// cell `l`; each vector must cover every grid point).
    pub fn integral_weighted(
        &self,
        h: &DecoratedTree,
        weights: &BTreeMap<usize, Vec<f64>>,
        s: usize,
        t: usize,
        tau: f64,
    ) -> Result<f64> {
        let prep = self.prepare(h, s, t, &BTreeMap::new(), weights)?;
        self.check_tau(t, tau)?;
        Ok(self.value_at(&prep, tau))
    }

    /// Values of `z^{h,x}_{us}` for each external time `x` in `taus`
    /// (each `≥ t_u`).  The integration is performed once; extra
    /// evaluation times cost `O(N)` each.
    pub fn profile(&self, h: &DecoratedTree, s: usize, u: usize, taus: &[f64]) -> Result<Vec<f64>> {
        let prep = self.prepare(h, s, u, &BTreeMap::new(), &BTreeMap::new())?;
        for &x in taus {
            self.check_tau(u, x)?;
        }
        Ok(taus.iter().map(|&x| self.value_at(&prep, x)).collect())
    }

    /// Product of tree integrals over a forest, one external time per
    /// tree.
    pub fn forest_integral(&self, f: &Forest, taus: &[f64], s: usize, t: usize) -> Result<f64> {
        if f.trees().len() != taus.len() {
            return Err(Error::validation(format!(
                "arity mismatch: {} trees but {} evaluation times",
                f.trees().len(),
                taus.len()
            )));
        }
        let mut out = 1.0;
        for (h, &tau) in f.trees().iter().zip(taus) {
            out *= self.integral(h, s, t, tau)?;
        }
        Ok(out)
    }

    // -- validation helpers -------------------------------------------------

    fn check_tree(&self, h: &DecoratedTree) -> Result<Flat> {
        if !h.has_unlabeled_root() {
            return Err(Error::validation(format!(
                "quadrature needs a rooted-form tree (unlabeled root); got `{h}`"
            )));
        }
        let flat = Flat::of(h);
        for id in 1..flat.len() {
            match flat.label[id] {
                None => {
                    return Err(Error::validation(format!(
                        "tree `{h}`: non-root node {id} carries no decoration"
                    )))
                }
                Some(i) if i > self.driver.dim() => {
                    return Err(Error::validation(format!(
                        "tree `{h}`: decoration {i} exceeds driver dimension {}",
                        self.driver.dim()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(flat)
    }

    fn check_span(&self, s: usize, t: usize) -> Result<()> {
        if s > t || t > self.driver.grid().cells() {
            return Err(Error::validation(format!(
                "grid span [{s}, {t}] invalid for {} cells",
                self.driver.grid().cells()
            )));
        }
        Ok(())
    }

    fn check_tau(&self, t: usize, tau: f64) -> Result<()> {
        let tt = self.driver.grid().point(t);
        if !(tau >= tt) {
            return Err(Error::validation(format!(
                "evaluation time {tau} must lie at or beyond the upper limit {tt}"
            )));
        }
        Ok(())
    }

    // -- the recursion -------------------------------------------------------

    /// Right-continuous piecewise-linear slope of component `i` at `x`,
    /// with a flag when `x` sits exactly on a grid point (kink).
    fn slope_at(&self, i: usize, x: f64) -> (f64, bool) {
        let grid = self.driver.grid();
        let cell = grid
            .points()
            .partition_point(|&p| p <= x)
            .saturating_sub(1)
            .min(grid.cells() - 1);
        (self.driver.slope(i, cell), grid.point(cell) == x)
    }

    /// Value of an evaluated child as seen by its parent's variable at
    /// grid point `l`.
    fn child_at_grid(&self, eval: &NodeEval, l: usize) -> f64 {
        match eval {
            NodeEval::Fixed { x, coeff } => {
                let p = self.driver.grid().point(l);
                if p > *x {
                    self.kernel.eval(p, *x) * coeff
                } else {
                    0.0
                }
            }
            NodeEval::Integrated { table, .. } => {
                table.as_ref().expect("table built for integrated non-root children")[l]
            }
        }
    }

    /// Value of an evaluated child as seen by a frozen parent at time
    /// `x` (off-grid in general): integrated children are summed over
    /// the clipped domain `(s, x)` with the final cell's increment cut
    /// at `x`.
    fn child_at_time(&self, eval: &NodeEval, label: usize, s: usize, t: usize, x: f64) -> f64 {
        match eval {
            NodeEval::Fixed { x: xc, coeff } => {
                if x > *xc {
                    self.kernel.eval(x, *xc) * coeff
                } else {
                    0.0
                }
            }
            NodeEval::Integrated { prod, .. } => {
                let grid = self.driver.grid();
                let mut acc = 0.0;
                let mut l = s;
                while l < t && grid.point(l) < x {
                    let hi = grid.point(l + 1).min(x);
                    let inc = self
                        .driver
                        .eval(label, hi)
                        .expect("clipped endpoint lies inside the grid")
                        - self.driver.value(label, l);
                    acc += self.kernel.eval(x, grid.point(l)) * prod[l] * inc;
                    l += 1;
                }
                acc
            }
        }
    }

    /// Run the table recursion below the root.
    fn prepare(
        &self,
        h: &DecoratedTree,
        s: usize,
        t: usize,
        fixed: &BTreeMap<usize, f64>,
        weights: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<Prepared> {
        let flat = self.check_tree(h)?;
        self.check_span(s, t)?;
        let grid = self.driver.grid();
        for (&v, &x) in fixed {
            if v == 0 || v >= flat.len() {
                return Err(Error::validation(format!(
                    "frozen node index {v} out of range (tree has {} non-root nodes)",
                    flat.len() - 1
                )));
            }
            if !(x >= grid.point(s) && x < grid.point(t)) {
                return Err(Error::validation(format!(
                    "frozen time {x} outside [{}, {})",
                    grid.point(s),
                    grid.point(t)
                )));
            }
        }
        for (&v, w) in weights {
            if v == 0 || v >= flat.len() {
                return Err(Error::validation(format!(
                    "weighted node index {v} out of range (tree has {} non-root nodes)",
                    flat.len() - 1
                )));
            }
            if fixed.contains_key(&v) {
                return Err(Error::validation(format!(
                    "node {v} cannot be both frozen and weighted"
                )));
            }
            if w.len() != grid.len() {
                return Err(Error::validation(format!(
                    "weight vector for node {v} has {} entries for {} grid points",
                    w.len(),
                    grid.len()
                )));
            }
        }

        let n = flat.len();
        let cells = grid.cells();
        let mut evals: Vec<Option<NodeEval>> = (0..n).map(|_| None).collect();
        let mut kinks = Vec::new();

        for v in (1..n).rev() {
            let label = flat.label[v].expect("validated: non-root nodes are labeled");
            if let Some(&x) = fixed.get(&v) {
                let (slope, kink) = self.slope_at(label, x);
                if kink {
                    kinks.push(v);
                }
                let mut coeff = slope;
                for &c in &flat.children[v] {
                    let clabel = flat.label[c].expect("validated");
                    let ceval = evals[c].as_ref().expect("children processed first");
                    coeff *= self.child_at_time(ceval, clabel, s, t, x);
                }
                evals[v] = Some(NodeEval::Fixed { x, coeff });
            } else {
                // Left-point integrand factors on each cell.
                let mut prod = vec![0.0; cells];
                let mut mass = vec![0.0; cells];
                for l in s..t {
                    let mut p = match weights.get(&v) {
                        Some(w) => w[l],
                        None => 1.0,
                    };
                    for &c in &flat.children[v] {
                        p *= self.child_at_grid(evals[c].as_ref().expect("children first"), l);
                    }
                    prod[l] = p;
                    mass[l] = p * self.driver.increment(label, l, l + 1);
                }
                // The parent consults a value table only when it
                // integrates this node itself (frozen parents and the
                // root read the integrand directly).
                let parent = flat.parent[v].expect("non-root nodes have parents");
                let table = (parent != 0 && !fixed.contains_key(&parent)).then(|| {
                    let mut tab = vec![0.0; cells + 1];
                    for j in s + 1..=t {
                        let mut acc = 0.0;
                        for (l, &m) in mass.iter().enumerate().take(j).skip(s) {
                            acc += self.kk(j, l) * m;
                        }
                        tab[j] = acc;
                    }
                    tab
                });
                evals[v] = Some(NodeEval::Integrated { prod, mass, table });
            }
        }

        kinks.sort_unstable();
        let root_children = flat.children[0]
            .iter()
            .map(|&c| evals[c].take().expect("root children evaluated"))
            .collect();
        Ok(Prepared { root_children, kinks, s, t })
    }

    /// Assemble the prepared evaluation at external time `tau`.
    fn value_at(&self, prep: &Prepared, tau: f64) -> f64 {
        let grid = self.driver.grid();
        let mut out = 1.0;
        for child in &prep.root_children {
            out *= match child {
                NodeEval::Fixed { x, coeff } => self.kernel.eval(tau, *x) * coeff,
                NodeEval::Integrated { mass, .. } => {
                    let mut acc = 0.0;
                    for (l, &m) in mass.iter().enumerate().take(prep.t).skip(prep.s) {
                        if m != 0.0 {
                            acc += self.kernel.eval(tau, grid.point(l)) * m;
                        }
                    }
                    acc
                }
            };
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Free functions with time-valued arguments
// ---------------------------------------------------------------------------

/// One-shot tree integral: refine the driver grid by `refine` dyadic
/// levels, then integrate `h` over `(s, t)` at external time `tau`.
/// `s` and `t` must be points of the refined grid.
pub fn iterated_integral(
    h: &DecoratedTree,
    kernel: &VolterraKernel,
    driver: &DriverPath,
    s: f64,
    t: f64,
    tau: f64,
    refine: u32,
) -> Result<f64> {
    let engine = TreeQuadrature::new(driver, kernel, refine)?;
    let si = engine.driver().grid().index_of(s)?;
    let ti = engine.driver().grid().index_of(t)?;
    engine.integral(h, si, ti, tau)
}

/// One-shot partially evaluated tree integral; see
/// [`TreeQuadrature::integral_partial`].
pub fn iterated_integral_partial(
    h: &DecoratedTree,
    fixed: &BTreeMap<usize, f64>,
    kernel: &VolterraKernel,
    driver: &DriverPath,
    s: f64,
    t: f64,
    tau: f64,
    refine: u32,
) -> Result<PartialIntegral> {
    let engine = TreeQuadrature::new(driver, kernel, refine)?;
    let si = engine.driver().grid().index_of(s)?;
    let ti = engine.driver().grid().index_of(t)?;
    engine.integral_partial(h, fixed, si, ti, tau)
}

/// One-shot forest integral (product of tree integrals, one external
/// time per tree).
pub fn forest_integral(
    f: &Forest,
    taus: &[f64],
    kernel: &VolterraKernel,
    driver: &DriverPath,
    s: f64,
    t: f64,
    refine: u32,
) -> Result<f64> {
    let engine = TreeQuadrature::new(driver, kernel, refine)?;
    let si = engine.driver().grid().index_of(s)?;
    let ti = engine.driver().grid().index_of(t)?;
    engine.forest_integral(f, taus, si, ti)
}

/// Iterated integral of a ladder tree against the constant kernel,
/// computed exactly for the piecewise-linear interpolant of the driver
/// by cell-by-cell application of the multiplicative splitting of
/// iterated integrals.
///
/// Within one cell every component moves linearly, so the stack of
/// nested integrals over the cell is a product of increments divided by
/// a factorial; stepping the per-level accumulator across cells is then
/// exact.  The value is invariant under grid refinement (the
/// interpolant's increments do not change), so no `refine` parameter is
/// taken.
pub fn ladder_signature_integral(
    h: &DecoratedTree,
    driver: &DriverPath,
    s: usize,
    t: usize,
) -> Result<f64> {
    let labels = h.ladder_labels().ok_or_else(|| {
        Error::validation(format!("`{h}` is not a rooted-form ladder tree"))
    })?;
    let m = labels.len();
    if s > t || t > driver.grid().cells() {
        return Err(Error::validation(format!(
            "grid span [{s}, {t}] invalid for {} cells",
            driver.grid().cells()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&i| i > driver.dim()) {
        return Err(Error::validation(format!(
            "decoration {bad} exceeds driver dimension {}",
            driver.dim()
        )));
    }
    if m == 0 {
        return Ok(1.0);
    }
    // Bottom-up component order: level a integrates component comp[a]
    // innermost-first, so comp[1] is the top leaf.
    let comp = |a: usize| labels[m - a];
    let mut f = vec![0.0; m + 1];
    f[0] = 1.0;
    for l in s..t {
        let dq: Vec<f64> = (1..=m)
            .map(|a| driver.increment(comp(a), l, l + 1))
            .collect();
        let mut next = vec![0.0; m + 1];
        next[0] = 1.0;
        for a in 1..=m {
            let mut acc = f[a];
            let mut cell_block = 1.0;
            let mut factorial = 1.0;
            for b in 1..=a {
                // Block of the topmost b levels of the a-stack crossing
                // this cell: product of their increments over b!.
                cell_block *= dq[a - b];
                factorial *= b as f64;
                acc += f[a - b] * cell_block / factorial;
            }
            next[a] = acc;
        }
        f = next;
    }
    Ok(f[m])
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::Grid;

    fn t(s: &str) -> DecoratedTree {
        DecoratedTree::parse(s).unwrap()
    }

    fn smooth_driver(cells: usize, t_end: f64) -> DriverPath {
        DriverPath::from_fn(Grid::uniform(t_end, cells).unwrap(), 3, |i, x| match i {
            1 => (2.0 * std::f64::consts::PI * x).sin() / (2.0 * std::f64::consts::PI),
            2 => x * x,
            _ => (1.0 + x).ln(),
        })
        .unwrap()
    }

    #[test]
    fn unit_tree_integrates_to_one() {
        let q = smooth_driver(16, 1.0);
        let eng = TreeQuadrature::new(&q, &VolterraKernel::constant(), 0).unwrap();
        assert_eq!(eng.integral(&t("1"), 0, 16, 1.0).unwrap(), 1.0);
        assert_eq!(eng.integral(&t("1"), 5, 5, 1.0).unwrap(), 1.0);
        // Empty-domain non-unit integral vanishes.
        assert_eq!(eng.integral(&t("(0)"), 5, 5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn drift_against_constant_kernel_is_elapsed_time() {
        let q = smooth_driver(64, 2.0);
        let eng = TreeQuadrature::new(&q, &VolterraKernel::constant(), 0).unwrap();
        let z = eng.integral(&t("(0)"), 16, 48, 2.0).unwrap();
        let want = q.grid().point(48) - q.grid().point(16);
        assert!((z - want).abs() < 1e-14, "{z} vs {want}");
    }

    /// Left-point quadrature of the drift against the fractional kernel
    /// converges to the closed-form antiderivative
    /// ((τ−s)^{1−γ} − (τ−t)^{1−γ})/(1−γ).
    #[test]
    fn drift_against_fractional_kernel_matches_the_antiderivative() {
        let gamma = 0.25;
        let kernel = VolterraKernel::fractional(gamma).unwrap();
        let q = smooth_driver(128, 1.0);
        let (s, tt, tau) = (0.0f64, 1.0f64, 1.25f64);
        let closed = ((tau - s).powf(1.0 - gamma) - (tau - tt).powf(1.0 - gamma)) / (1.0 - gamma);
        let coarse = iterated_integral(&t("(0)"), &kernel, &q, s, tt, tau, 0).unwrap();
        let fine = iterated_integral(&t("(0)"), &kernel, &q, s, tt, tau, 2).unwrap();
        assert!((coarse - closed).abs() / closed < 0.01);
        assert!((fine - closed).abs() < (coarse - closed).abs());
    }

    /// The two-node one-component ladder against the constant kernel is
    /// the classical half-squared increment, cross-checked against a raw
    /// two-dimensional simplex sum written out by hand.
    #[test]
    fn same_component_double_ladder_matches_half_squared_increment() {
        let q = smooth_driver(512, 0.75);
        let eng = TreeQuadrature::new(&q, &VolterraKernel::constant(), 0).unwrap();
        let h = DecoratedTree::ladder(&[1, 1]);
        let z = eng.integral(&h, 0, 512, 0.75).unwrap();
        let inc = q.increment(1, 0, 512);
        assert!((z - inc * inc / 2.0).abs() < 5e-3, "{z} vs {}", inc * inc / 2.0);
        // Raw simplex double loop with the same left-point rule.
        let mut raw = 0.0;
        for l2 in 0..512 {
            let outer = q.increment(1, l2, l2 + 1);
            let mut inner = 0.0;
            for l1 in 0..l2 {
                inner += q.increment(1, l1, l1 + 1);
            }
            raw += outer * inner;
        }
        assert!((z - raw).abs() < 1e-12 * raw.abs().max(1.0));
    }

    #[test]
    fn cherry_is_the_product_of_its_single_integrals() {
        let q = smooth_driver(128, 1.0);
        let kernel = VolterraKernel::exponential(1.0).unwrap();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        let (s, tt, tau) = (8, 120, 1.5);
        let cherry = eng.integral(&t("(1)(2)"), s, tt, tau).unwrap();
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for l in s..tt {
            let k = kernel.eval(tau, q.grid().point(l));
            m1 += k * q.increment(1, l, l + 1);
            m2 += k * q.increment(2, l, l + 1);
        }
        assert!((cherry - m1 * m2).abs() < 1e-12 * (m1 * m2).abs());
    }

    #[test]
    fn frozen_single_node_is_kernel_times_slope() {
        let q = smooth_driver(32, 1.0);
        let kernel = VolterraKernel::fractional(0.5).unwrap();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        let h = t("(2)");
        // Mid-cell: plain slope, no kink flag.
        let x = 0.4 + 1.0 / 64.0;
        let got = eng
            .integral_partial(&h, &BTreeMap::from([(1, x)]), 0, 32, 1.0)
            .unwrap();
        let cell = q.grid().cell_of(x).unwrap();
        assert!(got.kink_nodes.is_empty());
        let want = kernel.eval(1.0, x) * q.slope(2, cell);
        assert!((got.value - want).abs() < 1e-13 * want.abs());
        // Exactly on a grid point: right slope, flagged.
        let xg = q.grid().point(13);
        let got = eng
            .integral_partial(&h, &BTreeMap::from([(1, xg)]), 0, 32, 1.0)
            .unwrap();
        assert_eq!(got.kink_nodes, vec![1]);
        let want = kernel.eval(1.0, xg) * q.slope(2, 13);
        assert!((got.value - want).abs() < 1e-13 * want.abs());
    }

    /// Ladder with the bottom node frozen: one explicit 1-D left-point
    /// sum over the remaining variable reproduces the engine value.
    #[test]
    fn frozen_ladder_bottom_matches_direct_quadrature() {
        let q = smooth_driver(64, 1.0);
        let kernel = VolterraKernel::exponential(0.7).unwrap();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        let h = DecoratedTree::ladder(&[1, 0]); // node 1 outer, node 2 = bottom leaf
        let x = q.grid().point(20);
        let tau = 1.25;
        let got = eng
            .integral_partial(&h, &BTreeMap::from([(2, x)]), 0, 64, tau)
            .unwrap()
            .value;
        let mut want = 0.0;
        for l in 0..64 {
            let r = q.grid().point(l);
            if r > x {
                want += kernel.eval(tau, r) * kernel.eval(r, x) * q.increment(1, l, l + 1);
            }
        }
        want *= q.slope(0, 20);
        assert!((got - want).abs() < 1e-12 * want.abs().max(1e-12), "{got} vs {want}");
    }

    /// Summing the partially evaluated integrand over a frozen node's
    /// cells (left points, weight Δr) reproduces the fully integrated
    /// value exactly — the discrete schemes coincide term by term.
    #[test]
    fn integrating_the_frozen_variable_recovers_the_full_integral() {
        let q = smooth_driver(32, 1.0);
        let kernel = VolterraKernel::exponential(0.5).unwrap();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        let tau = 1.0;
        let dt = 1.0 / 32.0;
        for (tree, node) in [
            (t("(1)"), 1),
            (DecoratedTree::ladder(&[1, 2]), 1),
            (DecoratedTree::ladder(&[1, 2]), 2),
            (DecoratedTree::ladder(&[1, 2, 3]), 2),
            (t("(1)(2)"), 2),
            (t("((1)(2))3"), 3),
        ] {
            let full = eng.integral(&tree, 0, 32, tau).unwrap();
            let mut sum = 0.0;
            for l in 0..32 {
                let x = q.grid().point(l);
                sum += eng
                    .integral_partial(&tree, &BTreeMap::from([(node, x)]), 0, 32, tau)
                    .unwrap()
                    .value
                    * dt;
            }
            assert!(
                (sum - full).abs() < 1e-12 * full.abs().max(1e-12),
                "tree {tree}, node {node}: {sum} vs {full}"
            );
        }
        // Two frozen variables at once (both cherry leaves).
        let cherry = t("(1)(2)");
        let full = eng.integral(&cherry, 0, 32, tau).unwrap();
        let mut sum = 0.0;
        for l1 in 0..32 {
            for l2 in 0..32 {
                let fixed =
                    BTreeMap::from([(1, q.grid().point(l1)), (2, q.grid().point(l2))]);
                sum += eng.integral_partial(&cherry, &fixed, 0, 32, tau).unwrap().value
                    * dt
                    * dt;
            }
        }
        assert!((sum - full).abs() < 1e-12 * full.abs().max(1e-12));
    }

    /// The weighted integral equals the weighted left-point sum of
    /// partial evaluations over the same node — the grid-level identity
    /// behind convolution-type splittings.
    #[test]
    fn weighted_integral_matches_weighted_sums_of_frozen_evaluations() {
        let q = smooth_driver(32, 1.0);
        let kernel = VolterraKernel::exponential(0.3).unwrap();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        let h = DecoratedTree::ladder(&[1, 2]);
        let g = |x: f64| 1.0 + x * x;
        let weights =
            BTreeMap::from([(1, q.grid().points().iter().map(|&x| g(x)).collect::<Vec<_>>())]);
        let via_weights = eng.integral_weighted(&h, &weights, 0, 32, 1.0).unwrap();
        let dt = 1.0 / 32.0;
        let mut via_frozen = 0.0;
        for l in 0..32 {
            let x = q.grid().point(l);
            via_frozen += eng
                .integral_partial(&h, &BTreeMap::from([(1, x)]), 0, 32, 1.0)
                .unwrap()
                .value
                * g(x)
                * dt;
        }
        assert!((via_weights - via_frozen).abs() < 1e-12 * via_weights.abs());
    }

    #[test]
    fn profile_agrees_with_individual_integrals() {
        let q = smooth_driver(64, 1.0);
        let kernel = VolterraKernel::fractional(0.25).unwrap();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        let h = t("((1))2");
        let taus = [0.5, 0.75, 1.5];
        let profile = eng.profile(&h, 0, 32, &taus).unwrap();
        for (i, &tau) in taus.iter().enumerate() {
            let single = eng.integral(&h, 0, 32, tau).unwrap();
            assert_eq!(profile[i], single);
        }
    }

    #[test]
    fn forest_integral_multiplies_trees() {
        let q = smooth_driver(64, 1.0);
        let kernel = VolterraKernel::constant();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        let empty = Forest::from_trees(vec![]);
        assert_eq!(eng.forest_integral(&empty, &[], 0, 64, ).unwrap(), 1.0);
        // e0 · e0 with unit kernel and drift driver: (t − s)².
        let f = Forest::from_trees(vec![t("(0)"), t("(0)")]);
        let z = eng.forest_integral(&f, &[1.0, 1.0], 16, 48).unwrap();
        let span = q.grid().point(48) - q.grid().point(16);
        assert!((z - span * span).abs() < 1e-13);
        assert!(eng.forest_integral(&f, &[1.0], 16, 48).is_err());
    }

    /// Scaling all non-time components by λ scales z^h by λ^(number of
    /// non-drift nodes), exactly for λ = 2 in binary floating point.
    #[test]
    fn grade_scaling_in_the_non_time_components() {
        let q = smooth_driver(64, 1.0);
        let q2 = q.scale_non_time(2.0);
        let kernel = VolterraKernel::fractional(0.25).unwrap();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        let eng2 = TreeQuadrature::new(&q2, &kernel, 0).unwrap();
        for (tree, nonzero) in [
            (t("((1))0"), 1u32),
            (t("(1)(2)"), 2),
            (t("((1)(2))3"), 3),
            (t("((0))0"), 0),
        ] {
            let z = eng.integral(&tree, 0, 64, 1.0).unwrap();
            let z2 = eng2.integral(&tree, 0, 64, 1.0).unwrap();
            let want = z * 2.0f64.powi(nonzero as i32);
            assert!(
                (z2 - want).abs() <= 1e-13 * want.abs(),
                "tree {tree}: {z2} vs {want}"
            );
        }
    }

    /// Exact ladder values: same-component ladders give powers of the
    /// increment over factorials (for any driver), mixed linear
    /// components give the product of slopes times the simplex volume.
    #[test]
    fn ladder_stepping_reproduces_closed_forms() {
        let q = smooth_driver(64, 0.8);
        let inc = q.increment(1, 0, 64);
        for m in 1..=3 {
            let h = DecoratedTree::ladder(&vec![1; m]);
            let z = ladder_signature_integral(&h, &q, 0, 64).unwrap();
            let want = inc.powi(m as i32) / (1..=m).product::<usize>() as f64;
            assert!((z - want).abs() < 1e-14 * want.abs().max(1e-14), "m={m}: {z} vs {want}");
        }
        // Mixed ladder on linear components: q0 slope 1, extra component
        // slope 2 ⇒ value = 1·2·(t−s)²/2.
        let lin = DriverPath::from_fn(Grid::uniform(1.0, 16).unwrap(), 1, |_, x| 2.0 * x).unwrap();
        let h = DecoratedTree::ladder(&[0, 1]);
        let z = ladder_signature_integral(&h, &lin, 0, 16).unwrap();
        assert!((z - 1.0).abs() < 1e-14, "{z}");
        // Unit tree: empty ladder.
        assert_eq!(ladder_signature_integral(&t("1"), &q, 0, 64).unwrap(), 1.0);
    }

    /// The exact ladder value only depends on the interpolant, so dyadic
    /// refinement leaves it unchanged.
    #[test]
    fn ladder_stepping_is_refinement_invariant() {
        let q = smooth_driver(32, 1.0);
        let h = DecoratedTree::ladder(&[1, 2, 1]);
        let coarse = ladder_signature_integral(&h, &q, 4, 28).unwrap();
        let fine = ladder_signature_integral(&h, &q.refined(2), 16, 112).unwrap();
        assert!((coarse - fine).abs() < 1e-13 * coarse.abs());
    }

    #[test]
    fn validation_rejects_malformed_requests() {
        let q = smooth_driver(16, 1.0);
        let kernel = VolterraKernel::constant();
        let eng = TreeQuadrature::new(&q, &kernel, 0).unwrap();
        // Branch trees are not integrable as-is.
        assert!(eng.integral(&DecoratedTree::parse_branch("(0)").unwrap(), 0, 16, 1.0).is_err());
        // Decoration beyond the driver dimension.
        assert!(eng.integral(&t("(7)"), 0, 16, 1.0).is_err());
        // Evaluation time before the upper limit.
        assert!(eng.integral(&t("(1)"), 0, 16, 0.5).is_err());
        // Frozen index and frozen time range.
        assert!(eng
            .integral_partial(&t("(1)"), &BTreeMap::from([(0, 0.5)]), 0, 16, 1.0)
            .is_err());
        assert!(eng
            .integral_partial(&t("(1)"), &BTreeMap::from([(1, 1.0)]), 0, 16, 1.0)
            .is_err());
        // Weight vector of the wrong length.
        assert!(eng
            .integral_weighted(&t("(1)"), &BTreeMap::from([(1, vec![1.0; 3])]), 0, 16, 1.0)
            .is_err());
        // Refinement cap.
        let big = DriverPath::from_fn(Grid::uniform(1.0, 2048).unwrap(), 0, |_, _| 0.0).unwrap();
        assert!(TreeQuadrature::new(&big, &kernel, 10).is_err());
        // Bad time-to-index resolution in the free functions.
        assert!(iterated_integral(&t("(1)"), &kernel, &q, 0.013, 1.0, 1.0, 0).is_err());
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Controlled Volterra paths: tree-indexed local expansions against a
//! lift, remainder diagnostics, rough Volterra integration, and
//! composition with scalar fields (the chain rule).
//!
//! | Item | Meaning |
//! |------|---------|
//! | [`ControlledVolterraPath`] | components `y^h(j; xi, r_1..r_k)`, one per carried tree of grade `< order`, plus the value component at the unit tree |
//! | [`VectorField`] | scalar field `f` with an explicit derivative table `D^m f` |
//! | [`remainder_at`] | deviation of a component increment from its cut-term expansion |
//! | [`rough_integral`] | limit of compensated germ sums `sum_h z^{graft(i,h),tau} * y^h` |
//! | [`compose`] | components of `f(y)` from the symmetry-weighted chain rule |
//!
//! # Argument convention
//!
//! Every component is evaluated as `(j, diag, args)`: `j` is the base
//! grid index, `diag` the diagonal upper time, and `args` one upper
//! variable per labeled node of the indexing tree, in canonical
//! preorder.  The value component (unit tree) takes no node arguments.
//! All upper arguments must lie at or above the base point.
//!
//! A path in the *hat space* only carries planted components (and the
//! value).  Planted components ignore `diag`: when [`rough_integral`]
//! shifts a component from `h` to `graft(i, h)`, the old diagonal is
//! rebound to the running variable of the newly grafted node, which is
//! node 1 of the grafted tree in canonical preorder.
//!
//! # Remainders
//!
//! The local expansion of a component increment prunes every carried
//! tree `sigma` down to the trunk `h`:
//!
//! ```text
//! R^h(s,t; xi, r..) = y^h(t; xi, r..) - y^h(s; xi, r..)
//!     - sum over sigma, over cuts of sigma with trunk h:
//!         [pruned pieces convolved over [s, t]] applied to y^sigma(s; xi, ..)
//! ```
//!
//! Pieces attached at a trunk node integrate with that node's upper
//! variable; pieces attached at the root integrate with the diagonal
//! `xi`.  Empirical norms of `R^h` are measured at the boosted
//! exponents `((order - |h|) alpha, (order - |h|) gamma)` — each
//! missing grade buys one factor of the gain `rho = alpha - gamma`.
//!
//! # Chain rule
//!
//! For `h` with root branches `b_1, .., b_m` (grouped into runs of
//! equal branches of lengths `m_c`), the composed component is
//!
//! ```text
//! f(y)^h(j; xi, ..) = 1/prod_c m_c! * D^m f(y(j, xi))
//!                     * prod_k y^{planted(b_k)}(j; xi, args_k)
//! ```
//!
//! where `args_k` is the contiguous canonical-preorder argument slice
//! of branch `b_k`.  The weight `1/prod_c m_c!` equals
//! `prod_k S(b_k) / S(h)` for the symmetry factor `S`; it is exactly
//! the multiset coefficient produced by a Taylor expansion of `f` in
//! which each ordered tuple of branches is counted once.
//!
//! Determinism: components live in ordered maps and every sum runs in
//! ascending key or index order, so identical inputs reproduce results
//! bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use crate::coproduct::coproduct_detailed;
use crate::error::{Error, Result};
use crate::lift::VolterraLift;
use crate::sewing::{
    assess, chunk_bound, eval_pieces, interval_counts, remainder_shape, star_span, BoundPiece,
    ConvergenceReport, SewingOptions, Slots, StarCtx, MAX_STAR_GRADE,
};
use crate::tree::{graft, DecoratedTree, Label};

/// Step used by the finite-difference consistency probe of a
/// [`VectorField`] derivative table.  Small enough that the truncation
/// error of a central difference is far below [`FD_TOL`] for any field
/// whose third derivative is of order one, large enough that rounding
/// noise (about `1e-16 / FD_STEP = 1e-11`) is negligible.
pub const FD_STEP: f64 = 1e-5;

/// Relative tolerance of the finite-difference consistency probe: a
/// central difference of `D^m f` must match the declared `D^{m+1} f`
/// to this accuracy at every sample point.
pub const FD_TOL: f64 = 1e-4;

/// Sample count of the finite-difference probe.
const FD_SAMPLES: usize = 17;

/// Half-width of the symmetric sample interval of the probe.
const FD_RANGE: f64 = 2.0;

/// Truncation order `floor(1 / (alpha - gamma))`: the number of grades
/// a local expansion must carry so that the first omitted grade has
/// regularity exponent above one.
///
/// The value-regularity variant `floor(1 / alpha)` is coarser (it
/// ignores the kernel's singularity gain); callers preferring it can
/// pass it explicitly wherever an order is accepted.
pub fn truncation_order(alpha: f64, gamma: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::validation(format!(
            "singularity order must lie in [0, 1); got {gamma}"
        )));
    }
    if !(alpha > gamma && alpha <= 1.0) {
        return Err(Error::validation(format!(
            "regularity must lie in (gamma, 1]; got alpha = {alpha}, gamma = {gamma}"
        )));
    }
    Ok((1.0 / (alpha - gamma)).floor() as usize)
}

/// Branch-multiset weight of the chain rule: `1 / prod_c m_c!` over the
/// runs of equal root branches of `h`.  Equals
/// `prod_k S(b_k) / S(h)` for the symmetry factor `S`.
pub fn chain_coefficient(h: &DecoratedTree) -> Result<f64> {
    if h.label().is_some() {
        return Err(Error::validation(format!(
            "chain coefficients are defined for rooted-form trees; got `{h}`"
        )));
    }
    let children = h.children();
    let mut denom = 1.0f64;
    let mut i = 0;
    while i < children.len() {
        let mut j = i + 1;
        while j < children.len() && children[j] == children[i] {
            j += 1;
        }
        for run in 2..=(j - i) {
            denom *= run as f64;
        }
        i = j;
    }
    Ok(1.0 / denom)
}

// ---------------------------------------------------------------------------
// Vector fields
// ---------------------------------------------------------------------------

/// A scalar field together with an explicit derivative table.
///
/// `derivs[m]` evaluates `D^m f`; the table must hold at least `f` and
/// `f'`.  Construction cross-checks every adjacent pair by a central
/// finite difference at [`FD_STEP`] over sample points in
/// `[-FD_RANGE, FD_RANGE]` and rejects tables that disagree beyond
/// [`FD_TOL`] relative error, so a mistyped derivative fails fast
/// instead of corrupting compositions.
pub struct VectorField<'a> {
    derivs: Vec<Box<dyn Fn(f64) -> f64 + 'a>>,
}

impl fmt::Debug for VectorField<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField").field("order", &self.order()).finish()
    }
}

impl<'a> VectorField<'a> {
    /// Builds a field from a derivative table `derivs[m] = D^m f` and
    /// validates its internal consistency.
    pub fn new(derivs: Vec<Box<dyn Fn(f64) -> f64 + 'a>>) -> Result<Self> {
        if derivs.len() < 2 {
            return Err(Error::validation(
                "a vector field needs the value and at least the first derivative",
            ));
        }
        for m in 0..derivs.len() - 1 {
            for k in 0..FD_SAMPLES {
                let x = -FD_RANGE + 2.0 * FD_RANGE * k as f64 / (FD_SAMPLES - 1) as f64;
                let central = (derivs[m](x + FD_STEP) - derivs[m](x - FD_STEP)) / (2.0 * FD_STEP);
                let target = derivs[m + 1](x);
                if !central.is_finite() || !target.is_finite() {
                    return Err(Error::validation(format!(
                        "derivative table is not finite at order {m} near x = {x}"
                    )));
                }
                if (central - target).abs() > FD_TOL * (1.0 + target.abs()) {
                    return Err(Error::validation(format!(
                        "derivative table inconsistent at order {}: difference quotient {central} \
                         vs declared {target} at x = {x}",
                        m + 1
                    )));
                }
            }
        }
        Ok(VectorField { derivs })
    }

    /// Highest derivative order carried by the table.
    pub fn order(&self) -> usize {
        self.derivs.len() - 1
    }

    /// Evaluates `f(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.derivs[0](x)
    }

    /// Evaluates `D^m f(x)`; `m` must not exceed [`VectorField::order`].
    pub fn deriv(&self, m: usize, x: f64) -> Result<f64> {
        match self.derivs.get(m) {
            Some(d) => Ok(d(x)),
            None => Err(Error::validation(format!(
                "derivative order {m} exceeds the table order {}",
                self.order()
            ))),
        }
    }

    /// The zero field with a table up to order `order >= 1`.
    pub fn zero(order: usize) -> VectorField<'static> {
        Self::table(order, move |_, _| 0.0)
    }

    /// The constant field `f == c`.
    pub fn constant(c: f64, order: usize) -> VectorField<'static> {
        Self::table(order, move |m, _| if m == 0 { c } else { 0.0 })
    }

    /// The affine field `f(x) = a x + b`.
    pub fn linear(a: f64, b: f64, order: usize) -> VectorField<'static> {
        Self::table(order, move |m, x| match m {
            0 => a * x + b,
            1 => a,
            _ => 0.0,
        })
    }

    /// The monomial `f(x) = x^k` with exact falling-factorial
    /// derivatives.
    pub fn power(k: u32, order: usize) -> VectorField<'static> {
        Self::table(order, move |m, x| {
            if m > k as usize {
                return 0.0;
            }
            let mut coeff = 1.0;
            for i in 0..m {
                coeff *= (k as usize - i) as f64;
            }
            coeff * x.powi(k as i32 - m as i32)
        })
    }

    /// The field `f(x) = sin x`, whose derivative table cycles with
    /// period four and is uniformly bounded by one.
    pub fn sine(order: usize) -> VectorField<'static> {
        Self::table(order, move |m, x| match m % 4 {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        })
    }

    fn table(order: usize, f: impl Fn(usize, f64) -> f64 + Copy + 'static) -> VectorField<'static> {
        let derivs: Vec<Box<dyn Fn(f64) -> f64>> = (0..=order.max(1))
            .map(|m| Box::new(move |x: f64| f(m, x)) as Box<dyn Fn(f64) -> f64>)
            .collect();
        VectorField::new(derivs).expect("exact derivative tables are self-consistent")
    }
}

// ---------------------------------------------------------------------------
// Controlled paths
// ---------------------------------------------------------------------------

/// Component evaluator `(j, diag, args) -> value`; see the module
/// documentation for the argument convention.
type ComponentFn<'a> = Rc<dyn Fn(usize, f64, &[f64]) -> f64 + 'a>;

/// A path locally expanded against the slices of a Volterra lift.
///
/// Components are stored per indexing tree in an ordered map; an absent
/// component is identically zero.  The expansion carries trees of grade
/// `0..order` where grade zero is the value component at the unit tree.
/// A *hat* path restricts its nonzero derivative components to planted
/// trees.
pub struct ControlledVolterraPath<'a> {
    lift: &'a VolterraLift,
    order: usize,
    hat: bool,
    components: BTreeMap<DecoratedTree, ComponentFn<'a>>,
}

impl<'a> Clone for ControlledVolterraPath<'a> {
    fn clone(&self) -> Self {
        ControlledVolterraPath {
            lift: self.lift,
            order: self.order,
            hat: self.hat,
            components: self.components.clone(),
        }
    }
}

impl fmt::Debug for ControlledVolterraPath<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlledVolterraPath")
            .field("order", &self.order)
            .field("hat", &self.hat)
            .field("components", &self.components.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl<'a> ControlledVolterraPath<'a> {
    /// Creates an empty (identically zero) path of the given truncation
    /// order over `lift`.  The lift must carry every component grade,
    /// i.e. `lift.level() >= order - 1`.
    pub fn new(lift: &'a VolterraLift, order: usize, hat: bool) -> Result<Self> {
        if order == 0 {
            return Err(Error::validation(
                "a controlled path carries at least the value component (order >= 1)",
            ));
        }
        if order > MAX_STAR_GRADE {
            return Err(Error::validation(format!(
                "truncation order {order} exceeds the convolution grade cap {MAX_STAR_GRADE}"
            )));
        }
        if lift.level() + 1 < order {
            return Err(Error::validation(format!(
                "lift of level {} cannot host components up to grade {}",
                lift.level(),
                order - 1
            )));
        }
        Ok(ControlledVolterraPath { lift, order, hat, components: BTreeMap::new() })
    }

    /// The constant path `y == c`: value component `c`, all derivative
    /// components zero.  Lies in the hat space.
    pub fn constant(lift: &'a VolterraLift, order: usize, c: f64) -> Result<Self> {
        let mut path = Self::new(lift, order, true)?;
        path.set_value(move |_, _| c)?;
        Ok(path)
    }

    /// The canonical first-order expansion of
    /// `y(j, xi) = y0 + sum_i w_i * z^{(i), xi}(0, j)`: the value
    /// follows the weighted single-node slices and the component at
    /// each single-node tree is the constant weight.  Lies in the hat
    /// space.
    pub fn canonical(
        lift: &'a VolterraLift,
        order: usize,
        y0: f64,
        weights: &[(Label, f64)],
    ) -> Result<Self> {
        let mut path = Self::new(lift, order, true)?;
        let mut singles = Vec::new();
        for &(label, w) in weights {
            let tree = DecoratedTree::single(label);
            if !lift.trees().contains(&tree) {
                return Err(Error::validation(format!(
                    "label {label} is not carried by the lift"
                )));
            }
            singles.push((tree, w));
        }
        let slices = singles.clone();
        path.set_value(move |j, diag| {
            let mut acc = y0;
            for (tree, w) in &slices {
                acc += w * lift.value(tree, 0, j, diag).expect("validated single-node slice");
            }
            acc
        })?;
        for (tree, w) in singles {
            path.set_component(&tree, move |_, _, _| w)?;
        }
        Ok(path)
    }

    /// Installs the value component `y(j, diag)`.
    pub fn set_value(&mut self, f: impl Fn(usize, f64) -> f64 + 'a) -> Result<()> {
        self.set_component(&DecoratedTree::unit(), move |j, diag, _| f(j, diag))
    }

    /// Installs the component at `tree`, replacing any previous one.
    ///
    /// The tree must be the unit tree or a lift-carried tree of grade
    /// below the truncation order; on a hat path it must additionally
    /// be planted.
    pub fn set_component(
        &mut self,
        tree: &DecoratedTree,
        f: impl Fn(usize, f64, &[f64]) -> f64 + 'a,
    ) -> Result<()> {
        if tree.grade() + 1 > self.order {
            return Err(Error::validation(format!(
                "component tree {tree} of grade {} exceeds the expansion grades 0..{}",
                tree.grade(),
                self.order
            )));
        }
        if !tree.is_unit() {
            if !self.lift.trees().contains(tree) {
                return Err(Error::validation(format!(
                    "component tree {tree} is not carried by the lift"
                )));
            }
            if self.hat && !tree.is_planted() {
                return Err(Error::validation(format!(
                    "hat paths carry planted components only; {tree} is not planted"
                )));
            }
        }
        self.components.insert(tree.clone(), Rc::new(f));
        Ok(())
    }

    /// Evaluates the component at `tree`; absent components are zero.
    ///
    /// `args` holds one upper variable per labeled node of `tree` in
    /// canonical preorder; `diag` and every entry of `args` must lie at
    /// or above the base point `point(j)`.
    pub fn eval(&self, tree: &DecoratedTree, j: usize, diag: f64, args: &[f64]) -> Result<f64> {
        let grid = self.lift.driver().grid();
        if j > grid.cells() {
            return Err(Error::validation(format!(
                "base index {j} exceeds the grid cell count {}",
                grid.cells()
            )));
        }
        if args.len() != tree.grade() {
            return Err(Error::validation(format!(
                "component {tree} takes {} node arguments; got {}",
                tree.grade(),
                args.len()
            )));
        }
        let base = grid.point(j);
        if !(diag >= base) {
            return Err(Error::validation(format!(
                "diagonal argument {diag} lies below the base point {base}"
            )));
        }
        if let Some(&bad) = args.iter().find(|&&r| !(r >= base)) {
            return Err(Error::validation(format!(
                "upper argument {bad} lies below the base point {base}"
            )));
        }
        Ok(self.components.get(tree).map_or(0.0, |f| f(j, diag, args)))
    }

    /// Value of the path at base index `j` with diagonal `diag`.
    pub fn value(&self, j: usize, diag: f64) -> f64 {
        self.components.get(&DecoratedTree::unit()).map_or(0.0, |f| f(j, diag, &[]))
    }

    /// The lift this path is expanded against.
    pub fn lift(&self) -> &'a VolterraLift {
        self.lift
    }

    /// Truncation order: components carry grades `0..order`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Whether the path is restricted to planted components.
    pub fn is_hat(&self) -> bool {
        self.hat
    }

    /// Declared regularity of the expansion (the lift's).
    pub fn alpha(&self) -> f64 {
        self.lift.alpha()
    }

    /// Declared singularity order (the lift's).
    pub fn gamma(&self) -> f64 {
        self.lift.gamma()
    }

    /// Full component index set: the unit tree followed by every
    /// lift-carried tree of grade below the truncation order.
    pub fn trees(&self) -> Vec<DecoratedTree> {
        let mut out = vec![DecoratedTree::unit()];
        out.extend(
            self.lift
                .trees()
                .iter()
                .filter(|h| (1..self.order).contains(&h.grade()))
                .cloned(),
        );
        out
    }

    /// Trees whose components are installed (nonzero by construction),
    /// in canonical order.
    pub fn active_trees(&self) -> Vec<DecoratedTree> {
        self.components.keys().cloned().collect()
    }

    fn component_fn(&self, tree: &DecoratedTree) -> Option<ComponentFn<'a>> {
        self.components.get(tree).cloned()
    }
}

// ---------------------------------------------------------------------------
// Remainders
// ---------------------------------------------------------------------------

/// Deviation of the component increment `y^h(t; ..) - y^h(s; ..)` from
/// its cut-term expansion over `[s, t]` (see the module documentation).
///
/// `args` holds the free upper variables of the trunk `h` in canonical
/// preorder, and `diag` binds the diagonal; both feed through to the
/// expanded components and to pieces attached at the root.
pub fn remainder_at(
    y: &ControlledVolterraPath<'_>,
    h: &DecoratedTree,
    s: usize,
    t: usize,
    diag: f64,
    args: &[f64],
) -> Result<f64> {
    let lift = y.lift();
    let grid = lift.driver().grid();
    if s > t || t > grid.cells() {
        return Err(Error::validation(format!(
            "base indices must satisfy s <= t <= {} (got {s}, {t})",
            grid.cells()
        )));
    }
    if h.grade() + 1 > y.order() {
        return Err(Error::validation(format!(
            "tree {h} of grade {} is outside the expansion grades 0..{}",
            h.grade(),
            y.order()
        )));
    }
    let mut total = y.eval(h, t, diag, args)? - y.eval(h, s, diag, args)?;
    let mut ctx = StarCtx::new(lift);
    ctx.top = y.order();
    for sigma in y.active_trees() {
        if sigma.is_unit() || sigma == *h {
            continue;
        }
        let grade_s = sigma.grade();
        for det in coproduct_detailed(&sigma) {
            if det.term.trunk != *h || det.term.pruned.is_empty() {
                continue;
            }
            let mut slots: Slots = [f64::NAN; MAX_STAR_GRADE + 1];
            for (i, &orig) in det.trunk_nodes.iter().enumerate().skip(1) {
                slots[orig] = args[i - 1];
            }
            let pieces: Vec<BoundPiece> = det
                .term
                .pruned
                .iter()
                .zip(&det.pruned_nodes)
                .map(|(p, nodes)| BoundPiece {
                    tree: p.tree.clone(),
                    map: nodes.clone(),
                    attach: (nodes[0] != 0).then_some(nodes[0]),
                })
                .collect();
            let w = |bound: &Slots| -> Result<f64> {
                y.eval(&sigma, s, diag, &bound[1..1 + grade_s])
            };
            total -= eval_pieces(&ctx, &pieces, s, t, diag, &slots, &w, 0)?;
        }
    }
    Ok(total)
}

/// [`remainder_at`] on the diagonal pattern: every free upper variable
/// (including the diagonal) is set to `tau`.
pub fn remainder(
    y: &ControlledVolterraPath<'_>,
    h: &DecoratedTree,
    s: usize,
    t: usize,
    tau: f64,
) -> Result<f64> {
    remainder_at(y, h, s, t, tau, &vec![tau; h.grade()])
}

/// Empirical remainder record of one component tree.
#[derive(Debug, Clone)]
pub struct RemainderRow {
    /// Indexing tree of the component.
    pub tree: DecoratedTree,
    /// Exponent pair the quotients are measured against.
    pub exponents: (f64, f64),
    /// Largest absolute remainder over the sampled pattern.
    pub max_abs: f64,
    /// Largest remainder-to-shape quotient (the empirical norm).
    pub weighted_norm: f64,
    /// Number of sampled `(s, t, tau)` triples.
    pub samples: usize,
}

/// Per-tree empirical remainder norms of a controlled path, measured on
/// the diagonal pattern at the boosted exponents
/// `((order - |h|) alpha, (order - |h|) gamma)`.
#[derive(Debug, Clone)]
pub struct RemainderReport {
    /// One row per component tree, in canonical order.
    pub rows: Vec<RemainderRow>,
    /// Grid stride used for sampling.
    pub stride: usize,
}

impl fmt::Display for RemainderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>7} {:>9} {:>9} {:>12} {:>12} {:>8}",
            "tree", "grade", "alpha", "gamma", "sup |R|", "norm", "samples"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<24} {:>7} {:>9.4} {:>9.4} {:>12.4e} {:>12.4e} {:>8}",
                row.tree.to_string(),
                row.tree.grade(),
                row.exponents.0,
                row.exponents.1,
                row.max_abs,
                row.weighted_norm,
                row.samples
            )?;
        }
        Ok(())
    }
}

/// Samples [`remainder`] on a strided grid and reports per-tree
/// empirical norms.  `stride` must be positive; quotients with
/// degenerate shape denominators are skipped.
pub fn remainder_report(
    y: &ControlledVolterraPath<'_>,
    stride: usize,
) -> Result<RemainderReport> {
    if stride == 0 {
        return Err(Error::validation("sampling stride must be positive"));
    }
    let grid = y.lift().driver().grid();
    let cells = grid.cells();
    let horizon = grid.point(cells);
    let mut rows = Vec::new();
    for h in y.trees() {
        let missing = (y.order() - h.grade()) as f64;
        let (alpha_r, gamma_r) = (missing * y.alpha(), missing * y.gamma());
        let mut max_abs = 0.0f64;
        let mut norm = 0.0f64;
        let mut samples = 0;
        let mut s = 0;
        while s < cells {
            let mut t = s + stride;
            while t <= cells {
                let pt = grid.point(t);
                for tau in [pt, 0.5 * (pt + horizon), horizon] {
                    let r = remainder(y, &h, s, t, tau)?;
                    samples += 1;
                    max_abs = max_abs.max(r.abs());
                    let near = (tau - pt).powf(-gamma_r) * (pt - grid.point(s)).powf(alpha_r);
                    let far = (tau - grid.point(s)).powf(alpha_r - gamma_r);
                    let shape = near.min(far);
                    if shape > 0.0 && shape.is_finite() {
                        norm = norm.max(r.abs() / shape);
                    }
                }
                t += stride;
            }
            s += stride;
        }
        rows.push(RemainderRow {
            tree: h,
            exponents: (alpha_r, gamma_r),
            max_abs,
            weighted_norm: norm,
            samples,
        });
    }
    Ok(RemainderReport { rows, stride })
}

// ---------------------------------------------------------------------------
// Rough integration
// ---------------------------------------------------------------------------

/// One compensated germ of the rough Volterra integral against
/// component `label`: the sum over installed components of the
/// convolution of the grafted slice against the component, with the
/// coefficient frozen at `a`,
///
/// ```text
/// Xi(a, b; tau) = sum_h  z^{graft(label, h), tau} over [a, b]
///                        applied to y^h(a; ..).
/// ```
///
/// At cell resolution this is the explicit one-step rule
/// `sum_h z^{graft(label, h), tau}(a, a+1) * y^h(a; point(a), ..)`.
pub fn compensated_germ(
    y: &ControlledVolterraPath<'_>,
    label: Label,
    a: usize,
    b: usize,
    tau: f64,
) -> Result<f64> {
    let lift = y.lift();
    let mut ctx = StarCtx::new(lift);
    ctx.top = y.order();
    let blank: Slots = [f64::NAN; MAX_STAR_GRADE + 1];
    let mut acc = 0.0;
    for h in y.active_trees() {
        let grade = h.grade();
        let grafted = graft(label, &h)?;
        if !lift.trees().contains(&grafted) {
            return Err(Error::validation(format!(
                "grafted tree {grafted} is not carried by the lift; build it with level >= {}",
                y.order()
            )));
        }
        let idmap: Vec<usize> = (0..=grade + 1).collect();
        let w = |slots: &Slots| -> Result<f64> {
            y.eval(&h, a, slots[1], &slots[2..2 + grade])
        };
        acc += star_span(&ctx, &grafted, &idmap, a, b, tau, &blank, &w, 0)?;
    }
    Ok(acc)
}

/// Result of a rough Volterra integration: the sewn value, its level
/// record, and the integral as a new controlled path in the hat space.
#[derive(Debug)]
pub struct RoughIntegral<'a> {
    /// Sewn value of the integral over the requested interval.
    pub value: f64,
    /// Dyadic germ-sum record; `remainder_ratio` compares the deviation
    /// of the value from the single-germ approximation against the
    /// shape `min(|tau-t|^-gamma |t-s|^(order rho + gamma),
    /// |tau-s|^(order rho))`.
    pub report: ConvergenceReport,
    /// The integral as a controlled path: the value component
    /// accumulates cell germs from `s`, each installed component of the
    /// integrand reappears under its grafted tree with the diagonal
    /// rebound to the grafted node, and everything else is zero.
    pub path: ControlledVolterraPath<'a>,
}

/// Rough Volterra integral of the controlled path `y` against driver
/// component `label` over `[s, t]` with upper time `tau`.
///
/// Germ sums over dyadic partitions are assessed exactly as in
/// [`crate::sewing::sewing_integrate`]; a non-Cauchy record is a
/// diagnostic error carrying the level table.  The output path lives in
/// the hat space over the same lift and truncation order.
pub fn rough_integral<'a>(
    y: &ControlledVolterraPath<'a>,
    label: Label,
    s: usize,
    t: usize,
    tau: f64,
    opts: &SewingOptions,
) -> Result<RoughIntegral<'a>> {
    let lift = y.lift();
    let grid = lift.driver().grid();
    if label > lift.driver().dim() {
        return Err(Error::validation(format!(
            "driver component {label} exceeds the dimension {}",
            lift.driver().dim()
        )));
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
    if opts.tolerance <= 0.0 {
        return Err(Error::validation("tolerance must be positive"));
    }
    if lift.level() < y.order() {
        return Err(Error::validation(format!(
            "integration needs grafted slices of grade up to {}; lift level is {}",
            y.order(),
            lift.level()
        )));
    }

    // Installed components with their grafted slices, in canonical order.
    let mut items: Vec<(DecoratedTree, DecoratedTree, usize)> = Vec::new();
    for h in y.active_trees() {
        let grafted = graft(label, &h)?;
        if !lift.trees().contains(&grafted) {
            return Err(Error::validation(format!(
                "grafted tree {grafted} is not carried by the lift"
            )));
        }
        items.push((h.clone(), grafted, h.grade()));
    }

    let mut ctx = StarCtx::new(lift);
    ctx.top = y.order();
    let blank: Slots = [f64::NAN; MAX_STAR_GRADE + 1];
    let span = t - s;
    let mut sums: Vec<(usize, f64)> = vec![(1, 0.0)];
    if span > 0 {
        sums.clear();
        for n in interval_counts(span, opts.max_levels) {
            let mut acc = 0.0;
            for k in 0..n {
                let a = chunk_bound(s, span, n, k);
                let b = chunk_bound(s, span, n, k + 1);
                for (h, grafted, grade) in &items {
                    let idmap: Vec<usize> = (0..=grade + 1).collect();
                    let w = |slots: &Slots| -> Result<f64> {
                        y.eval(h, a, slots[1], &slots[2..2 + grade])
                    };
                    acc += star_span(&ctx, grafted, &idmap, a, b, tau, &blank, &w, 0)?;
                }
            }
            sums.push((n, acc));
        }
    }
    let mut report = assess(&sums, opts.tolerance);
    let order_exp = y.order() as f64 * lift.rho() + lift.gamma();
    report.remainder_ratio = remainder_shape(
        grid.point(s),
        grid.point(s),
        grid.point(t),
        tau,
        order_exp,
        lift.gamma(),
        0.0,
    )
    .map(|shape| (report.value() - sums[0].1).abs() / shape);
    if !report.accepted {
        return Err(Error::diagnostic(format!(
            "rough-integral germ sums over [{s}, {t}] (tau = {tau}) are not Cauchy:\n{report}"
        )));
    }

    // The integral as a hat-space path over the same lift.
    let mut path = ControlledVolterraPath::new(lift, y.order(), true)?;
    let captured = y.clone();
    let value_items = items.clone();
    path.set_value(move |j, diag| {
        let mut acc = 0.0;
        let mut buf = [0.0f64; MAX_STAR_GRADE + 1];
        for l in s..j {
            let left = captured.lift().driver().grid().point(l);
            for (h, grafted, grade) in &value_items {
                buf[..*grade].fill(left);
                acc += captured.lift().value(grafted, l, l + 1, diag).expect("carried graft")
                    * captured.eval(h, l, left, &buf[..*grade]).expect("validated component");
            }
        }
        acc
    })?;
    for (h, grafted, _) in &items {
        if grafted.grade() + 1 > y.order() {
            continue;
        }
        if let Some(comp) = y.component_fn(h) {
            path.set_component(grafted, move |j, _diag, args| comp(j, args[0], &args[1..]))?;
        }
    }
    Ok(RoughIntegral { value: report.value(), report, path })
}

// ---------------------------------------------------------------------------
// Composition (chain rule)
// ---------------------------------------------------------------------------

/// Components of `f(y)` by the symmetry-weighted chain rule (see the
/// module documentation).  The field's derivative table must reach the
/// largest branch count, `order - 1`.  The result is a plain controlled
/// path (not hat): product trees acquire genuine components.
pub fn compose<'a>(
    f: &'a VectorField<'a>,
    y: &ControlledVolterraPath<'a>,
) -> Result<ControlledVolterraPath<'a>> {
    if f.order() + 1 < y.order() {
        return Err(Error::validation(format!(
            "field carries derivatives up to order {}, composition needs {}",
            f.order(),
            y.order() - 1
        )));
    }
    let mut out = ControlledVolterraPath::new(y.lift(), y.order(), false)?;
    let value_of = y.clone();
    out.set_value(move |j, diag| f.eval(value_of.value(j, diag)))?;
    for h in y.trees() {
        if h.is_unit() {
            continue;
        }
        let branches = h.children();
        let m = branches.len();
        let coeff = chain_coefficient(&h)?;
        // Planted factor per branch with its canonical-preorder
        // argument slice; skip the component if any factor is absent.
        let mut parts = Vec::with_capacity(m);
        let mut offset = 0;
        let mut complete = true;
        for b in branches {
            let len = b.node_count();
            let planted = DecoratedTree::node(None, vec![b.clone()]);
            match y.component_fn(&planted) {
                Some(comp) => parts.push((comp, offset, len)),
                None => {
                    complete = false;
                    break;
                }
            }
            offset += len;
        }
        if !complete {
            continue;
        }
        let value_at = y.clone();
        out.set_component(&h, move |j, diag, args| {
            let mut acc = coeff
                * f.deriv(m, value_at.value(j, diag)).expect("validated derivative order");
            for (comp, off, len) in &parts {
                acc *= comp(j, diag, &args[*off..*off + *len]);
            }
            acc
        })?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

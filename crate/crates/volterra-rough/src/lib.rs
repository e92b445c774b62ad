// SPDX-License-Identifier: MIT OR Apache-2.0

//! Branched rough paths for Volterra integral equations with singular kernels.
//!
//! This crate implements the algebraic and analytic toolkit needed to make
//! sense of — and numerically solve — integral equations of the form
//!
//! ```text
//!     y(t) = y(0) + Σ_i ∫₀ᵗ k(t, r) f_i(y(r)) dq^i(r),
//! ```
//!
//! where the kernel `k` may blow up on the diagonal (e.g. `k(t, r) =
//! (t - r)^{-γ}`) and the drivers `q^i` may be too rough for classical
//! calculus.  Because the kernel destroys the semigroup structure of the
//! flow, ordinary iterated integrals and word-indexed signatures are not
//! enough; the natural index set is instead a family of decorated rooted
//! trees, and the natural gluing operation is a *convolution product* built
//! from a two-parameter sewing lemma.
//!
//! # Module map
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`tree`] | Decorated rooted trees, forests, canonical forms, enumeration, grafting, symmetry factors |
//! | [`coproduct`] | Admissible cuts, the plugging coproduct with node attachments, iterated coproducts, counting functions |
//! | [`kernel`] | Singular Volterra kernels, exact cell masses, empirical verification of the kernel hypotheses |
//! | [`driver`] | Sampled driver paths on grids, fractional Brownian motion, Hölder estimation, CSV import/export |
//! | [`quadrature`] | Left-point and exact-cell quadrature of tree-indexed iterated Volterra integrals |
//! | [`lift`] | The tree-indexed lift of a driver (three-parameter tables, Chen-type residual checks) |
//! | [`sewing`] | Two-parameter Volterra functions, Hölder-type norms, the sewing map, and the convolution product `★` |
//! | [`controlled`] | Tree-indexed controlled paths, remainder estimates, rough Volterra integration, chain rule |
//! | [`solver`] | Picard fixed-point solver for rough Volterra equations with window stitching |
//!
//! # Conventions
//!
//! * Trees indexing integrals have an **unlabeled root**; every other node
//!   carries a decoration in `0..=d` naming a driver component.  Component
//!   `0` is always the time component `q⁰(r) = r`, so decoration `0` plays
//!   the role of a drift.
//! * The **grade** `|h|` of a tree is its number of labeled nodes; the
//!   single unlabeled root `1` has grade zero and acts as the unit.
//! * All numerics are `f64` on explicit grids; Riemann-type limits are
//!   operationalized as dyadic refinements with Cauchy acceptance tests,
//!   and anything that fails to stabilize is reported as a diagnostic
//!   error rather than silently accepted.

#![warn(missing_docs)]
#![warn(rust_2018_idioms)]

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod controlled;
pub mod coproduct;
pub mod driver;
pub mod error;
pub mod kernel;
pub mod lift;
pub mod quadrature;
pub mod sewing;
pub mod solver;
pub mod tree;

pub use controlled::{
    chain_coefficient, compensated_germ, compose, remainder, remainder_at, remainder_report,
    rough_integral, truncation_order, ControlledVolterraPath, RemainderReport, RemainderRow,
    RoughIntegral, VectorField,
};
pub use coproduct::{admissible_cuts, coproduct, counting_function, reduced_coproduct, CutTerm};
pub use driver::{sample_fbm, DriverPath, FbmSampler, Grid};
pub use error::{Error, Result};
pub use kernel::{verify_kernel_bounds, KernelBoundReport, VolterraKernel};
pub use lift::{chen_residual, ChenReport, VolterraLift};
pub use quadrature::{iterated_integral, ladder_signature_integral, TreeQuadrature};
pub use solver::{
    controlled_distance, default_beta, picard_step, solution_seminorm, solve, solve_window,
    SolveConfig, Solution, WindowReport,
};

pub use sewing::{
    delta, empirical_norm_1, empirical_norm_12, empirical_norm_multi, operator_chen_defect,
    sewing_integrate, star_base, star_tree, AbstractIntegrand, ConvergenceReport,
    MultiParamFunction, SewingExponents, SewingOptions, SewingResult, VolterraFunction,
};
pub use tree::{DecoratedTree, Forest};

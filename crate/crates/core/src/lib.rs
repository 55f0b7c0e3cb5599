//! Discretized solvers for quadratically regularized optimal transport and
//! the inverse problem of identifying a marginal (and cost) from plan
//! observations, together with a set of numerical verification probes.
//!
//! The pieces:
//!
//! - [`grid`]: uniform cell grids, piecewise-constant fields, midpoint
//!   quadrature, `L^p` norms and the discrete `W^{1,p}` penalty;
//! - [`measures`]: atomic measures, marginal projections, mollify-and-shift
//!   smoothing onto dilated grids, zero-extension/restriction;
//! - [`qot`]: the regularized transport solver (semi-smooth Newton on the
//!   dual system with a gradient-ascent fallback) and duality diagnostics;
//! - [`lp`]: an exact transportation-simplex oracle for the unregularized
//!   problem with dual potentials and complementarity checks;
//! - [`bilevel`]: the marginal/cost identification loop driven by the
//!   forward map through the smoothing pipeline;
//! - [`verify`]: seeded probes reproducing the analytic facts the solvers
//!   rely on (weak-limit counterexample, energy identity, dual bounds,
//!   Hölder modulus, LP stability);
//! - [`io`]: deterministic CSV/JSON artifact reading and writing.

pub mod bilevel;
pub mod error;
pub mod grid;
pub mod io;
pub mod lp;
pub mod measures;
pub mod qot;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{w1p_penalty, Field1d, Field2d, Grid1d, Grid2d};
pub use measures::{
    extend_by_zero, marginals, mollify_shift, restrict, DilatedGrid, DiscreteMeasure,
    MollifierKernel,
};
pub use qot::{
    dual_objective, dual_residual, normalize_zero_mean, plan_from_duals, primal_objective,
    solve, DualPotentials, QotProblem, QotSolution, SolverOptions,
};

//! Numerical tools for the Aronsson equation `Δ∞u − τ|Du|² = 0` on intervals,
//! rectangles and discs.
//!
//! Two solvers select the two extremal viscosity solutions of the Dirichlet
//! problem:
//!
//! * [`game::value_iteration`] iterates the tug-of-war dynamic programming
//!   operator and converges to the minimal solution (the continuum value
//!   function).
//! * [`variational::minimize_lp`] minimizes discrete `L^p` energies of a
//!   modified Hamiltonian for growing `p` and converges to the maximal
//!   solution (the absolute minimizer).
//!
//! [`exact1d`] enumerates every solution on an interval in closed form and
//! [`analysis`] detects wells and flat pieces, which classify a solution as
//! minimal, maximal or intermediate.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exact1d;
pub mod expr;
pub mod game;
pub mod grid;
mod linalg;
pub mod report;
pub mod variational;

pub use analysis::{Classification, FlatPiece, Verdict, Well};
pub use error::{Error, Result};
pub use exact1d::{Family, ParabolaFlatSolution};
pub use expr::{parse_expr, Expression};
pub use game::{GameParams, Init, Sweep};
pub use grid::{BoundaryData, DomainKind, DomainSpec, Grid, GridFunction, NodeClass, Problem};
pub use report::{SolveReport, StageReport};
pub use variational::LpParams;

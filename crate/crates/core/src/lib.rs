//! Numerical toolkit for the special Lagrangian curvature equation
//! `Σ arctan κᵢ = Θ` on graph hypersurfaces.
//!
//! * [`symfunc`]: elementary symmetric functions, Γ_k cones, Newton
//!   transformation tensors, the algebraic forms of the operator, the volume
//!   factor and the linearization.
//! * [`geometry`]: discrete graph geometry on uniform grids (fundamental
//!   forms, principal curvatures, the Gauss-map lift and its metric).
//! * [`jacobi`]: the Jacobi-inequality machinery and its sampling verifier.
//! * [`solver`]: damped Newton with phase continuation for the Dirichlet
//!   problem, plus interior-estimate probes.
//! * [`ot2d`]: the two-dimensional optimal-transport reduction and the
//!   Ma–Trudinger–Wang tensor.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod geometry;
pub mod identities;
pub mod jacobi;
pub mod linalg;
pub mod ot2d;
pub mod output;
pub mod solver;
pub mod symfunc;

pub use error::{Error, Result};
pub use geometry::{CurvatureField, GraphPatch};
pub use symfunc::{KappaVector, Phase};

//! Batched isoparametric finite elements on bulk domains and embedded
//! surfaces.
//!
//! The crate assembles mass and stiffness matrices for linear and quadratic
//! Lagrange elements on 2D/3D bulk meshes and on curve/surface meshes
//! embedded in R^2/R^3, using a page-batched element kernel with a naive
//! per-element assembler kept as oracle and baseline. On top of the
//! assembly sit sparse linear algebra (triplets -> CSR, CG solvers),
//! elliptic problem drivers with convergence studies, and mean-curvature
//! flow time steppers.

pub mod assembly;
pub mod error;
pub mod geomflow;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod reference;
pub mod sparse;

pub use error::{Error, Result};

//! Taylor–Hood finite-element kernel: quadrature, shape functions, spaces,
//! assembly, constraints and linear solves.

pub mod assembly;
pub mod basis;
pub mod dirichlet;
pub mod infsup;
pub mod quadrature;
pub mod solve;
pub mod space;
pub mod sparse;

pub use assembly::{assemble_bilinear, assemble_boundary, assemble_linear, AssemblyError, PointContext};
pub use basis::{Shape, TriangleGeometry};
pub use dirichlet::{apply_dirichlet, DirichletError, DirichletSet};
pub use infsup::{inf_sup_smoke, InfSupError};
pub use quadrature::QuadratureRule;
pub use solve::{solve_linear, DirectSolver, Factorization, SolveError, SolverOptions};
pub use space::{FunctionSpace, SpaceKind};
pub use sparse::SparseMatrix;

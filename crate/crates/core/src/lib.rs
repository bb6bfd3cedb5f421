//! Minimum-residual (DPG) finite elements for 2D plane-strain linear elasticity.
//!
//! Five variational formulations (strong, ultraweak, dual mixed, mixed, primal) are assembled
//! with broken test spaces and element-local Riesz inversion, solved through the condensed
//! normal equations, and driven by residual-based adaptivity. Exact-solution benchmarks on
//! the unit square and the L-shape, and a small inf-sup laboratory, come with the crate.

pub mod error;
pub mod exact;
pub mod forms;
pub mod infsup;
pub mod material;
pub mod mesh;
pub mod persist;
pub mod poly;
pub mod quadrature;
pub mod residual;
pub mod solver;
pub mod spaces;
pub mod study;

pub use error::{Error, Result};
pub use forms::Formulation;
pub use material::{MaterialParams, SkewScalar, SymTensor2};
pub use mesh::{BoundaryTag, Mesh, Skeleton};
pub use solver::SolutionFields;

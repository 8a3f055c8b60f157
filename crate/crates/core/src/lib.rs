//! Space-time Galerkin discretisation of weighted (Weighted Inertia-Dissipation-Energy)
//! minimisation problems for the damped semilinear wave equation
//! `u_tt − Δu + |u|^{p−2}u = f` on `[0, 1]`.
//!
//! Time is discretised with cubic B-splines that satisfy zero initial
//! conditions, space with P1 finite elements. Every temporal row is rescaled by
//! `e^{iτ/ε}` so that the systems stay well scaled for small `ε`.
//!
//! The numerical core is generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64`.

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod norms;
pub mod quadrature;
pub mod scalar;
pub mod solvers;
pub mod spatial_fem;
pub mod temporal_basis;

pub use assembly::{
    assemble_load, assemble_load_ode, assemble_nonlinear_jacobian, assemble_nonlinear_residual,
    assemble_spacetime_operator, assemble_temporal, evaluate_functional, full_residual,
    SpaceTimeMatrix, SpaceTimeSolution, TemporalMatrices, WeightedSystem,
};
pub use error::{Error, Result};
pub use norms::{compute_errors, eoc, ErrorReport, ExactSolution, NormTag};
pub use quadrature::{gauss_rule, shifted_weighted_integral, WeightedRule};
pub use scalar::Real;
pub use solvers::{
    condition_number, solve_linear_pde, solve_nonlinear, solve_ode, NewtonConfig, NewtonReport,
};
pub use spatial_fem::{
    assemble_mass, assemble_stiffness, build_space_mesh, eval_fe_function, SpaceMesh,
};
pub use temporal_basis::{SplineBasis, TimeGrid};

pub type Grid = TimeGrid<f64>;
pub type Basis = SplineBasis<f64>;
pub type Mesh = SpaceMesh<f64>;
pub type Rule = WeightedRule<f64>;
pub type System = WeightedSystem<f64>;
pub type Operator = SpaceTimeMatrix<f64>;
pub type Solution = SpaceTimeSolution<f64>;
pub type Exact = ExactSolution<f64>;

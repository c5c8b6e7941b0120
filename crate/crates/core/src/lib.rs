//! Sparse optimal control of semilinear elliptic equations with an `L^0`
//! control cost: discretization, solvers for the original and the partially
//! convexified problem, and numerical verification of first- and second-order
//! optimality conditions.

pub mod cli;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod functionals;
pub mod linalg;
pub mod optimality;
pub mod oracle;
pub mod pde;
pub mod pointwise;
pub mod problem;
pub mod report;
pub mod soc;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{build_problem, Grid, GridField, ProblemConfig, ProblemSpec};

//! Monotone finite-difference solver for fully nonlinear free transmission
//! problems on boxes.
//!
//! The PDE switches between two Isaacs operators on the positive and
//! negative sets of the unknown. The discrete problem replaces the switch by
//! a clamped ramp of width `2ε` evaluated at a frozen function `v`, solves
//! the resulting monotone scheme by explicit Euler relaxation, and then
//! iterates `v <- u` to a fixed point.

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod operators;
pub mod problems;
pub mod scheme;
pub mod solver;
pub mod stencil;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{build_grid, DomainSpec, Grid, GridFunction};
pub use operators::IsaacsOperator;
pub use problems::{example_1d, example_2d, ProblemSpec};
pub use scheme::{build_barriers, BarrierBounds, BarrierPair, RegularizedScheme};
pub use solver::{eps_continuation, euler_step, inner_solve, outer_iterate, RunReport, SolverConfig};
pub use stencil::StencilPolicy;

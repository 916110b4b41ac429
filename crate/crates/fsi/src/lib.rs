//! Monolithic fluid-structure interaction solver posed on a fixed reference
//! configuration.
//!
//! A Newtonian incompressible fluid occupies one part of the domain and a
//! quasi-incompressible Saint Venant-Kirchhoff solid the other; both are
//! written in Lagrangian coordinates on the configuration at t = 0 and share
//! the interface velocity dofs. The semi-discretization expands the unified
//! velocity field in an orthonormal basis of a weighted divergence-free
//! space, which turns the coupled problem into a first-order linear ODE
//! system integrated by the implicit midpoint rule. The nonlinearity is
//! handled by two nested Picard iterations: an inner sweep that updates the
//! interface traction datum of the linearized elastodynamics and an outer
//! sweep that refreshes the frozen transport coefficients. The fluid
//! pressure is recovered per step from the momentum residual through the
//! mixed (inf-sup) formulation.

pub mod assembly;
pub mod config;
pub mod constitutive;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod kinematics;
pub mod mesh;
pub mod output;
pub mod pressure;
pub mod quadrature;
pub mod run;
pub mod solver;
pub mod space;

pub use error::{Error, Result};

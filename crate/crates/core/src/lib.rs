//! Hybrid discontinuous Galerkin solver for the Stokes and incompressible
//! Navier–Stokes equations on structured triangulations.
//!
//! Cell velocity and pressure live in broken (cell-wise) Lagrange spaces and
//! are coupled to each other only through continuous Lagrange spaces on the
//! facet skeleton. Cell unknowns are eliminated by static condensation, so the
//! global system has the size of a continuous Galerkin skeleton problem.

pub mod basis;
pub mod condense;
pub mod diagnostics;
pub mod error;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod scenarios;
pub mod solver;
pub mod spaces;

pub use error::{Error, Result};

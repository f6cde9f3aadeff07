//! Numerical laboratory for the fourth-order parabolic equation
//! `u_t + Δ²u = det(D²u) + λ f` on the unit square and the unit disk.

pub mod banded;
pub mod checkpoint;
pub mod config;
pub mod eigen;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod grid;
pub mod mountain_pass;
pub mod operators;
pub mod parallel;
pub mod radial;
pub mod samplers;
pub mod spectral;
pub mod variational;

pub use error::{LabError, Result};
pub use grid::{BoundaryCondition, Field2D, Grid2D};

//! Adaptive isogeometric Galerkin boundary element method for the 2D
//! Laplace equation on hierarchical B-spline spaces.

pub mod adaptivity;
pub mod convergence;
pub mod error;
pub mod galerkin;
pub mod gauss;
pub mod hierarchy;
pub mod problems;
pub mod quadrature;
pub mod quasi_interp;
pub mod splines;

pub use error::{Error, Result};

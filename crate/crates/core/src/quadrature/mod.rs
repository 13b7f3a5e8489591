//! Quadrature for the boundary integrals: kernel splitting, modified
//! moments and rules on B-spline supports.

pub mod kernel;
pub mod moments;
pub mod rules;

pub use kernel::{Geometry, NodeGeom};
pub use moments::{log_monomial_moments, Precision};
pub use rules::{MomentTable, NormalizedRule, RationalSigma, RuleCache, Source, SupportRule};

//! Spline bases on weighted interval partitions.
//!
//! The crate builds classical and Chebyshevian B-spline bases on arbitrary
//! knot sequences over [0, 1], assembles their Gram matrices against a
//! (possibly weighted) probability measure, and exposes the orthogonal
//! projector onto the spline space together with diagnostics: inverse norms,
//! off-diagonal decay fits, perturbation checks and projector differences
//! under partition refinement.
//!
//! Modules mirror the pipeline:
//! - [`partition`]: interval partitions, measures, mesh refinement, knots
//! - [`quadrature`]: composite Gauss rules, iterated integrals, kernels
//! - [`bspline`]: classical B-spline bases
//! - [`chebyshev`]: weight systems and Chebyshevian B-spline bases
//! - [`gram`]: banded Gram matrices, inverses, decay fits
//! - [`projector`]: orthogonal projector, dual basis, refinement differences
//! - [`perturb`]: perturbed families and their admissibility checks

pub mod bspline;
pub mod chebyshev;
pub mod error;
pub mod families;
pub mod gram;
pub mod partition;
pub mod perturb;
pub mod projector;
pub mod quadrature;

pub use error::{Error, Result};

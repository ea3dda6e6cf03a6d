//! Solver and verification suite for sigma-k Hessian equations on the unit
//! sphere, written in terms of support functions of convex bodies.
//!
//! The equation solved is
//!
//! ```text
//! sigma_k(grad^2 u + u I) = u^(p-1) (u^2 + |grad u|^2)^((k+1-q)/2) phi(x)
//! ```
//!
//! on S^2, where `u` is the support function of a convex body, the matrix
//! `W = grad^2 u + u I` carries the principal radii of curvature, and `phi`
//! is positive data. For `p > q` the solver follows a homotopy in the data
//! from the round sphere; for `p = q > 1` an epsilon-regularized path
//! extracts the unique eigenvalue constant `gamma` that makes the equation
//! solvable.
//!
//! Module map:
//! - [`symmfunc`]: elementary symmetric polynomials, their derivatives and
//!   the Garding cone machinery for n <= 8.
//! - [`sphere`]: staggered latitude-longitude grid on S^2 and discrete
//!   covariant operators in the orthonormal frame.
//! - [`pde`]: right-hand side, residual, sparse linearization, data
//!   homotopy and the curvature-condition checker for `phi`.
//! - [`continuation`]: damped Newton corrector, homotopy driver, the
//!   epsilon-path eigenvalue solver and a uniqueness probe.
//! - [`verify`]: a priori bound checks and grid-refinement studies.
//! - [`geometry`]: embedding of the convex body from its support function
//!   and Wavefront OBJ export.

pub mod continuation;
pub mod geometry;
pub mod pde;
pub mod sparse;
pub mod sphere;
pub mod symmfunc;
pub mod verify;

pub use continuation::{
    ContinuationTrace, EigenResult, NewtonSettings, NewtonStats, SolveError, TraceStep,
    UniquenessReport,
};
pub use geometry::EmbeddedSurface;
pub use pde::{AssumptionCase, AssumptionReport, PdeError, PhiSpec, ProblemSpec};
pub use sphere::{AmbientFn, FrameGradient, GridError, ScalarField, SphericalGrid, SymMatrixField};
pub use symmfunc::{Spectrum, SymMatrix, SymmError};
pub use verify::{BoundsReport, ConvergenceRow, ConvergenceStudy};

/// Binomial coefficient C(n, k) as f64; exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

#[cfg(test)]
mod tests {
    use super::binomial;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(2, 1), 2.0);
        assert_eq!(binomial(2, 2), 1.0);
        assert_eq!(binomial(3, 2), 3.0);
        assert_eq!(binomial(8, 4), 70.0);
        assert_eq!(binomial(4, 9), 0.0);
    }
}

//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by matrix construction, quadrature and test pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Row `0-indexed` has zero sample variance; its correlations are undefined.
    #[error("row {0} is constant: correlation coefficients are undefined")]
    ConstantRow(usize),

    /// Fewer than two variables or two samples.
    #[error("data matrix must have p >= 2 and n >= 2 (got p = {p}, n = {n})")]
    DimensionTooSmall { p: usize, n: usize },

    /// A resolvent probe was requested at a real shift.
    #[error("resolvent probe requires Im(z) != 0")]
    RealShift,

    /// Stieltjes transform requested on (or too close to) the support.
    #[error("z = {re}+{im}i is within {dist:e} of the spectral support")]
    OnSupport { re: f64, im: f64, dist: f64 },

    /// Real z inside the support: no canonical branch exists.
    #[error("branch of the Stieltjes transform is ambiguous for real z inside the support")]
    BranchAmbiguous,

    /// The limiting law has an atom at the origin and f is not finite there.
    #[error("test function is not finite at the point mass at zero (c = {c})")]
    UndefinedAtAtom { c: f64 },

    /// Adaptive refinement failed to reach the requested tolerance.
    #[error("quadrature failed to converge: last correction {last:e} (tolerance {tol:e})")]
    NonConvergent { last: f64, tol: f64 },

    /// The integrand blew up at a quadrature node.
    #[error("integrand magnitude {mag:e} at z = {re}+{im}i suggests a singularity near the contour")]
    SingularityNearContour { re: f64, im: f64, mag: f64 },

    /// The two covariance contours touch or cross.
    #[error("covariance contours intersect; they must be strictly nested or disjoint")]
    ContoursIntersect,

    /// log f requested but an eigenvalue is <= 0.
    #[error("log statistic undefined: eigenvalue {value:e} at index {index} is not positive")]
    LogOfNonpositiveEigenvalue { index: usize, value: f64 },

    /// Standardization with a non-positive variance.
    #[error("asymptotic variance {0:e} is not positive")]
    DegenerateVariance(f64),

    /// Invalid simulation specification.
    #[error("invalid simulation specification: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Default numerical tolerances, overridable per call where it matters.

/// Relative tolerance for positive semi-definiteness checks:
/// a symmetric matrix passes when `lambda_min >= -PSD * max(lambda_max, 1)`.
pub const PSD: f64 = 1e-8;

/// Relative threshold under which two random matrices are treated as the
/// same element of the (quotient) inner-product space.
pub const EQ: f64 = 1e-10;

/// Relative eigenvalue cutoff for pseudo-inverse solves of Gram matrices.
pub const PINV_REL: f64 = 1e-10;

/// Relative tolerance for declaring an adjusted-residual inner product zero
/// (conditional linear independence).
pub const IND: f64 = 1e-8;

/// Relative tolerance below which an eigenvalue is flagged as negative.
pub const EIG: f64 = 1e-10;

/// Size-ratio above which an adjustment is tagged larger than expected.
pub const RATIO_UPPER: f64 = 2.5;

/// Size-ratio below which an adjustment is tagged smaller than expected.
pub const RATIO_LOWER: f64 = 0.4;

/// Absolute floor used when clamping tiny negative squared norms to zero.
pub const NUM: f64 = 1e-12;

//! Interpretive diagnostics for realized adjustments: bearings, size
//! ratios, conditional linear independence, and eigenvalue warnings.
//!
//! The bearing of an adjustment against a reference matrix `G` is the
//! unique random matrix `B` in the span of the centered collection with
//!
//! ```text
//! (A - E(A), B) = (E_d(A), G) - (E(A), G)   for all A,
//! ```
//!
//! where `E_d(A)` is the realized adjusted expectation. Its squared norm is
//! the size of the adjustment; comparing it with the prior expected size
//! calibrates how much the data actually moved beliefs. The all-ones
//! reference makes these diagnostics coincide with the scalar theory when
//! every matrix has a single shared component.

use nalgebra::{DMatrix, DVector};

use crate::adjustment::{project, Collection};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{covariance_of, inner_product, trace_functional, RandomMatrix};
use crate::store::BeliefStore;
use crate::tol;

/// Bearing of an observed adjustment against a reference matrix.
#[derive(Debug, Clone)]
pub struct BearingReport {
    pub g_ref: DMatrix<f64>,
    pub coefficients: Vec<f64>,
    /// The bearing as a random object in the span of the centered members.
    pub bearing: RandomMatrix,
    /// The bearing with observed values substituted.
    pub realized_bearing: DMatrix<f64>,
    /// Squared norm of the bearing: how far expectations actually moved.
    pub size: f64,
    /// Prior expectation of the size.
    pub expected_size: f64,
    /// `size / expected_size`; `None` when the expected size vanishes.
    pub size_ratio: Option<f64>,
}

/// All-ones reference matrix, the choice that reduces matrix diagnostics
/// to the scalar ones on one-component spaces.
pub fn default_reference(r: usize) -> DMatrix<f64> {
    DMatrix::from_element(r, r, 1.0)
}

/// Compute the bearing of an observed collection against `g_ref`.
pub fn bearing(d: &Collection, g_ref: &DMatrix<f64>, store: &BeliefStore) -> Result<BearingReport> {
    let observed = d.require_observed()?;
    let k = d.len();
    let dim = d.members().first().map_or(g_ref.nrows(), RandomMatrix::dim);
    if g_ref.nrows() != dim || g_ref.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: g_ref.nrows(),
        });
    }
    let asym = linalg::max_asymmetry(g_ref);
    let scale = g_ref.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let centered: Vec<RandomMatrix> = d
        .members()
        .iter()
        .map(|m| m.center(store))
        .collect::<Result<_>>()?;
    let mut gram = DMatrix::zeros(k, k);
    for s in 0..k {
        for t in s..k {
            let value = inner_product(&centered[s], &centered[t], store)?;
            gram[(s, t)] = value;
            gram[(t, s)] = value;
        }
    }

    // rho_s = Tr((d_s - E(D_s)) * G): the realized change each member
    // contributes against the reference.
    let mut rho = DVector::zeros(k);
    let mut centered_obs: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    for (s, obs) in observed.iter().enumerate() {
        let delta = obs - d.members()[s].expectation(store)?;
        rho[s] = linalg::trace_product(&delta, g_ref);
        centered_obs.push(delta);
    }
    let coefficients = linalg::sym_pinv_solve(&gram, &rho, tol::PINV_REL);

    let mut bearing_object = RandomMatrix::zeros(dim);
    let mut realized = DMatrix::zeros(dim, dim);
    for t in 0..k {
        let b = coefficients[t];
        if b != 0.0 {
            bearing_object = bearing_object.add(&centered[t].scale(b))?;
            realized += &centered_obs[t] * b;
        }
    }
    let size = coefficients.dot(&(&gram * &coefficients)).max(0.0);

    // Prior covariance of the rho functionals, expanded bilinearly from
    // the store, gives the expected size Tr(G_gram^+ K).
    let functionals: Vec<_> = centered
        .iter()
        .map(|m| trace_functional(m, g_ref))
        .collect::<Result<Vec<_>>>()?;
    let mut k_mat = DMatrix::zeros(k, k);
    for s in 0..k {
        for t in s..k {
            let value = covariance_of(&functionals[s], &functionals[t], store)?;
            k_mat[(s, t)] = value;
            k_mat[(t, s)] = value;
        }
    }
    let expected_size = linalg::pinv_trace_product(&gram, &k_mat, tol::PINV_REL).max(0.0);
    let size_ratio = (expected_size > 0.0).then(|| size / expected_size);

    Ok(BearingReport {
        g_ref: g_ref.clone(),
        coefficients: coefficients.iter().copied().collect(),
        bearing: bearing_object,
        realized_bearing: realized,
        size,
        expected_size,
        size_ratio,
    })
}

/// Interpretation of a size ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeTag {
    LargerThanExpected,
    SmallerThanExpected,
    Consistent,
}

impl SizeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeTag::LargerThanExpected => "larger-than-expected",
            SizeTag::SmallerThanExpected => "smaller-than-expected",
            SizeTag::Consistent => "consistent",
        }
    }
}

/// Tagged size ratio of a bearing; `None` when the expected size is zero.
pub fn size_ratio(report: &BearingReport) -> Option<(f64, SizeTag)> {
    size_ratio_with(report, tol::RATIO_UPPER, tol::RATIO_LOWER)
}

/// Size ratio with explicit interpretation thresholds.
pub fn size_ratio_with(report: &BearingReport, upper: f64, lower: f64) -> Option<(f64, SizeTag)> {
    let ratio = report.size_ratio?;
    let tag = if ratio > upper {
        SizeTag::LargerThanExpected
    } else if ratio < lower {
        SizeTag::SmallerThanExpected
    } else {
        SizeTag::Consistent
    };
    Some((ratio, tag))
}

/// Result of a conditional linear independence check.
#[derive(Debug, Clone, Copy)]
pub struct IndependenceCheck {
    /// Inner product of the adjusted residuals of the two targets.
    pub value: f64,
    pub independent: bool,
}

/// Conditional linear independence of `b` and `c` given `d`: the inner
/// product of their adjusted residuals, zero when learning `d` makes the
/// two targets linearly unrelated. A prior-structure computation; `d` need
/// not be observed.
pub fn cond_lin_indep(
    b: &RandomMatrix,
    c: &RandomMatrix,
    d: &Collection,
    store: &BeliefStore,
) -> Result<IndependenceCheck> {
    cond_lin_indep_with(b, c, d, store, tol::IND)
}

pub fn cond_lin_indep_with(
    b: &RandomMatrix,
    c: &RandomMatrix,
    d: &Collection,
    store: &BeliefStore,
    tol_ind: f64,
) -> Result<IndependenceCheck> {
    let pb = project(b, d, store)?;
    let pc = project(c, d, store)?;
    let value = inner_product(&pb.residual, &pc.residual, store)?;
    let scale = 1.0f64.max((pb.prior_norm_sq * pc.prior_norm_sq).sqrt());
    Ok(IndependenceCheck {
        value,
        independent: value.abs() <= tol_ind * scale,
    })
}

/// Eigenvalue diagnostics of a realized (constant) symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenReport {
    /// Eigenvalues sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Indices (into `eigenvalues`) flagged as meaningfully negative.
    pub negative_flags: Vec<usize>,
    /// `|lambda|_max / |lambda|_min`; `None` for singular matrices.
    pub condition_number: Option<f64>,
}

impl EigenReport {
    pub fn has_negative(&self) -> bool {
        !self.negative_flags.is_empty()
    }
}

/// Eigenvalues of a symmetric matrix with negative-eigenvalue warnings.
/// Negative eigenvalues in a revised covariance structure signal conflict
/// between prior beliefs and data.
pub fn eigen_diagnostic(mx: &DMatrix<f64>) -> Result<EigenReport> {
    eigen_diagnostic_with(mx, tol::EIG)
}

pub fn eigen_diagnostic_with(mx: &DMatrix<f64>, tol_eig: f64) -> Result<EigenReport> {
    if mx.nrows() != mx.ncols() {
        return Err(Error::DimensionMismatch {
            expected: mx.nrows(),
            actual: mx.ncols(),
        });
    }
    let scale = mx.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let asym = linalg::max_asymmetry(mx);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let eig = linalg::sym_eigen(mx);
    let lambda_max_abs = eig.values.first().map_or(0.0, |v| v.abs());
    let threshold = -tol_eig * lambda_max_abs.max(1.0);
    let negative_flags: Vec<usize> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < threshold)
        .map(|(k, _)| k)
        .collect();
    let abs_max = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let abs_min = eig.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let condition_number = (abs_min > 0.0).then(|| abs_max / abs_min);
    Ok(EigenReport {
        eigenvalues: eig.values,
        negative_flags,
        condition_number,
    })
}

//! Second-order belief store: expectations and covariances over a registry
//! of scalar quantities.
//!
//! A `BeliefStore` is the full prior input to every adjustment: it fixes
//! `E(q)` for each registered quantity and `Cov(a, b)` for each pair. The
//! covariance is stored exactly symmetric; positive semi-definiteness is
//! checked to a relative tolerance and reported as violations so callers
//! can decide whether to warn or refuse.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::quantity::{QuantityId, Registry};
use crate::tol;

#[derive(Debug, Clone)]
pub struct BeliefStore {
    registry: Registry,
    expectation: Vec<f64>,
    covariance: DMatrix<f64>,
}

impl BeliefStore {
    /// Build a store from a registry, per-quantity expectations, and a
    /// covariance matrix in registry order. The covariance is symmetrized
    /// by averaging so that `cov(a, b) == cov(b, a)` holds exactly as
    /// stored; inputs with asymmetry above `1e-12` relative are rejected.
    pub fn new(
        registry: Registry,
        expectation: Vec<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let n = registry.len();
        if expectation.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: expectation.len(),
            });
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: covariance.nrows(),
            });
        }
        let scale = covariance.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let asymmetry = linalg::max_asymmetry(&covariance);
        if asymmetry > 1e-12 * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        Ok(Self {
            registry,
            expectation,
            covariance,
        })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.registry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registry.is_empty()
    }

    pub fn expectation(&self, q: QuantityId) -> f64 {
        self.expectation[q.index()]
    }

    pub fn covariance(&self, a: QuantityId, b: QuantityId) -> f64 {
        self.covariance[(a.index(), b.index())]
    }

    pub fn variance(&self, q: QuantityId) -> f64 {
        self.covariance[(q.index(), q.index())]
    }

    pub fn covariance_matrix(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Check that a quantity id belongs to this store.
    pub fn check(&self, q: QuantityId) -> Result<()> {
        if self.registry.contains(q) {
            Ok(())
        } else {
            Err(Error::UnregisteredQuantity {
                label: format!("#{}", q.index()),
            })
        }
    }

    /// Validity report: negative variances and PSD failure of the whole
    /// covariance at relative tolerance `tol_psd`. Empty means clean.
    pub fn violations(&self, tol_psd: f64) -> Vec<String> {
        let mut out = Vec::new();
        for q in self.registry.ids() {
            let var = self.variance(q);
            if var < 0.0 {
                out.push(format!(
                    "Var({}) = {:e} is negative",
                    self.registry.label(q),
                    var
                ));
            }
        }
        if let Some(min) = linalg::psd_violation(&self.covariance, tol_psd) {
            out.push(format!(
                "belief covariance is not positive semi-definite: min eigenvalue {min:e}"
            ));
        }
        out
    }

    /// Error if the store fails its PSD invariant at the default tolerance.
    pub fn validate_strict(&self) -> Result<()> {
        let violations = self.violations(tol::PSD);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(violations))
        }
    }
}

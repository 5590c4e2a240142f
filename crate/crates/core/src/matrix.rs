//! Random symmetric matrices and the inner product that turns them into an
//! inner-product space.
//!
//! A `RandomMatrix` is an r x r symmetric matrix whose entries are affine
//! combinations of registered scalar quantities. Symmetry is structural:
//! only the upper triangle (slots `(i, j)` with `i <= j`) is stored, and a
//! slot stands for both matrix positions. The space carries the inner
//! product
//!
//! ```text
//! (P, Q) = E(Tr(PQ)) = sum_i sum_j E(P_ij Q_ij)
//! ```
//!
//! for symmetric P and Q, so each off-diagonal slot contributes twice. The
//! induced squared metric is the expected squared Frobenius distance.
//! Belief adjustment elsewhere in the crate is orthogonal projection under
//! this inner product.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quantity::QuantityId;
use crate::store::BeliefStore;
use crate::tol;

/// Upper-triangle slots `(i, j)`, `i <= j`, in row-major order:
/// `(0,0), (0,1), ..., (0,r-1), (1,1), ..., (r-1,r-1)`.
pub fn slot_pairs(r: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(slot_count(r));
    for i in 0..r {
        for j in i..r {
            out.push((i, j));
        }
    }
    out
}

/// Number of upper-triangle slots for dimension `r`.
pub fn slot_count(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Flat index of slot `(i, j)` (order-normalized) in `slot_pairs(r)` order.
pub fn slot_index(r: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * r - i * (i + 1) / 2 + j
}

/// Multiplicity of a slot in the double sum over matrix positions.
pub fn slot_weight(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        2.0
    }
}

/// Affine combination `constant + sum coeff * quantity` of base quantities.
///
/// Terms are kept canonical: sorted by quantity id, merged, with exact-zero
/// coefficients dropped. Canonical form makes structural equality usable
/// for collection de-duplication.
///
/// The constant carries a low-order compensation component: a single f64
/// constant cannot always place `constant + sum coeff * E(q)` on a chosen
/// float when the terms dwarf the target, and adjusted objects must keep
/// the prior expectation bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    constant: f64,
    compensation: f64,
    terms: Vec<(QuantityId, f64)>,
}

impl AffineForm {
    pub fn zero() -> Self {
        Self {
            constant: 0.0,
            compensation: 0.0,
            terms: Vec::new(),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            compensation: 0.0,
            terms: Vec::new(),
        }
    }

    pub fn term(q: QuantityId, coeff: f64) -> Self {
        Self::with_terms(0.0, vec![(q, coeff)])
    }

    pub fn with_terms(constant: f64, terms: Vec<(QuantityId, f64)>) -> Self {
        let mut form = Self {
            constant,
            compensation: 0.0,
            terms,
        };
        form.canonicalize();
        form
    }

    fn canonicalize(&mut self) {
        self.terms.sort_by_key(|(q, _)| *q);
        let mut merged: Vec<(QuantityId, f64)> = Vec::with_capacity(self.terms.len());
        for &(q, c) in &self.terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == q => *acc += c,
                _ => merged.push((q, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.terms = merged;
    }

    pub fn constant_part(&self) -> f64 {
        self.constant + self.compensation
    }

    pub fn terms(&self) -> &[(QuantityId, f64)] {
        &self.terms
    }

    pub fn is_structurally_zero(&self) -> bool {
        self.constant == 0.0 && self.compensation == 0.0 && self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of `coeff * E(q)` in canonical term order.
    fn term_expectation(&self, store: &BeliefStore) -> Result<f64> {
        let mut total = 0.0;
        for &(q, c) in &self.terms {
            if !store.registry().contains(q) {
                return Err(Error::UnregisteredQuantity {
                    label: format!("#{}", q.index()),
                });
            }
            total += c * store.expectation(q);
        }
        Ok(total)
    }

    pub fn expectation(&self, store: &BeliefStore) -> Result<f64> {
        Ok((self.constant + self.term_expectation(store)?) + self.compensation)
    }

    /// Centered copy: same terms, constant replaced so that the computed
    /// expectation is exactly zero (the constant becomes the negated term
    /// expectation, evaluated in the same order `expectation` uses).
    pub fn centered(&self, store: &BeliefStore) -> Result<Self> {
        Ok(Self {
            constant: -self.term_expectation(store)?,
            compensation: 0.0,
            terms: self.terms.clone(),
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        let mut out = Self::with_terms(self.constant + other.constant, terms);
        out.compensation = self.compensation + other.compensation;
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = Self::with_terms(
            self.constant * factor,
            self.terms.iter().map(|&(q, c)| (q, c * factor)).collect(),
        );
        out.compensation = self.compensation * factor;
        out
    }

    /// Realized value once every referenced quantity has an observed value.
    pub fn evaluate<F>(&self, values: &F) -> Result<f64>
    where
        F: Fn(QuantityId) -> Option<f64>,
    {
        let mut total = self.constant;
        for &(q, c) in &self.terms {
            let v = values(q).ok_or_else(|| Error::MissingValue {
                label: format!("#{}", q.index()),
            })?;
            total += c * v;
        }
        Ok(total + self.compensation)
    }
}

/// Covariance of two affine forms under a store.
///
/// Accumulated over unordered id pairs `(a <= b)` so the result is exactly
/// symmetric under swapping the arguments.
fn form_cov(p: &AffineForm, q: &AffineForm, store: &BeliefStore) -> Result<f64> {
    if p.terms.is_empty() || q.terms.is_empty() {
        for &(id, _) in p.terms.iter().chain(q.terms.iter()) {
            store.check(id)?;
        }
        return Ok(0.0);
    }
    // Union of quantity ids, with aligned coefficient vectors.
    let mut ids: Vec<QuantityId> = Vec::with_capacity(p.terms.len() + q.terms.len());
    ids.extend(p.terms.iter().map(|&(id, _)| id));
    ids.extend(q.terms.iter().map(|&(id, _)| id));
    ids.sort();
    ids.dedup();
    for &id in &ids {
        store.check(id)?;
    }
    let coeff_of = |form: &AffineForm, id: QuantityId| -> f64 {
        form.terms
            .binary_search_by_key(&id, |&(q, _)| q)
            .map(|k| form.terms[k].1)
            .unwrap_or(0.0)
    };
    let pc: Vec<f64> = ids.iter().map(|&id| coeff_of(p, id)).collect();
    let qc: Vec<f64> = ids.iter().map(|&id| coeff_of(q, id)).collect();
    let mut total = 0.0;
    for a in 0..ids.len() {
        for b in a..ids.len() {
            let cov = store.covariance(ids[a], ids[b]);
            let cross = if a == b {
                pc[a] * qc[a]
            } else {
                pc[a] * qc[b] + pc[b] * qc[a]
            };
            total += cross * cov;
        }
    }
    Ok(total)
}

/// `E(PQ) = Cov(P, Q) + E(P) E(Q)` for two affine forms.
fn form_product_expectation(p: &AffineForm, q: &AffineForm, store: &BeliefStore) -> Result<f64> {
    Ok(form_cov(p, q, store)? + p.expectation(store)? * q.expectation(store)?)
}

/// An r x r random symmetric matrix with affine-form entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMatrix {
    dim: usize,
    slots: Vec<AffineForm>,
}

impl RandomMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            slots: vec![AffineForm::zero(); slot_count(dim)],
        }
    }

    /// Constant random matrix from a symmetric numeric matrix.
    pub fn from_constant(m: &DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: m.ncols(),
            });
        }
        let asymmetry = crate::linalg::max_asymmetry(m);
        let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if asymmetry > 1e-12 * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let mut out = Self::zeros(dim);
        for (i, j) in slot_pairs(dim) {
            out.slots[slot_index(dim, i, j)] = AffineForm::constant(m[(i, j)]);
        }
        Ok(out)
    }

    /// Matrix with the single entry `coeff * q` at slot `(i, j)` (and its
    /// mirror position when off-diagonal).
    pub fn from_quantity_at(dim: usize, i: usize, j: usize, q: QuantityId, coeff: f64) -> Self {
        let mut out = Self::zeros(dim);
        out.set_slot(i, j, AffineForm::term(q, coeff));
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slot(&self, i: usize, j: usize) -> &AffineForm {
        &self.slots[slot_index(self.dim, i, j)]
    }

    pub fn set_slot(&mut self, i: usize, j: usize, form: AffineForm) {
        self.slots[slot_index(self.dim, i, j)] = form;
    }

    pub fn slots(&self) -> &[AffineForm] {
        &self.slots
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            })
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            slots: self
                .slots
                .iter()
                .zip(&other.slots)
                .map(|(a, b)| a.add(b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            slots: self.slots.iter().map(|s| s.scale(factor)).collect(),
        }
    }

    /// Entrywise expectation as a constant matrix; exact symmetry by
    /// construction (each slot value fills both mirror positions).
    pub fn expectation(&self, store: &BeliefStore) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (i, j) in slot_pairs(self.dim) {
            let value = self.slot(i, j).expectation(store)?;
            out[(i, j)] = value;
            out[(j, i)] = value;
        }
        Ok(out)
    }

    /// Centered copy `P - E(P)`: the expectation of the result is exactly
    /// the zero matrix, and centering is exactly idempotent.
    pub fn center(&self, store: &BeliefStore) -> Result<Self> {
        Ok(Self {
            dim: self.dim,
            slots: self
                .slots
                .iter()
                .map(|s| s.centered(store))
                .collect::<Result<_>>()?,
        })
    }

    /// Realize the matrix by substituting observed values for quantities.
    pub fn evaluate<F>(&self, values: &F) -> Result<DMatrix<f64>>
    where
        F: Fn(QuantityId) -> Option<f64>,
    {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (i, j) in slot_pairs(self.dim) {
            let value = self.slot(i, j).evaluate(values)?;
            out[(i, j)] = value;
            out[(j, i)] = value;
        }
        Ok(out)
    }

    /// Structural equality of affine forms (canonical representation).
    pub fn same_form(&self, other: &Self) -> bool {
        self.dim == other.dim && self.slots == other.slots
    }

    /// Rebuild the constants so the computed expectation equals `target`,
    /// keeping the term structure: each slot constant becomes
    /// `target - sum coeff * E(q)`, evaluated in the same order the
    /// expectation uses. Used when assembling adjusted objects, whose
    /// coefficients multiply centered terms only.
    pub fn with_expectation(mut self, target: &DMatrix<f64>, store: &BeliefStore) -> Result<Self> {
        if target.nrows() != self.dim || target.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: target.nrows(),
            });
        }
        for (i, j) in slot_pairs(self.dim) {
            let idx = slot_index(self.dim, i, j);
            let mut form = self.slots[idx].clone();
            let term_expectation = form.term_expectation(store)?;
            let want = target[(i, j)];
            // Split the constant so the expectation lands on the target
            // bit for bit: the high part cancels the term expectation, the
            // compensation carries what that cancellation cannot resolve.
            form.constant = want - term_expectation;
            form.compensation = 0.0;
            for _ in 0..8 {
                let err = (form.constant + term_expectation) + form.compensation - want;
                if err == 0.0 {
                    break;
                }
                form.compensation -= err;
            }
            self.slots[idx] = form;
        }
        Ok(self)
    }
}

/// The scalar random quantity `Tr(P * W) = sum_ij P_ij W_ij` for a
/// symmetric constant weight matrix `W`, as an affine form.
pub fn trace_functional(p: &RandomMatrix, weight: &DMatrix<f64>) -> Result<AffineForm> {
    if weight.nrows() != p.dim() || weight.ncols() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: weight.nrows(),
        });
    }
    let mut total = AffineForm::zero();
    for (i, j) in slot_pairs(p.dim()) {
        let w = slot_weight(i, j) * weight[(i, j)];
        if w != 0.0 {
            total = total.add(&p.slot(i, j).scale(w));
        }
    }
    Ok(total)
}

/// Covariance of two scalar affine forms under the store.
pub fn covariance_of(p: &AffineForm, q: &AffineForm, store: &BeliefStore) -> Result<f64> {
    form_cov(p, q, store)
}

/// Inner product `(P, Q) = E(Tr(PQ))` over the belief store.
pub fn inner_product(p: &RandomMatrix, q: &RandomMatrix, store: &BeliefStore) -> Result<f64> {
    p.check_dim(q)?;
    let mut total = 0.0;
    for (i, j) in slot_pairs(p.dim()) {
        let e = form_product_expectation(p.slot(i, j), q.slot(i, j), store)?;
        total += slot_weight(i, j) * e;
    }
    Ok(total)
}

/// Squared metric `E(|P - Q|_F^2)`; tiny negative rounding is clamped to 0.
pub fn distance_sq(p: &RandomMatrix, q: &RandomMatrix, store: &BeliefStore) -> Result<f64> {
    let diff = p.sub(q)?;
    let d2 = inner_product(&diff, &diff, store)?;
    let scale = 1.0f64
        .max(inner_product(p, p, store)?.abs())
        .max(inner_product(q, q, store)?.abs());
    if d2 < 0.0 && d2 >= -tol::NUM * scale {
        Ok(0.0)
    } else {
        Ok(d2)
    }
}

/// Whether two matrices are the same element of the quotient space, i.e.
/// their squared distance vanishes relative to their squared norms.
pub fn equivalent(p: &RandomMatrix, q: &RandomMatrix, store: &BeliefStore) -> Result<bool> {
    let d2 = distance_sq(p, q, store)?;
    let scale = 1.0f64
        .max(inner_product(p, p, store)?)
        .max(inner_product(q, q, store)?);
    Ok(d2.abs() <= tol::EQ * scale)
}

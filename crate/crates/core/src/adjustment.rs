//! Belief adjustment by orthogonal projection in the random-matrix space.
//!
//! A target matrix `B` is adjusted by a collection `D = [D_1, ..., D_K]` of
//! observable random matrices: the adjusted expectation is
//!
//! ```text
//! E_D(B) = E(B) + sum_t a_t (D_t - E(D_t))
//! ```
//!
//! where the coefficients solve the Gram system `G a = g` with
//! `G_st = (D_s - E(D_s), D_t - E(D_t))` and `g_s = (B - E(B), D_s - E(D_s))`.
//! Constant matrices are admitted in the projection space but centering
//! absorbs them, so they contribute nothing. Nested collections make the
//! Gram matrix rank deficient by construction; coefficients are the
//! minimum-norm solution of an eigenvalue-truncated pseudo-inverse, and the
//! adjusted object is unique regardless.
//!
//! Three canonical collections decompose a sample covariance matrix `S`:
//! the whole-matrix collection (one member, `S` itself), the individual
//! variance collection (each `S_ij` at its own slot), and the complete
//! variance collection (every `S_ij` at every slot). Their spans are
//! nested, so resolved uncertainty is monotone across them.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{inner_product, slot_count, slot_index, slot_pairs, RandomMatrix};
use crate::quantity::QuantityId;
use crate::store::BeliefStore;
use crate::tol;

/// Which canonical family a collection belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CollectionLabel {
    /// The whole sample covariance matrix as a single object.
    SampleFull,
    /// One single-slot member per sample quantity, at its own slot.
    SampleIndividual,
    /// Every sample quantity placed at every slot.
    SampleComplete,
    /// One single-slot member per population quantity, at its own slot.
    PopulationIndividual,
    /// Basis of constant symmetric matrices.
    Constant,
    Custom(String),
}

impl fmt::Display for CollectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollectionLabel::SampleFull => write!(f, "D_S"),
            CollectionLabel::SampleIndividual => write!(f, "D_I"),
            CollectionLabel::SampleComplete => write!(f, "D_C"),
            CollectionLabel::PopulationIndividual => write!(f, "V_I"),
            CollectionLabel::Constant => write!(f, "C"),
            CollectionLabel::Custom(name) => write!(f, "{name}"),
        }
    }
}

/// An ordered family of random matrices serving as a projection subspace,
/// optionally carrying observed realizations of its members.
#[derive(Debug, Clone)]
pub struct Collection {
    pub label: CollectionLabel,
    members: Vec<RandomMatrix>,
    observed: Option<Vec<DMatrix<f64>>>,
}

impl Collection {
    pub fn new(label: CollectionLabel, members: Vec<RandomMatrix>) -> Result<Self> {
        if let Some(first) = members.first() {
            for member in &members {
                if member.dim() != first.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: first.dim(),
                        actual: member.dim(),
                    });
                }
            }
        }
        Ok(Self {
            label,
            members,
            observed: None,
        })
    }

    pub fn members(&self) -> &[RandomMatrix] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn observed(&self) -> Option<&[DMatrix<f64>]> {
        self.observed.as_deref()
    }

    pub fn require_observed(&self) -> Result<&[DMatrix<f64>]> {
        self.observed().ok_or_else(|| Error::MissingObservations {
            label: self.label.to_string(),
        })
    }

    /// Attach explicit observed matrices, one per member, each matching its
    /// member's sparsity pattern (structurally zero slots observe zero).
    pub fn with_observed(mut self, observed: Vec<DMatrix<f64>>) -> Result<Self> {
        if observed.len() != self.members.len() {
            return Err(Error::DimensionMismatch {
                expected: self.members.len(),
                actual: observed.len(),
            });
        }
        for (index, (member, obs)) in self.members.iter().zip(&observed).enumerate() {
            if obs.nrows() != member.dim() || obs.ncols() != member.dim() {
                return Err(Error::DimensionMismatch {
                    expected: member.dim(),
                    actual: obs.nrows(),
                });
            }
            for (i, j) in slot_pairs(member.dim()) {
                if member.slot(i, j).is_structurally_zero()
                    && (obs[(i, j)] != 0.0 || obs[(j, i)] != 0.0)
                {
                    return Err(Error::ObservationPattern { index });
                }
            }
        }
        self.observed = Some(observed);
        Ok(self)
    }

    /// Realize every member by substituting observed quantity values.
    pub fn realize<F>(mut self, values: &F) -> Result<Self>
    where
        F: Fn(QuantityId) -> Option<f64>,
    {
        let observed = self
            .members
            .iter()
            .map(|member| member.evaluate(values))
            .collect::<Result<Vec<_>>>()?;
        self.observed = Some(observed);
        Ok(self)
    }

    /// Union of collections in order, dropping members that duplicate an
    /// earlier member as an affine form (duplicates carry no information
    /// and degrade Gram conditioning).
    pub fn union(label: CollectionLabel, parts: &[&Collection]) -> Result<Self> {
        let mut members: Vec<RandomMatrix> = Vec::new();
        let mut observed: Vec<DMatrix<f64>> = Vec::new();
        let all_observed = parts.iter().all(|c| c.observed.is_some());
        for part in parts {
            for (k, member) in part.members.iter().enumerate() {
                if members.iter().any(|m| m.same_form(member)) {
                    continue;
                }
                members.push(member.clone());
                if all_observed {
                    observed.push(part.observed.as_ref().unwrap()[k].clone());
                }
            }
        }
        let mut out = Collection::new(label, members)?;
        if all_observed {
            out.observed = Some(observed);
        }
        Ok(out)
    }
}

/// Build the three sample collections for slot-ordered quantities `S_ij`.
///
/// Returns `(D_S, D_I, D_C)` with sizes `1`, `m`, and `m^2` where
/// `m = r(r+1)/2`. The whole-matrix member is the sum of the individual
/// members, and every individual member reappears in the complete
/// collection, so the spans are nested.
pub fn build_collections(
    s_ids: &[QuantityId],
    r: usize,
) -> Result<(Collection, Collection, Collection)> {
    let m = slot_count(r);
    if s_ids.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: s_ids.len(),
        });
    }
    let pairs = slot_pairs(r);

    let mut whole = RandomMatrix::zeros(r);
    for &(i, j) in &pairs {
        whole.set_slot(
            i,
            j,
            crate::matrix::AffineForm::term(s_ids[slot_index(r, i, j)], 1.0),
        );
    }
    let d_s = Collection::new(CollectionLabel::SampleFull, vec![whole])?;

    let individual: Vec<RandomMatrix> = pairs
        .iter()
        .map(|&(i, j)| RandomMatrix::from_quantity_at(r, i, j, s_ids[slot_index(r, i, j)], 1.0))
        .collect();
    let d_i = Collection::new(CollectionLabel::SampleIndividual, individual)?;

    // Quantity-major order: each quantity visits every slot.
    let mut complete = Vec::with_capacity(m * m);
    for &q in s_ids {
        for &(i, j) in &pairs {
            complete.push(RandomMatrix::from_quantity_at(r, i, j, q, 1.0));
        }
    }
    let d_c = Collection::new(CollectionLabel::SampleComplete, complete)?;

    Ok((d_s, d_i, d_c))
}

/// Basis of constant symmetric matrices: one unit-pattern matrix per slot,
/// with both mirror positions set to 1 off the diagonal.
pub fn build_constant_basis(r: usize) -> Collection {
    let members = slot_pairs(r)
        .into_iter()
        .map(|(i, j)| {
            let mut m = DMatrix::zeros(r, r);
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
            RandomMatrix::from_constant(&m).expect("unit pattern is symmetric")
        })
        .collect();
    Collection::new(CollectionLabel::Constant, members).expect("uniform dimension")
}

/// Slot-wise decomposition of the population matrix: one member per
/// quantity `V_ij`, placed at its own slot.
pub fn build_individual_population(v_ids: &[QuantityId], r: usize) -> Result<Collection> {
    let m = slot_count(r);
    if v_ids.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: v_ids.len(),
        });
    }
    let members = slot_pairs(r)
        .into_iter()
        .map(|(i, j)| RandomMatrix::from_quantity_at(r, i, j, v_ids[slot_index(r, i, j)], 1.0))
        .collect();
    Collection::new(CollectionLabel::PopulationIndividual, members)
}

/// The whole-matrix random object over slot-ordered quantity ids.
pub fn whole_matrix(ids: &[QuantityId], r: usize) -> Result<RandomMatrix> {
    let m = slot_count(r);
    if ids.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: ids.len(),
        });
    }
    let mut out = RandomMatrix::zeros(r);
    for (i, j) in slot_pairs(r) {
        out.set_slot(
            i,
            j,
            crate::matrix::AffineForm::term(ids[slot_index(r, i, j)], 1.0),
        );
    }
    Ok(out)
}

/// Prior-structure projection of a target onto a collection's span: the
/// pieces of an adjustment that do not require observations.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coefficients: Vec<f64>,
    /// The adjusted expectation as a random object,
    /// `E(B) + sum_t a_t (D_t - E(D_t))`.
    pub adjusted: RandomMatrix,
    /// `B - E_D(B)`, the residual random object.
    pub residual: RandomMatrix,
    pub prior_norm_sq: f64,
    pub resolved_norm_sq: f64,
    pub residual_norm_sq: f64,
    pub resolution: f64,
}

/// Project `b` onto the span of the centered members of `d`.
pub fn project(b: &RandomMatrix, d: &Collection, store: &BeliefStore) -> Result<Projection> {
    let k = d.len();
    let centered_b = b.center(store)?;
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
    if let Some(min) = linalg::psd_violation(&gram, tol::PSD) {
        return Err(Error::NotPsd {
            what: format!("Gram matrix of collection `{}`", d.label),
            min_eigenvalue: min,
        });
    }
    let mut rhs = DVector::zeros(k);
    for s in 0..k {
        rhs[s] = inner_product(&centered_b, &centered[s], store)?;
    }
    let coefficients = linalg::sym_pinv_solve(&gram, &rhs, tol::PINV_REL);

    let prior_norm_sq = inner_product(&centered_b, &centered_b, store)?.max(0.0);
    let resolved_norm_sq = coefficients.dot(&(&gram * &coefficients)).max(0.0);

    // Assemble the projected part and the residual as random objects.
    let mut projected = RandomMatrix::zeros(b.dim());
    for (t, member) in centered.iter().enumerate() {
        if coefficients[t] != 0.0 {
            projected = projected.add(&member.scale(coefficients[t]))?;
        }
    }
    let residual = centered_b.sub(&projected)?;
    let residual_norm_sq = inner_product(&residual, &residual, store)?.max(0.0);

    let expectation_b = b.expectation(store)?;
    let adjusted = projected.with_expectation(&expectation_b, store)?;

    let resolution = if prior_norm_sq > 0.0 {
        resolved_norm_sq / prior_norm_sq
    } else {
        0.0
    };

    Ok(Projection {
        coefficients: coefficients.iter().copied().collect(),
        adjusted,
        residual,
        prior_norm_sq,
        resolved_norm_sq,
        residual_norm_sq,
        resolution,
    })
}

/// A realized adjustment: the projection together with the value of the
/// adjusted expectation after observing the collection.
#[derive(Debug, Clone)]
pub struct AdjustmentResult {
    pub coefficients: Vec<f64>,
    pub adjusted: RandomMatrix,
    pub realized: DMatrix<f64>,
    pub resolution: f64,
    pub prior_norm_sq: f64,
    pub resolved_norm_sq: f64,
    pub residual_norm_sq: f64,
}

/// Adjust `b` by an observed collection: project, then substitute the
/// observed member values into the adjusted object.
pub fn adjust(b: &RandomMatrix, d: &Collection, store: &BeliefStore) -> Result<AdjustmentResult> {
    let observed = d.require_observed()?;
    let projection = project(b, d, store)?;
    let mut realized = b.expectation(store)?;
    for (t, obs) in observed.iter().enumerate() {
        let a = projection.coefficients[t];
        if a != 0.0 {
            let centered_obs = obs - d.members()[t].expectation(store)?;
            realized += centered_obs * a;
        }
    }
    // Mirror slots are filled from the same arithmetic, keeping the
    // realized matrix exactly symmetric.
    for (i, j) in slot_pairs(b.dim()) {
        let value = realized[(i, j)];
        realized[(j, i)] = value;
    }
    Ok(AdjustmentResult {
        coefficients: projection.coefficients,
        adjusted: projection.adjusted,
        realized,
        resolution: projection.resolution,
        prior_norm_sq: projection.prior_norm_sq,
        resolved_norm_sq: projection.resolved_norm_sq,
        residual_norm_sq: projection.residual_norm_sq,
    })
}

/// One step of a stepwise adjustment: the cumulative union adjusted so far
/// and the uncertainty resolved beyond the previous step.
#[derive(Debug, Clone)]
pub struct AdjustmentStep {
    /// Label of the collection added at this step.
    pub added: String,
    /// Union of all collections up to and including this step.
    pub cumulative: Collection,
    pub result: AdjustmentResult,
    pub resolution_increment: f64,
}

/// Adjust by a nested sequence of collections, reporting the cumulative
/// result and resolution increment at each step. Enlarging the projection
/// space never loses resolution.
pub fn adjust_stepwise(
    b: &RandomMatrix,
    sequence: &[Collection],
    store: &BeliefStore,
) -> Result<Vec<AdjustmentStep>> {
    let mut steps: Vec<AdjustmentStep> = Vec::with_capacity(sequence.len());
    let mut previous_resolution = 0.0;
    for k in 0..sequence.len() {
        let parts: Vec<&Collection> = sequence[..=k].iter().collect();
        let label = CollectionLabel::Custom(
            parts
                .iter()
                .map(|c| c.label.to_string())
                .collect::<Vec<_>>()
                .join("+"),
        );
        let cumulative = Collection::union(label, &parts)?;
        let result = adjust(b, &cumulative, store)?;
        let increment = result.resolution - previous_resolution;
        previous_resolution = result.resolution;
        steps.push(AdjustmentStep {
            added: sequence[k].label.to_string(),
            cumulative,
            result,
            resolution_increment: increment,
        });
    }
    Ok(steps)
}

/// Classical scalar belief adjustment of the slot vector `(V_ij)` given the
/// slot vector `(S_ij)`:
///
/// ```text
/// E(V) + Cov(V, S) Cov(S, S)^+ (s - E(S))
/// ```
///
/// computed quantity by quantity, with no random-matrix machinery. This is
/// the independent oracle for projection onto the complete variance
/// collection, which reproduces it slot for slot.
pub fn adjust_elementwise_oracle(
    v_ids: &[QuantityId],
    s_ids: &[QuantityId],
    store: &BeliefStore,
    s_observed: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let m = v_ids.len();
    if s_ids.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: s_ids.len(),
        });
    }
    let r = s_observed.nrows();
    if slot_count(r) != m || s_observed.ncols() != r {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: slot_count(r),
        });
    }
    let pairs = slot_pairs(r);
    let mut cov_ss = DMatrix::zeros(m, m);
    let mut cov_vs = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            cov_ss[(a, b)] = store.covariance(s_ids[a], s_ids[b]);
            cov_vs[(a, b)] = store.covariance(v_ids[a], s_ids[b]);
        }
    }
    let mut discrepancy = DVector::zeros(m);
    for (a, &(i, j)) in pairs.iter().enumerate() {
        discrepancy[a] = s_observed[(i, j)] - store.expectation(s_ids[a]);
    }
    let weights = linalg::sym_pinv_solve(&cov_ss, &discrepancy, tol::PINV_REL);
    let shift = cov_vs * weights;
    Ok((0..m)
        .map(|a| store.expectation(v_ids[a]) + shift[a])
        .collect())
}

/// Aggregate resolution of a family of targets under one projection space:
/// total resolved squared norm over total prior squared norm. Reduces to
/// the single-target resolution for one member.
pub fn collection_resolution(
    targets: &Collection,
    d: &Collection,
    store: &BeliefStore,
) -> Result<f64> {
    let mut prior = 0.0;
    let mut resolved = 0.0;
    for member in targets.members() {
        let p = project(member, d, store)?;
        prior += p.prior_norm_sq;
        resolved += p.resolved_norm_sq;
    }
    Ok(if prior > 0.0 { resolved / prior } else { 0.0 })
}

//! Second-order exchangeable representations for covariance learning.
//!
//! For an exchangeable sequence of r-vectors `X_k = M + R_k`, the quadratic
//! products of residuals decompose as
//!
//! ```text
//! R_ik R_jk = V_ij + U_ijk
//! ```
//!
//! where `V` is the underlying population covariance object and `U_k` is
//! per-observation variation. A sample covariance matrix from n
//! observations then satisfies `S = V + T` with `Cov(T_ij, T_pq) =
//! u_ijpq / n`, `E(T) = 0`, and `T` uncorrelated with `V`. This module
//! turns the raw specification `(mu, c, c', v, v')` into a `BeliefStore`
//! over the quantities `V_ij` and `S_ij`, computes sample covariances from
//! data, and generates residual fourth-moment specifications consistent
//! with a multivariate normal residual model.

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{slot_count, slot_index, slot_pairs};
use crate::quantity::{QuantityId, Registry};
use crate::store::BeliefStore;
use crate::tol;

/// Label for a population covariance quantity, e.g. `V_12`.
pub fn v_label(r: usize, i: usize, j: usize) -> String {
    pair_label("V", r, i, j)
}

/// Label for a sample covariance quantity, e.g. `S_12`.
pub fn s_label(r: usize, i: usize, j: usize) -> String {
    pair_label("S", r, i, j)
}

fn pair_label(prefix: &str, r: usize, i: usize, j: usize) -> String {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    if r <= 9 {
        format!("{}_{}{}", prefix, i + 1, j + 1)
    } else {
        format!("{}_{}_{}", prefix, i + 1, j + 1)
    }
}

/// Symmetric 4-index tensor over matrix slots, stored as an m x m matrix
/// indexed by unordered slot pairs in row-major slot order
/// `(1,1), (1,2), ..., (1,r), (2,2), ..., (r,r)`.
///
/// The index symmetries `i <-> j` and `p <-> q` are structural (slots are
/// unordered pairs); the exchange symmetry `(ij) <-> (pq)` is matrix
/// symmetry of the storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTensor {
    r: usize,
    data: DMatrix<f64>,
}

impl SlotTensor {
    pub fn zeros(r: usize) -> Self {
        let m = slot_count(r);
        Self {
            r,
            data: DMatrix::zeros(m, m),
        }
    }

    /// Wrap an m x m matrix; rejects wrong sizes but defers symmetry to
    /// `violations`, so specification errors can be reported together.
    pub fn from_matrix(r: usize, data: DMatrix<f64>) -> Result<Self> {
        let m = slot_count(r);
        if data.nrows() != m || data.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: data.nrows(),
            });
        }
        Ok(Self { r, data })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, p: usize, q: usize) -> f64 {
        self.data[(slot_index(self.r, i, j), slot_index(self.r, p, q))]
    }

    pub fn set(&mut self, i: usize, j: usize, p: usize, q: usize, value: f64) {
        let a = slot_index(self.r, i, j);
        let b = slot_index(self.r, p, q);
        self.data[(a, b)] = value;
        self.data[(b, a)] = value;
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.r != other.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                actual: other.r,
            });
        }
        Ok(Self {
            r: self.r,
            data: &self.data + &other.data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.r != other.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                actual: other.r,
            });
        }
        Ok(Self {
            r: self.r,
            data: &self.data - &other.data,
        })
    }

    /// Exchange-symmetry violations `(ij)<->(pq)`, named by 1-based slots.
    pub fn symmetry_violations(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        let pairs = slot_pairs(self.r);
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for a in 0..pairs.len() {
            for b in (a + 1)..pairs.len() {
                let lhs = self.data[(a, b)];
                let rhs = self.data[(b, a)];
                if (lhs - rhs).abs() > 1e-12 * scale {
                    let (i, j) = pairs[a];
                    let (p, q) = pairs[b];
                    out.push(format!(
                        "{}[{}{},{}{}] = {:e} but {}[{}{},{}{}] = {:e}",
                        name,
                        i + 1,
                        j + 1,
                        p + 1,
                        q + 1,
                        lhs,
                        name,
                        p + 1,
                        q + 1,
                        i + 1,
                        j + 1,
                        rhs
                    ));
                }
            }
        }
        out
    }
}

/// Raw second-order exchangeability specification.
///
/// `c` and `c_prime` are the within- and across-observation covariances of
/// the data vectors; `v` and `v_prime` are the within- and across-
/// observation covariances of the quadratic products of residuals. The
/// expectation of the population covariance is `c - c'`, or the explicit
/// `e_v` override when the prior matrix is specified directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeableSpec {
    pub r: usize,
    pub mu: Vec<f64>,
    pub c: Option<DMatrix<f64>>,
    pub c_prime: Option<DMatrix<f64>>,
    pub e_v: Option<DMatrix<f64>>,
    pub v: SlotTensor,
    pub v_prime: SlotTensor,
}

impl ExchangeableSpec {
    /// Expected population covariance matrix: the direct override when
    /// present, otherwise `c - c'`.
    pub fn expected_v(&self) -> Result<DMatrix<f64>> {
        if let Some(ev) = &self.e_v {
            return Ok(ev.clone());
        }
        match (&self.c, &self.c_prime) {
            (Some(c), Some(cp)) => Ok(c - cp),
            _ => Err(Error::validation(vec![
                "expected population covariance requires either e_v or both c and c_prime"
                    .to_string(),
            ])),
        }
    }

    /// Residual quadratic-product covariance `u = v - v'`.
    pub fn u(&self) -> Result<SlotTensor> {
        self.v.sub(&self.v_prime)
    }

    /// Structural violations: dimensions and tensor symmetries. These are
    /// always fatal for belief construction.
    pub fn structural_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let r = self.r;
        if r == 0 {
            out.push("dimension r must be at least 1".to_string());
            return out;
        }
        if self.mu.len() != r {
            out.push(format!("mu has {} entries, expected {}", self.mu.len(), r));
        }
        for (name, m) in [
            ("c", &self.c),
            ("c_prime", &self.c_prime),
            ("e_v", &self.e_v),
        ] {
            if let Some(m) = m {
                if m.nrows() != r || m.ncols() != r {
                    out.push(format!(
                        "{} is {}x{}, expected {}x{}",
                        name,
                        m.nrows(),
                        m.ncols(),
                        r,
                        r
                    ));
                } else {
                    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
                    let asym = linalg::max_asymmetry(m);
                    if asym > 1e-12 * scale {
                        out.push(format!("{name} is not symmetric (max asymmetry {asym:e})"));
                    }
                }
            }
        }
        if self.e_v.is_none() && (self.c.is_none() || self.c_prime.is_none()) {
            out.push("either e_v or both c and c_prime must be given".to_string());
        }
        if self.v.r() != r || self.v_prime.r() != r {
            out.push("v and v_prime must be slot tensors for dimension r".to_string());
            return out;
        }
        out.extend(self.v.symmetry_violations("v"));
        out.extend(self.v_prime.symmetry_violations("v_prime"));
        out
    }

    /// Positive semi-definiteness violations of `c - c'`, `v'`, and
    /// `v - v'`. Advisory by default; strict callers escalate them.
    pub fn psd_violations(&self, tol_psd: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !self.structural_violations().is_empty() {
            return out;
        }
        if let (Some(c), Some(cp)) = (&self.c, &self.c_prime) {
            if let Some(min) = linalg::psd_violation(&(c - cp), tol_psd) {
                out.push(format!(
                    "c - c_prime (residual covariance) is not PSD: min eigenvalue {min:e}"
                ));
            }
        }
        if let Some(min) = linalg::psd_violation(self.v_prime.matrix(), tol_psd) {
            out.push(format!(
                "v_prime (covariance of the V quantities) is not PSD: min eigenvalue {min:e}"
            ));
        }
        let u = self.v.matrix() - self.v_prime.matrix();
        if let Some(min) = linalg::psd_violation(&u, tol_psd) {
            out.push(format!(
                "v - v_prime (covariance of the U quantities) is not PSD: min eigenvalue {min:e}"
            ));
        }
        out
    }

    /// Structural plus PSD violations together.
    pub fn violations(&self, tol_psd: f64) -> Vec<String> {
        let mut out = self.structural_violations();
        out.extend(self.psd_violations(tol_psd));
        out
    }

    pub fn validate_structural(&self) -> Result<()> {
        let violations = self.structural_violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(violations))
        }
    }
}

/// A batch of n observations of an r-vector, one observation per row.
#[derive(Debug, Clone)]
pub struct DataBatch {
    n: usize,
    r: usize,
    values: Vec<Vec<f64>>,
}

impl DataBatch {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        let r = values.first().map_or(0, Vec::len);
        for (row, obs) in values.iter().enumerate() {
            if obs.len() != r {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    actual: obs.len(),
                });
            }
            if obs.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteData { row });
            }
        }
        Ok(Self { n, r, values })
    }

    /// Parse CSV text, one observation per row. A non-numeric first row is
    /// treated as a header and skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut header_skipped = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> =
                fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(values) => rows.push((lineno + 1, values)),
                Err(_) if rows.is_empty() && !header_skipped => {
                    header_skipped = true;
                }
                Err(_) => {
                    let bad = fields
                        .iter()
                        .find(|f| f.parse::<f64>().is_err())
                        .copied()
                        .unwrap_or("");
                    return Err(Error::CsvParse {
                        line: lineno + 1,
                        message: format!("cannot parse `{bad}` as a number"),
                    });
                }
            }
        }
        let width = rows.first().map_or(0, |(_, v)| v.len());
        for (lineno, values) in &rows {
            if values.len() != width {
                return Err(Error::CsvParse {
                    line: *lineno,
                    message: format!("row has {} fields, expected {}", values.len(), width),
                });
            }
        }
        Self::new(rows.into_iter().map(|(_, v)| v).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row][col]
    }
}

/// Belief store over the population quantities `V_ij` together with the
/// slot-ordered id lists the adjustment collections are built from.
pub struct PopulationBeliefs {
    pub store: BeliefStore,
    pub v_ids: Vec<QuantityId>,
    pub r: usize,
}

/// Beliefs over `V_ij` and `S_ij` jointly, for a sample of size n.
pub struct SampleBeliefs {
    pub store: BeliefStore,
    pub v_ids: Vec<QuantityId>,
    pub s_ids: Vec<QuantityId>,
    pub r: usize,
    pub n: usize,
}

/// Prior beliefs over the population covariance quantities:
/// `E(V_ij) = c_ij - c'_ij` (or the direct override) and
/// `Cov(V_ij, V_pq) = v'_ijpq`.
pub fn population_beliefs(spec: &ExchangeableSpec) -> Result<PopulationBeliefs> {
    spec.validate_structural()?;
    let r = spec.r;
    let m = slot_count(r);
    let ev = spec.expected_v()?;
    let mut registry = Registry::new();
    let mut v_ids = Vec::with_capacity(m);
    let mut expectation = Vec::with_capacity(m);
    for (i, j) in slot_pairs(r) {
        v_ids.push(registry.insert(&v_label(r, i, j))?);
        expectation.push(ev[(i, j)]);
    }
    let covariance = symmetrized(spec.v_prime.matrix());
    let store = BeliefStore::new(registry, expectation, covariance)?;
    Ok(PopulationBeliefs { store, v_ids, r })
}

/// Joint beliefs over `{V_ij} union {S_ij}` for a sample of size n:
///
/// ```text
/// E(S) = E(V),  Cov(S_ij, S_pq) = v'_ijpq + u_ijpq / n,
/// Cov(V_ij, S_pq) = v'_ijpq,    u = v - v'.
/// ```
pub fn sample_beliefs(spec: &ExchangeableSpec, n: usize) -> Result<SampleBeliefs> {
    if n < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: n,
        });
    }
    spec.validate_structural()?;
    let r = spec.r;
    let m = slot_count(r);
    let ev = spec.expected_v()?;
    let mut registry = Registry::new();
    let mut v_ids = Vec::with_capacity(m);
    let mut s_ids = Vec::with_capacity(m);
    let mut expectation = Vec::with_capacity(2 * m);
    for (i, j) in slot_pairs(r) {
        v_ids.push(registry.insert(&v_label(r, i, j))?);
        expectation.push(ev[(i, j)]);
    }
    for (i, j) in slot_pairs(r) {
        s_ids.push(registry.insert(&s_label(r, i, j))?);
        expectation.push(ev[(i, j)]);
    }
    let vp = symmetrized(spec.v_prime.matrix());
    let u = symmetrized(&(spec.v.matrix() - spec.v_prime.matrix()));
    let mut covariance = DMatrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        for b in 0..m {
            let vv = vp[(a, b)];
            covariance[(a, b)] = vv;
            covariance[(a, m + b)] = vv;
            covariance[(m + a, b)] = vv;
            covariance[(m + a, m + b)] = vv + u[(a, b)] / n as f64;
        }
    }
    let store = BeliefStore::new(registry, expectation, covariance)?;
    Ok(SampleBeliefs {
        store,
        v_ids,
        s_ids,
        r,
        n,
    })
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Sample covariance with divisor `n - 1` and column means subtracted:
///
/// ```text
/// S_ij = 1/(n-1) * sum_w (X_iw - mean_i)(X_jw - mean_j)
/// ```
pub fn sample_covariance(data: &DataBatch) -> Result<DMatrix<f64>> {
    let n = data.n();
    let r = data.r();
    if n < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: n,
        });
    }
    // Per-row contributions are summed in sorted order, so the statistic
    // is exactly invariant under permutation of the observations.
    let sorted_sum = |mut values: Vec<f64>| -> f64 {
        values.sort_by(f64::total_cmp);
        values.iter().sum()
    };
    let mut means = vec![0.0; r];
    for (col, mean) in means.iter_mut().enumerate() {
        *mean = sorted_sum((0..n).map(|row| data.value(row, col)).collect()) / n as f64;
    }
    let mut s = DMatrix::zeros(r, r);
    for (i, j) in slot_pairs(r) {
        let products = (0..n)
            .map(|row| (data.value(row, i) - means[i]) * (data.value(row, j) - means[j]))
            .collect();
        let value = sorted_sum(products) / (n as f64 - 1.0);
        s[(i, j)] = value;
        s[(j, i)] = value;
    }
    Ok(s)
}

/// Residual fourth-moment specification consistent with a multivariate
/// normal residual model, evaluated at the expected residual covariance.
#[derive(Debug, Clone)]
pub struct GaussianResidualSpec {
    /// The within-observation tensor `v = v' + u`.
    pub v: SlotTensor,
    /// The plug-in fourth-moment tensor
    /// `u_ijpq = ev_ip ev_jq + ev_iq ev_jp`.
    pub u: SlotTensor,
    /// Where the numbers came from, recorded alongside the output.
    pub provenance: String,
}

/// Build `u` from the zero-mean Gaussian fourth-moment identity evaluated
/// at `ev`, and return `v = v_prime + u`.
pub fn gaussian_residual_spec(
    ev: &DMatrix<f64>,
    v_prime: &SlotTensor,
    strict: bool,
) -> Result<GaussianResidualSpec> {
    let r = ev.nrows();
    if ev.ncols() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            actual: ev.ncols(),
        });
    }
    if v_prime.r() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            actual: v_prime.r(),
        });
    }
    if strict {
        if let Some(min) = linalg::psd_violation(ev, tol::PSD) {
            return Err(Error::NotPsd {
                what: "residual covariance ev".to_string(),
                min_eigenvalue: min,
            });
        }
    }
    let mut u = SlotTensor::zeros(r);
    let pairs = slot_pairs(r);
    for &(i, j) in &pairs {
        for &(p, q) in &pairs {
            u.set(
                i,
                j,
                p,
                q,
                ev[(i, p)] * ev[(j, q)] + ev[(i, q)] * ev[(j, p)],
            );
        }
    }
    let v = v_prime.add(&u)?;
    Ok(GaussianResidualSpec {
        v,
        u,
        provenance: "u[ij,pq] = ev[i,p]*ev[j,q] + ev[i,q]*ev[j,p], the zero-mean Gaussian \
                     fourth-moment identity evaluated at the expected residual covariance \
                     (plug-in point: E(V); uncertainty about V itself is carried by v_prime)"
            .to_string(),
    })
}

/// One entry of a Monte Carlo check of quadratic-product covariances.
#[derive(Debug, Clone)]
pub struct McEntry {
    /// 1-based slot labels, e.g. `(1,2)` x `(2,2)`.
    pub slot_a: (usize, usize),
    pub slot_b: (usize, usize),
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `Cov(R_i R_j, R_p R_q)` for zero-mean Gaussian
/// residuals with covariance `sigma`, with delta-method standard errors.
/// Deterministic for a fixed seed.
pub fn quadratic_product_mc(sigma: &DMatrix<f64>, draws: usize, seed: u64) -> Result<Vec<McEntry>> {
    let r = sigma.nrows();
    if sigma.ncols() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            actual: sigma.ncols(),
        });
    }
    let chol = Cholesky::new(sigma.clone()).ok_or_else(|| Error::NotPsd {
        what: "Monte Carlo covariance sigma".to_string(),
        min_eigenvalue: linalg::eigen_extrema(sigma).0,
    })?;
    let lower = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = slot_pairs(r);
    let m = pairs.len();
    // Products per draw, accumulated as running sums for mean/cov/4th.
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(draws);
    let mut mean = vec![0.0; m];
    for _ in 0..draws {
        let z: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = vec![0.0; r];
        for row in 0..r {
            for col in 0..=row {
                x[row] += lower[(row, col)] * z[col];
            }
        }
        let y: Vec<f64> = pairs.iter().map(|&(i, j)| x[i] * x[j]).collect();
        for (acc, value) in mean.iter_mut().zip(&y) {
            *acc += value;
        }
        samples.push(y);
    }
    let nf = draws as f64;
    for acc in &mut mean {
        *acc /= nf;
    }
    let exact = gaussian_residual_spec(sigma, &SlotTensor::zeros(r), true)?.u;
    let mut out = Vec::new();
    for a in 0..m {
        for b in a..m {
            let mut cov = 0.0;
            let mut fourth = 0.0;
            for y in &samples {
                let da = y[a] - mean[a];
                let db = y[b] - mean[b];
                cov += da * db;
                fourth += da * da * db * db;
            }
            cov /= nf - 1.0;
            fourth /= nf;
            let var_of_cov = ((fourth - cov * cov) / nf).max(0.0);
            out.push(McEntry {
                slot_a: (pairs[a].0 + 1, pairs[a].1 + 1),
                slot_b: (pairs[b].0 + 1, pairs[b].1 + 1),
                exact: exact.get(pairs[a].0, pairs[a].1, pairs[b].0, pairs[b].1),
                estimate: cov,
                std_error: var_of_cov.sqrt(),
            });
        }
    }
    Ok(out)
}

//! JSON specification files.
//!
//! A specification document carries the dimension `r`, the first-order
//! inputs (`mu`, `c`, `c_prime`, or a direct `e_v` prior matrix), and the
//! quadratic-product tensors, either explicitly (`v` with `v_prime`) or
//! through a Gaussian residual block (`gaussian: {ev, v_prime}`) that
//! builds `v = v_prime + u` from the fourth-moment identity. Tensors are
//! m x m matrices over unordered slot pairs in row-major slot order
//! `(1,1), (1,2), ..., (1,r), (2,2), ..., (r,r)` with `m = r(r+1)/2`.
//!
//! Optional fields: `n` (default sample size) and `s_obs` (an observed
//! sample covariance matrix, for runs without raw data). All reals round
//! trip losslessly through the shortest-decimal JSON encoding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchangeable::{gaussian_residual_spec, ExchangeableSpec, SlotTensor};
use crate::matrix::slot_count;

/// Gaussian residual block: fourth moments from `ev`, prior covariance of
/// the population quantities from `v_prime` (zero when omitted).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GaussianBlock {
    pub ev: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_prime: Option<Vec<Vec<f64>>>,
}

/// On-disk form of a specification.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct SpecFile {
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_prime: Option<Vec<Vec<f64>>>,
    /// Direct prior expectation of the population covariance matrix,
    /// overriding `c - c_prime`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_v: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_prime: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_obs: Option<Vec<Vec<f64>>>,
}

/// A parsed and semantically validated specification.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub spec: ExchangeableSpec,
    pub n: Option<usize>,
    pub s_obs: Option<DMatrix<f64>>,
    /// Non-fatal notes raised during interpretation (defaulted tensors,
    /// provenance of generated ones).
    pub warnings: Vec<String>,
}

fn to_dmatrix(name: &str, rows: &[Vec<f64>], want: usize) -> Result<DMatrix<f64>> {
    let violations = |msg: String| Error::validation(vec![msg]);
    if rows.len() != want {
        return Err(violations(format!(
            "{name} has {} rows, expected {want}",
            rows.len()
        )));
    }
    for row in rows {
        if row.len() != want {
            return Err(violations(format!(
                "{name} has a row of {} entries, expected {want}",
                row.len()
            )));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(violations(format!("{name} contains a non-finite value")));
    }
    Ok(DMatrix::from_row_slice(want, want, &flat))
}

fn from_dmatrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parse specification text. Syntax errors surface as `Error::Json`;
/// semantic problems as `Error::Validation` listing every violation.
pub fn parse_spec(text: &str) -> Result<LoadedSpec> {
    let file: SpecFile = serde_json::from_str(text)?;
    interpret(&file)
}

/// Interpret an in-memory spec document.
pub fn interpret(file: &SpecFile) -> Result<LoadedSpec> {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let r = file.r;
    if r == 0 {
        return Err(Error::validation(vec![
            "dimension r must be at least 1".to_string()
        ]));
    }
    let m = slot_count(r);

    if file.v.is_some() && file.gaussian.is_some() {
        violations.push("give either v or a gaussian block, not both".to_string());
    }
    if file.v.is_none() && file.gaussian.is_none() {
        violations.push("one of v or a gaussian block is required".to_string());
    }
    if file.gaussian.is_some() && file.v_prime.is_some() {
        violations
            .push("v_prime belongs inside the gaussian block when gaussian is used".to_string());
    }
    if !violations.is_empty() {
        return Err(Error::validation(violations));
    }

    let take = |name: &str,
                rows: &Option<Vec<Vec<f64>>>,
                want: usize,
                violations: &mut Vec<String>|
     -> Option<DMatrix<f64>> {
        rows.as_ref()
            .and_then(|rows| match to_dmatrix(name, rows, want) {
                Ok(m) => Some(m),
                Err(Error::Validation { violations: v }) => {
                    violations.extend(v);
                    None
                }
                Err(_) => None,
            })
    };

    let c = take("c", &file.c, r, &mut violations);
    let c_prime = take("c_prime", &file.c_prime, r, &mut violations);
    let e_v = take("e_v", &file.e_v, r, &mut violations);
    let s_obs = take("s_obs", &file.s_obs, r, &mut violations);

    let (v, v_prime) = if let Some(block) = &file.gaussian {
        let ev = take("gaussian.ev", &Some(block.ev.clone()), r, &mut violations);
        let v_prime_m = match &block.v_prime {
            Some(rows) => take("gaussian.v_prime", &Some(rows.clone()), m, &mut violations),
            None => {
                warnings.push(
                    "gaussian.v_prime missing: defaulting to zero, so Var(V) = 0 and data \
                     cannot revise the population covariance"
                        .to_string(),
                );
                Some(DMatrix::zeros(m, m))
            }
        };
        match (ev, v_prime_m) {
            (Some(ev), Some(vp)) => {
                let vp_tensor = SlotTensor::from_matrix(r, vp).expect("checked dims");
                match gaussian_residual_spec(&ev, &vp_tensor, false) {
                    Ok(out) => {
                        warnings.push(format!("gaussian residual tensors: {}", out.provenance));
                        (Some(out.v), Some(vp_tensor))
                    }
                    Err(e) => {
                        violations.push(e.to_string());
                        (None, None)
                    }
                }
            }
            _ => (None, None),
        }
    } else {
        let v = take("v", &file.v, m, &mut violations)
            .map(|mat| SlotTensor::from_matrix(r, mat).expect("checked dims"));
        let v_prime = match &file.v_prime {
            Some(rows) => take("v_prime", &Some(rows.clone()), m, &mut violations)
                .map(|mat| SlotTensor::from_matrix(r, mat).expect("checked dims")),
            None => {
                warnings.push(
                    "v_prime missing: defaulting to zero, so Var(V) = 0 and data cannot \
                     revise the population covariance"
                        .to_string(),
                );
                Some(SlotTensor::zeros(r))
            }
        };
        (v, v_prime)
    };

    if !violations.is_empty() {
        return Err(Error::validation(violations));
    }
    let (v, v_prime) = (v.expect("validated"), v_prime.expect("validated"));

    let spec = ExchangeableSpec {
        r,
        mu: file.mu.clone().unwrap_or_else(|| vec![0.0; r]),
        c,
        c_prime,
        e_v,
        v,
        v_prime,
    };
    spec.validate_structural()?;

    Ok(LoadedSpec {
        spec,
        n: file.n,
        s_obs,
        warnings,
    })
}

/// Render a specification back to its on-disk form.
pub fn to_file(
    spec: &ExchangeableSpec,
    n: Option<usize>,
    s_obs: Option<&DMatrix<f64>>,
) -> SpecFile {
    SpecFile {
        r: spec.r,
        mu: Some(spec.mu.clone()),
        c: spec.c.as_ref().map(from_dmatrix),
        c_prime: spec.c_prime.as_ref().map(from_dmatrix),
        e_v: spec.e_v.as_ref().map(from_dmatrix),
        v: Some(from_dmatrix(spec.v.matrix())),
        v_prime: Some(from_dmatrix(spec.v_prime.matrix())),
        gaussian: None,
        n,
        s_obs: s_obs.map(from_dmatrix),
    }
}

/// Serialize a spec document as pretty JSON with a trailing newline.
pub fn write_spec(file: &SpecFile) -> String {
    let mut text = serde_json::to_string_pretty(file).expect("spec documents always serialize");
    text.push('\n');
    text
}

/// Parse a bare JSON matrix file (array of rows).
pub fn parse_matrix(name: &str, text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
    let want = rows.len();
    to_dmatrix(name, &rows, want)
}

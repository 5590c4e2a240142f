//! Browser demo bindings.
//!
//! Every export takes and returns strings: JSON in, a JSON envelope out
//! (`{"ok": true, ...}` or `{"ok": false, "error": ...}`), so the page
//! needs no marshalling beyond `JSON.parse` and the same functions are
//! testable on any target.

use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

use blin_core::exchangeable::{gaussian_residual_spec, DataBatch, SlotTensor};
use blin_core::pipeline::{self, PipelineOptions};
use blin_core::specfile::{self, GaussianBlock, SpecFile};

fn ok_envelope(key: &str, value: serde_json::Value) -> String {
    serde_json::json!({ "ok": true, key: value }).to_string()
}

fn err_envelope(message: String) -> String {
    serde_json::json!({ "ok": false, "error": message }).to_string()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Build a specification document from a prior matrix, an observed sample
/// covariance, a sample size, a prior strength (the notional number of
/// observations the prior is worth), and a damping factor applied to the
/// off-diagonal of the prior before deriving its uncertainty tensor.
#[wasm_bindgen]
pub fn build_spec(
    ev_json: &str,
    s_json: &str,
    n: u32,
    prior_strength: f64,
    damping: f64,
) -> String {
    match build_spec_inner(ev_json, s_json, n, prior_strength, damping) {
        Ok(spec) => ok_envelope("spec", spec),
        Err(message) => err_envelope(message),
    }
}

fn build_spec_inner(
    ev_json: &str,
    s_json: &str,
    n: u32,
    prior_strength: f64,
    damping: f64,
) -> Result<serde_json::Value, String> {
    let ev = specfile::parse_matrix("e_v", ev_json).map_err(|e| e.to_string())?;
    let s_obs = specfile::parse_matrix("s_obs", s_json).map_err(|e| e.to_string())?;
    let r = ev.nrows();
    if s_obs.nrows() != r {
        return Err(format!(
            "prior is {r}x{r} but the sample matrix is {}x{}",
            s_obs.nrows(),
            s_obs.ncols()
        ));
    }
    if prior_strength <= 0.0 {
        return Err("prior strength must be positive".to_string());
    }
    if !(0.0..=1.0).contains(&damping) {
        return Err("damping must lie in [0, 1]".to_string());
    }
    // Prior uncertainty about V: the quadratic-product covariance of the
    // damped prior, scaled as if the prior were worth `prior_strength`
    // observations.
    let damped = DMatrix::from_fn(r, r, |i, j| {
        if i == j {
            ev[(i, j)]
        } else {
            damping * ev[(i, j)]
        }
    });
    let fourth =
        gaussian_residual_spec(&damped, &SlotTensor::zeros(r), false).map_err(|e| e.to_string())?;
    let v_prime = fourth.u.matrix() / prior_strength;
    let file = SpecFile {
        r,
        e_v: Some(matrix_rows(&ev)),
        gaussian: Some(GaussianBlock {
            ev: matrix_rows(&ev),
            v_prime: Some(matrix_rows(&v_prime)),
        }),
        n: Some(n as usize),
        s_obs: Some(matrix_rows(&s_obs)),
        ..SpecFile::default()
    };
    serde_json::to_value(&file).map_err(|e| e.to_string())
}

fn prepared_from(spec_json: &str) -> Result<(pipeline::Prepared, PipelineOptions), String> {
    let loaded = specfile::parse_spec(spec_json).map_err(|e| e.to_string())?;
    let opts = PipelineOptions::default();
    let prepared = pipeline::prepare(&loaded, None, None, &opts).map_err(|e| e.to_string())?;
    Ok((prepared, opts))
}

/// Full diagnostic run for a specification document: adjusted matrices for
/// the three collections, stepwise resolutions, bearings, size ratios,
/// eigenvalue warnings, and independence checks.
#[wasm_bindgen]
pub fn diagnose_json(spec_json: &str) -> String {
    match prepared_from(spec_json)
        .and_then(|(prepared, opts)| {
            pipeline::run_diagnose(&prepared, &opts).map_err(|e| e.to_string())
        })
        .and_then(|report| serde_json::to_value(&report).map_err(|e| e.to_string()))
    {
        Ok(report) => ok_envelope("report", report),
        Err(message) => err_envelope(message),
    }
}

/// Influence diagram (DOT text) for a specification document.
#[wasm_bindgen]
pub fn diagram_dot(spec_json: &str) -> String {
    let result = prepared_from(spec_json)
        .and_then(|(prepared, opts)| {
            pipeline::run_diagnose(&prepared, &opts)
                .map(|report| (report, opts))
                .map_err(|e| e.to_string())
        })
        .and_then(|(report, opts)| {
            let model = pipeline::diagram_model(&report, &opts);
            blin_core::diagram::diagram_export(&model).map_err(|e| e.to_string())
        });
    match result {
        Ok(dot) => ok_envelope("dot", serde_json::Value::String(dot)),
        Err(message) => err_envelope(message),
    }
}

/// Sample covariance of CSV text (one observation per row, header
/// auto-detected).
#[wasm_bindgen]
pub fn sample_cov_json(csv: &str) -> String {
    let result = DataBatch::from_csv(csv)
        .and_then(|batch| pipeline::run_sample_cov(&batch))
        .map_err(|e| e.to_string())
        .and_then(|report| serde_json::to_value(&report).map_err(|e| e.to_string()));
    match result {
        Ok(report) => ok_envelope("report", report),
        Err(message) => err_envelope(message),
    }
}

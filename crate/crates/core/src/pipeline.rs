//! End-to-end orchestration: from a parsed specification (plus data or an
//! observed sample covariance) to adjustment, diagnostic, and diagram
//! reports. Shared by the command-line front end and the browser demo so
//! both produce identical numbers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::adjustment::{
    adjust, adjust_stepwise, build_collections, build_individual_population, whole_matrix,
    Collection,
};
use crate::diagnostics::{
    bearing, cond_lin_indep_with, default_reference, eigen_diagnostic_with, size_ratio_with,
    EigenReport,
};
use crate::diagram::{DiagramArc, DiagramModel, DiagramNode};
use crate::error::{Error, Result};
use crate::exchangeable::{sample_beliefs, sample_covariance, DataBatch, SampleBeliefs};
use crate::matrix::RandomMatrix;
use crate::specfile::LoadedSpec;
use crate::tol;

/// Which sample collections to adjust by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    /// The whole sample covariance matrix as one object (`D_S`).
    WholeMatrix,
    /// The individual variance collection (`D_I`).
    Individual,
    /// The complete variance collection (`D_C`).
    Complete,
}

impl Choice {
    pub fn label(self) -> &'static str {
        match self {
            Choice::WholeMatrix => "D_S",
            Choice::Individual => "D_I",
            Choice::Complete => "D_C",
        }
    }

    /// Parse a comma-separated subset of `s,i,c`, preserving order.
    pub fn parse_list(text: &str) -> Result<Vec<Choice>> {
        let mut out = Vec::new();
        for part in text.split(',') {
            let part = part.trim();
            let choice = match part {
                "s" | "S" => Choice::WholeMatrix,
                "i" | "I" => Choice::Individual,
                "c" | "C" => Choice::Complete,
                other => {
                    return Err(Error::validation(vec![format!(
                        "unknown collection `{other}`: expected a subset of s,i,c"
                    )]))
                }
            };
            if !out.contains(&choice) {
                out.push(choice);
            }
        }
        Ok(out)
    }
}

/// Knobs shared by every pipeline command.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub choices: Vec<Choice>,
    /// Escalate PSD warnings to errors and negative-eigenvalue flags to a
    /// failing exit.
    pub strict: bool,
    /// Reference matrix for bearings; all-ones when absent.
    pub g_ref: Option<DMatrix<f64>>,
    pub tol_psd: f64,
    pub tol_ind: f64,
    pub tol_eig: f64,
    pub ratio_upper: f64,
    pub ratio_lower: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            choices: vec![Choice::WholeMatrix, Choice::Individual, Choice::Complete],
            strict: false,
            g_ref: None,
            tol_psd: tol::PSD,
            tol_ind: tol::IND,
            tol_eig: tol::EIG,
            ratio_upper: tol::RATIO_UPPER,
            ratio_lower: tol::RATIO_LOWER,
        }
    }
}

/// A specification joined with a sample: everything an adjustment needs.
pub struct Prepared {
    pub beliefs: SampleBeliefs,
    pub s_obs: DMatrix<f64>,
    pub target: RandomMatrix,
    pub warnings: Vec<String>,
}

/// Resolve the sample size and observed covariance, build the joint belief
/// store, and apply the strictness policy to PSD diagnostics.
pub fn prepare(
    loaded: &LoadedSpec,
    data: Option<&DataBatch>,
    n_override: Option<usize>,
    opts: &PipelineOptions,
) -> Result<Prepared> {
    let mut warnings = loaded.warnings.clone();
    let spec = &loaded.spec;

    let n = n_override
        .or_else(|| data.map(DataBatch::n))
        .or(loaded.n)
        .ok_or_else(|| {
            Error::validation(vec![
                "sample size n is required: give data, an n field, or --n".to_string(),
            ])
        })?;

    let s_obs = match data {
        Some(batch) => {
            if batch.r() != spec.r {
                return Err(Error::DimensionMismatch {
                    expected: spec.r,
                    actual: batch.r(),
                });
            }
            sample_covariance(batch)?
        }
        None => loaded.s_obs.clone().ok_or_else(|| {
            Error::validation(vec![
                "no sample covariance available: give data or an s_obs field".to_string(),
            ])
        })?,
    };

    let beliefs = sample_beliefs(spec, n)?;

    let mut psd_notes = spec.psd_violations(opts.tol_psd);
    psd_notes.extend(beliefs.store.violations(opts.tol_psd));
    if !psd_notes.is_empty() {
        if opts.strict {
            return Err(Error::validation(psd_notes));
        }
        warnings.extend(psd_notes);
    }

    let target = whole_matrix(&beliefs.v_ids, spec.r)?;
    Ok(Prepared {
        beliefs,
        s_obs,
        target,
        warnings,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSummary {
    pub eigenvalues: Vec<f64>,
    pub negative_indices: Vec<usize>,
    pub condition_number: Option<f64>,
}

impl From<EigenReport> for EigenSummary {
    fn from(report: EigenReport) -> Self {
        Self {
            eigenvalues: report.eigenvalues,
            negative_indices: report.negative_flags,
            condition_number: report.condition_number,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectionReport {
    pub collection: String,
    pub members: usize,
    pub coefficients: Vec<f64>,
    pub realized: Vec<Vec<f64>>,
    pub resolution: f64,
    pub prior_norm_sq: f64,
    pub resolved_norm_sq: f64,
    pub residual_norm_sq: f64,
    pub eigen: EigenSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjustReport {
    pub r: usize,
    pub n: usize,
    pub prior_expectation: Vec<Vec<f64>>,
    pub s_observed: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub collections: Vec<CollectionReport>,
}

impl AdjustReport {
    pub fn has_negative_eigenvalues(&self) -> bool {
        self.collections
            .iter()
            .any(|c| !c.eigen.negative_indices.is_empty())
    }
}

fn realized_collections(prepared: &Prepared) -> Result<(Collection, Collection, Collection)> {
    let beliefs = &prepared.beliefs;
    let (d_s, d_i, d_c) = build_collections(&beliefs.s_ids, beliefs.r)?;
    let mut values = vec![None; beliefs.store.len()];
    for (k, &(i, j)) in crate::matrix::slot_pairs(beliefs.r).iter().enumerate() {
        values[beliefs.s_ids[k].index()] = Some(prepared.s_obs[(i, j)]);
    }
    let lookup = |q: crate::quantity::QuantityId| values[q.index()];
    Ok((
        d_s.realize(&lookup)?,
        d_i.realize(&lookup)?,
        d_c.realize(&lookup)?,
    ))
}

fn pick<'a>(
    choice: Choice,
    d_s: &'a Collection,
    d_i: &'a Collection,
    d_c: &'a Collection,
) -> &'a Collection {
    match choice {
        Choice::WholeMatrix => d_s,
        Choice::Individual => d_i,
        Choice::Complete => d_c,
    }
}

/// Adjust the population matrix by each requested collection.
pub fn run_adjust(prepared: &Prepared, opts: &PipelineOptions) -> Result<AdjustReport> {
    if opts.choices.is_empty() {
        return Err(Error::validation(vec![
            "no collections requested: choose a subset of s,i,c".to_string(),
        ]));
    }
    let (d_s, d_i, d_c) = realized_collections(prepared)?;
    let store = &prepared.beliefs.store;
    let mut collections = Vec::new();
    for &choice in &opts.choices {
        let d = pick(choice, &d_s, &d_i, &d_c);
        let result = adjust(&prepared.target, d, store)?;
        let eigen = eigen_diagnostic_with(&result.realized, opts.tol_eig)?;
        collections.push(CollectionReport {
            collection: choice.label().to_string(),
            members: d.len(),
            coefficients: result.coefficients,
            realized: matrix_rows(&result.realized),
            resolution: result.resolution,
            prior_norm_sq: result.prior_norm_sq,
            resolved_norm_sq: result.resolved_norm_sq,
            residual_norm_sq: result.residual_norm_sq,
            eigen: eigen.into(),
        });
    }
    Ok(AdjustReport {
        r: prepared.beliefs.r,
        n: prepared.beliefs.n,
        prior_expectation: matrix_rows(&prepared.target.expectation(store)?),
        s_observed: matrix_rows(&prepared.s_obs),
        warnings: prepared.warnings.clone(),
        collections,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BearingSummary {
    pub size: f64,
    pub expected_size: f64,
    pub size_ratio: Option<f64>,
    pub tag: Option<String>,
    pub realized_bearing: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepReport {
    /// Collection added at this step.
    pub added: String,
    /// All collections adjusted by so far, joined with `+`.
    pub cumulative: String,
    pub members: usize,
    pub v_resolution: f64,
    pub v_increment: f64,
    pub vi_resolution: f64,
    pub vi_increment: f64,
    pub bearing: BearingSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub a: String,
    pub b: String,
    pub value: f64,
    pub independent: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub adjust: AdjustReport,
    pub steps: Vec<StepReport>,
    pub independence: Vec<IndependenceReport>,
}

impl DiagnoseReport {
    pub fn has_negative_eigenvalues(&self) -> bool {
        self.adjust.has_negative_eigenvalues()
    }
}

/// Full diagnostic run: per-collection adjustments, stepwise resolutions
/// for the matrix object and for the individual population collection,
/// bearings and size ratios per step, and pairwise conditional linear
/// independence of the population quantities given everything adjusted by.
pub fn run_diagnose(prepared: &Prepared, opts: &PipelineOptions) -> Result<DiagnoseReport> {
    let adjust_report = run_adjust(prepared, opts)?;
    let (d_s, d_i, d_c) = realized_collections(prepared)?;
    let store = &prepared.beliefs.store;
    let beliefs = &prepared.beliefs;
    let v_i = build_individual_population(&beliefs.v_ids, beliefs.r)?;

    let sequence: Vec<Collection> = opts
        .choices
        .iter()
        .map(|&c| pick(c, &d_s, &d_i, &d_c).clone())
        .collect();
    let steps = adjust_stepwise(&prepared.target, &sequence, store)?;

    let g_ref = opts
        .g_ref
        .clone()
        .unwrap_or_else(|| default_reference(beliefs.r));

    let mut step_reports = Vec::with_capacity(steps.len());
    let mut previous_vi = 0.0;
    for step in &steps {
        let vi_resolution =
            crate::adjustment::collection_resolution(&v_i, &step.cumulative, store)?;
        let vi_increment = vi_resolution - previous_vi;
        previous_vi = vi_resolution;

        let report = bearing(&step.cumulative, &g_ref, store)?;
        let tagged = size_ratio_with(&report, opts.ratio_upper, opts.ratio_lower);
        step_reports.push(StepReport {
            added: step.added.clone(),
            cumulative: step.cumulative.label.to_string(),
            members: step.cumulative.len(),
            v_resolution: step.result.resolution,
            v_increment: step.resolution_increment,
            vi_resolution,
            vi_increment,
            bearing: BearingSummary {
                size: report.size,
                expected_size: report.expected_size,
                size_ratio: report.size_ratio,
                tag: tagged.map(|(_, tag)| tag.as_str().to_string()),
                realized_bearing: matrix_rows(&report.realized_bearing),
            },
        });
    }

    // Members at disjoint slots are orthogonal by construction (the trace
    // inner product couples same positions only), so the informative
    // checks pair the whole matrix object with each of its components.
    let mut independence = Vec::new();
    if let Some(last) = steps.last() {
        let labels: Vec<String> = beliefs
            .v_ids
            .iter()
            .map(|&q| store.registry().label(q).to_string())
            .collect();
        for (k, member) in v_i.members().iter().enumerate() {
            let check = cond_lin_indep_with(
                &prepared.target,
                member,
                &last.cumulative,
                store,
                opts.tol_ind,
            )?;
            independence.push(IndependenceReport {
                a: "V".to_string(),
                b: labels[k].clone(),
                value: check.value,
                independent: check.independent,
            });
        }
    }

    Ok(DiagnoseReport {
        adjust: adjust_report,
        steps: step_reports,
        independence,
    })
}

/// Influence-diagram model of a diagnostic run: the matrix object and the
/// individual population collection carry stepwise resolution shadings;
/// each data node carries the size ratio of its cumulative adjustment.
pub fn diagram_model(report: &DiagnoseReport, opts: &PipelineOptions) -> DiagramModel {
    let v_segments: Vec<f64> = report
        .steps
        .iter()
        .map(|s| s.v_increment.max(0.0))
        .collect();
    let vi_segments: Vec<f64> = report
        .steps
        .iter()
        .map(|s| s.vi_increment.max(0.0))
        .collect();
    let mut nodes = vec![
        DiagramNode {
            label: "V".to_string(),
            segments: v_segments,
            size_ratio: report.steps.last().and_then(|s| s.bearing.size_ratio),
        },
        DiagramNode {
            label: "V_I".to_string(),
            segments: vi_segments,
            size_ratio: None,
        },
    ];
    let mut arcs = vec![DiagramArc {
        from: "V_I".to_string(),
        to: "V".to_string(),
        reversed: false,
    }];
    for step in &report.steps {
        nodes.push(DiagramNode {
            label: step.added.clone(),
            segments: vec![],
            size_ratio: step.bearing.size_ratio,
        });
        arcs.push(DiagramArc {
            from: step.added.clone(),
            to: "V".to_string(),
            reversed: false,
        });
        arcs.push(DiagramArc {
            from: step.added.clone(),
            to: "V_I".to_string(),
            reversed: false,
        });
    }
    DiagramModel {
        nodes,
        arcs,
        ratio_thresholds: Some((opts.ratio_upper, opts.ratio_lower)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleCovReport {
    pub n: usize,
    pub r: usize,
    pub matrix: Vec<Vec<f64>>,
}

/// Sample covariance of a data batch, as a report.
pub fn run_sample_cov(data: &DataBatch) -> Result<SampleCovReport> {
    let s = sample_covariance(data)?;
    Ok(SampleCovReport {
        n: data.n(),
        r: data.r(),
        matrix: matrix_rows(&s),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McEntryReport {
    pub slot_a: (usize, usize),
    pub slot_b: (usize, usize),
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub draws: usize,
    pub seed: u64,
    pub max_abs_z: f64,
    pub entries: Vec<McEntryReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalSpecReport {
    pub r: usize,
    pub ev: Vec<Vec<f64>>,
    pub v_prime: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub provenance: String,
    pub warnings: Vec<String>,
    pub mc_check: Option<McReport>,
}

/// Build a Gaussian-consistent residual specification, optionally checked
/// against a seeded Monte Carlo estimate of the quadratic-product
/// covariances.
pub fn run_normal_spec(
    ev: &DMatrix<f64>,
    v_prime: Option<&DMatrix<f64>>,
    strict: bool,
    mc_draws: Option<usize>,
    seed: u64,
) -> Result<NormalSpecReport> {
    let r = ev.nrows();
    let m = crate::matrix::slot_count(r);
    let mut warnings = Vec::new();
    let v_prime_tensor = match v_prime {
        Some(mat) => crate::exchangeable::SlotTensor::from_matrix(r, mat.clone())?,
        None => {
            warnings.push(
                "v_prime missing: defaulting to zero, so Var(V) = 0 and data cannot revise \
                 the population covariance"
                    .to_string(),
            );
            crate::exchangeable::SlotTensor::zeros(r)
        }
    };
    if !strict {
        if let Some(min) = crate::linalg::psd_violation(ev, tol::PSD) {
            warnings.push(format!(
                "ev is not positive semi-definite (min eigenvalue {min:e})"
            ));
        }
    }
    let out = crate::exchangeable::gaussian_residual_spec(ev, &v_prime_tensor, strict)?;
    let mc_check = match mc_draws {
        Some(draws) => {
            let entries = crate::exchangeable::quadratic_product_mc(ev, draws, seed)?;
            let reports: Vec<McEntryReport> = entries
                .into_iter()
                .map(|e| {
                    let z = if e.std_error > 0.0 {
                        (e.estimate - e.exact) / e.std_error
                    } else {
                        0.0
                    };
                    McEntryReport {
                        slot_a: e.slot_a,
                        slot_b: e.slot_b,
                        exact: e.exact,
                        estimate: e.estimate,
                        std_error: e.std_error,
                        z,
                    }
                })
                .collect();
            let max_abs_z = reports.iter().fold(0.0f64, |m, e| m.max(e.z.abs()));
            Some(McReport {
                draws,
                seed,
                max_abs_z,
                entries: reports,
            })
        }
        None => None,
    };
    let _ = m;
    Ok(NormalSpecReport {
        r,
        ev: matrix_rows(ev),
        v_prime: matrix_rows(v_prime_tensor.matrix()),
        u: matrix_rows(out.u.matrix()),
        v: matrix_rows(out.v.matrix()),
        provenance: out.provenance,
        warnings,
        mc_check,
    })
}

// ---------------------------------------------------------------------
// Plain-text rendering. Fixed formats keep repeated runs byte-identical.
// ---------------------------------------------------------------------

fn fmt_matrix(rows: &[Vec<f64>], indent: &str) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(indent);
        for value in row {
            out.push_str(&format!("{value:>14.6}"));
        }
        out.push('\n');
    }
    out
}

fn fmt_coefficients(coefficients: &[f64]) -> String {
    let mut out = String::new();
    for (k, value) in coefficients.iter().enumerate() {
        if k % 6 == 0 {
            if k > 0 {
                out.push('\n');
            }
            out.push_str("    ");
        }
        out.push_str(&format!("{value:>12.6}"));
    }
    out.push('\n');
    out
}

fn fmt_warnings(warnings: &[String]) -> String {
    let mut out = String::new();
    for warning in warnings {
        out.push_str(&format!("warning: {warning}\n"));
    }
    out
}

pub fn render_sample_cov(report: &SampleCovReport) -> String {
    let mut out = format!(
        "Sample covariance ({} observations, dimension {})\n",
        report.n, report.r
    );
    out.push_str(&fmt_matrix(&report.matrix, "  "));
    out
}

pub fn render_adjust(report: &AdjustReport) -> String {
    let mut out = fmt_warnings(&report.warnings);
    out.push_str(&format!(
        "Adjustment of the population covariance (r = {}, n = {})\n\n",
        report.r, report.n
    ));
    out.push_str("Prior expectation E(V):\n");
    out.push_str(&fmt_matrix(&report.prior_expectation, "  "));
    out.push_str("\nObserved sample covariance S:\n");
    out.push_str(&fmt_matrix(&report.s_observed, "  "));
    for c in &report.collections {
        out.push_str(&format!(
            "\nAdjusted by {} ({} member{}):\n",
            c.collection,
            c.members,
            if c.members == 1 { "" } else { "s" }
        ));
        out.push_str(&fmt_matrix(&c.realized, "  "));
        out.push_str(&format!(
            "  resolution {:.6}   (prior |.|^2 {:.6}, resolved {:.6}, residual {:.6})\n",
            c.resolution, c.prior_norm_sq, c.resolved_norm_sq, c.residual_norm_sq
        ));
        let eigen_list = c
            .eigen
            .eigenvalues
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!("  eigenvalues: {eigen_list}\n"));
        if !c.eigen.negative_indices.is_empty() {
            out.push_str(
                "  warning: negative eigenvalues in the revised structure signal conflict \
                 between prior beliefs and data\n",
            );
        }
        out.push_str("  coefficients:\n");
        out.push_str(&fmt_coefficients(&c.coefficients));
    }
    out
}

pub fn render_diagnose(report: &DiagnoseReport) -> String {
    let mut out = render_adjust(&report.adjust);
    out.push_str("\nStepwise resolutions and bearings:\n");
    for step in &report.steps {
        out.push_str(&format!(
            "  step +{} (space {}, {} member{}): V resolution {:.6} (+{:.6}), V_I resolution \
             {:.6} (+{:.6})\n",
            step.added,
            step.cumulative,
            step.members,
            if step.members == 1 { "" } else { "s" },
            step.v_resolution,
            step.v_increment,
            step.vi_resolution,
            step.vi_increment
        ));
        match (step.bearing.size_ratio, &step.bearing.tag) {
            (Some(ratio), Some(tag)) => out.push_str(&format!(
                "    bearing size {:.6}, expected {:.6}, ratio {:.4} ({tag})\n",
                step.bearing.size, step.bearing.expected_size, ratio
            )),
            _ => out.push_str(&format!(
                "    bearing size {:.6}, expected size undefined\n",
                step.bearing.size
            )),
        }
    }
    out.push_str("\nConditional linear independence given the full adjustment space:\n");
    for pair in &report.independence {
        out.push_str(&format!(
            "  {} _||_ {}: residual inner product {:>12.6e} -> {}\n",
            pair.a,
            pair.b,
            pair.value,
            if pair.independent {
                "independent"
            } else {
                "dependent"
            }
        ));
    }
    out
}

pub fn render_normal_spec(report: &NormalSpecReport) -> String {
    let mut out = fmt_warnings(&report.warnings);
    out.push_str(&format!(
        "Gaussian-consistent residual specification (r = {})\n\n",
        report.r
    ));
    out.push_str("Residual covariance ev (plug-in point):\n");
    out.push_str(&fmt_matrix(&report.ev, "  "));
    out.push_str("\nFourth-moment tensor u over slot pairs:\n");
    out.push_str(&fmt_matrix(&report.u, "  "));
    out.push_str("\nWithin-observation tensor v = v_prime + u:\n");
    out.push_str(&fmt_matrix(&report.v, "  "));
    out.push_str(&format!("\nprovenance: {}\n", report.provenance));
    if let Some(mc) = &report.mc_check {
        out.push_str(&format!(
            "\nMonte Carlo check ({} draws, seed {}): max |z| = {:.4}\n",
            mc.draws, mc.seed, mc.max_abs_z
        ));
        for entry in &mc.entries {
            out.push_str(&format!(
                "  u[({},{}),({},{})]: exact {:>12.6}, estimate {:>12.6}, se {:>10.6}, z {:>8.4}\n",
                entry.slot_a.0,
                entry.slot_a.1,
                entry.slot_b.0,
                entry.slot_b.1,
                entry.exact,
                entry.estimate,
                entry.std_error,
                entry.z
            ));
        }
    }
    out
}

/// Machine-readable rendering with a trailing newline.
pub fn render_json<T: Serialize>(report: &T) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("reports always serialize");
    text.push('\n');
    text
}

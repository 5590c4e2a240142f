//! `blin`: Bayes linear adjustment of covariance matrices from the command
//! line.
//!
//! Exit codes are a stable contract: 0 success, 2 I/O or parse failure,
//! 3 insufficient data, 4 specification or validation failure, 5 a
//! strict-mode diagnostic failure (negative eigenvalues in an adjusted
//! matrix).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use blin_core::exchangeable::DataBatch;
use blin_core::pipeline::{self, Choice, DiagnoseReport, PipelineOptions};
use blin_core::specfile;
use blin_core::Error;

const DEFAULT_SEED: u64 = 177;

#[derive(Parser)]
#[command(
    name = "blin",
    version,
    about = "Bayes linear belief adjustment for covariance matrices",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(clap::Args)]
struct PipelineArgs {
    /// Specification file (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// CSV data file, one observation per row; header auto-detected.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Collections to adjust by, a comma-separated subset of s,i,c.
    #[arg(long, default_value = "s,i,c")]
    collections: String,
    /// Override the sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Escalate PSD warnings to errors; in diagnose, escalate negative
    /// eigenvalues to exit 5.
    #[arg(long)]
    strict: bool,
    /// Output format.
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// PSD tolerance override.
    #[arg(long)]
    tol_psd: Option<f64>,
    /// Independence tolerance override.
    #[arg(long)]
    tol_ind: Option<f64>,
    /// Negative-eigenvalue tolerance override.
    #[arg(long)]
    tol_eig: Option<f64>,
    /// Size-ratio threshold for larger-than-expected.
    #[arg(long)]
    ratio_upper: Option<f64>,
    /// Size-ratio threshold for smaller-than-expected.
    #[arg(long)]
    ratio_lower: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample covariance matrix of a CSV data file.
    SampleCov {
        /// CSV data file, one observation per row; header auto-detected.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adjusted population covariance matrices for each collection.
    Adjust(PipelineArgs),
    /// Adjustments plus bearings, size ratios, and independence checks.
    Diagnose {
        #[command(flatten)]
        args: PipelineArgs,
        /// Reference matrix for bearings (JSON matrix file); all-ones when
        /// absent.
        #[arg(long)]
        g_ref: Option<PathBuf>,
    },
    /// Influence diagram (DOT) for a diagnostic run.
    Diagram {
        /// Specification file (JSON); optional when --report is given.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "s,i,c")]
        collections: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        strict: bool,
        /// Reference matrix for bearings (JSON matrix file).
        #[arg(long)]
        g_ref: Option<PathBuf>,
        /// Reuse a saved diagnose report (JSON) instead of recomputing.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Output DOT file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tol_psd: Option<f64>,
        #[arg(long)]
        ratio_upper: Option<f64>,
        #[arg(long)]
        ratio_lower: Option<f64>,
    },
    /// Gaussian-consistent residual fourth moments from a covariance.
    NormalSpec {
        /// Residual covariance matrix (JSON matrix file).
        #[arg(long)]
        ev: PathBuf,
        /// Prior covariance of the population quantities (JSON m x m
        /// matrix over slot pairs); zero when absent.
        #[arg(long)]
        vprime: Option<PathBuf>,
        /// Check the tensors against a seeded Monte Carlo estimate.
        #[arg(long)]
        mc_draws: Option<usize>,
        /// Monte Carlo seed; the BLIN_SEED environment variable overrides.
        #[arg(long)]
        seed: Option<u64>,
        /// Reject a non-PSD ev instead of warning.
        #[arg(long)]
        strict: bool,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure with its exit code and a message for standard error.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Json(_) | Error::CsvParse { .. } | Error::NonFiniteData { .. } => 2,
            Error::InsufficientData { .. } => 3,
            _ => 4,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

type CliResult = Result<i32, Failure>;

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure {
            code: 2,
            message: format!("cannot write {}: {e}", path.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn positive(name: &str, value: Option<f64>, default: f64) -> Result<f64, Failure> {
    match value {
        Some(v) if v > 0.0 => Ok(v),
        Some(v) => Err(Failure {
            code: 4,
            message: format!("{name} must be positive, got {v}"),
        }),
        None => Ok(default),
    }
}

fn seed_from_env_or(flag: Option<u64>) -> Result<u64, Failure> {
    match std::env::var("BLIN_SEED") {
        Ok(text) => text.trim().parse::<u64>().map_err(|_| Failure {
            code: 4,
            message: format!("BLIN_SEED must be an unsigned integer, got `{text}`"),
        }),
        Err(_) => Ok(flag.unwrap_or(DEFAULT_SEED)),
    }
}

fn build_options(args: &PipelineArgs, g_ref: Option<&PathBuf>) -> Result<PipelineOptions, Failure> {
    let defaults = PipelineOptions::default();
    let g_ref = match g_ref {
        Some(path) => Some(specfile::parse_matrix("g_ref", &read_file(path)?)?),
        None => None,
    };
    Ok(PipelineOptions {
        choices: Choice::parse_list(&args.collections)?,
        strict: args.strict,
        g_ref,
        tol_psd: positive("--tol-psd", args.tol_psd, defaults.tol_psd)?,
        tol_ind: positive("--tol-ind", args.tol_ind, defaults.tol_ind)?,
        tol_eig: positive("--tol-eig", args.tol_eig, defaults.tol_eig)?,
        ratio_upper: positive("--ratio-upper", args.ratio_upper, defaults.ratio_upper)?,
        ratio_lower: positive("--ratio-lower", args.ratio_lower, defaults.ratio_lower)?,
    })
}

fn prepare_from(
    args: &PipelineArgs,
    opts: &PipelineOptions,
) -> Result<pipeline::Prepared, Failure> {
    let loaded = specfile::parse_spec(&read_file(&args.spec)?)?;
    let data = match &args.data {
        Some(path) => Some(DataBatch::from_csv(&read_file(path)?)?),
        None => None,
    };
    Ok(pipeline::prepare(&loaded, data.as_ref(), args.n, opts)?)
}

fn run_sample_cov(data: &Path, format: Format, out: Option<&PathBuf>) -> CliResult {
    let batch = DataBatch::from_csv(&read_file(data)?)?;
    let report = pipeline::run_sample_cov(&batch)?;
    let text = match format {
        Format::Text => pipeline::render_sample_cov(&report),
        Format::Json => pipeline::render_json(&report),
    };
    write_output(out, &text)?;
    Ok(0)
}

fn run_adjust(args: &PipelineArgs) -> CliResult {
    let opts = build_options(args, None)?;
    let prepared = prepare_from(args, &opts)?;
    let report = pipeline::run_adjust(&prepared, &opts)?;
    let text = match args.format {
        Format::Text => pipeline::render_adjust(&report),
        Format::Json => pipeline::render_json(&report),
    };
    write_output(args.out.as_ref(), &text)?;
    Ok(0)
}

fn run_diagnose(args: &PipelineArgs, g_ref: Option<&PathBuf>) -> CliResult {
    let opts = build_options(args, g_ref)?;
    let prepared = prepare_from(args, &opts)?;
    let report = pipeline::run_diagnose(&prepared, &opts)?;
    let text = match args.format {
        Format::Text => pipeline::render_diagnose(&report),
        Format::Json => pipeline::render_json(&report),
    };
    write_output(args.out.as_ref(), &text)?;
    if opts.strict && report.has_negative_eigenvalues() {
        eprintln!(
            "strict: negative eigenvalues in an adjusted matrix signal conflict between \
             prior beliefs and data"
        );
        return Ok(5);
    }
    Ok(0)
}

struct DiagramInputs {
    spec: Option<PathBuf>,
    data: Option<PathBuf>,
    collections: String,
    n: Option<usize>,
    strict: bool,
    g_ref: Option<PathBuf>,
    report: Option<PathBuf>,
    out: PathBuf,
    tol_psd: Option<f64>,
    ratio_upper: Option<f64>,
    ratio_lower: Option<f64>,
}

fn run_diagram(inputs: DiagramInputs) -> CliResult {
    let defaults = PipelineOptions::default();
    let mut opts = PipelineOptions {
        choices: Choice::parse_list(&inputs.collections)?,
        strict: inputs.strict,
        tol_psd: positive("--tol-psd", inputs.tol_psd, defaults.tol_psd)?,
        ratio_upper: positive("--ratio-upper", inputs.ratio_upper, defaults.ratio_upper)?,
        ratio_lower: positive("--ratio-lower", inputs.ratio_lower, defaults.ratio_lower)?,
        ..defaults
    };
    if let Some(path) = &inputs.g_ref {
        opts.g_ref = Some(specfile::parse_matrix("g_ref", &read_file(path)?)?);
    }
    let report: DiagnoseReport = match (&inputs.report, &inputs.spec) {
        (Some(path), _) => serde_json::from_str(&read_file(path)?).map_err(Error::from)?,
        (None, Some(spec_path)) => {
            let args = PipelineArgs {
                spec: spec_path.clone(),
                data: inputs.data.clone(),
                collections: inputs.collections.clone(),
                n: inputs.n,
                strict: inputs.strict,
                format: Format::Text,
                out: None,
                tol_psd: inputs.tol_psd,
                tol_ind: None,
                tol_eig: None,
                ratio_upper: inputs.ratio_upper,
                ratio_lower: inputs.ratio_lower,
            };
            let prepared = prepare_from(&args, &opts)?;
            pipeline::run_diagnose(&prepared, &opts)?
        }
        (None, None) => {
            return Err(Failure {
                code: 4,
                message: "diagram needs --spec (to run the pipeline) or --report (a saved \
                          diagnose report)"
                    .to_string(),
            })
        }
    };
    let model = pipeline::diagram_model(&report, &opts);
    let dot = blin_core::diagram::diagram_export(&model)?;
    write_output(Some(&inputs.out), &dot)?;
    Ok(0)
}

fn run_normal_spec(
    ev: &Path,
    vprime: Option<&PathBuf>,
    mc_draws: Option<usize>,
    seed: Option<u64>,
    strict: bool,
    format: Format,
    out: Option<&PathBuf>,
) -> CliResult {
    let ev = specfile::parse_matrix("ev", &read_file(ev)?)?;
    let vprime = match vprime {
        Some(path) => Some(specfile::parse_matrix("v_prime", &read_file(path)?)?),
        None => None,
    };
    let seed = seed_from_env_or(seed)?;
    let report = pipeline::run_normal_spec(&ev, vprime.as_ref(), strict, mc_draws, seed)?;
    let text = match format {
        Format::Text => pipeline::render_normal_spec(&report),
        Format::Json => pipeline::render_json(&report),
    };
    write_output(out, &text)?;
    Ok(0)
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::SampleCov { data, format, out } => run_sample_cov(&data, format, out.as_ref()),
        Command::Adjust(args) => run_adjust(&args),
        Command::Diagnose { args, g_ref } => run_diagnose(&args, g_ref.as_ref()),
        Command::Diagram {
            spec,
            data,
            collections,
            n,
            strict,
            g_ref,
            report,
            out,
            tol_psd,
            ratio_upper,
            ratio_lower,
        } => run_diagram(DiagramInputs {
            spec,
            data,
            collections,
            n,
            strict,
            g_ref,
            report,
            out,
            tol_psd,
            ratio_upper,
            ratio_lower,
        }),
        Command::NormalSpec {
            ev,
            vprime,
            mc_draws,
            seed,
            strict,
            format,
            out,
        } => run_normal_spec(
            &ev,
            vprime.as_ref(),
            mc_draws,
            seed,
            strict,
            format,
            out.as_ref(),
        ),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    };
    std::process::exit(code);
}

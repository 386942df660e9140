//! Subcommand implementations and the error-to-exit-code policy.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sdr::dtsir::{dtsir_fit, DtSirConfig, ThresholdSource};
use sdr::experiments::{
    records_to_csv, result_to_json, run_phase_fixed_rho, run_phase_sweep, run_table, run_timing,
    PhaseFixedSpec, PhaseSweepSpec, TableSpec, TimingSpec,
};
use sdr::metrics::{subspace_distance, vector_angle, DistanceNorm, Subspace};
use sdr::simgen::{
    generate, read_basis_csv, read_dataset_csv, write_basis_csv, write_dataset_csv, Setting,
    SettingSpec, DEFAULT_RHO,
};
use sdr::sir::{sir_fit, Bandwidth, CovarianceSpec, SirConfig};

/// Resolved global run options.
pub struct RunContext {
    pub seed: u64,
    pub seed_source: String,
    pub threads: usize,
    pub threads_source: String,
}

/// CLI error categories, one per exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

pub fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) => 1,
        CliError::Data(_) => 2,
        CliError::Numerical(_) => 3,
    }
}

impl From<sdr::Error> for CliError {
    fn from(e: sdr::Error) -> Self {
        match &e {
            sdr::Error::InvalidArgument(_) | sdr::Error::InsufficientData(_) => {
                CliError::Usage(e.to_string())
            }
            sdr::Error::Io(_) | sdr::Error::Parse { .. } => CliError::Data(e.to_string()),
            sdr::Error::SingularCovariance(_)
            | sdr::Error::NumericalFailure { .. }
            | sdr::Error::DegenerateSpectrum(_)
            | sdr::Error::ScreeningTooAggressive { .. }
            | sdr::Error::NotPositiveDefinite { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

fn io_data(e: std::io::Error, path: &Path) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Generator setting: I..VII or 'linear'.
    #[arg(long)]
    pub setting: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Correlation parameter for the structured-covariance settings.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Output CSV path; the true basis goes to the sibling .truth.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_simulate(args: &SimulateArgs, ctx: &RunContext) -> Result<(), CliError> {
    let setting = Setting::parse(&args.setting)?;
    let spec = SettingSpec::new(
        setting,
        args.n,
        args.p,
        args.rho.unwrap_or(DEFAULT_RHO),
        ctx.seed,
    );
    let (data, truth) = generate(&spec)?;
    write_dataset_csv(&data, &args.out).map_err(CliError::from)?;
    write_basis_csv(&truth.v_true.view(), &truth_path(&args.out)).map_err(CliError::from)?;
    println!(
        "wrote {} ({} rows, {} predictors, setting {}, rho {}, seed {}) and {}",
        args.out.display(),
        data.n(),
        data.p(),
        spec.setting,
        spec.rho,
        spec.seed,
        truth_path(&args.out).display()
    );
    Ok(())
}

/// data.csv -> data.truth.csv
pub fn truth_path(data_path: &Path) -> PathBuf {
    let stem = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "data".to_string());
    data_path.with_file_name(format!("{stem}.truth.csv"))
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Estimator: 'sir' or 'dtsir'.
    #[arg(long)]
    pub method: String,
    /// Structural dimension.
    #[arg(long)]
    pub d: usize,
    /// Slice count for the SIR step (defaults follow the sample-size rule).
    #[arg(long = "H")]
    pub h: Option<usize>,
    /// Slice count for the screening step (dtsir only).
    #[arg(long = "H-screen")]
    pub h_screen: Option<usize>,
    /// Screening threshold: 'aux', 'fixed=<v>' or 'theory=<a>,<s>,<w>'.
    #[arg(long)]
    pub threshold: Option<String>,
    /// Covariance mode: 'sample', 'banded' or 'identity'.
    #[arg(long)]
    pub cov: Option<String>,
    /// Fixed bandwidth for banded mode (omit for cross-validated).
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// Diagonal regularization added before covariance inversion.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Distance norm against the truth file: 'frobenius' or 'operator'.
    #[arg(long)]
    pub norm: Option<String>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_norm(s: &Option<String>) -> Result<DistanceNorm, CliError> {
    match s.as_deref() {
        None | Some("frobenius") => Ok(DistanceNorm::Frobenius),
        Some("operator") => Ok(DistanceNorm::Operator),
        Some(other) => Err(CliError::Usage(format!(
            "--norm must be 'frobenius' or 'operator', got '{other}'"
        ))),
    }
}

fn parse_threshold(s: &Option<String>) -> Result<ThresholdSource, CliError> {
    let Some(raw) = s else {
        return Ok(ThresholdSource::Auxiliary { p_prime: None });
    };
    if raw == "aux" {
        return Ok(ThresholdSource::Auxiliary { p_prime: None });
    }
    if let Some(v) = raw.strip_prefix("fixed=") {
        let t: f64 = v.parse().map_err(|_| {
            CliError::Usage(format!("cannot parse fixed threshold value '{v}'"))
        })?;
        return Ok(ThresholdSource::Fixed(t));
    }
    if let Some(v) = raw.strip_prefix("theory=") {
        let parts: Vec<&str> = v.split(',').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage(format!(
                "theory threshold needs 'theory=<a>,<s>,<omega>', got '{raw}'"
            )));
        }
        let a: f64 = parts[0]
            .parse()
            .map_err(|_| CliError::Usage(format!("cannot parse a='{}'", parts[0])))?;
        let s_: usize = parts[1]
            .parse()
            .map_err(|_| CliError::Usage(format!("cannot parse s='{}'", parts[1])))?;
        let w: f64 = parts[2]
            .parse()
            .map_err(|_| CliError::Usage(format!("cannot parse omega='{}'", parts[2])))?;
        return Ok(ThresholdSource::Theoretical { a, s: s_, omega: w });
    }
    Err(CliError::Usage(format!(
        "--threshold must be 'aux', 'fixed=<v>' or 'theory=<a>,<s>,<w>', got '{raw}'"
    )))
}

fn parse_covariance(
    cov: &Option<String>,
    bandwidth: Option<usize>,
    seed: u64,
) -> Result<CovarianceSpec, CliError> {
    match cov.as_deref() {
        None | Some("banded") => Ok(CovarianceSpec::Banded(match bandwidth {
            Some(k) => Bandwidth::Fixed(k),
            None => Bandwidth::CrossValidated {
                candidates: None,
                splits: 10,
                seed,
            },
        })),
        Some("sample") => Ok(CovarianceSpec::Sample),
        Some("identity") => Ok(CovarianceSpec::Identity),
        Some(other) => Err(CliError::Usage(format!(
            "--cov must be 'sample', 'banded' or 'identity', got '{other}'"
        ))),
    }
}

fn covariance_label(spec: &CovarianceSpec) -> String {
    match spec {
        CovarianceSpec::Sample => "sample".to_string(),
        CovarianceSpec::Identity => "identity".to_string(),
        CovarianceSpec::Banded(Bandwidth::Fixed(k)) => format!("banded(k={k})"),
        CovarianceSpec::Banded(Bandwidth::CrossValidated { splits, .. }) => {
            format!("banded(cv, {splits} splits)")
        }
    }
}

pub fn run_fit(args: &FitArgs, ctx: &RunContext) -> Result<(), CliError> {
    let data = read_dataset_csv(&args.input)?;
    let n = data.n();
    let (default_h_screen, default_h_sir) = sdr::dtsir::default_slice_counts(n);
    let h_sir = args.h.unwrap_or(default_h_sir);
    let h_screen = args.h_screen.unwrap_or(default_h_screen);
    let norm = parse_norm(&args.norm)?;
    let covariance = parse_covariance(&args.cov, args.bandwidth, ctx.seed)?;

    let mut report = json!({
        "input": args.input.display().to_string(),
        "method": args.method,
        "n": n,
        "p": data.p(),
        "d": args.d,
        "config": {
            "h_sir": h_sir,
            "h_screen": h_screen,
            "covariance": covariance_label(&covariance),
            "ridge": args.ridge,
        },
        "environment": {
            "seed": ctx.seed,
            "seed_source": ctx.seed_source,
            "threads": ctx.threads,
            "threads_source": ctx.threads_source,
        },
    });

    let beta: Array2<f64>;
    match args.method.as_str() {
        "sir" => {
            let cfg = SirConfig::new(h_sir, args.d)
                .with_covariance(covariance)
                .with_ridge(args.ridge);
            let est = sir_fit(&data, &cfg)?;
            report["eigenvalues"] = json!(est.eigvals);
            beta = est.beta_hat;
        }
        "dtsir" => {
            let threshold = parse_threshold(&args.threshold)?;
            let cfg = DtSirConfig {
                h_screen,
                h_sir,
                d: args.d,
                threshold,
                covariance,
                ridge: args.ridge,
            };
            // stream 1 carries the auxiliary-threshold draw
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            rng.set_stream(1);
            let est = dtsir_fit(&data, &cfg, &mut rng)?;
            report["eigenvalues"] = json!(est.restricted_sir.eigvals);
            report["screening"] = json!({
                "threshold": est.screening.threshold,
                "threshold_source": est.screening.threshold_source,
                "included": est.screening.included,
                "stats": est.screening.stats.to_vec(),
            });
            beta = est.beta_hat;
        }
        other => {
            return Err(CliError::Usage(format!(
                "--method must be 'sir' or 'dtsir', got '{other}'"
            )))
        }
    }

    let beta_columns: Vec<Vec<f64>> = (0..beta.ncols())
        .map(|j| beta.column(j).to_vec())
        .collect();
    report["beta_hat_columns"] = json!(beta_columns);

    let truth = truth_path(&args.input);
    if truth.exists() {
        let v_true = read_basis_csv(&truth)?;
        let est_space = Subspace::new(beta.clone())?;
        let true_space = Subspace::new(v_true.clone())?;
        let distance = subspace_distance(&est_space, &true_space, norm)?;
        let mut angles = Vec::new();
        if v_true.ncols() == beta.ncols() {
            for j in 0..beta.ncols() {
                angles.push(vector_angle(&beta.column(j), &v_true.column(j))?);
            }
        }
        report["truth"] = json!({
            "file": truth.display().to_string(),
            "norm": norm.to_string(),
            "distance": distance,
            "per_direction_angles": angles,
        });
    }

    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Data(format!("report serialization failed: {e}")))?;
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_data(e, path))?,
        None => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment kind: 'table', 'phase-fixed', 'phase-sweep' or 'timing'.
    #[arg(long)]
    pub kind: String,
    /// JSON config file (schema depends on the kind; see README).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for results.csv and results.json.
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

pub fn run_experiment(args: &ExperimentArgs, ctx: &RunContext) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| io_data(e, &args.config))?;
    let override_seed = ctx.seed_source != "default";
    let override_threads = ctx.threads_source != "default";

    let (result, spec_json) = match args.kind.as_str() {
        "table" => {
            let mut spec: TableSpec = parse_config(&text)?;
            if override_seed {
                spec.seed = ctx.seed;
            }
            if override_threads {
                spec.threads = ctx.threads;
            }
            let r = run_table(&spec)?;
            (r, serde_json::to_value(&spec).unwrap())
        }
        "phase-fixed" => {
            let mut spec: PhaseFixedSpec = parse_config(&text)?;
            if override_seed {
                spec.seed = ctx.seed;
            }
            if override_threads {
                spec.threads = ctx.threads;
            }
            let r = run_phase_fixed_rho(&spec)?;
            (r, serde_json::to_value(&spec).unwrap())
        }
        "phase-sweep" => {
            let mut spec: PhaseSweepSpec = parse_config(&text)?;
            if override_seed {
                spec.seed = ctx.seed;
            }
            if override_threads {
                spec.threads = ctx.threads;
            }
            let r = run_phase_sweep(&spec)?;
            (r, serde_json::to_value(&spec).unwrap())
        }
        "timing" => {
            let mut spec: TimingSpec = parse_config(&text)?;
            if override_seed {
                spec.seed = ctx.seed;
            }
            let r = run_timing(&spec)?;
            (r, serde_json::to_value(&spec).unwrap())
        }
        other => {
            return Err(CliError::Usage(format!(
                "--kind must be one of table, phase-fixed, phase-sweep, timing; got '{other}'"
            )))
        }
    };

    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_data(e, &args.out_dir))?;
    let csv_path = args.out_dir.join("results.csv");
    let json_path = args.out_dir.join("results.json");
    std::fs::write(&csv_path, records_to_csv(&result)).map_err(|e| io_data(e, &csv_path))?;
    let json_text = result_to_json(&spec_json, &result)?;
    std::fs::write(&json_path, json_text).map_err(|e| io_data(e, &json_path))?;
    println!(
        "wrote {} and {} ({} records, {} aggregates)",
        csv_path.display(),
        json_path.display(),
        result.records.len(),
        result.aggregates.len()
    );
    Ok(())
}

fn parse_config<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("malformed config: {e}")))
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Results CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Column for the horizontal axis.
    #[arg(long)]
    pub x: String,
    /// Column for the vertical axis.
    #[arg(long)]
    pub y: String,
    /// Optional grouping column: one polyline per distinct value.
    #[arg(long)]
    pub group: Option<String>,
    /// Output SVG path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_plot(args: &PlotArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| io_data(e, &args.input))?;
    let svg = crate::plot::render_svg(&text, &args.x, &args.y, args.group.as_deref())?;
    std::fs::write(&args.out, svg).map_err(|e| io_data(e, &args.out))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

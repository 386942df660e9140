//! Replicated experiment runners: distance tables, phase-transition sweeps,
//! timing grids, and the two-sample comparison test.
//!
//! Determinism contract: every replication is a pure function of
//! (spec seed, cell index, rep index). Seeds are derived with a splitmix64
//! chain, data generation draws on ChaCha8 stream 0 of the derived seed,
//! the auxiliary-threshold draw on stream 1, and bandwidth cross-validation
//! on stream 2. Workers can run in any order and any number; records are
//! sorted by (cell, rep) before aggregation, so output is identical for any
//! thread count.

use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtsir::{
    default_slice_counts, dtsir_fit, screened_sir_fit, sure_baseline, DtSirConfig,
    ThresholdSource,
};
use crate::error::{Error, Result};
use crate::metrics::{subspace_distance, vector_angle, DistanceNorm, Subspace};
use crate::simgen::{generate, GroundTruth, Setting, SettingSpec, DEFAULT_RHO};
use crate::sir::{sir_fit, Bandwidth, CovarianceSpec, SirConfig};
use crate::slicing::Dataset;

/// splitmix64 step; the standard 64-bit mixing finalizer.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic seed for (base, cell, rep).
pub fn derive_seed(base: u64, cell: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ cell) ^ rep)
}

/// Method to evaluate in a table or timing cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MethodSpec {
    /// Screen by the slice-mean variance statistic, then SIR.
    #[serde(rename = "dtsir", alias = "dt_sir")]
    DtSir {
        #[serde(default)]
        h_screen: Option<usize>,
        #[serde(default)]
        h_sir: Option<usize>,
        #[serde(default)]
        threshold: Option<ThresholdSource>,
        #[serde(default)]
        covariance: Option<CovarianceSpec>,
        #[serde(default)]
        ridge: f64,
    },
    /// SIR restricted to the true active coordinates (an oracle screen).
    SirOracle {
        #[serde(default)]
        h_sir: Option<usize>,
        #[serde(default)]
        covariance: Option<CovarianceSpec>,
        #[serde(default)]
        ridge: f64,
    },
    /// Marginal-correlation screening baseline, then SIR.
    SureSir {
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        h_sir: Option<usize>,
        #[serde(default)]
        covariance: Option<CovarianceSpec>,
        #[serde(default)]
        ridge: f64,
    },
    /// Plain SIR with the full sample covariance (no sparsity handling).
    SirFull {
        #[serde(default)]
        h: Option<usize>,
        #[serde(default)]
        ridge: f64,
    },
}

impl MethodSpec {
    pub fn dtsir_default() -> Self {
        MethodSpec::DtSir {
            h_screen: None,
            h_sir: None,
            threshold: None,
            covariance: None,
            ridge: 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::DtSir { .. } => "dtsir",
            MethodSpec::SirOracle { .. } => "sir_oracle",
            MethodSpec::SureSir { .. } => "sure_sir",
            MethodSpec::SirFull { .. } => "sir_full",
        }
    }
}

/// One cell of a table or timing grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableCell {
    pub setting: Setting,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_rho_value")]
    pub rho: f64,
    pub method: MethodSpec,
}

fn default_rho_value() -> f64 {
    DEFAULT_RHO
}

/// Table experiment: grid of cells, each replicated `reps` times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSpec {
    pub cells: Vec<TableCell>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_norm")]
    pub norm: DistanceNorm,
    #[serde(default)]
    pub threads: usize,
}

fn default_norm() -> DistanceNorm {
    DistanceNorm::Frobenius
}

/// Phase study at fixed ratios: angle of the SIR direction against the true
/// direction in the linear model, as dimension grows along each ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseFixedSpec {
    pub rho_values: Vec<f64>,
    pub p_grid: Vec<usize>,
    pub h: usize,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

/// Phase sweep: ratio varies over a grid at fixed n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseSweepSpec {
    pub n: usize,
    pub h: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_step: f64,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

/// Timing grid: one warmup plus one timed replication per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingSpec {
    pub cells: Vec<TableCell>,
    pub seed: u64,
}

/// One replication record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Record {
    pub cell_id: String,
    pub setting: String,
    pub n: usize,
    pub p: usize,
    pub method: String,
    pub rep: usize,
    /// Metric value; None when the replication failed.
    pub metric: Option<f64>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-cell aggregate over successful replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub cell_id: String,
    pub mean: f64,
    pub standard_error: f64,
    pub count: usize,
    pub failures: usize,
    /// False when every replication of the cell failed.
    pub valid: bool,
}

/// Skipped cell with the reason (e.g. a ratio that makes n < H).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedCell {
    pub cell_id: String,
    pub reason: String,
}

/// Execution environment block echoed into result files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentInfo {
    pub rng_algorithm: String,
    pub threads: usize,
    pub machine: String,
    pub seed: u64,
}

impl EnvironmentInfo {
    fn new(seed: u64, threads: usize) -> Self {
        EnvironmentInfo {
            rng_algorithm: "ChaCha8 (streams: 0=data, 1=auxiliary threshold, 2=bandwidth CV); \
                            standard normals via rand_distr ziggurat"
                .to_string(),
            threads: if threads == 0 {
                std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
            } else {
                threads
            },
            machine: format!("{}-{}", std::env::consts::OS, std::env::consts::ARCH),
            seed,
        }
    }
}

/// Result of any experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
    pub skipped: Vec<SkippedCell>,
    pub environment: EnvironmentInfo,
    /// Spearman rank correlation between the sweep parameter and the
    /// per-cell mean metric; only attached by the phase sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman: Option<f64>,
}

impl ExperimentResult {
    /// Mean metric of a cell by id.
    pub fn cell_mean(&self, cell_id: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.cell_id == cell_id && a.valid)
            .map(|a| a.mean)
    }
}

fn run_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool construction failed: {e}")))?;
    Ok(pool.install(job))
}

/// Build the per-replication estimate for a method and return the estimated
/// basis (p x d).
fn estimate_basis(
    cell: &TableCell,
    data: &Dataset,
    truth: &GroundTruth,
    rep_seed: u64,
) -> Result<Array2<f64>> {
    let n = data.n();
    let d = truth.d;
    let (default_h_screen, default_h_sir) = default_slice_counts(n);
    match &cell.method {
        MethodSpec::DtSir {
            h_screen,
            h_sir,
            threshold,
            covariance,
            ridge,
        } => {
            let cfg = DtSirConfig {
                h_screen: h_screen.unwrap_or(default_h_screen),
                h_sir: h_sir.unwrap_or(default_h_sir),
                d,
                threshold: threshold
                    .clone()
                    .unwrap_or(ThresholdSource::Auxiliary { p_prime: None }),
                covariance: covariance
                    .clone()
                    .unwrap_or_else(|| default_covariance(rep_seed)),
                ridge: *ridge,
            };
            let mut rng = fit_rng(rep_seed);
            Ok(dtsir_fit(data, &cfg, &mut rng)?.beta_hat)
        }
        MethodSpec::SirOracle {
            h_sir,
            covariance,
            ridge,
        } => screened_sir_fit(
            data,
            &truth.active,
            h_sir.unwrap_or(default_h_sir),
            d,
            &covariance
                .clone()
                .unwrap_or_else(|| default_covariance(rep_seed)),
            *ridge,
        ),
        MethodSpec::SureSir {
            gamma,
            h_sir,
            covariance,
            ridge,
        } => {
            let gamma = gamma.unwrap_or(0.01);
            let keep = ((gamma * n as f64).floor() as usize).max(d).min(data.p());
            let mut kept = sure_baseline(data, keep)?;
            kept.sort_unstable();
            screened_sir_fit(
                data,
                &kept,
                h_sir.unwrap_or(default_h_sir),
                d,
                &covariance
                    .clone()
                    .unwrap_or_else(|| default_covariance(rep_seed)),
                *ridge,
            )
        }
        MethodSpec::SirFull { h, ridge } => {
            let cfg = SirConfig::new(h.unwrap_or(default_h_sir), d)
                .with_covariance(CovarianceSpec::Sample)
                .with_ridge(*ridge);
            Ok(sir_fit(data, &cfg)?.beta_hat)
        }
    }
}

fn default_covariance(rep_seed: u64) -> CovarianceSpec {
    CovarianceSpec::Banded(Bandwidth::CrossValidated {
        candidates: None,
        splits: 10,
        seed: rep_seed,
    })
}

fn fit_rng(rep_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    rng.set_stream(1);
    rng
}

fn cell_id(idx: usize, cell: &TableCell) -> String {
    format!(
        "c{idx}:{}-n{}-p{}-{}",
        cell.setting,
        cell.n,
        cell.p,
        cell.method.name()
    )
}

/// Distance-table experiment: per replication, generate data, fit the
/// method, and measure the subspace distance to the truth.
pub fn run_table(spec: &TableSpec) -> Result<ExperimentResult> {
    if spec.cells.is_empty() {
        return Err(Error::invalid("experiment grid is empty"));
    }
    if spec.reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    let norm = spec.norm;
    let tasks: Vec<(usize, usize)> = (0..spec.cells.len())
        .flat_map(|c| (0..spec.reps).map(move |r| (c, r)))
        .collect();
    let mut indexed: Vec<(usize, Record)> = run_pool(spec.threads, || {
        tasks
            .par_iter()
            .enumerate()
            .map(|(task, &(c, r))| {
                let cell = &spec.cells[c];
                let rep_seed = derive_seed(spec.seed, c as u64, r as u64);
                let started = Instant::now();
                let outcome = table_replication(cell, rep_seed, norm);
                let seconds = started.elapsed().as_secs_f64();
                let (metric, error) = match outcome {
                    Ok(m) => (Some(m), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                let record = Record {
                    cell_id: cell_id(c, cell),
                    setting: cell.setting.to_string(),
                    n: cell.n,
                    p: cell.p,
                    method: cell.method.name().to_string(),
                    rep: r,
                    metric,
                    seconds,
                    error,
                };
                (task, record)
            })
            .collect()
    })?;
    indexed.sort_by_key(|(task, _)| *task);
    let records: Vec<Record> = indexed.into_iter().map(|(_, r)| r).collect();
    let aggregates = aggregate(&records);
    Ok(ExperimentResult {
        records,
        aggregates,
        skipped: Vec::new(),
        environment: EnvironmentInfo::new(spec.seed, spec.threads),
        spearman: None,
    })
}

fn table_replication(cell: &TableCell, rep_seed: u64, norm: DistanceNorm) -> Result<f64> {
    let gen_spec = SettingSpec::new(cell.setting, cell.n, cell.p, cell.rho, rep_seed);
    let (data, truth) = generate(&gen_spec)?;
    let beta = estimate_basis(cell, &data, &truth, rep_seed)?;
    let estimated = Subspace::new(beta)?;
    let target = Subspace::new(truth.v_true.clone())?;
    subspace_distance(&estimated, &target, norm)
}

/// Expected-angle experiment on the linear model for fixed ratios p/n.
pub fn run_phase_fixed_rho(spec: &PhaseFixedSpec) -> Result<ExperimentResult> {
    if spec.rho_values.is_empty() || spec.p_grid.is_empty() {
        return Err(Error::invalid("phase grid is empty"));
    }
    if spec.reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for &rho in &spec.rho_values {
        if rho <= 0.0 {
            return Err(Error::invalid("phase ratios must be positive"));
        }
        for &p in &spec.p_grid {
            let n = (p as f64 / rho).round() as usize;
            let id = format!("rho{rho}-p{p}");
            if n < spec.h.max(2) {
                skipped.push(SkippedCell {
                    cell_id: id,
                    reason: format!("n={n} below slice count H={}", spec.h),
                });
            } else {
                cells.push((rho, p, n));
            }
        }
    }
    let records = phase_records(&cells, spec.h, spec.reps, spec.seed, spec.threads)?;
    let aggregates = aggregate(&records);
    Ok(ExperimentResult {
        records,
        aggregates,
        skipped,
        environment: EnvironmentInfo::new(spec.seed, spec.threads),
        spearman: None,
    })
}

/// Expected-angle sweep over a ratio grid at fixed n, with the Spearman
/// rank correlation between ratio and mean angle attached.
pub fn run_phase_sweep(spec: &PhaseSweepSpec) -> Result<ExperimentResult> {
    if spec.rho_step <= 0.0 || spec.rho_min <= 0.0 || spec.rho_max < spec.rho_min {
        return Err(Error::invalid("invalid rho grid"));
    }
    if spec.reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    let mut rho = spec.rho_min;
    let mut step_idx = 0usize;
    while rho <= spec.rho_max + 1e-12 {
        let p = (rho * spec.n as f64).round() as usize;
        let id = format!("rho{rho:.4}-p{p}");
        if p < 1 {
            skipped.push(SkippedCell {
                cell_id: id,
                reason: format!("p={p} below 1"),
            });
        } else {
            cells.push((rho, p, spec.n));
        }
        step_idx += 1;
        rho = spec.rho_min + step_idx as f64 * spec.rho_step;
    }
    let records = phase_records(&cells, spec.h, spec.reps, spec.seed, spec.threads)?;
    let aggregates = aggregate(&records);

    // Spearman between rho and the per-cell mean angle, in grid order.
    let mut rhos = Vec::new();
    let mut means = Vec::new();
    for (idx, &(rho, _, _)) in cells.iter().enumerate() {
        let id = phase_cell_id(idx, rho, cells[idx].1);
        if let Some(a) = aggregates.iter().find(|a| a.cell_id == id && a.valid) {
            rhos.push(rho);
            means.push(a.mean);
        }
    }
    let spearman = spearman_rank_correlation(&rhos, &means);
    Ok(ExperimentResult {
        records,
        aggregates,
        skipped,
        environment: EnvironmentInfo::new(spec.seed, spec.threads),
        spearman,
    })
}

fn phase_cell_id(idx: usize, rho: f64, p: usize) -> String {
    format!("c{idx}:linear-rho{rho:.4}-p{p}-sir")
}

fn phase_records(
    cells: &[(f64, usize, usize)],
    h: usize,
    reps: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<Record>> {
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();
    let mut indexed: Vec<(usize, Record)> = run_pool(threads, || {
        tasks
            .par_iter()
            .enumerate()
            .map(|(task, &(c, r))| {
                let (rho, p, n) = cells[c];
                let rep_seed = derive_seed(seed, c as u64, r as u64);
                let started = Instant::now();
                let outcome = phase_replication(n, p, h, rep_seed);
                let seconds = started.elapsed().as_secs_f64();
                let (metric, error) = match outcome {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                let record = Record {
                    cell_id: phase_cell_id(c, rho, p),
                    setting: Setting::Linear.to_string(),
                    n,
                    p,
                    method: "sir".to_string(),
                    rep: r,
                    metric,
                    seconds,
                    error,
                };
                (task, record)
            })
            .collect()
    })?;
    indexed.sort_by_key(|(task, _)| *task);
    Ok(indexed.into_iter().map(|(_, r)| r).collect())
}

/// One phase replication: the angle between the leading SIR eigenvector and
/// the true direction in the linear model. The covariance step is skipped
/// (the design is isotropic), matching the estimator whose breakdown the
/// phase studies measure.
fn phase_replication(n: usize, p: usize, h: usize, rep_seed: u64) -> Result<f64> {
    let gen_spec = SettingSpec::new(Setting::Linear, n, p, 0.0, rep_seed);
    let (data, truth) = generate(&gen_spec)?;
    let cfg = SirConfig::new(h.min(n), 1).with_covariance(CovarianceSpec::Identity);
    let est = sir_fit(&data, &cfg)?;
    vector_angle(
        &est.beta_hat.column(0),
        &truth.v_true.column(0),
    )
}

/// Timing grid: per cell, one untimed warmup then one timed replication.
/// The metric is wall-clock seconds for the fit alone (generation excluded).
pub fn run_timing(spec: &TimingSpec) -> Result<ExperimentResult> {
    if spec.cells.is_empty() {
        return Err(Error::invalid("timing grid is empty"));
    }
    let mut records = Vec::new();
    for (c, cell) in spec.cells.iter().enumerate() {
        let rep_seed = derive_seed(spec.seed, c as u64, 0);
        let gen_spec = SettingSpec::new(cell.setting, cell.n, cell.p, cell.rho, rep_seed);
        let outcome = (|| -> Result<f64> {
            let (data, truth) = generate(&gen_spec)?;
            // warmup
            let _ = estimate_basis(cell, &data, &truth, rep_seed)?;
            let started = Instant::now();
            let _ = estimate_basis(cell, &data, &truth, rep_seed)?;
            Ok(started.elapsed().as_secs_f64())
        })();
        let (metric, seconds, error) = match outcome {
            Ok(secs) => (Some(secs), secs, None),
            Err(e) => (None, 0.0, Some(e.to_string())),
        };
        records.push(Record {
            cell_id: cell_id(c, cell),
            setting: cell.setting.to_string(),
            n: cell.n,
            p: cell.p,
            method: cell.method.name().to_string(),
            rep: 0,
            metric,
            seconds,
            error,
        });
    }
    let aggregates = aggregate(&records);
    Ok(ExperimentResult {
        records,
        aggregates,
        skipped: Vec::new(),
        environment: EnvironmentInfo::new(spec.seed, 1),
        spearman: None,
    })
}

/// Mean and standard error per cell; cells whose replications all failed
/// are marked invalid.
fn aggregate(records: &[Record]) -> Vec<Aggregate> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if order.last() != Some(&r.cell_id.as_str()) && !order.contains(&r.cell_id.as_str()) {
            order.push(&r.cell_id);
        }
    }
    order
        .into_iter()
        .map(|id| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.cell_id == id)
                .filter_map(|r| r.metric)
                .collect();
            let failures = records
                .iter()
                .filter(|r| r.cell_id == id && r.metric.is_none())
                .count();
            let count = values.len();
            if count == 0 {
                Aggregate {
                    cell_id: id.to_string(),
                    mean: f64::NAN,
                    standard_error: f64::NAN,
                    count,
                    failures,
                    valid: false,
                }
            } else {
                let mean = values.iter().sum::<f64>() / count as f64;
                let se = if count > 1 {
                    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (count - 1) as f64;
                    (var / count as f64).sqrt()
                } else {
                    0.0
                };
                Aggregate {
                    cell_id: id.to_string(),
                    mean,
                    standard_error: se,
                    count,
                    failures,
                    valid: true,
                }
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Two-sample comparison
// ---------------------------------------------------------------------------

/// Welch's unequal-variance t test.
#[derive(Debug, Clone, Copy)]
pub struct WelchTest {
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
}

/// Two-sided Welch t test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("each sample needs at least 2 observations"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let sa = va / na;
    let sb = vb / nb;
    let se_sq = sa + sb;
    if se_sq == 0.0 {
        return Err(Error::invalid(
            "undefined test: both samples have zero variance",
        ));
    }
    let t = (ma - mb) / se_sq.sqrt();
    let df = se_sq * se_sq / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p_value = if t == 0.0 {
        1.0
    } else {
        let x = df / (df + t * t);
        regularized_incomplete_beta(0.5 * df, 0.5, x)
    };
    Ok(WelchTest {
        t,
        degrees_of_freedom: df,
        p_value,
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Regularized incomplete beta I_x(a, b) via the continued fraction.
fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Lentz's algorithm for the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos log-gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Spearman rank correlation with average ranks for ties. Returns None for
/// fewer than 2 points or zero rank variance.
pub fn spearman_rank_correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

// ---------------------------------------------------------------------------
// Result emission
// ---------------------------------------------------------------------------

/// CSV with one row per replication record.
pub fn records_to_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("cell_id,setting,n,p,method,rep,metric,seconds\n");
    for r in &result.records {
        let metric = r.metric.map(|m| m.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.cell_id, r.setting, r.n, r.p, r.method, r.rep, metric, r.seconds
        ));
    }
    out
}

/// JSON document with the spec echo, environment, aggregates and failures.
pub fn result_to_json<S: Serialize>(spec: &S, result: &ExperimentResult) -> Result<String> {
    let doc = serde_json::json!({
        "spec": spec,
        "environment": result.environment,
        "aggregates": result.aggregates,
        "skipped": result.skipped,
        "spearman": result.spearman,
        "failures": result
            .records
            .iter()
            .filter(|r| r.error.is_some())
            .map(|r| serde_json::json!({
                "cell_id": r.cell_id,
                "rep": r.rep,
                "error": r.error,
            }))
            .collect::<Vec<_>>(),
    });
    serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(format!("json error: {e}")))
}

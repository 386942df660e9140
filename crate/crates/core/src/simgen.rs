//! Seeded generators for the benchmark settings, the linear
//! phase-transition model, and structured covariance families.
//!
//! Everything is a pure function of its spec: the RNG is ChaCha8 seeded
//! from the spec's 64-bit seed, standard normals come from the ziggurat in
//! `rand_distr`, and the draw order is fixed (predictor matrix row by row,
//! then the noise vector), so outputs are bit-reproducible.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue_est, SpdFactor};
use crate::slicing::Dataset;

/// Default correlation parameter for the structured covariance settings.
/// Logged with every run that uses it.
pub const DEFAULT_RHO: f64 = 0.5;

/// Structured covariance families used by the generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceFamily {
    Identity,
    /// Unit diagonal, rho on the first off-diagonal, rho^2 on the second,
    /// zero beyond.
    Tridiag(f64),
    /// Kronecker product B (x) I_{p/10} with B the 10 x 10 AR(1) matrix
    /// b_ij = rho^|i-j|; requires p divisible by 10.
    BlockAr1(f64),
    /// Dense AR(1): sigma_ij = rho^|i-j|.
    Ar1(f64),
}

/// Benchmark generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum Setting {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    #[serde(rename = "linear", alias = "Linear")]
    Linear,
}

impl Setting {
    pub const ALL: [Setting; 8] = [
        Setting::I,
        Setting::II,
        Setting::III,
        Setting::IV,
        Setting::V,
        Setting::VI,
        Setting::VII,
        Setting::Linear,
    ];

    /// Smallest p with all active coordinates present.
    pub fn min_p(self) -> usize {
        match self {
            Setting::I => 4,
            Setting::II => 9,
            Setting::III => 20,
            Setting::IV => 3,
            Setting::V | Setting::VI | Setting::VII => 9,
            Setting::Linear => 1,
        }
    }

    pub fn structural_dim(self) -> usize {
        match self {
            Setting::IV | Setting::Linear => 1,
            _ => 2,
        }
    }

    pub fn noise_scale(self) -> f64 {
        match self {
            Setting::I | Setting::II | Setting::IV => 0.5,
            _ => 1.0,
        }
    }

    pub fn covariance_family(self, rho: f64) -> CovarianceFamily {
        match self {
            Setting::I | Setting::II | Setting::III | Setting::Linear => {
                CovarianceFamily::Identity
            }
            Setting::IV | Setting::VI => CovarianceFamily::Tridiag(rho),
            Setting::V => CovarianceFamily::BlockAr1(rho),
            Setting::VII => CovarianceFamily::Ar1(rho),
        }
    }

    pub fn parse(s: &str) -> Result<Setting> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Setting::I),
            "II" | "2" => Ok(Setting::II),
            "III" | "3" => Ok(Setting::III),
            "IV" | "4" => Ok(Setting::IV),
            "V" | "5" => Ok(Setting::V),
            "VI" | "6" => Ok(Setting::VI),
            "VII" | "7" => Ok(Setting::VII),
            "LINEAR" => Ok(Setting::Linear),
            other => Err(Error::invalid(format!("unknown setting '{other}'"))),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Setting::I => "I",
            Setting::II => "II",
            Setting::III => "III",
            Setting::IV => "IV",
            Setting::V => "V",
            Setting::VI => "VI",
            Setting::VII => "VII",
            Setting::Linear => "linear",
        };
        write!(f, "{s}")
    }
}

/// Fully specified generator input.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SettingSpec {
    pub setting: Setting,
    pub n: usize,
    pub p: usize,
    /// Correlation parameter for the structured-covariance settings;
    /// ignored by the identity-covariance ones.
    pub rho: f64,
    pub seed: u64,
}

impl SettingSpec {
    pub fn new(setting: Setting, n: usize, p: usize, rho: f64, seed: u64) -> Self {
        SettingSpec {
            setting,
            n,
            p,
            rho,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("need n >= 2, got {}", self.n)));
        }
        let min_p = self.setting.min_p();
        if self.p < min_p {
            return Err(Error::invalid(format!(
                "setting {} needs p >= {min_p}, got {}",
                self.setting, self.p
            )));
        }
        if self.setting == Setting::V && self.p % 10 != 0 {
            return Err(Error::invalid(format!(
                "setting V needs p divisible by 10, got {}",
                self.p
            )));
        }
        if !matches!(
            self.setting.covariance_family(self.rho),
            CovarianceFamily::Identity
        ) && self.rho.abs() >= 1.0
        {
            return Err(Error::invalid(format!(
                "correlation parameter must satisfy |rho| < 1, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// True central space and active coordinates behind a generated dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// p x d basis of the true central space.
    pub v_true: Array2<f64>,
    pub d: usize,
    /// Coordinates that enter the link function.
    pub active: Vec<usize>,
}

/// Build a structured covariance matrix.
pub fn build_covariance(family: CovarianceFamily, p: usize) -> Result<Array2<f64>> {
    let rho = match family {
        CovarianceFamily::Identity => 0.0,
        CovarianceFamily::Tridiag(r) | CovarianceFamily::BlockAr1(r) | CovarianceFamily::Ar1(r) => {
            r
        }
    };
    if rho.abs() >= 1.0 {
        return Err(Error::invalid(format!(
            "correlation parameter must satisfy |rho| < 1, got {rho}"
        )));
    }
    match family {
        CovarianceFamily::Identity => Ok(Array2::eye(p)),
        CovarianceFamily::Tridiag(rho) => {
            let mut s = Array2::eye(p);
            for i in 0..p {
                if i + 1 < p {
                    s[[i, i + 1]] = rho;
                    s[[i + 1, i]] = rho;
                }
                if i + 2 < p {
                    s[[i, i + 2]] = rho * rho;
                    s[[i + 2, i]] = rho * rho;
                }
            }
            Ok(s)
        }
        CovarianceFamily::BlockAr1(rho) => {
            if p % 10 != 0 {
                return Err(Error::invalid(format!(
                    "block covariance needs p divisible by 10, got {p}"
                )));
            }
            let m = p / 10;
            let mut s = Array2::zeros((p, p));
            for a in 0..p {
                for b in 0..p {
                    if a % m == b % m {
                        let bi = a / m;
                        let bj = b / m;
                        s[[a, b]] = rho.powi(bi.abs_diff(bj) as i32);
                    }
                }
            }
            Ok(s)
        }
        CovarianceFamily::Ar1(rho) => {
            let mut s = Array2::zeros((p, p));
            for i in 0..p {
                for j in 0..p {
                    s[[i, j]] = rho.powi(i.abs_diff(j) as i32);
                }
            }
            Ok(s)
        }
    }
}

/// Draw n rows from N(0, Sigma) through the Cholesky factor. Rows of the
/// standard-normal matrix are drawn row-major; x_i = L z_i.
pub fn gaussian_sampler(
    sigma: &ArrayView2<f64>,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Array2<f64>> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::invalid("covariance must be square"));
    }
    let factor = SpdFactor::factor(sigma, 0.0, 0.0).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::NotPositiveDefinite {
            min_eigenvalue: min_eigenvalue_est(sigma),
        },
        other => other,
    })?;
    let mut z = Array2::zeros((n, p));
    for t in 0..n {
        for j in 0..p {
            z[[t, j]] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    factor.transform_rows_in_place(&mut z);
    Ok(z)
}

fn standard_normal_matrix(n: usize, p: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut z = Array2::zeros((n, p));
    for t in 0..n {
        for j in 0..p {
            z[[t, j]] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    z
}

fn ground_truth(setting: Setting, p: usize) -> GroundTruth {
    let d = setting.structural_dim();
    let mut v = Array2::zeros((p, d));
    let active: Vec<usize> = match setting {
        Setting::I => {
            v[[0, 0]] = 1.0;
            v[[1, 0]] = 1.0;
            v[[2, 1]] = 1.0;
            v[[3, 1]] = 1.0;
            (0..4).collect()
        }
        Setting::II | Setting::V | Setting::VI | Setting::VII => {
            for j in 0..7 {
                v[[j, 0]] = 1.0;
            }
            v[[7, 1]] = 1.0;
            v[[8, 1]] = 1.0;
            (0..9).collect()
        }
        Setting::III => {
            for j in 0..10 {
                v[[j, 0]] = 1.0;
            }
            for j in 10..20 {
                v[[j, 1]] = 1.0;
            }
            (0..20).collect()
        }
        Setting::IV => {
            v[[0, 0]] = 1.0;
            v[[1, 0]] = 1.0;
            v[[2, 0]] = 1.0;
            (0..3).collect()
        }
        Setting::Linear => {
            v[[0, 0]] = 1.0;
            vec![0]
        }
    };
    GroundTruth { v_true: v, d, active }
}

fn link(setting: Setting, row: &[f64]) -> f64 {
    match setting {
        Setting::I => (row[0] + row[1]).sin() + (row[2] + row[3]).exp(),
        Setting::II | Setting::V | Setting::VI | Setting::VII => {
            let s: f64 = row[..7].iter().sum();
            s * (row[7] + row[8]).exp()
        }
        Setting::III => {
            let s1: f64 = row[..10].iter().sum();
            let s2: f64 = row[10..20].iter().sum();
            s1 * s2.exp()
        }
        Setting::IV => {
            let s = row[0] + row[1] + row[2];
            s * s * s / 2.0
        }
        Setting::Linear => row[0],
    }
}

/// Generate a dataset and its ground truth. Bit-reproducible for a fixed
/// spec: ChaCha8 seeded from `spec.seed`, predictors drawn first (row by
/// row), then the noise vector.
pub fn generate(spec: &SettingSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let family = spec.setting.covariance_family(spec.rho);
    let x = match family {
        CovarianceFamily::Identity => standard_normal_matrix(spec.n, spec.p, &mut rng),
        _ => {
            let sigma = build_covariance(family, spec.p)?;
            gaussian_sampler(&sigma.view(), spec.n, &mut rng)?
        }
    };
    let noise = spec.setting.noise_scale();
    let mut y = Array1::zeros(spec.n);
    for t in 0..spec.n {
        let row = x.row(t);
        let eps: f64 = rng.sample(StandardNormal);
        y[t] = link(spec.setting, row.as_slice().expect("row-major")) + noise * eps;
    }
    let truth = ground_truth(spec.setting, spec.p);
    Ok((Dataset::new(y, x)?, truth))
}

// ---------------------------------------------------------------------------
// CSV import/export. The format is deliberately plain: a header
// `y,x1,...,xp` and one row per sample, with floats printed in Rust's
// shortest round-trip decimal form.
// ---------------------------------------------------------------------------

/// Write a dataset as CSV.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push('y');
    for j in 1..=data.p() {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    let x = data.x();
    for t in 0..data.n() {
        out.push_str(&format!("{}", data.y()[t]));
        for j in 0..data.p() {
            out.push_str(&format!(",{}", x[[t, j]]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write a basis matrix (p x d) as CSV with header v1..vd.
pub fn write_basis_csv(basis: &ArrayView2<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    let d = basis.ncols();
    for j in 1..=d {
        if j > 1 {
            out.push(',');
        }
        out.push_str(&format!("v{j}"));
    }
    out.push('\n');
    for i in 0..basis.nrows() {
        for j in 0..d {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", basis[[i, j]]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".to_string(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"y") || cols.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header starting with 'y,x1,...', got '{header}'"),
        });
    }
    let p = cols.len() - 1;
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {} fields, found {}", p + 1, fields.len()),
            });
        }
        let mut parsed = Vec::with_capacity(p + 1);
        for f in &fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("cannot parse '{f}' as a number"),
            })?;
            parsed.push(v);
        }
        ys.push(parsed[0]);
        xs.extend_from_slice(&parsed[1..]);
    }
    let n = ys.len();
    let x = Array2::from_shape_vec((n, p), xs)
        .map_err(|e| Error::invalid(format!("shape error: {e}")))?;
    Dataset::new(Array1::from_vec(ys), x)
}

/// Read a basis written by [`write_basis_csv`].
pub fn read_basis_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".to_string(),
    })?;
    let d = header.split(',').count();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {d} fields, found {}", fields.len()),
            });
        }
        for f in &fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("cannot parse '{f}' as a number"),
            })?;
            rows.push(v);
        }
    }
    let p = rows.len() / d;
    Array2::from_shape_vec((p, d), rows).map_err(|e| Error::invalid(format!("shape error: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_small_matrix() {
        let s = build_covariance(CovarianceFamily::Ar1(0.5), 3).unwrap();
        let expect = ndarray::array![
            [1.0, 0.5, 0.25],
            [0.5, 1.0, 0.5],
            [0.25, 0.5, 1.0]
        ];
        assert_eq!(s, expect);
    }

    #[test]
    fn tridiag_zero_rho_is_identity() {
        let s = build_covariance(CovarianceFamily::Tridiag(0.0), 5).unwrap();
        assert_eq!(s, Array2::<f64>::eye(5));
    }

    #[test]
    fn block_covariance_matches_kronecker_loop() {
        let rho = 0.4;
        let p = 20;
        let m = p / 10;
        let s = build_covariance(CovarianceFamily::BlockAr1(rho), p).unwrap();
        // oracle: explicit Kronecker product B (x) I_m
        for bi in 0..10 {
            for bj in 0..10 {
                let b = rho.powi((bi as i32 - bj as i32).abs());
                for ki in 0..m {
                    for kj in 0..m {
                        let expect = if ki == kj { b } else { 0.0 };
                        assert_eq!(s[[bi * m + ki, bj * m + kj]], expect);
                    }
                }
            }
        }
    }

    #[test]
    fn rho_out_of_range_rejected() {
        assert!(build_covariance(CovarianceFamily::Ar1(1.0), 4).is_err());
        assert!(build_covariance(CovarianceFamily::Tridiag(-1.2), 4).is_err());
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let spec = SettingSpec::new(Setting::Linear, 4, 2, 0.0, 99);
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a.y().to_vec(), b.y().to_vec());
        assert_eq!(a.x(), b.x());
    }

    #[test]
    fn linear_model_response_is_first_coordinate_plus_noise() {
        let spec = SettingSpec::new(Setting::Linear, 200, 3, 0.0, 5);
        let (data, truth) = generate(&spec).unwrap();
        assert_eq!(truth.active, vec![0]);
        // y - x1 should be standard-normal noise: variance near 1
        let resid: Vec<f64> = (0..data.n())
            .map(|t| data.y()[t] - data.x()[[t, 0]])
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let var =
            resid.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (resid.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.35, "residual variance {var}");
    }

    #[test]
    fn setting_one_active_set() {
        let spec = SettingSpec::new(Setting::I, 50, 10, 0.0, 1);
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth.active, vec![0, 1, 2, 3]);
        assert_eq!(truth.d, 2);
    }

    #[test]
    fn setting_five_requires_divisible_p() {
        let spec = SettingSpec::new(Setting::V, 50, 15, 0.5, 1);
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn empty_sample_is_allowed() {
        let sigma = Array2::eye(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = gaussian_sampler(&sigma.view(), 0, &mut rng).unwrap();
        assert_eq!(x.nrows(), 0);
    }

    #[test]
    fn sampler_rejects_non_spd() {
        let sigma = ndarray::array![[1.0, 2.0], [2.0, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match gaussian_sampler(&sigma.view(), 5, &mut rng) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!(min_eigenvalue < 0.0, "reported min eig {min_eigenvalue}");
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = SettingSpec::new(Setting::IV, 20, 5, 0.3, 7);
        let (data, _) = generate(&spec).unwrap();
        let dir = std::env::temp_dir().join(format!("sdr_csv_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("data.csv");
        write_dataset_csv(&data, &path).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(data.y().to_vec(), back.y().to_vec());
        assert_eq!(data.x(), back.x());
        std::fs::remove_dir_all(&dir).ok();
    }
}

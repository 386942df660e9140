//! Sliced inverse regression: the slice-mean outer-product estimator, its
//! top eigenspace, and the central-space estimate obtained by applying the
//! inverse covariance.

use ndarray::{Array2, ArrayView2};

use crate::covariance::{
    banded_sample_cov, default_bandwidth_candidates, factor_banded_with_floor, factor_spd,
    sample_cov, select_bandwidth,
};
use crate::error::{Error, Result};
use crate::linalg::{eigen_sym, fix_column_signs, normalize_columns, orthonormalize_columns};
use crate::slicing::{center, slice_by_response, slice_means, Dataset, SliceMeans};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Bandwidth choice for the banded covariance mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(usize),
    /// Random-split risk minimization over `candidates` (default ladder when
    /// None). The seed makes the fit a pure function of its configuration.
    CrossValidated {
        candidates: Option<Vec<usize>>,
        splits: usize,
        seed: u64,
    },
}

impl Bandwidth {
    pub fn cross_validated(seed: u64) -> Self {
        Bandwidth::CrossValidated {
            candidates: None,
            splits: 10,
            seed,
        }
    }
}

/// Which covariance estimate multiplies the eigenspace in the final step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSpec {
    /// Plain sample covariance; requires n > p unless a ridge is set.
    Sample,
    Banded(Bandwidth),
    /// Skip the covariance step entirely (treat it as the identity).
    Identity,
}

/// How the central-space basis is extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaMode {
    /// Eigendecompose the slice-mean estimator first, then apply the inverse
    /// covariance to the eigenvectors.
    InverseAfterEigen,
    /// Solve the generalized problem directly: top generalized eigenvectors
    /// of the slice-mean estimator against the covariance.
    GeneralizedEigen,
}

/// Configuration for a SIR fit.
#[derive(Debug, Clone)]
pub struct SirConfig {
    pub h: usize,
    pub d: usize,
    pub covariance: CovarianceSpec,
    /// Opt-in diagonal regularization added to the covariance before
    /// inversion. Zero by default: a hidden ridge would mask exactly the
    /// failure regimes these estimators are probed in.
    pub ridge: f64,
    pub beta_mode: BetaMode,
}

impl SirConfig {
    pub fn new(h: usize, d: usize) -> Self {
        SirConfig {
            h,
            d,
            covariance: CovarianceSpec::Sample,
            ridge: 0.0,
            beta_mode: BetaMode::InverseAfterEigen,
        }
    }

    pub fn with_covariance(mut self, covariance: CovarianceSpec) -> Self {
        self.covariance = covariance;
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn with_beta_mode(mut self, mode: BetaMode) -> Self {
        self.beta_mode = mode;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.h < 2 || self.h > n {
            return Err(Error::invalid(format!(
                "slice count H={} must satisfy 2 <= H <= n={n}",
                self.h
            )));
        }
        if self.d == 0 {
            return Err(Error::invalid("target dimension d must be at least 1"));
        }
        if self.ridge < 0.0 {
            return Err(Error::invalid("ridge must be nonnegative"));
        }
        if self.d + 1 > self.h {
            log::warn!(
                "d={} is at or above the between-slice rank bound H-1={}; \
                 trailing directions are unidentified",
                self.d,
                self.h - 1
            );
        }
        Ok(())
    }
}

/// Result of a SIR fit.
#[derive(Debug, Clone)]
pub struct SirEstimate {
    /// Slice-mean outer-product average (p x p, symmetric PSD).
    pub lambda_hat: Array2<f64>,
    /// Top-d eigenvalues, descending.
    pub eigvals: Vec<f64>,
    /// Top-d eigenvectors as columns (p x d, orthonormal).
    pub v_hat: Array2<f64>,
    /// Central-space basis: inverse covariance applied to `v_hat`, columns
    /// renormalized to unit length.
    pub beta_hat: Array2<f64>,
    pub h: usize,
    pub d: usize,
}

/// Slice-mean outer-product average: (1/H) sum_h mean_h mean_h^T, computed
/// as (1/H) M^T M for the H x p slice-mean matrix M.
///
/// Slices are weighted equally (1/H) even when their sizes differ by one
/// sample; a size-weighted average (n_h / n) is the natural alternative but
/// is not what this estimator does.
pub fn lambda_hat(means: &SliceMeans) -> Array2<f64> {
    let m = means.matrix();
    let h = means.h().max(1) as f64;
    let mut out = m.t().dot(&m);
    out.mapv_inplace(|v| v / h);
    // exact symmetry against GEMM roundoff
    let p = out.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (out[[i, j]] + out[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Top-d eigenpairs of a symmetric matrix, eigenvalues descending and each
/// eigenvector's largest-magnitude entry made positive.
pub fn top_d_eigvecs(s: &ArrayView2<f64>, d: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let p = s.nrows();
    if s.ncols() != p {
        return Err(Error::invalid("matrix must be square"));
    }
    if d > p {
        return Err(Error::invalid(format!("d={d} exceeds dimension p={p}")));
    }
    let mut asym = 0.0f64;
    for i in 0..p {
        for j in 0..i {
            asym = asym.max((s[[i, j]] - s[[j, i]]).abs());
        }
    }
    if asym > 1e-8 {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let (vals, vecs) = eigen_sym(s)?;
    let mut top = Array2::zeros((p, d));
    for j in 0..d {
        for i in 0..p {
            top[[i, j]] = vecs[[i, j]];
        }
    }
    fix_column_signs(&mut top);
    Ok((vals[..d].to_vec(), top))
}

/// Top-d eigenpairs of the slice-mean estimator computed through the H x H
/// Gram matrix of the slice means; avoids any p x p eigendecomposition.
/// Exact for eigenvalues above the rank floor; directions of a rank-deficient
/// estimator are completed deterministically from the standard basis.
pub fn top_eigvecs_from_slice_means(
    means: &SliceMeans,
    d: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let m = means.matrix();
    let (h, p) = (means.h(), means.p());
    if d > p {
        return Err(Error::invalid(format!("d={d} exceeds dimension p={p}")));
    }
    let h_f = h as f64;
    let gram = m.dot(&m.t()).mapv(|v| v / h_f);
    let (gvals, gvecs) = eigen_sym(&gram.view())?;
    let scale = gvals.first().copied().unwrap_or(0.0).max(0.0);
    let rank_floor = 1e-12 * scale.max(1e-300);
    let mut eigvals = Vec::with_capacity(d);
    let mut vectors = Array2::zeros((p, d));
    let mut found = 0usize;
    for j in 0..d.min(h) {
        let mu = gvals[j];
        if mu <= rank_floor {
            break;
        }
        // v = M^T u / sqrt(H mu)
        let u = gvecs.column(j);
        let v = m.t().dot(&u);
        let norm = (h_f * mu).sqrt();
        for i in 0..p {
            vectors[[i, found]] = v[i] / norm;
        }
        eigvals.push(mu);
        found += 1;
    }
    // If the estimator's rank fell short of d, pad with deterministic
    // orthonormal directions from the standard basis (eigenvalue 0).
    if found < d {
        complete_with_standard_basis(&mut vectors, found)?;
        eigvals.resize(d, 0.0);
    }
    fix_column_signs(&mut vectors);
    Ok((eigvals, vectors))
}

fn complete_with_standard_basis(vectors: &mut Array2<f64>, found: usize) -> Result<()> {
    let (p, d) = (vectors.nrows(), vectors.ncols());
    let mut filled = found;
    for basis_idx in 0..p {
        if filled == d {
            break;
        }
        // candidate e_{basis_idx} orthogonalized against accepted columns
        let mut cand = vec![0.0f64; p];
        cand[basis_idx] = 1.0;
        for _pass in 0..2 {
            for j in 0..filled {
                let mut dot = 0.0;
                for i in 0..p {
                    dot += cand[i] * vectors[[i, j]];
                }
                for i in 0..p {
                    cand[i] -= dot * vectors[[i, j]];
                }
            }
        }
        let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.5 {
            for i in 0..p {
                vectors[[i, filled]] = cand[i] / norm;
            }
            filled += 1;
        }
    }
    if filled < d {
        return Err(Error::DegenerateSpectrum(format!(
            "could not complete an orthonormal basis of size {d}"
        )));
    }
    Ok(())
}

/// Full SIR fit: center, slice, estimate the conditional-covariance
/// eigenspace, and map it through the inverse covariance.
pub fn sir_fit(data: &Dataset, cfg: &SirConfig) -> Result<SirEstimate> {
    let n = data.n();
    let p = data.p();
    cfg.validate(n)?;
    let (x, _) = center(&data.x());
    let plan = slice_by_response(&data.y(), cfg.h)?;
    let means = slice_means(&x.view(), &plan)?;
    let lambda = lambda_hat(&means);
    let (eigvals, v_hat) = top_eigvecs_from_slice_means(&means, cfg.d)?;

    let beta_hat = match cfg.beta_mode {
        BetaMode::InverseAfterEigen => {
            apply_inverse_covariance(&x.view(), &v_hat, &cfg.covariance, cfg.ridge, n, p)?
        }
        BetaMode::GeneralizedEigen => {
            generalized_beta(&x.view(), &lambda, &cfg.covariance, cfg.ridge, cfg.d, n, p)?
        }
    };

    Ok(SirEstimate {
        lambda_hat: lambda,
        eigvals,
        v_hat,
        beta_hat,
        h: cfg.h,
        d: cfg.d,
    })
}

/// Multiply the inverse covariance into an eigenbasis and renormalize the
/// columns; shared by the plain and screened pipelines.
pub(crate) fn apply_inverse_covariance(
    x_centered: &ArrayView2<f64>,
    v_hat: &Array2<f64>,
    covariance: &CovarianceSpec,
    ridge: f64,
    n: usize,
    p: usize,
) -> Result<Array2<f64>> {
    let mut beta = match covariance {
        CovarianceSpec::Identity => v_hat.clone(),
        CovarianceSpec::Sample => {
            if n <= p && ridge == 0.0 {
                return Err(Error::SingularCovariance(format!(
                    "sample covariance is singular when n={n} <= p={p}; \
                     use banded covariance or set a ridge"
                )));
            }
            let cov = sample_cov(x_centered)?;
            let factor = factor_spd(&cov.sigma.view(), ridge)?;
            factor.solve_matrix(&v_hat.view())
        }
        CovarianceSpec::Banded(bandwidth) => {
            let k = resolve_bandwidth(x_centered, bandwidth, p)?;
            let banded = banded_sample_cov(x_centered, k)?;
            let factor = factor_banded_with_floor(&banded, ridge)?;
            factor.solve_matrix(&v_hat.view())
        }
    };
    normalize_columns(&mut beta);
    Ok(beta)
}

pub(crate) fn resolve_bandwidth(
    x_centered: &ArrayView2<f64>,
    bandwidth: &Bandwidth,
    p: usize,
) -> Result<usize> {
    match bandwidth {
        Bandwidth::Fixed(k) => {
            if *k > p.saturating_sub(1) {
                return Err(Error::invalid(format!(
                    "bandwidth {k} out of range for p={p}"
                )));
            }
            Ok(*k)
        }
        Bandwidth::CrossValidated {
            candidates,
            splits,
            seed,
        } => {
            let ladder = match candidates {
                Some(c) => c.clone(),
                None => default_bandwidth_candidates(p),
            };
            // stream 2 is reserved for bandwidth cross-validation so the
            // splits never replay the data or auxiliary-threshold streams
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(2);
            select_bandwidth(x_centered, &ladder, *splits, &mut rng)
        }
    }
}

/// Generalized route: top-d generalized eigenvectors of the slice-mean
/// estimator against the covariance, via a Cholesky whitening.
fn generalized_beta(
    x_centered: &ArrayView2<f64>,
    lambda: &Array2<f64>,
    covariance: &CovarianceSpec,
    ridge: f64,
    d: usize,
    n: usize,
    p: usize,
) -> Result<Array2<f64>> {
    let factor = match covariance {
        CovarianceSpec::Identity => {
            // whitening is trivial; fall back to the direct eigenbasis
            let (_, v) = top_d_eigvecs(&lambda.view(), d)?;
            return Ok(v);
        }
        CovarianceSpec::Sample => {
            if n <= p && ridge == 0.0 {
                return Err(Error::SingularCovariance(format!(
                    "sample covariance is singular when n={n} <= p={p}; \
                     use banded covariance or set a ridge"
                )));
            }
            let cov = sample_cov(x_centered)?;
            factor_spd(&cov.sigma.view(), ridge)?
        }
        CovarianceSpec::Banded(bandwidth) => {
            let k = resolve_bandwidth(x_centered, bandwidth, p)?;
            let banded = banded_sample_cov(x_centered, k)?;
            factor_banded_with_floor(&banded, ridge)?
        }
    };
    // W = L^{-1} Lambda L^{-T} is symmetric; its top eigenvectors w map back
    // to generalized eigenvectors beta = L^{-T} w.
    let half = factor.solve_lower_matrix(&lambda.view());
    let w = factor.solve_lower_matrix(&half.t().to_owned().view());
    let mut w_sym = w;
    let pn = w_sym.nrows();
    for i in 0..pn {
        for j in 0..i {
            let v = 0.5 * (w_sym[[i, j]] + w_sym[[j, i]]);
            w_sym[[i, j]] = v;
            w_sym[[j, i]] = v;
        }
    }
    let (_, top) = top_d_eigvecs(&w_sym.view(), d)?;
    let mut beta = factor.solve_lower_transpose_matrix(&top.view());
    normalize_columns(&mut beta);
    fix_column_signs(&mut beta);
    Ok(beta)
}

/// Ratio heuristic for the structural dimension: the index with the largest
/// gap ratio between consecutive eigenvalues. A convenience only; the
/// experiment runners always use the configured d.
pub fn eigengap_suggest_d(eigvals: &[f64]) -> Result<usize> {
    if eigvals.len() < 2 {
        return Err(Error::invalid("need at least 2 eigenvalues"));
    }
    for w in eigvals.windows(2) {
        if w[1] > w[0] + 1e-12 {
            return Err(Error::invalid("eigenvalues must be nonincreasing"));
        }
    }
    if eigvals.iter().all(|&v| v < 1e-12) {
        return Err(Error::DegenerateSpectrum(
            "all eigenvalues are numerically zero".to_string(),
        ));
    }
    let mut best_idx = None;
    let mut best_ratio = f64::NEG_INFINITY;
    for i in 0..eigvals.len() - 1 {
        let num = eigvals[i];
        let den = eigvals[i + 1];
        let ratio = if den > 0.0 {
            num / den
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            continue;
        };
        if ratio > best_ratio {
            best_ratio = ratio;
            best_idx = Some(i + 1);
        }
    }
    best_idx.ok_or_else(|| {
        Error::DegenerateSpectrum("no usable eigenvalue gap".to_string())
    })
}

/// Orthonormalized view of the estimated central-space basis.
pub fn orthonormal_basis(estimate: &SirEstimate) -> Result<Array2<f64>> {
    orthonormalize_columns(&estimate.beta_hat.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn means_from(m: Array2<f64>) -> SliceMeans {
        let sizes = vec![1; m.nrows()];
        SliceMeans::from_parts(m, sizes).unwrap()
    }

    #[test]
    fn lambda_hat_single_slice_outer_product() {
        let means = means_from(array![[1.0, 2.0]]);
        let l = lambda_hat(&means);
        assert_eq!(l, array![[1.0, 2.0], [2.0, 4.0]]);
    }

    #[test]
    fn lambda_hat_opposed_means() {
        let means = means_from(array![[1.0, 0.0], [-1.0, 0.0]]);
        let l = lambda_hat(&means);
        assert_eq!(l, array![[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn lambda_hat_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let means = means_from(m.clone());
        let l = lambda_hat(&means);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for h in 0..4 {
                    s += m[[h, i]] * m[[h, j]];
                }
                s /= 4.0;
                assert!((l[[i, j]] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn top_eigvecs_diagonal() {
        let s = array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let (vals, vecs) = top_d_eigvecs(&s.view(), 2).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vecs[[0, 0]] - 1.0).abs() < 1e-10);
        assert!((vecs[[1, 1]] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn top_eigvecs_two_by_two() {
        let s = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = top_d_eigvecs(&s.view(), 1).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[[0, 0]] - inv_sqrt2).abs() < 1e-10);
        assert!((vecs[[1, 0]] - inv_sqrt2).abs() < 1e-10);
    }

    #[test]
    fn top_eigvecs_rejects_asymmetric() {
        let s = array![[1.0, 0.5], [0.0, 1.0]];
        assert!(top_d_eigvecs(&s.view(), 1).is_err());
    }

    #[test]
    fn gram_route_agrees_with_dense_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Array2::from_shape_fn((5, 7), |_| rng.gen_range(-1.0..1.0));
        let means = means_from(m);
        let lambda = lambda_hat(&means);
        let (vals_a, vecs_a) = top_eigvecs_from_slice_means(&means, 3).unwrap();
        let (vals_b, vecs_b) = top_d_eigvecs(&lambda.view(), 3).unwrap();
        for j in 0..3 {
            assert!((vals_a[j] - vals_b[j]).abs() < 1e-10);
            for i in 0..7 {
                assert!(
                    (vecs_a[[i, j]] - vecs_b[[i, j]]).abs() < 1e-8,
                    "entry ({i},{j}) differs: {} vs {}",
                    vecs_a[[i, j]],
                    vecs_b[[i, j]]
                );
            }
        }
    }

    #[test]
    fn eigengap_examples() {
        assert_eq!(eigengap_suggest_d(&[10.0, 9.0, 0.1, 0.05]).unwrap(), 2);
        assert_eq!(eigengap_suggest_d(&[5.0, 1.0]).unwrap(), 1);
        assert_eq!(eigengap_suggest_d(&[4.0, 2.0, 1.0, 0.5]).unwrap(), 1);
        assert!(eigengap_suggest_d(&[1e-13, 1e-14]).is_err());
    }

    #[test]
    fn generalized_route_agrees_on_well_conditioned_data() {
        use crate::metrics::{subspace_distance, DistanceNorm, Subspace};
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 2000;
        let p = 4;
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        let y = x.column(0).to_owned() + x.column(1).to_owned();
        let data = Dataset::new(y, x).unwrap();
        let base = SirConfig::new(10, 1);
        let gen_cfg = SirConfig::new(10, 1).with_beta_mode(BetaMode::GeneralizedEigen);
        let a = sir_fit(&data, &base).unwrap();
        let b = sir_fit(&data, &gen_cfg).unwrap();
        for j in 0..1 {
            let norm: f64 = b.beta_hat.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-10);
        }
        let sa = Subspace::new(a.beta_hat).unwrap();
        let sb = Subspace::new(b.beta_hat).unwrap();
        let d = subspace_distance(&sa, &sb, DistanceNorm::Frobenius).unwrap();
        assert!(d < 0.15, "routes disagree strongly: {d}");
        // with identity covariance the generalized route reduces to the
        // direct eigenbasis
        let id_cfg = SirConfig::new(10, 1)
            .with_covariance(CovarianceSpec::Identity)
            .with_beta_mode(BetaMode::GeneralizedEigen);
        let c = sir_fit(&data, &id_cfg).unwrap();
        for i in 0..p {
            assert!((c.beta_hat[[i, 0]] - c.v_hat[[i, 0]]).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_covariance_rank_one_reduction() {
        // y tracks x1 exactly; with identity covariance beta is the top
        // eigenvector of the slice-mean estimator.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let y = x.column(0).to_owned();
        let data = Dataset::new(y, x).unwrap();
        let cfg = SirConfig::new(8, 1).with_covariance(CovarianceSpec::Identity);
        let est = sir_fit(&data, &cfg).unwrap();
        for i in 0..3 {
            assert!((est.beta_hat[[i, 0]] - est.v_hat[[i, 0]]).abs() < 1e-12);
        }
        assert!(est.beta_hat[[0, 0]].abs() > 0.99, "beta={:?}", est.beta_hat);
    }
}

//! Covariance estimation: sample covariance, banding, random-split bandwidth
//! selection, and guarded SPD inversion.
//!
//! Banding zeroes every entry beyond a half-bandwidth k, which suits
//! covariance classes whose entries decay away from the diagonal. A compact
//! banded representation ([`BandedSym`]) lets the pipeline estimate, floor
//! and factor large banded matrices without ever materializing p x p dense
//! storage.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_sym, SpdFactor};

/// Relative pivot guard for SPD factorization: a factorization fails when a
/// pivot falls to or below this fraction of the spectral norm.
pub const SPD_PIVOT_RTOL: f64 = 1e-10;

/// How a covariance estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovMode {
    Sample,
    Banded,
}

/// A symmetric covariance estimate with provenance.
#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub sigma: Array2<f64>,
    pub mode: CovMode,
    pub bandwidth: Option<usize>,
}

/// Decay-class parameters (spectrum bounds and off-diagonal decay) carried
/// around by generators and experiment configs for logging.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceClassParams {
    pub epsilon0: f64,
    pub alpha: f64,
    pub c: f64,
}

impl CovarianceClassParams {
    pub fn new(epsilon0: f64, alpha: f64, c: f64) -> Result<Self> {
        if epsilon0 <= 0.0 || alpha <= 0.0 || c <= 0.0 {
            return Err(Error::invalid(
                "covariance class parameters must all be positive",
            ));
        }
        Ok(CovarianceClassParams { epsilon0, alpha, c })
    }
}

/// Sample covariance (1/n) X^T X of an already-centered matrix.
pub fn sample_cov(x: &ArrayView2<f64>) -> Result<CovEstimate> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "sample covariance needs n >= 2, got {n}"
        )));
    }
    let mut sigma = x.t().dot(x);
    sigma.mapv_inplace(|v| v / n as f64);
    // enforce exact symmetry against GEMM roundoff
    let p = sigma.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (sigma[[i, j]] + sigma[[j, i]]);
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
    }
    Ok(CovEstimate {
        sigma,
        mode: CovMode::Sample,
        bandwidth: None,
    })
}

/// Zero all entries with |i - j| > k.
pub fn band(sigma: &ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::invalid("band requires a square matrix"));
    }
    if k > p.saturating_sub(1) {
        return Err(Error::invalid(format!(
            "bandwidth {k} out of range for p={p}"
        )));
    }
    let mut out = sigma.to_owned();
    for i in 0..p {
        for j in 0..p {
            if i.abs_diff(j) > k {
                out[[i, j]] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Compact symmetric banded matrix: only the diagonals 0..=k are stored.
#[derive(Debug, Clone)]
pub struct BandedSym {
    p: usize,
    k: usize,
    /// diag[d] has length p - d and holds entries (i, i + d).
    diags: Vec<Vec<f64>>,
}

impl BandedSym {
    pub fn zeros(p: usize, k: usize) -> Self {
        let diags = (0..=k).map(|d| vec![0.0; p - d]).collect();
        BandedSym { p, k, diags }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn bandwidth(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        if d > self.k {
            0.0
        } else {
            self.diags[d][i.min(j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let d = i.abs_diff(j);
        debug_assert!(d <= self.k);
        self.diags[d][i.min(j)] = v;
    }

    pub fn trace(&self) -> f64 {
        self.diags[0].iter().sum()
    }

    pub fn add_to_diagonal(&mut self, v: f64) {
        for x in self.diags[0].iter_mut() {
            *x += v;
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.p, self.p));
        for d in 0..=self.k {
            for i in 0..self.p - d {
                out[[i, i + d]] = self.diags[d][i];
                out[[i + d, i]] = self.diags[d][i];
            }
        }
        out
    }

    pub fn from_dense(sigma: &ArrayView2<f64>, k: usize) -> Self {
        let p = sigma.nrows();
        let mut out = BandedSym::zeros(p, k.min(p - 1));
        for d in 0..=out.k {
            for i in 0..p - d {
                out.diags[d][i] = sigma[[i, i + d]];
            }
        }
        out
    }

    /// y = A x using only the stored band.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in self.diags[0].iter().enumerate() {
            y[i] += row * x[i];
        }
        for d in 1..=self.k {
            for i in 0..self.p - d {
                let a = self.diags[d][i];
                y[i] += a * x[i + d];
                y[i + d] += a * x[i];
            }
        }
    }

    /// Spectral norm by power iteration on A^2 with banded matvecs.
    pub fn spectral_norm(&self) -> f64 {
        if self.p == 0 {
            return 0.0;
        }
        let mut v: Vec<f64> = (0..self.p).map(|i| 1.0 + (i as f64 % 7.0) * 0.1).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm0);
        let mut w = vec![0.0; self.p];
        let mut w2 = vec![0.0; self.p];
        let mut estimate = 0.0;
        for _ in 0..100 {
            self.matvec(&v, &mut w);
            self.matvec(&w, &mut w2);
            let next = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let norm = w2.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            for (vi, &wi) in v.iter_mut().zip(w2.iter()) {
                *vi = wi / norm;
            }
            if (next - estimate).abs() <= 1e-10 * next.max(1.0) {
                return next;
            }
            estimate = next;
        }
        estimate
    }

    /// Smallest-eigenvalue estimate via power iteration on (c I - A).
    pub fn min_eigenvalue_est(&self) -> f64 {
        let c = self.spectral_norm() * 1.01 + 1e-30;
        let mut v: Vec<f64> = (0..self.p)
            .map(|i| 1.0 + (i as f64 % 5.0) * 0.17)
            .collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm0);
        let mut av = vec![0.0; self.p];
        let mut lambda = 0.0;
        for _ in 0..200 {
            self.matvec(&v, &mut av);
            // w = c v - A v
            let w: Vec<f64> = v.iter().zip(av.iter()).map(|(&vi, &ai)| c * vi - ai).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            let next: f64 = v.iter().zip(w.iter()).map(|(&vi, &wi)| vi * wi).sum();
            for (vi, &wi) in v.iter_mut().zip(w.iter()) {
                *vi = wi / norm;
            }
            if (next - lambda).abs() <= 1e-12 * next.abs().max(1.0) {
                lambda = next;
                break;
            }
            lambda = next;
        }
        c - lambda
    }
}

/// Banded sample covariance of centered data: only entries with
/// |i - j| <= k are computed. Arithmetic matches banding the full sample
/// covariance entry by entry.
pub fn banded_sample_cov(x: &ArrayView2<f64>, k: usize) -> Result<BandedSym> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "sample covariance needs n >= 2, got {n}"
        )));
    }
    if k > p.saturating_sub(1) {
        return Err(Error::invalid(format!(
            "bandwidth {k} out of range for p={p}"
        )));
    }
    // transpose once so each coordinate is a contiguous row
    let xt = transpose_copy(x);
    let mut out = BandedSym::zeros(p, k);
    let inv_n = 1.0 / n as f64;
    for d in 0..=k {
        for i in 0..p - d {
            let a = xt.row(i);
            let b = xt.row(i + d);
            let mut s = 0.0;
            for (ai, bi) in a.iter().zip(b.iter()) {
                s += ai * bi;
            }
            out.diags[d][i] = s * inv_n;
        }
    }
    Ok(out)
}

fn transpose_copy(x: &ArrayView2<f64>) -> Array2<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut xt = Array2::zeros((p, n));
    for i in 0..n {
        for j in 0..p {
            xt[[j, i]] = x[[i, j]];
        }
    }
    xt
}

/// Default bandwidth candidate ladder: 0, 1, 2, 4, 8, ... capped at
/// min(p - 1, 64). The cap keeps the banded estimate meaningful (a band
/// wider than the per-split sample size estimates more parameters per row
/// than there are observations) and bounds the selection cost.
pub fn default_bandwidth_candidates(p: usize) -> Vec<usize> {
    let cap = p.saturating_sub(1).min(64);
    let mut out = vec![0];
    let mut k = 1usize;
    while k <= cap {
        out.push(k);
        k *= 2;
    }
    out
}

/// Random-split risk minimization for the banding parameter.
///
/// Each split divides the rows in half at random; the risk of a candidate k
/// is the Frobenius distance between the banded train-half covariance and
/// the full test-half covariance, averaged over splits. Returns the
/// candidate with the smallest average risk, ties to the smallest k.
pub fn select_bandwidth(
    x: &ArrayView2<f64>,
    candidates: &[usize],
    splits: usize,
    rng: &mut impl Rng,
) -> Result<usize> {
    let (n, p) = (x.nrows(), x.ncols());
    if candidates.is_empty() {
        return Err(Error::invalid("bandwidth candidate list is empty"));
    }
    if splits == 0 {
        return Err(Error::invalid("need at least one split"));
    }
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "bandwidth selection needs n >= 4, got {n}"
        )));
    }
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&k| k > p - 1) {
        return Err(Error::invalid(format!(
            "candidate bandwidth {bad} out of range for p={p}"
        )));
    }
    if sorted.len() == 1 {
        return Ok(sorted[0]);
    }
    let k_max = *sorted.last().expect("nonempty");

    let mut risks = vec![0.0f64; sorted.len()];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..splits {
        order.shuffle(rng);
        let m_train = n / 2;
        let train: Vec<usize> = order[..m_train].to_vec();
        let test: Vec<usize> = order[m_train..].to_vec();
        let xt_train = gather_transposed(x, &train);
        let xt_test = gather_transposed(x, &test);
        let inv_train = 1.0 / train.len() as f64;
        let inv_test = 1.0 / test.len() as f64;

        // ||B||_F^2 for B = (1/m) X^T X equals ||X X^T||_F^2 / m^2, so use
        // whichever Gram matrix is smaller (m x m or p x p).
        let m_test = test.len();
        let b_frob_sq: f64 = if p <= m_test {
            let cov = xt_test.dot(&xt_test.t());
            cov.iter().map(|v| (v * inv_test).powi(2)).sum()
        } else {
            let gram = xt_test.t().dot(&xt_test);
            gram.iter().map(|v| (v * inv_test).powi(2)).sum()
        };

        // per-diagonal sums of (A - B)^2 and B^2 within the widest band
        let mut diff_sq = vec![0.0f64; k_max + 1];
        let mut b_sq = vec![0.0f64; k_max + 1];
        for d in 0..=k_max.min(p - 1) {
            let mut sd = 0.0;
            let mut sb = 0.0;
            for i in 0..p - d {
                let a = dot_rows(&xt_train, i, i + d) * inv_train;
                let b = dot_rows(&xt_test, i, i + d) * inv_test;
                sd += (a - b) * (a - b);
                sb += b * b;
            }
            diff_sq[d] = sd;
            b_sq[d] = sb;
        }

        // risk(k)^2 accumulates banded diagonals; off-band contribution is
        // ||B||_F^2 minus the banded part of B.
        let mut inside_diff = 0.0;
        let mut inside_b = 0.0;
        let mut d_cursor = 0usize;
        for (ci, &k) in sorted.iter().enumerate() {
            while d_cursor <= k.min(p - 1) {
                let w = if d_cursor == 0 { 1.0 } else { 2.0 };
                inside_diff += w * diff_sq[d_cursor];
                inside_b += w * b_sq[d_cursor];
                d_cursor += 1;
            }
            let risk_sq = inside_diff + (b_frob_sq - inside_b).max(0.0);
            risks[ci] += risk_sq.sqrt();
        }
    }

    let mut best = 0usize;
    for ci in 1..sorted.len() {
        if risks[ci] < risks[best] {
            best = ci;
        }
    }
    Ok(sorted[best])
}

fn gather_transposed(x: &ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let p = x.ncols();
    let mut out = Array2::zeros((p, rows.len()));
    for (c, &r) in rows.iter().enumerate() {
        for j in 0..p {
            out[[j, c]] = x[[r, j]];
        }
    }
    out
}

fn dot_rows(xt: &Array2<f64>, i: usize, j: usize) -> f64 {
    let a = xt.row(i);
    let b = xt.row(j);
    let mut s = 0.0;
    for (ai, bi) in a.iter().zip(b.iter()) {
        s += ai * bi;
    }
    s
}

/// Explicit inverse of an SPD matrix (optionally ridged), with a pivot guard
/// against near-singularity. The factorization exploits any band structure
/// in the input.
pub fn invert_spd(sigma: &ArrayView2<f64>, ridge: f64) -> Result<Array2<f64>> {
    let p = sigma.nrows();
    let factor = factor_spd(sigma, ridge)?;
    let identity = Array2::eye(p);
    Ok(factor.solve_matrix(&identity.view()))
}

/// Solve (sigma + ridge I) X = rhs without forming the inverse.
pub fn solve_spd(
    sigma: &ArrayView2<f64>,
    ridge: f64,
    rhs: &ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let factor = factor_spd(sigma, ridge)?;
    Ok(factor.solve_matrix(rhs))
}

/// Factor sigma + ridge I with the relative pivot guard.
pub fn factor_spd(sigma: &ArrayView2<f64>, ridge: f64) -> Result<SpdFactor> {
    if ridge < 0.0 {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let norm = spectral_norm_sym(sigma) + ridge;
    let floor = SPD_PIVOT_RTOL * norm;
    SpdFactor::factor(sigma, ridge, floor).map_err(|e| match e {
        Error::NotPositiveDefinite { min_eigenvalue } => Error::SingularCovariance(format!(
            "pivot {min_eigenvalue:e} at or below {floor:e}; consider banded covariance or a ridge"
        )),
        other => other,
    })
}

/// Factor a compact banded SPD matrix, applying the automatic
/// positive-definiteness floor when banding has broken definiteness: the
/// spectrum is shifted so the smallest eigenvalue reaches 1e-8 * trace / p,
/// and a warning is logged.
pub fn factor_banded_with_floor(banded: &BandedSym, ridge: f64) -> Result<SpdFactor> {
    if ridge < 0.0 {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let p = banded.p();
    let norm = banded.spectral_norm() + ridge;
    let floor = SPD_PIVOT_RTOL * norm;
    let entry = |i: usize, j: usize| banded.get(i, j);
    match SpdFactor::factor_with(p, banded.bandwidth(), entry, ridge, floor) {
        Ok(f) => Ok(f),
        Err(Error::NotPositiveDefinite { .. }) => {
            let target = 1e-8 * banded.trace() / p.max(1) as f64;
            let min_eig = banded.min_eigenvalue_est() + ridge;
            let mut shift = (target - min_eig).max(target);
            for _ in 0..6 {
                log::warn!(
                    "banded covariance not positive definite (min eigenvalue ~{min_eig:e}); \
                     flooring spectrum with shift {shift:e}"
                );
                match SpdFactor::factor_with(p, banded.bandwidth(), entry, ridge + shift, floor) {
                    Ok(f) => return Ok(f),
                    Err(Error::NotPositiveDefinite { .. }) => {
                        shift = shift * 2.0 + target;
                    }
                    Err(other) => return Err(other),
                }
            }
            Err(Error::SingularCovariance(
                "banded covariance could not be floored to positive definiteness".to_string(),
            ))
        }
        Err(other) => Err(other),
    }
}

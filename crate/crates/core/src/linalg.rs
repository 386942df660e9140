//! Dense and banded linear-algebra kernels used by the estimators.
//!
//! Everything here is pure Rust and deterministic: a Householder
//! tridiagonalization followed by implicit-shift QL for symmetric
//! eigendecomposition, a bandwidth-aware Cholesky factorization, and a few
//! small helpers (Gram-Schmidt orthonormalization, power-iteration spectral
//! norm). The banded Cholesky is what keeps the pipeline usable at large p:
//! a banded covariance with half-bandwidth k factors in O(p k^2) instead of
//! O(p^3) and never materializes a dense inverse.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Maximum implicit-shift QL sweeps per eigenvalue before giving up.
const MAX_QL_ITERATIONS: usize = 50;

/// Full eigendecomposition of a real symmetric matrix.
///
/// Returns eigenvalues in descending order with eigenvectors as the columns
/// of the returned matrix, in matching order. The input is read from its
/// lower triangle; the strict upper triangle is ignored, so slightly
/// asymmetric inputs (roundoff) are handled by the caller symmetrizing or
/// accepting the lower triangle as truth.
pub fn eigen_sym(matrix: &ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::invalid(format!(
            "eigen_sym requires a square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }

    // Work on a flat row-major copy of the lower triangle, mirrored up.
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = matrix[[i, j]];
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];

    tridiagonalize(&mut a, n, &mut d, &mut e);
    ql_implicit(&mut a, n, &mut d, &mut e)?;

    // Sort eigenpairs descending by eigenvalue.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let eigvals: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, col]] = a[row * n + src];
        }
    }
    Ok((eigvals, vecs))
}

/// Householder reduction to tridiagonal form, accumulating the transform.
///
/// On exit `a` holds the orthogonal matrix Q (columns), `d` the diagonal and
/// `e` the subdiagonal (e[0] = 0). Classic tred2.
fn tridiagonalize(a: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[i * n + k].abs();
            }
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let mut f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                f = 0.0;
                for j in 0..=l {
                    a[j * n + i] = a[i * n + j] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j * n + k] -= f * e[k] + g * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += a[i * n + k] * a[k * n + j];
                }
                for k in 0..i {
                    a[k * n + j] -= g * a[k * n + i];
                }
            }
        }
        d[i] = a[i * n + i];
        a[i * n + i] = 1.0;
        for j in 0..i {
            a[j * n + i] = 0.0;
            a[i * n + j] = 0.0;
        }
    }
}

/// Implicit-shift QL on a tridiagonal matrix, rotating the accumulated
/// transform in `a` so its columns end up as eigenvectors. Classic tql2.
fn ql_implicit(a: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iterations = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() < 1e-300 {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > MAX_QL_ITERATIONS {
                return Err(Error::NumericalFailure {
                    what: "symmetric eigensolver QL sweep".to_string(),
                    iterations,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = a[k * n + i + 1];
                    a[k * n + i + 1] = s * a[k * n + i] + c * f;
                    a[k * n + i] = c * a[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive-definite matrix, exploiting any
/// band structure present in the input.
///
/// Storage is column-compact: `factor[j * (k + 1) + (i - j)]` holds L(i, j)
/// for `j <= i <= j + k`, where `k` is the half-bandwidth. A dense matrix is
/// simply the `k = n - 1` case.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    n: usize,
    half_bandwidth: usize,
    factor: Vec<f64>,
}

/// Exact half-bandwidth of a square matrix: the largest |i - j| with a
/// nonzero entry (scans the lower triangle).
pub fn half_bandwidth(matrix: &ArrayView2<f64>) -> usize {
    let n = matrix.nrows();
    let mut k = 0usize;
    for i in 0..n {
        for j in 0..i.saturating_sub(k) {
            if matrix[[i, j]] != 0.0 {
                k = i - j;
                break;
            }
        }
    }
    k
}

impl SpdFactor {
    /// Factor `matrix + ridge * I`, reading only the band detected in the
    /// input. Fails with `NotPositiveDefinite` when a pivot drops to or
    /// below `pivot_floor` (an absolute threshold chosen by the caller).
    pub fn factor(matrix: &ArrayView2<f64>, ridge: f64, pivot_floor: f64) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::invalid(format!(
                "Cholesky requires a square matrix, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        let k = half_bandwidth(matrix);
        Self::factor_with(n, k, |i, j| matrix[[i, j]], ridge, pivot_floor)
    }

    /// Factor from an entry accessor restricted to the band |i - j| <= k.
    /// Lets banded callers avoid materializing a dense matrix.
    pub fn factor_with(
        n: usize,
        k: usize,
        entry: impl Fn(usize, usize) -> f64,
        ridge: f64,
        pivot_floor: f64,
    ) -> Result<Self> {
        let width = k + 1;
        let mut l = vec![0.0f64; n * width];
        for j in 0..n {
            let low = j.saturating_sub(k);
            let mut sum = entry(j, j) + ridge;
            for m in low..j {
                let v = l[m * width + (j - m)];
                sum -= v * v;
            }
            // NaN pivots fail here too
            if sum.is_nan() || sum <= pivot_floor {
                return Err(Error::NotPositiveDefinite { min_eigenvalue: sum });
            }
            let diag = sum.sqrt();
            l[j * width] = diag;
            let hi = (j + k).min(n - 1);
            for i in (j + 1)..=hi {
                let low_i = i.saturating_sub(k).max(low);
                let mut sum = entry(i, j);
                for m in low_i..j {
                    sum -= l[m * width + (i - m)] * l[m * width + (j - m)];
                }
                l[j * width + (i - j)] = sum / diag;
            }
        }
        Ok(SpdFactor {
            n,
            half_bandwidth: k,
            factor: l,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    fn l(&self, i: usize, j: usize) -> f64 {
        self.factor[j * (self.half_bandwidth + 1) + (i - j)]
    }

    /// Solve (L L^T) x = b in place for a single right-hand side.
    pub fn solve_vec(&self, b: &mut [f64]) {
        let n = self.n;
        let k = self.half_bandwidth;
        // forward: L y = b
        for i in 0..n {
            let low = i.saturating_sub(k);
            let mut sum = b[i];
            for j in low..i {
                sum -= self.l(i, j) * b[j];
            }
            b[i] = sum / self.l(i, i);
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let hi = (i + k).min(n - 1);
            let mut sum = b[i];
            for j in (i + 1)..=hi {
                sum -= self.l(j, i) * b[j];
            }
            b[i] = sum / self.l(i, i);
        }
    }

    /// Solve (L L^T) X = B column by column.
    pub fn solve_matrix(&self, b: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((b.nrows(), b.ncols()));
        let mut col = vec![0.0f64; b.nrows()];
        for j in 0..b.ncols() {
            for i in 0..b.nrows() {
                col[i] = b[[i, j]];
            }
            self.solve_vec(&mut col);
            for i in 0..b.nrows() {
                out[[i, j]] = col[i];
            }
        }
        out
    }

    /// Forward-solve L Y = B, returning Y (used by the generalized-eigen
    /// route, which needs L^{-1} A L^{-T} without forming an inverse).
    pub fn solve_lower_matrix(&self, b: &ArrayView2<f64>) -> Array2<f64> {
        let n = self.n;
        let k = self.half_bandwidth;
        let mut out = b.to_owned();
        for j in 0..b.ncols() {
            for i in 0..n {
                let low = i.saturating_sub(k);
                let mut sum = out[[i, j]];
                for m in low..i {
                    sum -= self.l(i, m) * out[[m, j]];
                }
                out[[i, j]] = sum / self.l(i, i);
            }
        }
        out
    }

    /// Back-solve L^T X = B, returning X.
    pub fn solve_lower_transpose_matrix(&self, b: &ArrayView2<f64>) -> Array2<f64> {
        let n = self.n;
        let k = self.half_bandwidth;
        let mut out = b.to_owned();
        for j in 0..b.ncols() {
            for i in (0..n).rev() {
                let hi = (i + k).min(n - 1);
                let mut sum = out[[i, j]];
                for m in (i + 1)..=hi {
                    sum -= self.l(m, i) * out[[m, j]];
                }
                out[[i, j]] = sum / self.l(i, i);
            }
        }
        out
    }

    /// Replace each row z of the input with z L^T, i.e. map independent
    /// standard-normal rows to rows with covariance L L^T. Runs in place,
    /// touching only the stored band.
    pub fn transform_rows_in_place(&self, z: &mut Array2<f64>) {
        let n = self.n;
        let k = self.half_bandwidth;
        debug_assert_eq!(z.ncols(), n);
        for t in 0..z.nrows() {
            // descending j so entries m < j are still pristine when read
            for j in (0..n).rev() {
                let low = j.saturating_sub(k);
                let mut sum = 0.0;
                for m in low..=j {
                    sum += z[[t, m]] * self.l(j, m);
                }
                z[[t, j]] = sum;
            }
        }
    }

    /// Densify L (mostly for tests and the explicit-inverse path).
    pub fn dense_l(&self) -> Array2<f64> {
        let n = self.n;
        let k = self.half_bandwidth;
        let mut out = Array2::zeros((n, n));
        for j in 0..n {
            let hi = (j + k).min(n - 1);
            for i in j..=hi {
                out[[i, j]] = self.l(i, j);
            }
        }
        out
    }
}

/// Spectral norm (largest singular value) of a symmetric matrix by power
/// iteration on S^2, which is insensitive to eigenvalue sign. Deterministic:
/// the start vector is fixed. Accurate to a few digits, which is all the
/// pivot guards need.
pub fn spectral_norm_sym(matrix: &ArrayView2<f64>) -> f64 {
    let n = matrix.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64 % 7.0) * 0.1);
    let norm0 = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm0);
    let mut estimate = 0.0f64;
    for _ in 0..100 {
        let w = matrix.dot(&v);
        let w2 = matrix.dot(&w);
        let norm = w2.dot(&w2).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.dot(&w).sqrt(); // ||S v|| with ||v|| = 1
        v = w2 / norm;
        if (next - estimate).abs() <= 1e-10 * next.max(1.0) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Smallest eigenvalue of a symmetric matrix, estimated by power iteration
/// on (c I - S) with c an upper spectral bound. Used only for diagnostics
/// and for the positive-definiteness floor on banded covariances.
pub fn min_eigenvalue_est(matrix: &ArrayView2<f64>) -> f64 {
    let n = matrix.nrows();
    if n == 0 {
        return 0.0;
    }
    let c = spectral_norm_sym(matrix) * 1.01 + 1e-30;
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64 % 5.0) * 0.17);
    let norm0 = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm0);
    let mut lambda = 0.0;
    for _ in 0..200 {
        // w = (cI - S) v
        let sv = matrix.dot(&v);
        let w = &v * c - &sv;
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            break;
        }
        let next = v.dot(&w); // Rayleigh quotient of (cI - S)
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs().max(1.0) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    c - lambda
}

/// Orthonormalize the columns of `basis` with modified Gram-Schmidt plus one
/// re-orthogonalization pass. Errors if a column is numerically dependent on
/// its predecessors (relative norm drop below 1e-10).
pub fn orthonormalize_columns(basis: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, d) = (basis.nrows(), basis.ncols());
    let mut q = basis.to_owned();
    for j in 0..d {
        let original_norm = column_norm(&q, j);
        if original_norm == 0.0 {
            return Err(Error::invalid(format!("basis column {j} is zero")));
        }
        for _pass in 0..2 {
            for i in 0..j {
                let mut dot = 0.0;
                for r in 0..n {
                    dot += q[[r, i]] * q[[r, j]];
                }
                for r in 0..n {
                    q[[r, j]] -= dot * q[[r, i]];
                }
            }
        }
        let norm = column_norm(&q, j);
        if norm <= 1e-10 * original_norm {
            return Err(Error::invalid(format!(
                "basis column {j} is linearly dependent on earlier columns"
            )));
        }
        for r in 0..n {
            q[[r, j]] /= norm;
        }
    }
    Ok(q)
}

fn column_norm(m: &Array2<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..m.nrows() {
        s += m[[r, j]] * m[[r, j]];
    }
    s.sqrt()
}

/// Singular values of a small matrix via the eigenvalues of A^T A,
/// descending. Adequate for the d x d cross-Gram matrices used in subspace
/// distances (d is the structural dimension, never more than a handful).
pub fn singular_values_small(matrix: &ArrayView2<f64>) -> Result<Vec<f64>> {
    let gram = matrix.t().dot(matrix);
    let (vals, _) = eigen_sym(&gram.view())?;
    Ok(vals.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// Fix eigenvector signs so the entry of largest magnitude is positive,
/// breaking magnitude ties toward the lowest index.
pub fn fix_column_signs(vectors: &mut Array2<f64>) {
    let (n, d) = (vectors.nrows(), vectors.ncols());
    for j in 0..d {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..n {
            let a = vectors[[i, j]].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if vectors[[best, j]] < 0.0 {
            for i in 0..n {
                vectors[[i, j]] = -vectors[[i, j]];
            }
        }
    }
}

/// Normalize every column to unit Euclidean length (columns already known
/// nonzero).
pub fn normalize_columns(matrix: &mut Array2<f64>) {
    let (n, d) = (matrix.nrows(), matrix.ncols());
    for j in 0..d {
        let norm = column_norm(matrix, j);
        if norm > 0.0 {
            for i in 0..n {
                matrix[[i, j]] /= norm;
            }
        }
    }
}

/// Frobenius norm.
pub fn frobenius_norm(matrix: &ArrayView2<f64>) -> f64 {
    matrix.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean norm of a vector view.
pub fn vector_norm(v: &ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

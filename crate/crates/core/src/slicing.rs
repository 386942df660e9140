//! Response-ordered slicing and the per-coordinate screening statistic.
//!
//! Samples are sorted by their response value and partitioned into H
//! nearly equal slices; all downstream estimators are built from the
//! within-slice predictor means.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A response vector paired with its predictor matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Array1<f64>,
    x: Array2<f64>,
}

impl Dataset {
    /// Validates shape agreement and finiteness. Requires n >= 2 and p >= 1.
    pub fn new(y: Array1<f64>, x: Array2<f64>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
        }
        if x.nrows() != n {
            return Err(Error::invalid(format!(
                "predictor matrix has {} rows but response has {} entries",
                x.nrows(),
                n
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::invalid("predictor matrix has no columns"));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite entries"));
        }
        Ok(Dataset { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    /// Restrict the predictors to a column subset, keeping the response.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Dataset> {
        let p = self.p();
        if let Some(&bad) = columns.iter().find(|&&c| c >= p) {
            return Err(Error::invalid(format!(
                "column index {bad} out of range for p={p}"
            )));
        }
        let x = self.x.select(Axis(1), columns);
        Dataset::new(self.y.clone(), x)
    }
}

/// Partition of sample indices into H response-ordered slices.
///
/// Slices are disjoint, cover 0..n-1, each slice's responses are no larger
/// than the next slice's, and sizes differ by at most one (the first
/// n mod H slices take the extra sample).
#[derive(Debug, Clone)]
pub struct SlicePlan {
    h: usize,
    slices: Vec<Vec<usize>>,
}

impl SlicePlan {
    pub fn h(&self) -> usize {
        self.h
    }

    pub fn slices(&self) -> &[Vec<usize>] {
        &self.slices
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.slices.iter().map(Vec::len).collect()
    }

    pub fn n(&self) -> usize {
        self.slices.iter().map(Vec::len).sum()
    }
}

/// Within-slice predictor means.
#[derive(Debug, Clone)]
pub struct SliceMeans {
    /// H x p matrix; row h is the mean of the predictors in slice h.
    m: Array2<f64>,
    /// Size-weighted average of the rows of `m`.
    grand_mean: Array1<f64>,
    sizes: Vec<usize>,
}

impl SliceMeans {
    /// Assemble from an H x p mean matrix and the per-slice sizes.
    pub fn from_parts(m: Array2<f64>, sizes: Vec<usize>) -> Result<Self> {
        if m.nrows() != sizes.len() {
            return Err(Error::invalid(format!(
                "{} mean rows but {} slice sizes",
                m.nrows(),
                sizes.len()
            )));
        }
        let n: usize = sizes.iter().sum();
        if n == 0 {
            return Err(Error::invalid("slice sizes sum to zero"));
        }
        let p = m.ncols();
        let mut grand = Array1::zeros(p);
        for (h_idx, &size) in sizes.iter().enumerate() {
            let w = size as f64 / n as f64;
            for j in 0..p {
                grand[j] += w * m[[h_idx, j]];
            }
        }
        Ok(SliceMeans {
            m,
            grand_mean: grand,
            sizes,
        })
    }

    pub fn h(&self) -> usize {
        self.m.nrows()
    }

    pub fn p(&self) -> usize {
        self.m.ncols()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.m.view()
    }

    pub fn grand_mean(&self) -> ArrayView1<'_, f64> {
        self.grand_mean.view()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Sort samples by (response value, original index) and split into H slices.
///
/// Sizes are floor(n/H) or ceil(n/H); the first n mod H slices receive the
/// extra sample. Ties in the response are broken by original index, so the
/// plan is deterministic.
pub fn slice_by_response(y: &ArrayView1<f64>, h: usize) -> Result<SlicePlan> {
    let n = y.len();
    if h < 2 || h > n {
        return Err(Error::invalid(format!(
            "slice count H={h} must satisfy 2 <= H <= n={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        y[a].partial_cmp(&y[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let base = n / h;
    let remainder = n % h;
    let mut slices = Vec::with_capacity(h);
    let mut cursor = 0usize;
    for s in 0..h {
        let size = base + usize::from(s < remainder);
        slices.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(SlicePlan { h, slices })
}

/// Subtract column means. Returns the centered matrix and the means.
pub fn center(x: &ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let n = x.nrows().max(1);
    let mean = x.sum_axis(Axis(0)) / n as f64;
    let centered = x - &mean.view().insert_axis(Axis(0));
    (centered, mean)
}

/// Mean of the predictor rows within each slice of the plan.
pub fn slice_means(x: &ArrayView2<f64>, plan: &SlicePlan) -> Result<SliceMeans> {
    let (n, p) = (x.nrows(), x.ncols());
    if plan.n() != n {
        return Err(Error::invalid(format!(
            "slice plan covers {} rows but matrix has {}",
            plan.n(),
            n
        )));
    }
    let mut m = Array2::zeros((plan.h(), p));
    for (h_idx, slice) in plan.slices().iter().enumerate() {
        for &row in slice {
            if row >= n {
                return Err(Error::invalid(format!(
                    "slice plan index {row} out of range for n={n}"
                )));
            }
            for j in 0..p {
                m[[h_idx, j]] += x[[row, j]];
            }
        }
        let size = slice.len().max(1) as f64;
        for j in 0..p {
            m[[h_idx, j]] /= size;
        }
    }
    let sizes = plan.sizes();
    let mut grand = Array1::zeros(p);
    for (h_idx, &size) in sizes.iter().enumerate() {
        let w = size as f64 / n as f64;
        for j in 0..p {
            grand[j] += w * m[[h_idx, j]];
        }
    }
    Ok(SliceMeans {
        m,
        grand_mean: grand,
        sizes,
    })
}

/// Per-coordinate screening statistic: the k-th entry is the average of the
/// squared slice means of coordinate k, i.e. the k-th diagonal entry of the
/// slice-mean outer-product average. Slices are weighted equally.
pub fn var_h(x: &ArrayView2<f64>, plan: &SlicePlan) -> Result<Array1<f64>> {
    let means = slice_means(x, plan)?;
    Ok(var_h_from_means(&means))
}

/// Same statistic computed from already-aggregated slice means.
pub fn var_h_from_means(means: &SliceMeans) -> Array1<f64> {
    let h = means.h() as f64;
    let m = means.matrix();
    let mut out = Array1::zeros(means.p());
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            out[j] += v * v;
        }
    }
    out.mapv_inplace(|v| v / h);
    out
}

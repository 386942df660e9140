//! Projection matrices, subspace distances, and vector angles.
//!
//! Distances between subspaces are norms of the difference of their
//! orthogonal projection matrices. They are computed from principal angles
//! (singular values of the cross-Gram of orthonormal bases), which is exact
//! and never materializes a p x p projection: for orthonormal bases A, B,
//! ||P_A - P_B||_F^2 = d_A + d_B - 2 ||A^T B||_F^2, and for equal dimensions
//! the nonzero eigenvalues of P_A - P_B are +/- sin(theta_i).

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, singular_values_small};

/// Which matrix norm a subspace distance uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceNorm {
    Operator,
    Frobenius,
}

impl std::fmt::Display for DistanceNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceNorm::Operator => write!(f, "operator"),
            DistanceNorm::Frobenius => write!(f, "frobenius"),
        }
    }
}

/// A linear subspace of R^p given by a full-column-rank basis.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Array2<f64>,
}

impl Subspace {
    /// Validates full column rank: the smallest singular value of the basis
    /// must exceed 1e-10 times the largest.
    pub fn new(basis: Array2<f64>) -> Result<Self> {
        if basis.ncols() == 0 || basis.nrows() == 0 {
            return Err(Error::invalid("basis must be nonempty"));
        }
        if basis.ncols() > basis.nrows() {
            return Err(Error::invalid(format!(
                "basis has more columns ({}) than rows ({})",
                basis.ncols(),
                basis.nrows()
            )));
        }
        let svals = singular_values_small(&basis.view())?;
        let largest = svals.first().copied().unwrap_or(0.0);
        let smallest = svals.last().copied().unwrap_or(0.0);
        if smallest.is_nan() || smallest <= 1e-10 * largest || largest == 0.0 {
            return Err(Error::invalid(format!(
                "basis is rank deficient (singular values {largest:e} .. {smallest:e})"
            )));
        }
        Ok(Subspace { basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> ArrayView2<'_, f64> {
        self.basis.view()
    }

    fn orthonormal(&self) -> Result<Array2<f64>> {
        orthonormalize_columns(&self.basis.view())
    }
}

/// Orthogonal projection matrix P = B (B^T B)^{-1} B^T onto the subspace.
pub fn projection(sub: &Subspace) -> Result<Array2<f64>> {
    let q = sub.orthonormal()?;
    Ok(q.dot(&q.t()))
}

/// Squared principal-angle sines between two subspaces, from the residual
/// of the smaller basis against the larger: the singular values of
/// (I - P_B) Q_A are exactly sin(theta_i). Computing them this way keeps
/// full relative precision near zero, where the cos^2 route cancels.
fn principal_sin_squares(smaller: &Array2<f64>, larger: &Array2<f64>) -> Result<Vec<f64>> {
    let cross = larger.t().dot(smaller);
    let residual = smaller - &larger.dot(&cross);
    let gram = residual.t().dot(&residual);
    let (vals, _) = crate::linalg::eigen_sym(&gram.view())?;
    Ok(vals.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Distance between two subspaces: the chosen norm of the difference of
/// their projection matrices. Subspaces of unequal dimension are allowed;
/// such projections always differ by operator norm exactly 1.
pub fn subspace_distance(a: &Subspace, b: &Subspace, norm: DistanceNorm) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::invalid(format!(
            "ambient dimensions differ: {} vs {}",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    let qa = a.orthonormal()?;
    let qb = b.orthonormal()?;
    if a.dim() == b.dim() {
        // Evaluate the residual both ways and combine commutatively, so the
        // distance is bitwise symmetric in its arguments.
        let ab = principal_sin_squares(&qa, &qb)?;
        let ba = principal_sin_squares(&qb, &qa)?;
        match norm {
            DistanceNorm::Frobenius => {
                // ||P_A - P_B||_F^2 = 2 sum sin^2; each direction contributes
                // one copy of the sum.
                let val = ab.iter().sum::<f64>() + ba.iter().sum::<f64>();
                Ok(val.max(0.0).sqrt())
            }
            DistanceNorm::Operator => {
                let m = ab
                    .first()
                    .copied()
                    .unwrap_or(0.0)
                    .max(ba.first().copied().unwrap_or(0.0));
                Ok(m.sqrt())
            }
        }
    } else {
        let (small, large) = if qa.ncols() <= qb.ncols() {
            (&qa, &qb)
        } else {
            (&qb, &qa)
        };
        let sin_sq = principal_sin_squares(small, large)?;
        match norm {
            DistanceNorm::Frobenius => {
                // ||P_A - P_B||_F^2 = |d_A - d_B| + 2 sum sin^2(theta_i)
                let val = a.dim().abs_diff(b.dim()) as f64 + 2.0 * sin_sq.iter().sum::<f64>();
                Ok(val.max(0.0).sqrt())
            }
            DistanceNorm::Operator => {
                // A direction of the larger space orthogonal to the smaller
                // attains eigenvalue 1, and the spectrum lies in [-1, 1].
                Ok(1.0)
            }
        }
    }
}

/// Acute principal angle between two nonzero vectors, in [0, pi/2]. Sign
/// invariant: directions are identified only up to sign.
pub fn vector_angle(u: &ArrayView1<f64>, v: &ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "vector lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("vector angle undefined for zero vectors"));
    }
    let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    Ok((dot.abs() / (nu * nv)).clamp(0.0, 1.0).acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn projection_onto_e1() {
        let sub = Subspace::new(array![[1.0], [0.0]]).unwrap();
        let p = projection(&sub).unwrap();
        assert_eq!(p, array![[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn projection_of_full_space_is_identity() {
        let sub = Subspace::new(array![[2.0, 1.0], [0.0, 1.0]]).unwrap();
        let p = projection(&sub).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((p[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_onto_diagonal_direction() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sub = Subspace::new(array![[s], [s]]).unwrap();
        let p = projection(&sub).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((p[[i, j]] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_spaces_have_zero_distance() {
        let a = Subspace::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let b = Subspace::new(array![[2.0, 1.0], [1.0, 1.0], [0.0, 0.0]]).unwrap();
        let d = subspace_distance(&a, &b, DistanceNorm::Frobenius).unwrap();
        assert!(d < 1e-8, "distance {d}");
    }

    #[test]
    fn orthogonal_planes_reach_sqrt_two_d() {
        // span{e1,e2} vs span{e3,e4} in R^4
        let mut a = Array2::zeros((4, 2));
        a[[0, 0]] = 1.0;
        a[[1, 1]] = 1.0;
        let mut b = Array2::zeros((4, 2));
        b[[2, 0]] = 1.0;
        b[[3, 1]] = 1.0;
        let a = Subspace::new(a).unwrap();
        let b = Subspace::new(b).unwrap();
        let d = subspace_distance(&a, &b, DistanceNorm::Frobenius).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        let d_op = subspace_distance(&a, &b, DistanceNorm::Operator).unwrap();
        assert!((d_op - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_matches_direct_projection_computation() {
        // span{e1} vs span{(e1+e2)/sqrt 2}: P_A - P_B = [[.5,-.5],[-.5,-.5]]
        // has eigenvalues +/- 1/sqrt 2, so operator = 0.7071..., Frobenius = 1.
        let a = Subspace::new(array![[1.0], [0.0]]).unwrap();
        let b = Subspace::new(array![[1.0], [1.0]]).unwrap();
        let pa = projection(&a).unwrap();
        let pb = projection(&b).unwrap();
        let diff = &pa - &pb;
        // direct 2x2 oracle: eigenvalues of a symmetric 2x2
        let tr = diff[[0, 0]] + diff[[1, 1]];
        let det = diff[[0, 0]] * diff[[1, 1]] - diff[[0, 1]] * diff[[1, 0]];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let l1 = tr / 2.0 + disc;
        let l2 = tr / 2.0 - disc;
        let oracle_operator = l1.abs().max(l2.abs());
        let oracle_frobenius = (l1 * l1 + l2 * l2).sqrt();

        let d_f = subspace_distance(&a, &b, DistanceNorm::Frobenius).unwrap();
        let d_o = subspace_distance(&a, &b, DistanceNorm::Operator).unwrap();
        assert!((d_f - oracle_frobenius).abs() < 1e-12);
        assert!((d_o - oracle_operator).abs() < 1e-12);
        assert!((d_f - 1.0).abs() < 1e-12);
        assert!((d_o - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn unequal_dimensions_give_operator_one() {
        let a = Subspace::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let b = Subspace::new(array![[1.0], [0.0], [0.0]]).unwrap();
        let d = subspace_distance(&a, &b, DistanceNorm::Operator).unwrap();
        assert_eq!(d, 1.0);
        let d_f = subspace_distance(&a, &b, DistanceNorm::Frobenius).unwrap();
        assert!((d_f - 1.0).abs() < 1e-12); // cos^2 sums to 1
    }

    #[test]
    fn vector_angle_basics() {
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        let neg_e1 = array![-1.0, 0.0];
        assert!(vector_angle(&e1.view(), &e1.view()).unwrap() < 1e-12);
        assert!(vector_angle(&e1.view(), &neg_e1.view()).unwrap() < 1e-12);
        let right = vector_angle(&e1.view(), &e2.view()).unwrap();
        assert!((right - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let zero = array![0.0, 0.0];
        assert!(vector_angle(&e1.view(), &zero.view()).is_err());
    }
}

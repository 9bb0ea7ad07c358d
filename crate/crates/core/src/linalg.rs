//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CaceError, Result};

/// Default condition-number cap for covariance inversion.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Inverse of a symmetric positive definite matrix, refusing matrices whose
/// spectral condition number exceeds `cap`.
pub fn spd_inverse(m: &DMatrix<f64>, cap: f64) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= cap) {
        return Err(CaceError::SingularCovariance { condition });
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(CaceError::SingularCovariance { condition })?;
    Ok(chol.inverse())
}

/// `N(P⁻¹ b, P⁻¹)` given a precision matrix `P` and the vector `b`.
#[derive(Debug, Clone)]
pub struct PrecisionGaussian {
    chol: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
}

impl PrecisionGaussian {
    pub fn new(precision: DMatrix<f64>, rhs: &DVector<f64>) -> Result<Self> {
        let chol = precision
            .cholesky()
            .ok_or(CaceError::SingularCovariance { condition: f64::INFINITY })?;
        let mean = chol.solve(rhs);
        Ok(Self { chol, mean })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let p = self.mean.len();
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // P = L Lᵀ, so Lᵀ x = z gives Cov(x) = P⁻¹.
        let offset = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor is nonsingular");
        &self.mean + offset
    }
}

/// Column means of an `n × k` matrix.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

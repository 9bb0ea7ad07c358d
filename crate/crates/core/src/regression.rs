//! Least-squares machinery shared by the estimators: centering, OLS via
//! Householder QR, leverages and sandwich covariances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CaceError, Result};
use crate::linalg::column_means;

/// Relative pivot tolerance for the rank check.
pub const RANK_TOL: f64 = 1e-10;

/// Leverages within this distance of 1 count as 1.
const LEVERAGE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefs: DVector<f64>,
    pub residuals: DVector<f64>,
    pub hat_diag: DVector<f64>,
    pub xtx_inverse: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RobustVariant {
    #[serde(rename = "ehw")]
    Ehw,
    #[serde(rename = "hc2")]
    Hc2,
    #[serde(rename = "hc3")]
    Hc3,
}

impl RobustVariant {
    pub const ALL: [RobustVariant; 3] = [RobustVariant::Ehw, RobustVariant::Hc2, RobustVariant::Hc3];

    fn weight(self, h: f64) -> f64 {
        match self {
            RobustVariant::Ehw => 1.0,
            RobustVariant::Hc2 => 1.0 / (1.0 - h),
            RobustVariant::Hc3 => 1.0 / ((1.0 - h) * (1.0 - h)),
        }
    }
}

/// Subtract column means.
pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut out = x.clone();
    for (mut col, m) in out.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-m);
    }
    out
}

/// Ordinary least squares of `y` on the columns of `design`.
pub fn ols_fit(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(CaceError::LengthMismatch {
            what: "response",
            expected: n,
            got: y.len(),
        });
    }
    if p == 0 || n < p {
        return Err(CaceError::RankDeficient { column: n.min(p) });
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let max_pivot = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(column) = (0..p).find(|&j| !(r[(j, j)].abs() > RANK_TOL * max_pivot)) {
        return Err(CaceError::RankDeficient { column });
    }
    let qty = q.tr_mul(y);
    let coefs = r
        .solve_upper_triangular(&qty)
        .ok_or(CaceError::RankDeficient { column: 0 })?;
    let residuals = y - design * &coefs;
    let hat_diag = DVector::from_iterator(n, q.row_iter().map(|row| row.norm_squared()));
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(CaceError::RankDeficient { column: 0 })?;
    let xtx_inverse = &r_inv * r_inv.transpose();
    Ok(OlsFit {
        coefs,
        residuals,
        hat_diag,
        xtx_inverse,
    })
}

/// Sandwich covariance `(XᵀX)⁻¹ Xᵀ diag(ωᵢ eᵢ²) X (XᵀX)⁻¹`.
pub fn robust_cov(fit: &OlsFit, design: &DMatrix<f64>, variant: RobustVariant) -> Result<DMatrix<f64>> {
    let p = design.ncols();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for (i, row) in design.row_iter().enumerate() {
        let h = fit.hat_diag[i];
        let e = fit.residuals[i];
        if variant != RobustVariant::Ehw && h >= 1.0 - LEVERAGE_TOL {
            return Err(CaceError::LeverageOne { index: i });
        }
        let w = variant.weight(h) * e * e;
        if w != 0.0 {
            meat.ger(w, &row.transpose(), &row.transpose(), 1.0);
        }
    }
    Ok(&fit.xtx_inverse * meat * &fit.xtx_inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut SimRng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn centering() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        let c = center_columns(&x);
        assert_eq!(c.column(0).as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(c.column(1).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(center_columns(&c), c);
    }

    #[test]
    fn intercept_only_fit_is_the_mean() {
        let fit = ols_fit(&DMatrix::from_element(2, 1, 1.0), &DVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert!((fit.coefs[0] - 3.0).abs() < 1e-14);
        assert!((fit.residuals[0] + 1.0).abs() < 1e-14);
        assert!((fit.residuals[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn square_system_interpolates() {
        let mut rng = SimRng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 4, 4);
        let y = DVector::from_fn(4, |_, _| rng.sample(StandardNormal));
        let fit = ols_fit(&x, &y).unwrap();
        assert!(fit.residuals.amax() < 1e-10);
        for h in fit.hat_diag.iter() {
            assert!((h - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_pseudo_inverse_oracle() {
        let mut rng = SimRng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 6, 3);
        let y = DVector::from_fn(6, |_, _| rng.sample(StandardNormal));
        let fit = ols_fit(&x, &y).unwrap();
        let pinv = x.clone().pseudo_inverse(1e-14).unwrap();
        let expected = pinv * &y;
        assert!((fit.coefs - expected).amax() < 1e-9);
    }

    #[test]
    fn rank_deficiency_detected() {
        let x = DMatrix::from_column_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(
            ols_fit(&x, &DVector::zeros(4)),
            Err(CaceError::RankDeficient { column: 1 })
        );
    }

    #[test]
    fn ehw_by_hand() {
        // One regressor x = (-1, -1, 1, 1), residuals all ±1 with |e| = 1:
        // XᵀX = 4, meat = Σ x² e² = 4, so EHW = 4 / 16 = 0.25.
        let x = DMatrix::from_column_slice(4, 1, &[-1.0, -1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![-2.0, 0.0, 0.0, 2.0]);
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.coefs[0] - 1.0).abs() < 1e-14);
        let v = robust_cov(&fit, &x, RobustVariant::Ehw).unwrap();
        assert!((v[(0, 0)] - 0.25).abs() < 1e-14);
        // h_i = 1/4 for every unit.
        let v2 = robust_cov(&fit, &x, RobustVariant::Hc2).unwrap();
        assert!((v2[(0, 0)] - 0.25 / 0.75).abs() < 1e-14);
        let v3 = robust_cov(&fit, &x, RobustVariant::Hc3).unwrap();
        assert!((v3[(0, 0)] - 0.25 / 0.5625).abs() < 1e-14);
    }

    #[test]
    fn zero_residuals_give_zero_covariance() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let fit = ols_fit(&x, &y).unwrap();
        for v in RobustVariant::ALL {
            assert!(robust_cov(&fit, &x, v).unwrap().amax() < 1e-20);
        }
    }

    #[test]
    fn leverage_one_rejected_for_hc() {
        let mut rng = SimRng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 3, 3);
        let fit = ols_fit(&x, &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(robust_cov(&fit, &x, RobustVariant::Ehw).is_ok());
        assert!(matches!(
            robust_cov(&fit, &x, RobustVariant::Hc2),
            Err(CaceError::LeverageOne { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fit_invariants(seed in any::<u64>(), n in 6usize..40, p in 1usize..5) {
            let mut rng = SimRng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, n, p);
            let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0);
            let fit = ols_fit(&x, &y).unwrap();
            prop_assert!((fit.hat_diag.sum() - p as f64).abs() < 1e-9);
            let ortho = x.tr_mul(&fit.residuals);
            prop_assert!(ortho.amax() < 1e-8 * (1.0 + y.norm() * x.norm()));
            let ehw = robust_cov(&fit, &x, RobustVariant::Ehw).unwrap();
            let hc2 = robust_cov(&fit, &x, RobustVariant::Hc2).unwrap();
            let hc3 = robust_cov(&fit, &x, RobustVariant::Hc3).unwrap();
            for j in 0..p {
                prop_assert!(ehw[(j, j)] <= hc2[(j, j)] * (1.0 + 1e-12));
                prop_assert!(hc2[(j, j)] <= hc3[(j, j)] * (1.0 + 1e-12));
            }
        }
    }
}

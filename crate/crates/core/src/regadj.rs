//! Regression-adjusted estimation: fully interacted OLS on centered
//! covariates, with EHW, HC2 and HC3 intervals.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dist::norm_quantile;
use crate::error::{CaceError, Result};
use crate::population::ObservedDataset;
use crate::regression::{center_columns, ols_fit, robust_cov, RobustVariant};
use crate::report::{Diagnostics, EstimateReport, Method};
use crate::wald::{a_hat_residuals, check_alpha, positive_itt_w};

/// Column of the treatment indicator in the interacted design.
const Z_COLUMN: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    W,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjDiagnostics {
    pub itt_w_adj: f64,
    pub itt_y_adj: f64,
    pub v_ehw: f64,
    /// `None` when some leverage equals 1.
    pub v_hc2: Option<f64>,
    pub v_hc3: Option<f64>,
}

fn outcome_vector(obs: &ObservedDataset, outcome: Outcome) -> DVector<f64> {
    match outcome {
        Outcome::W => DVector::from_iterator(obs.n(), obs.w_obs().iter().map(|&w| w as f64)),
        Outcome::Y => DVector::from_column_slice(obs.y_obs()),
    }
}

fn check_sizes(obs: &ObservedDataset) -> Result<()> {
    let needed = obs.k() + 2;
    for (arm, size) in [(1u8, obs.n1()), (0, obs.n0())] {
        if size < needed {
            return Err(CaceError::ArmTooSmall { arm, size, needed });
        }
    }
    Ok(())
}

/// Design `(1, Z, x*, Z·x*)` with `x*` centered over all units.
pub fn interacted_design(obs: &ObservedDataset) -> DMatrix<f64> {
    let (n, k) = (obs.n(), obs.k());
    let xc = center_columns(obs.x());
    let z = obs.z();
    DMatrix::from_fn(n, 2 + 2 * k, |i, c| match c {
        0 => 1.0,
        1 => z[i] as f64,
        c if c < 2 + k => xc[(i, c - 2)],
        c => z[i] as f64 * xc[(i, c - 2 - k)],
    })
}

/// Z-coefficient of the interacted regression of `outcome`.
pub fn adjusted_itt(obs: &ObservedDataset, outcome: Outcome) -> Result<f64> {
    check_sizes(obs)?;
    let v = outcome_vector(obs, outcome);
    let fit = ols_fit(&interacted_design(obs), &v)?;
    let coef = fit.coefs[Z_COLUMN];
    #[cfg(debug_assertions)]
    {
        let two = two_group_adjusted_itt(obs, v.as_slice())?;
        debug_assert!((two - coef).abs() <= 1e-9 * (1.0 + coef.abs()), "{two} vs {coef}");
    }
    Ok(coef)
}

/// `ITT − β̂₁ᵀx̄₁* + β̂₀ᵀx̄₀*` from separate per-arm fits on `(1, x*)`.
pub fn two_group_adjusted_itt(obs: &ObservedDataset, v: &[f64]) -> Result<f64> {
    check_sizes(obs)?;
    let xc = center_columns(obs.x());
    let k = obs.k();
    let mut result = 0.0;
    for (arm, sign) in [(1u8, 1.0), (0, -1.0)] {
        let idx: Vec<usize> = obs.arm(arm).collect();
        let m = idx.len();
        let design = DMatrix::from_fn(m, k + 1, |r, c| if c == 0 { 1.0 } else { xc[(idx[r], c - 1)] });
        let y = DVector::from_iterator(m, idx.iter().map(|&i| v[i]));
        let fit = ols_fit(&design, &y)?;
        let mean = y.mean();
        let x_bar = DVector::from_fn(k, |j, _| idx.iter().map(|&i| xc[(i, j)]).sum::<f64>() / m as f64);
        let slope = fit.coefs.rows(1, k);
        result += sign * (mean - slope.dot(&x_bar));
    }
    Ok(result)
}

pub fn tau_adj(obs: &ObservedDataset) -> Result<f64> {
    let itt_w = positive_itt_w(adjusted_itt(obs, Outcome::W)?)?;
    Ok(adjusted_itt(obs, Outcome::Y)? / itt_w)
}

/// All three robust intervals from a single set of fits.
pub fn ci_adj_all(obs: &ObservedDataset, alpha: f64) -> Result<Vec<Result<EstimateReport>>> {
    check_alpha(alpha)?;
    check_sizes(obs)?;
    let design = interacted_design(obs);
    let itt_w_adj = positive_itt_w(ols_fit(&design, &outcome_vector(obs, Outcome::W))?.coefs[Z_COLUMN])?;
    let itt_y_adj = ols_fit(&design, &outcome_vector(obs, Outcome::Y))?.coefs[Z_COLUMN];
    let point = itt_y_adj / itt_w_adj;
    let a_adj = DVector::from_vec(a_hat_residuals(obs, point));
    let fit = ols_fit(&design, &a_adj)?;
    let variance = |v: RobustVariant| robust_cov(&fit, &design, v).map(|m| m[(Z_COLUMN, Z_COLUMN)]);
    let v_ehw = variance(RobustVariant::Ehw)?;
    let v_hc2 = variance(RobustVariant::Hc2);
    let v_hc3 = variance(RobustVariant::Hc3);
    let diagnostics = AdjDiagnostics {
        itt_w_adj,
        itt_y_adj,
        v_ehw,
        v_hc2: v_hc2.as_ref().ok().copied(),
        v_hc3: v_hc3.as_ref().ok().copied(),
    };
    let nu = norm_quantile(1.0 - alpha / 2.0);
    let reports = [(RobustVariant::Ehw, Ok(v_ehw)), (RobustVariant::Hc2, v_hc2), (RobustVariant::Hc3, v_hc3)]
        .into_iter()
        .map(|(variant, v)| {
            v.map(|v| {
                let half = nu * v.sqrt() / itt_w_adj;
                EstimateReport {
                    method: Method::adjusted(variant),
                    point,
                    ci_lo: point - half,
                    ci_hi: point + half,
                    alpha,
                    diagnostics: Diagnostics::Adj(diagnostics.clone()),
                }
            })
        })
        .collect();
    Ok(reports)
}

pub fn ci_adj(obs: &ObservedDataset, alpha: f64, variant: RobustVariant) -> Result<EstimateReport> {
    let idx = RobustVariant::ALL.iter().position(|&v| v == variant).expect("listed");
    ci_adj_all(obs, alpha)?.swap_remove(idx)
}

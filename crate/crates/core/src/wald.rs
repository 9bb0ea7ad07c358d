//! Wald (instrumental-variable ratio) estimation with intervals for
//! completely randomized and rerandomized experiments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::finite_pop_cov;
use crate::dist::norm_quantile;
use crate::error::{CaceError, Result};
use crate::linalg::{spd_inverse, DEFAULT_CONDITION_CAP};
use crate::population::{FinitePopulation, ObservedDataset};
use crate::reference::{MixtureQuantileSpec, QuantileCache, DEFAULT_DRAWS, DEFAULT_SEED};
use crate::report::{Diagnostics, EstimateReport, Method};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldDiagnostics {
    pub itt_w: f64,
    pub itt_y: f64,
    pub var_tilde: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_tilde_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

/// Which covariate covariance enters the projections behind `R̂²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SxxPlugin {
    /// Covariance of `x` over all `n` units.
    Pooled,
    /// Within-arm covariance for the arm projections; pooled for the
    /// difference term. Each arm projection is then bounded by that arm's
    /// variance of `Â`.
    #[default]
    PerArm,
}

/// Monte Carlo settings for λ under rerandomization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemInference {
    pub draws: usize,
    pub seed: u64,
    pub sxx: SxxPlugin,
}

impl Default for RemInference {
    fn default() -> Self {
        Self {
            draws: DEFAULT_DRAWS,
            seed: DEFAULT_SEED,
            sxx: SxxPlugin::default(),
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CaceError::BadProbability { value: alpha })
    }
}

fn check_arms(obs: &ObservedDataset) -> Result<()> {
    for arm in [1u8, 0] {
        if obs.arm(arm).next().is_none() {
            return Err(CaceError::EmptyArm { arm });
        }
    }
    Ok(())
}

fn check_arm_sizes(obs: &ObservedDataset, needed: usize) -> Result<()> {
    for (arm, size) in [(1u8, obs.n1()), (0, obs.n0())] {
        if size < needed {
            return Err(CaceError::ArmTooSmall { arm, size, needed });
        }
    }
    Ok(())
}

fn arm_mean(obs: &ObservedDataset, arm: u8, v: impl Fn(usize) -> f64) -> f64 {
    let (sum, count) = obs.arm(arm).fold((0.0, 0usize), |(s, c), i| (s + v(i), c + 1));
    sum / count as f64
}

fn arm_variance(obs: &ObservedDataset, arm: u8, v: &[f64]) -> f64 {
    let m = arm_mean(obs, arm, |i| v[i]);
    let (ss, count) = obs
        .arm(arm)
        .fold((0.0, 0usize), |(s, c), i| (s + (v[i] - m).powi(2), c + 1));
    ss / (count - 1) as f64
}

pub fn itt_w_hat(obs: &ObservedDataset) -> Result<f64> {
    check_arms(obs)?;
    let w = obs.w_obs();
    Ok(arm_mean(obs, 1, |i| w[i] as f64) - arm_mean(obs, 0, |i| w[i] as f64))
}

pub fn itt_y_hat(obs: &ObservedDataset) -> Result<f64> {
    check_arms(obs)?;
    let y = obs.y_obs();
    Ok(arm_mean(obs, 1, |i| y[i]) - arm_mean(obs, 0, |i| y[i]))
}

pub(crate) fn positive_itt_w(itt_w: f64) -> Result<f64> {
    if itt_w > 0.0 {
        Ok(itt_w)
    } else {
        Err(CaceError::NonpositiveIttW { itt_w })
    }
}

pub fn wald_estimate(obs: &ObservedDataset) -> Result<f64> {
    let itt_w = positive_itt_w(itt_w_hat(obs)?)?;
    Ok(itt_y_hat(obs)? / itt_w)
}

/// `Âᵢ = Yᵢ − Wᵢ·τ`.
pub fn a_hat_residuals(obs: &ObservedDataset, tau: f64) -> Vec<f64> {
    obs.y_obs()
        .iter()
        .zip(obs.w_obs())
        .map(|(&y, &w)| y - w as f64 * tau)
        .collect()
}

/// `S²_{Â(1)}/n₁ + S²_{Â(0)}/n₀`.
pub fn var_tilde_cre(obs: &ObservedDataset, tau: f64) -> Result<f64> {
    check_arm_sizes(obs, 2)?;
    let a = a_hat_residuals(obs, tau);
    Ok(arm_variance(obs, 1, &a) / obs.n1() as f64 + arm_variance(obs, 0, &a) / obs.n0() as f64)
}

pub fn ci_wald_cre(obs: &ObservedDataset, alpha: f64) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    let itt_w = positive_itt_w(itt_w_hat(obs)?)?;
    let itt_y = itt_y_hat(obs)?;
    let point = itt_y / itt_w;
    let var_tilde = var_tilde_cre(obs, point)?;
    let half = norm_quantile(1.0 - alpha / 2.0) * var_tilde.sqrt() / itt_w;
    Ok(EstimateReport {
        method: Method::Wald,
        point,
        ci_lo: point - half,
        ci_hi: point + half,
        alpha,
        diagnostics: Diagnostics::Wald(WaldDiagnostics {
            itt_w,
            itt_y,
            var_tilde,
            var_tilde_x: None,
            r2_hat: None,
            lambda: None,
        }),
    })
}

/// Within-arm covariances `S_{Â,x}` and `S_xx`, divisor `n_z − 1`.
fn arm_moments(obs: &ObservedDataset, arm: u8, a: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let idx: Vec<usize> = obs.arm(arm).collect();
    let k = obs.k();
    let nz = idx.len() as f64;
    let a_bar = idx.iter().map(|&i| a[i]).sum::<f64>() / nz;
    let x = obs.x();
    let x_bar = DVector::from_fn(k, |j, _| idx.iter().map(|&i| x[(i, j)]).sum::<f64>() / nz);
    let mut s_ax = DVector::zeros(k);
    let mut s_xx = DMatrix::zeros(k, k);
    for &i in &idx {
        let dx = x.row(i).transpose() - &x_bar;
        s_ax.axpy(a[i] - a_bar, &dx, 1.0);
        s_xx.ger(1.0, &dx, &dx, 1.0);
    }
    (s_ax / (nz - 1.0), s_xx / (nz - 1.0))
}

/// `(Var̂(τ̃_A)_x, R̂²)` with the default covariate covariance plug-in.
pub fn projected_quantities(obs: &ObservedDataset, tau: f64) -> Result<(f64, f64)> {
    projected_quantities_with(obs, tau, SxxPlugin::default())
}

pub fn projected_quantities_with(obs: &ObservedDataset, tau: f64, sxx: SxxPlugin) -> Result<(f64, f64)> {
    let k = obs.k();
    check_arm_sizes(obs, k + 2)?;
    let var_tilde = var_tilde_cre(obs, tau)?;
    if k == 0 {
        return Ok((var_tilde, 0.0));
    }
    let a = a_hat_residuals(obs, tau);
    let pooled_inv = spd_inverse(&finite_pop_cov(obs.x())?, DEFAULT_CONDITION_CAP)?;
    let (s1, sxx1) = arm_moments(obs, 1, &a);
    let (s0, sxx0) = arm_moments(obs, 0, &a);
    let quad = |v: &DVector<f64>, m: &DMatrix<f64>| (v.transpose() * m * v)[(0, 0)];
    let (proj1, proj0) = match sxx {
        SxxPlugin::Pooled => (quad(&s1, &pooled_inv), quad(&s0, &pooled_inv)),
        SxxPlugin::PerArm => (
            quad(&s1, &spd_inverse(&sxx1, DEFAULT_CONDITION_CAP)?),
            quad(&s0, &spd_inverse(&sxx0, DEFAULT_CONDITION_CAP)?),
        ),
    };
    let proj01 = quad(&(&s1 - &s0), &pooled_inv);
    let (n, n1, n0) = (obs.n() as f64, obs.n1() as f64, obs.n0() as f64);
    let var_x = (var_tilde - proj01 / n).max(0.0);
    let explained = proj1 / n1 + proj0 / n0 - proj01 / n;
    let r2 = if var_x > 0.0 {
        (explained / var_x).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok((var_x, r2))
}

/// Interval under rerandomization with threshold `threshold_a`.
pub fn ci_wald_rem(
    obs: &ObservedDataset,
    alpha: f64,
    threshold_a: f64,
    mc: &RemInference,
    cache: &QuantileCache,
) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    let itt_w = positive_itt_w(itt_w_hat(obs)?)?;
    let itt_y = itt_y_hat(obs)?;
    let point = itt_y / itt_w;
    let var_tilde = var_tilde_cre(obs, point)?;
    let (var_x, r2) = projected_quantities_with(obs, point, mc.sxx)?;
    let p = 1.0 - alpha / 2.0;
    let lambda = if obs.k() == 0 {
        norm_quantile(p)
    } else {
        let spec = MixtureQuantileSpec::new(obs.k(), threshold_a, r2, p)
            .with_draws(mc.draws)
            .with_seed(mc.seed);
        cache.quantile(&spec)?
    };
    let half = lambda * var_x.sqrt() / itt_w;
    Ok(EstimateReport {
        method: Method::WaldRem,
        point,
        ci_lo: point - half,
        ci_hi: point + half,
        alpha,
        diagnostics: Diagnostics::Wald(WaldDiagnostics {
            itt_w,
            itt_y,
            var_tilde,
            var_tilde_x: Some(var_x),
            r2_hat: Some(r2),
            lambda: Some(lambda),
        }),
    })
}

/// `τ̃_A = ÎTT_Y − ÎTT_W·τ`.
pub fn tau_tilde_a(obs: &ObservedDataset, tau: f64) -> Result<f64> {
    Ok(itt_y_hat(obs)? - itt_w_hat(obs)? * tau)
}

/// Randomization variance of `τ̃_A` at the sample CACE over all assignments
/// with `n1` treated: `S²_{A1}/n₁ + S²_{A0}/n₀ − S²_{A01}/n`.
pub fn finite_population_variance(pop: &FinitePopulation, n1: usize) -> Result<f64> {
    let n = pop.n();
    if n1 == 0 || n1 >= n {
        return Err(CaceError::BadMargins { n, n1 });
    }
    let tau = pop.sample_cace()?;
    let a = |z: u8| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let w = if z == 1 { pop.w1()[i] } else { pop.w0()[i] };
                pop.outcome_under(i, z) - w as f64 * tau
            })
            .collect()
    };
    let (a1, a0) = (a(1), a(0));
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
    };
    // Σ(A₁ − A₀) = 0 at the sample CACE, so no centering.
    let s01 = a1.iter().zip(&a0).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / (n - 1) as f64;
    let n0 = n - n1;
    Ok(var(&a1) / n1 as f64 + var(&a0) / n0 as f64 - s01 / n as f64)
}

//! Bayesian inference for the sample CACE under a latent-index model.
//!
//! Treatment uptake follows `W_i(z) = 1{L_i(z) > 0}` with
//! `L_i(z) = β₀ + α·z + βᵀx_i + e_i`, `e_i ~ N(0, 1)` and `α > 0`, which rules
//! out defiers. Outcomes are `Y_i(w) = γ_w0 + γ_wᵀx_i + ε_iw` where
//! `(e_i, ε_iw)` is bivariate normal with `Cov = π_w` and `Var(ε_iw) = σ²_w`.
//! The sampler works with `ε_w = π_{w|e}·e + η`, `η ~ N(0, σ²_{w|e})`, so
//! `π_w = π_{w|e}` and `σ²_w = σ²_{w|e} + π²_{w|e}`.
//!
//! Coefficient vectors are stored intercept first. The latent-equation vector
//! is `(β₀, α, β)` to match design rows `(1, Z, x)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{ln_norm_cdf, quantile_sorted, sample_truncated_normal, truncated_normal_mean};
use crate::error::{CaceError, Result};
use crate::linalg::PrecisionGaussian;
use crate::population::ObservedDataset;
use crate::report::{Diagnostics, EstimateReport, Method};
use crate::rng::stream;
use crate::wald::check_alpha;

/// Joint draws tried before switching to the coordinate-wise update of `α`.
pub const MAX_JOINT_TRIES: usize = 100;

const ALPHA_INDEX: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesConfig {
    pub chains: usize,
    pub iters_per_chain: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub prior_coef_var: f64,
    pub ig_shape: f64,
    pub ig_scale: f64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iters_per_chain: 2500,
            burn_in: 1250,
            seed: 1,
            prior_coef_var: 100.0,
            ig_shape: 0.01,
            ig_scale: 0.01,
        }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(CaceError::InvalidConfig("need at least one chain".into()));
        }
        if self.burn_in >= self.iters_per_chain {
            return Err(CaceError::InvalidConfig(format!(
                "burn-in {} must be below the chain length {}",
                self.burn_in, self.iters_per_chain
            )));
        }
        if !(self.prior_coef_var > 0.0 && self.ig_shape > 0.0 && self.ig_scale > 0.0) {
            return Err(CaceError::InvalidConfig("prior parameters must be positive".into()));
        }
        Ok(())
    }

    fn prior_precision(&self) -> f64 {
        1.0 / self.prior_coef_var
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub gamma0: DVector<f64>,
    pub gamma1: DVector<f64>,
    /// `(β₀, β)`.
    pub beta: DVector<f64>,
    pub alpha: f64,
    pub pi0e: f64,
    pub pi1e: f64,
    pub sig0e2: f64,
    pub sig1e2: f64,
    pub latents: Vec<f64>,
}

impl ParameterState {
    fn gamma(&self, arm: u8) -> &DVector<f64> {
        if arm == 1 {
            &self.gamma1
        } else {
            &self.gamma0
        }
    }

    fn pi_e(&self, arm: u8) -> f64 {
        if arm == 1 {
            self.pi1e
        } else {
            self.pi0e
        }
    }

    fn sig_e2(&self, arm: u8) -> f64 {
        if arm == 1 {
            self.sig1e2
        } else {
            self.sig0e2
        }
    }

    /// `(π_w, σ²_w)`.
    pub fn outcome_moments(&self, arm: u8) -> (f64, f64) {
        let pi = self.pi_e(arm);
        (pi, self.sig_e2(arm) + pi * pi)
    }

    /// `(π_{e|w}, σ²_{e|w})`: regression of `e` on `ε_w`.
    pub fn latent_given_outcome(&self, arm: u8) -> (f64, f64) {
        let (pi, sig2) = self.outcome_moments(arm);
        (pi / sig2, self.sig_e2(arm) / sig2)
    }
}

/// Observed data in the layout the sampler iterates over.
#[derive(Debug, Clone)]
pub struct BayesData<'a> {
    obs: &'a ObservedDataset,
    /// Row-major `(1, x)`.
    rows: Vec<f64>,
}

impl<'a> BayesData<'a> {
    pub fn new(obs: &'a ObservedDataset) -> Self {
        let (n, k) = (obs.n(), obs.k());
        let mut rows = Vec::with_capacity(n * (k + 1));
        for i in 0..n {
            rows.push(1.0);
            rows.extend(obs.x().row(i).iter());
        }
        Self { obs, rows }
    }

    pub fn obs(&self) -> &ObservedDataset {
        self.obs
    }

    fn k(&self) -> usize {
        self.obs.k()
    }

    fn row(&self, i: usize) -> &[f64] {
        let p = self.k() + 1;
        &self.rows[i * p..(i + 1) * p]
    }

    fn linear(&self, i: usize, coef: &DVector<f64>) -> f64 {
        self.row(i).iter().zip(coef.iter()).map(|(a, b)| a * b).sum()
    }

    fn w(&self, i: usize) -> u8 {
        self.obs.w_obs()[i]
    }

    fn z(&self, i: usize) -> f64 {
        self.obs.z()[i] as f64
    }

    fn y(&self, i: usize) -> f64 {
        self.obs.y_obs()[i]
    }

    /// `c_i = β₀ + βᵀx_i`.
    fn latent_base(&self, i: usize, s: &ParameterState) -> f64 {
        self.linear(i, &s.beta)
    }

    /// `e_i = l_i − α·Z_i − β₀ − βᵀx_i`.
    fn e(&self, i: usize, s: &ParameterState) -> f64 {
        s.latents[i] - s.alpha * self.z(i) - self.latent_base(i, s)
    }

    /// `ε_{i,W_i}` under the current outcome coefficients.
    fn eps(&self, i: usize, s: &ParameterState) -> f64 {
        self.y(i) - self.linear(i, s.gamma(self.w(i)))
    }

    fn units(&self, arm: u8) -> impl Iterator<Item = usize> + '_ {
        (0..self.obs.n()).filter(move |&i| self.w(i) == arm)
    }
}

/// Coefficients at 0, `α = 1`, unit variances, zero correlations and latents
/// drawn with signs matching `W_obs`.
pub fn init_state<R: Rng + ?Sized>(data: &BayesData, rng: &mut R) -> ParameterState {
    let (n, k) = (data.obs.n(), data.k());
    let latents = (0..n)
        .map(|i| {
            if data.w(i) == 1 {
                sample_truncated_normal(rng, 0.0, 1.0, 0.0, f64::INFINITY)
            } else {
                sample_truncated_normal(rng, 0.0, 1.0, f64::NEG_INFINITY, 0.0)
            }
        })
        .collect();
    ParameterState {
        gamma0: DVector::zeros(k + 1),
        gamma1: DVector::zeros(k + 1),
        beta: DVector::zeros(k + 1),
        alpha: 1.0,
        pi0e: 0.0,
        pi1e: 0.0,
        sig0e2: 1.0,
        sig1e2: 1.0,
        latents,
    }
}

/// Shape and scale of the inverse-gamma conditional of `σ²_{w|e}`.
pub fn variance_posterior(s: &ParameterState, data: &BayesData, cfg: &BayesConfig, arm: u8) -> (f64, f64) {
    let pi = s.pi_e(arm);
    let (count, ss) = data.units(arm).fold((0usize, 0.0), |(c, acc), i| {
        let r = data.eps(i, s) - pi * data.e(i, s);
        (c + 1, acc + r * r)
    });
    (cfg.ig_shape + count as f64 / 2.0, cfg.ig_scale + ss / 2.0)
}

/// Mean and variance of the normal conditional of `π_{w|e}` given `σ²_{w|e}`.
pub fn correlation_posterior(
    s: &ParameterState,
    data: &BayesData,
    cfg: &BayesConfig,
    arm: u8,
    sig_e2: f64,
) -> (f64, f64) {
    let (see, sep) = data.units(arm).fold((0.0, 0.0), |(a, b), i| {
        let e = data.e(i, s);
        (a + e * e, b + e * data.eps(i, s))
    });
    let var = 1.0 / (see / sig_e2 + cfg.prior_precision());
    (var * sep / sig_e2, var)
}

pub fn step1_covariance<R: Rng + ?Sized>(
    s: &mut ParameterState,
    data: &BayesData,
    cfg: &BayesConfig,
    rng: &mut R,
) -> Result<()> {
    for arm in [0u8, 1] {
        let (shape, scale) = variance_posterior(s, data, cfg, arm);
        let gamma = Gamma::new(shape, 1.0 / scale)
            .map_err(|e| CaceError::InvalidConfig(format!("inverse-gamma parameters: {e}")))?;
        let sig_e2 = 1.0 / gamma.sample(rng);
        let (mean, var) = correlation_posterior(s, data, cfg, arm, sig_e2);
        let pi = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if arm == 1 {
            s.sig1e2 = sig_e2;
            s.pi1e = pi;
        } else {
            s.sig0e2 = sig_e2;
            s.pi0e = pi;
        }
    }
    Ok(())
}

/// Precision and right-hand side of the normal conditional of `γ_w`.
pub fn outcome_coef_posterior(
    s: &ParameterState,
    data: &BayesData,
    cfg: &BayesConfig,
    arm: u8,
) -> (DMatrix<f64>, DVector<f64>) {
    let p = data.k() + 1;
    let sig2 = s.sig_e2(arm);
    let pi = s.pi_e(arm);
    let mut precision = DMatrix::identity(p, p) * cfg.prior_precision();
    let mut rhs = DVector::zeros(p);
    for i in data.units(arm) {
        let x = DVector::from_column_slice(data.row(i));
        let target = data.y(i) - pi * data.e(i, s);
        precision.ger(1.0 / sig2, &x, &x, 1.0);
        rhs.axpy(target / sig2, &x, 1.0);
    }
    (precision, rhs)
}

pub fn step2_outcome_coefs<R: Rng + ?Sized>(
    s: &mut ParameterState,
    data: &BayesData,
    cfg: &BayesConfig,
    rng: &mut R,
) -> Result<()> {
    for arm in [0u8, 1] {
        let (precision, rhs) = outcome_coef_posterior(s, data, cfg, arm);
        let draw = PrecisionGaussian::new(precision, &rhs)?.sample(rng);
        if arm == 1 {
            s.gamma1 = draw;
        } else {
            s.gamma0 = draw;
        }
    }
    Ok(())
}

/// Precision and right-hand side of the normal conditional of `(β₀, α, β)`
/// before truncation.
pub fn latent_coef_posterior(
    s: &ParameterState,
    data: &BayesData,
    cfg: &BayesConfig,
) -> (DMatrix<f64>, DVector<f64>) {
    let k = data.k();
    let mut precision = DMatrix::identity(k + 2, k + 2) * cfg.prior_precision();
    let mut rhs = DVector::zeros(k + 2);
    let moments = [s.latent_given_outcome(0), s.latent_given_outcome(1)];
    let mut v = DVector::zeros(k + 2);
    for i in 0..data.obs.n() {
        let (pi, var) = moments[data.w(i) as usize];
        let row = data.row(i);
        v[0] = 1.0;
        v[1] = data.z(i);
        v.rows_mut(2, k).copy_from_slice(&row[1..]);
        let target = s.latents[i] - pi * data.eps(i, s);
        precision.ger(1.0 / var, &v, &v, 1.0);
        rhs.axpy(target / var, &v, 1.0);
    }
    (precision, rhs)
}

pub fn step3_latent_coefs<R: Rng + ?Sized>(
    s: &mut ParameterState,
    data: &BayesData,
    cfg: &BayesConfig,
    rng: &mut R,
) -> Result<()> {
    let (precision, rhs) = latent_coef_posterior(s, data, cfg);
    let joint = PrecisionGaussian::new(precision.clone(), &rhs)?;
    for _ in 0..MAX_JOINT_TRIES {
        let draw = joint.sample(rng);
        if draw[ALPHA_INDEX] > 0.0 {
            s.alpha = draw[ALPHA_INDEX];
            set_beta(s, &draw);
            return Ok(());
        }
    }
    // Coordinate-wise fallback: α | (β₀, β), then (β₀, β) | α.
    let mean = joint.mean();
    let current = theta(s);
    let d11 = precision[(ALPHA_INDEX, ALPHA_INDEX)];
    let shift: f64 = (0..current.len())
        .filter(|&j| j != ALPHA_INDEX)
        .map(|j| precision[(ALPHA_INDEX, j)] * (current[j] - mean[j]))
        .sum();
    let cond_mean = mean[ALPHA_INDEX] - shift / d11;
    let alpha = sample_truncated_normal(rng, cond_mean, d11.sqrt().recip(), 0.0, f64::INFINITY);

    let rest = precision.clone().remove_row(ALPHA_INDEX).remove_column(ALPHA_INDEX);
    let cross = precision.column(ALPHA_INDEX).clone_owned().remove_row(ALPHA_INDEX);
    let rest_mean = mean.clone().remove_row(ALPHA_INDEX);
    // Precision-form conditional: P_rr (θ_r − m_r) = −P_rα (α − m_α).
    let rhs_rest = &rest * &rest_mean - cross * (alpha - mean[ALPHA_INDEX]);
    let others = PrecisionGaussian::new(rest, &rhs_rest)?.sample(rng);
    s.alpha = alpha;
    s.beta[0] = others[0];
    s.beta.rows_mut(1, data.k()).copy_from(&others.rows(1, data.k()));
    Ok(())
}

fn theta(s: &ParameterState) -> DVector<f64> {
    let k = s.beta.len() - 1;
    let mut t = DVector::zeros(k + 2);
    t[0] = s.beta[0];
    t[ALPHA_INDEX] = s.alpha;
    t.rows_mut(2, k).copy_from(&s.beta.rows(1, k));
    t
}

fn set_beta(s: &mut ParameterState, draw: &DVector<f64>) {
    let k = s.beta.len() - 1;
    s.beta[0] = draw[0];
    s.beta.rows_mut(1, k).copy_from(&draw.rows(2, k));
}

/// Mean and standard deviation of `l_i` before truncation by `W_obs`.
pub fn latent_conditional(s: &ParameterState, data: &BayesData, i: usize) -> (f64, f64) {
    let (pi, var) = s.latent_given_outcome(data.w(i));
    let mean = data.latent_base(i, s) + s.alpha * data.z(i) + pi * data.eps(i, s);
    (mean, var.sqrt())
}

pub fn step4_latents<R: Rng + ?Sized>(s: &mut ParameterState, data: &BayesData, rng: &mut R) {
    for i in 0..data.obs.n() {
        let (mean, sd) = latent_conditional(s, data, i);
        s.latents[i] = if data.w(i) == 1 {
            sample_truncated_normal(rng, mean, sd, 0.0, f64::INFINITY)
        } else {
            sample_truncated_normal(rng, mean, sd, f64::NEG_INFINITY, 0.0)
        };
    }
}

/// Moments of `e_i | ε_i` for a unit observed in arm `w`:
/// `N(π_w ε/σ²_w, 1 − π²_w/σ²_w)`.
fn e_given_eps(s: &ParameterState, data: &BayesData, i: usize) -> (f64, f64) {
    let arm = data.w(i);
    let (pi, sig2) = s.outcome_moments(arm);
    (pi * data.eps(i, s) / sig2, (s.sig_e2(arm) / sig2).sqrt())
}

/// Probability that unit `i` is a complier given its observed cell.
///
/// Units with `W_obs ≠ Z` are never compliers.
pub fn complier_probability(s: &ParameterState, data: &BayesData, i: usize) -> f64 {
    let (w, z) = (data.w(i), data.obs.z()[i]);
    if w != z {
        return 0.0;
    }
    let c = data.latent_base(i, s);
    let (m, sd) = e_given_eps(s, data, i);
    let hi = (-c - m) / sd;
    let lo = (-s.alpha - c - m) / sd;
    // Complier band (lo, hi]. Z = W = 0 conditions on e ≤ hi; Z = W = 1 on e > lo.
    let log_ratio = if z == 0 {
        ln_norm_cdf(lo) - ln_norm_cdf(hi)
    } else {
        ln_norm_cdf(-hi) - ln_norm_cdf(-lo)
    };
    (-log_ratio.exp_m1()).clamp(0.0, 1.0)
}

pub fn impute_compliance<R: Rng + ?Sized>(s: &ParameterState, data: &BayesData, rng: &mut R) -> Vec<bool> {
    (0..data.obs.n())
        .map(|i| {
            let p = complier_probability(s, data, i);
            p > 0.0 && rng.random::<f64>() < p
        })
        .collect()
}

/// Missing potential outcome of a complier, Rao-Blackwellized over `e` with
/// the two outcome errors perfectly correlated given `e`.
pub fn missing_outcome(s: &ParameterState, data: &BayesData, i: usize) -> f64 {
    let obs_arm = data.w(i);
    let mis_arm = 1 - obs_arm;
    let c = data.latent_base(i, s);
    let (m, sd) = e_given_eps(s, data, i);
    let e_mean = truncated_normal_mean(m, sd, -s.alpha - c, -c);
    let eps_obs = data.eps(i, s);
    let eps_mis = s.pi_e(mis_arm) * e_mean
        + (s.sig_e2(mis_arm) / s.sig_e2(obs_arm)).sqrt() * (eps_obs - s.pi_e(obs_arm) * e_mean);
    data.linear(i, s.gamma(mis_arm)) + eps_mis
}

pub fn impute_missing_outcomes(s: &ParameterState, data: &BayesData, compliers: &[bool]) -> Vec<Option<f64>> {
    compliers
        .iter()
        .enumerate()
        .map(|(i, &co)| co.then(|| missing_outcome(s, data, i)))
        .collect()
}

/// `Σ I_co (2W−1)(Y − Y_mis) / Σ I_co`.
pub fn tau_draw(obs: &ObservedDataset, y_mis: &[Option<f64>]) -> Result<f64> {
    let (sum, count) = y_mis
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|m| (i, m)))
        .fold((0.0, 0usize), |(acc, c), (i, m)| {
            let sign = if obs.w_obs()[i] == 1 { 1.0 } else { -1.0 };
            (acc + sign * (obs.y_obs()[i] - m), c + 1)
        });
    if count == 0 {
        Err(CaceError::NoImputedCompliers)
    } else {
        Ok(sum / count as f64)
    }
}

/// One full sweep; returns the `(τ, p_co)` draw, `τ` absent when no unit was
/// imputed as a complier.
pub fn gibbs_iteration<R: Rng + ?Sized>(
    s: &mut ParameterState,
    data: &BayesData,
    cfg: &BayesConfig,
    rng: &mut R,
) -> Result<(Option<f64>, f64)> {
    step1_covariance(s, data, cfg, rng)?;
    step2_outcome_coefs(s, data, cfg, rng)?;
    step3_latent_coefs(s, data, cfg, rng)?;
    step4_latents(s, data, rng);
    let compliers = impute_compliance(s, data, rng);
    let n_co = compliers.iter().filter(|&&c| c).count();
    let y_mis = impute_missing_outcomes(s, data, &compliers);
    let tau = match tau_draw(data.obs, &y_mis) {
        Ok(t) => Some(t),
        Err(CaceError::NoImputedCompliers) => None,
        Err(e) => return Err(e),
    };
    Ok((tau, n_co as f64 / data.obs.n() as f64))
}

#[derive(Debug, Clone, Default)]
struct ChainDraws {
    tau: Vec<f64>,
    pco: Vec<f64>,
    skipped: usize,
}

fn run_chain(data: &BayesData, cfg: &BayesConfig, chain: usize) -> Result<ChainDraws> {
    let mut rng = stream(cfg.seed, &[chain as u64]);
    let mut s = init_state(data, &mut rng);
    let kept = cfg.iters_per_chain - cfg.burn_in;
    let mut out = ChainDraws {
        tau: Vec::with_capacity(kept),
        pco: Vec::with_capacity(kept),
        skipped: 0,
    };
    for it in 0..cfg.iters_per_chain {
        let (tau, pco) = gibbs_iteration(&mut s, data, cfg, &mut rng).map_err(|e| e.in_chain(chain, it))?;
        if it < cfg.burn_in {
            continue;
        }
        out.pco.push(pco);
        match tau {
            Some(t) => out.tau.push(t),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub tau_draws: Vec<f64>,
    pub pco_draws: Vec<f64>,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub pco_mean: f64,
    pub skipped_draws: usize,
    /// Split-R̂ of the τ draws; advisory only.
    pub split_rhat: Option<f64>,
}

impl PosteriorSummary {
    /// Equal-tailed interval at level `1 − alpha`.
    pub fn interval(&self, alpha: f64) -> (f64, f64) {
        let mut sorted = self.tau_draws.clone();
        sorted.sort_by(f64::total_cmp);
        (quantile_sorted(&sorted, alpha / 2.0), quantile_sorted(&sorted, 1.0 - alpha / 2.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesDiagnostics {
    pub p_co: f64,
    pub draws: usize,
    pub skipped_draws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_rhat: Option<f64>,
}

/// Split-R̂ over equal halves of each chain.
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    let half = chains.iter().map(|c| c.len() / 2).min()?;
    if half < 2 {
        return None;
    }
    let pieces: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..2 * half]])
        .collect();
    let m = pieces.len() as f64;
    let nh = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| p.iter().sum::<f64>() / nh).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = nh / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = pieces
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nh - 1.0))
        .sum::<f64>()
        / m;
    if !(w > 0.0) {
        return None;
    }
    let var_plus = (nh - 1.0) / nh * w + b / nh;
    Some((var_plus / w).sqrt())
}

/// Run all chains in parallel, drop burn-in and pool in chain order.
pub fn run_posterior(obs: &ObservedDataset, cfg: &BayesConfig) -> Result<PosteriorSummary> {
    cfg.validate()?;
    let data = BayesData::new(obs);
    let chains: Vec<ChainDraws> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(&data, cfg, c))
        .collect::<Result<_>>()?;
    let split_rhat = split_rhat(&chains.iter().map(|c| c.tau.as_slice()).collect::<Vec<_>>());
    let mut tau_draws = Vec::new();
    let mut pco_draws = Vec::new();
    let mut skipped_draws = 0;
    for c in chains {
        tau_draws.extend(c.tau);
        pco_draws.extend(c.pco);
        skipped_draws += c.skipped;
    }
    if tau_draws.is_empty() {
        return Err(CaceError::NoImputedCompliers);
    }
    let mean = tau_draws.iter().sum::<f64>() / tau_draws.len() as f64;
    let pco_mean = pco_draws.iter().sum::<f64>() / pco_draws.len() as f64;
    let mut summary = PosteriorSummary {
        tau_draws,
        pco_draws,
        mean,
        ci_lo: 0.0,
        ci_hi: 0.0,
        pco_mean,
        skipped_draws,
        split_rhat,
    };
    (summary.ci_lo, summary.ci_hi) = summary.interval(0.05);
    Ok(summary)
}

pub fn ci_bayes(obs: &ObservedDataset, alpha: f64, cfg: &BayesConfig) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    let summary = run_posterior(obs, cfg)?;
    let (ci_lo, ci_hi) = summary.interval(alpha);
    Ok(EstimateReport {
        method: Method::Bayes,
        point: summary.mean,
        ci_lo,
        ci_hi,
        alpha,
        diagnostics: Diagnostics::Bayes(BayesDiagnostics {
            p_co: summary.pco_mean,
            draws: summary.tau_draws.len(),
            skipped_draws: summary.skipped_draws,
            split_rhat: summary.split_rhat,
        }),
    })
}

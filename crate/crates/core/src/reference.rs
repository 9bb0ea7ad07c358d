//! The rerandomization reference distribution `√(1−R²)·ε₀ + √R²·L_{K,a}`.
//!
//! `L_{K,a} = χ_{K,a}·F·√β_K` where `χ²_{K,a}` is χ²_K conditioned on `≤ a`,
//! `F = ±1` with equal probability and `β_K ~ Beta(1/2, (K−1)/2)` (point mass
//! at 1 when `K = 1`).
//!
//! Quantiles are Monte Carlo estimates. The base draws `(ε₀, L)` depend only
//! on `(k, a, draws, seed)`, so every `r2` is evaluated on common random
//! numbers; this keeps λ smooth and monotone in `r2` up to rounding.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{chi2_cdf, chi2_quantile};
use crate::error::{CaceError, Result};
use crate::rng::{derive_seed, stream};

pub const DEFAULT_DRAWS: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 20_180_101;

/// Grid points per unit of `r2` in the cache.
pub const R2_GRID_STEPS: f64 = 1000.0;

const CHUNK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureQuantileSpec {
    pub k: usize,
    /// Threshold; `f64::INFINITY` for no rerandomization.
    pub a: f64,
    pub r2: f64,
    pub p: f64,
    pub draws: usize,
    pub seed: u64,
}

impl MixtureQuantileSpec {
    pub fn new(k: usize, a: f64, r2: f64, p: f64) -> Self {
        Self {
            k,
            a,
            r2,
            p,
            draws: DEFAULT_DRAWS,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_draws(mut self, draws: usize) -> Self {
        self.draws = draws;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(CaceError::InvalidConfig("reference distribution needs k >= 1".into()));
        }
        if !(self.a > 0.0) {
            return Err(CaceError::InvalidConfig(format!("threshold a must be positive, got {}", self.a)));
        }
        if !(0.0..=1.0).contains(&self.r2) {
            return Err(CaceError::InvalidConfig(format!("r2 must lie in [0, 1], got {}", self.r2)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(CaceError::BadProbability { value: self.p });
        }
        if self.draws < 2 {
            return Err(CaceError::InvalidConfig("need at least 2 draws".into()));
        }
        Ok(())
    }

    fn base_key(&self) -> BaseKey {
        BaseKey {
            k: self.k,
            a_bits: self.a.to_bits(),
            draws: self.draws,
            seed: self.seed,
        }
    }
}

/// `χ_{K,a}`: square root of a χ²_K draw conditioned on `≤ a`.
pub fn truncated_chi_sample<R: Rng + ?Sized>(k: usize, a: f64, rng: &mut R) -> f64 {
    let kf = k as f64;
    if a.is_infinite() {
        let chi2 = ChiSquared::new(kf).expect("k >= 1");
        return chi2.sample(rng).sqrt();
    }
    let fa = chi2_cdf(kf, a);
    let u: f64 = rng.random::<f64>() * fa;
    chi2_quantile(kf, u).min(a).sqrt()
}

/// One draw of `L_{K,a}`.
pub fn sample_l<R: Rng + ?Sized>(k: usize, a: f64, rng: &mut R) -> f64 {
    let chi = truncated_chi_sample(k, a, rng);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let beta = if k == 1 {
        1.0
    } else {
        Beta::new(0.5, 0.5 * (k as f64 - 1.0)).expect("valid shape").sample(rng)
    };
    chi * sign * beta.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct BaseKey {
    k: usize,
    a_bits: u64,
    draws: usize,
    seed: u64,
}

/// Paired base draws `(ε₀, L)`.
struct BaseDraws {
    eps: Vec<f64>,
    l: Vec<f64>,
}

fn base_draws(spec: &MixtureQuantileSpec) -> BaseDraws {
    let root = derive_seed(spec.seed, &[spec.k as u64, spec.a.to_bits(), spec.draws as u64]);
    let mut eps = vec![0.0; spec.draws];
    let mut l = vec![0.0; spec.draws];
    eps.par_chunks_mut(CHUNK)
        .zip(l.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, (e_chunk, l_chunk))| {
            let mut rng = stream(root, &[c as u64]);
            for (e, l) in e_chunk.iter_mut().zip(l_chunk.iter_mut()) {
                *e = rng.sample(StandardNormal);
                *l = sample_l(spec.k, spec.a, &mut rng);
            }
        });
    BaseDraws { eps, l }
}

fn quantile_from_base(base: &BaseDraws, r2: f64, p: f64) -> f64 {
    let (ce, cl) = ((1.0 - r2).sqrt(), r2.sqrt());
    let mut v: Vec<f64> = base
        .eps
        .iter()
        .zip(&base.l)
        .map(|(e, l)| ce * e + cl * l)
        .collect();
    // Type-7 quantile via two order statistics.
    let h = (v.len() - 1) as f64 * p;
    let j = h.floor() as usize;
    let (_, lo, rest) = v.select_nth_unstable_by(j, f64::total_cmp);
    let lo = *lo;
    let frac = h - j as f64;
    if frac == 0.0 || rest.is_empty() {
        return lo;
    }
    let hi = rest.iter().copied().fold(f64::INFINITY, f64::min);
    lo + frac * (hi - lo)
}

/// Empirical `p`-quantile of the mixture at the exact `r2` of `spec`.
pub fn mixture_quantile(spec: &MixtureQuantileSpec) -> Result<f64> {
    spec.validate()?;
    Ok(quantile_from_base(&base_draws(spec), spec.r2, spec.p))
}

/// Round `r2` to the cache grid.
pub fn r2_grid_point(r2: f64) -> f64 {
    ((r2 * R2_GRID_STEPS).round() / R2_GRID_STEPS).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct ValueKey {
    base: BaseKey,
    r2_step: u32,
    p_bits: u64,
}

/// Shared cache of base draws and quantiles.
///
/// Quantiles are evaluated at `r2` rounded to a grid of [`R2_GRID_STEPS`]
/// points per unit. Two threads may compute the same entry concurrently;
/// both produce the same bits.
#[derive(Default)]
pub struct QuantileCache {
    bases: Mutex<HashMap<BaseKey, Arc<BaseDraws>>>,
    values: RwLock<HashMap<ValueKey, f64>>,
}

impl std::fmt::Debug for QuantileCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuantileCache")
            .field("values", &self.values.read().map(|v| v.len()).unwrap_or(0))
            .finish()
    }
}

impl QuantileCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// λ for `spec`, with `spec.r2` snapped to the grid.
    pub fn quantile(&self, spec: &MixtureQuantileSpec) -> Result<f64> {
        spec.validate()?;
        let r2 = r2_grid_point(spec.r2);
        let key = ValueKey {
            base: spec.base_key(),
            r2_step: (r2 * R2_GRID_STEPS).round() as u32,
            p_bits: spec.p.to_bits(),
        };
        if let Some(v) = self.values.read().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let base = self.base(spec);
        let v = quantile_from_base(&base, r2, spec.p);
        self.values.write().expect("cache lock").insert(key, v);
        Ok(v)
    }

    fn base(&self, spec: &MixtureQuantileSpec) -> Arc<BaseDraws> {
        let key = spec.base_key();
        if let Some(b) = self.bases.lock().expect("cache lock").get(&key) {
            return Arc::clone(b);
        }
        // Generated outside the lock so other keys are not blocked.
        let fresh = Arc::new(base_draws(spec));
        Arc::clone(self.bases.lock().expect("cache lock").entry(key).or_insert(fresh))
    }

    pub fn len(&self) -> usize {
        self.values.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::norm_cdf;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    const A5: f64 = 0.554_298_076_728_277_2;

    #[test]
    fn truncated_chi_respects_bound_and_cdf() {
        let mut rng = SimRng::seed_from_u64(11);
        let n = 200_000;
        let mut draws: Vec<f64> = (0..n).map(|_| truncated_chi_sample(5, A5, &mut rng)).collect();
        assert!(draws.iter().all(|c| c * c <= A5));
        draws.sort_by(f64::total_cmp);
        let fa = chi2_cdf(5.0, A5);
        for &x in &[0.1, 0.2, 0.3, 0.4, 0.5] {
            let emp = draws.partition_point(|c| c * c <= x) as f64 / n as f64;
            assert!((emp - chi2_cdf(5.0, x) / fa).abs() < 0.01, "x={x}");
        }
    }

    #[test]
    fn infinite_threshold_gives_plain_chi() {
        let mut rng = SimRng::seed_from_u64(12);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| truncated_chi_sample(3, f64::INFINITY, &mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((m - 3.0).abs() < 0.05);
    }

    #[test]
    fn l_is_bounded_and_symmetric() {
        let mut rng = SimRng::seed_from_u64(13);
        for k in [1, 2, 5] {
            let draws: Vec<f64> = (0..50_000).map(|_| sample_l(k, A5, &mut rng)).collect();
            assert!(draws.iter().all(|l| l.abs() <= A5.sqrt()));
            let pos = draws.iter().filter(|&&l| l > 0.0).count() as f64 / draws.len() as f64;
            assert!((pos - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn unbounded_l_is_standard_normal() {
        let mut rng = SimRng::seed_from_u64(14);
        let n = 200_000;
        let mut draws: Vec<f64> = (0..n).map(|_| sample_l(5, f64::INFINITY, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.02);
        draws.sort_by(f64::total_cmp);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = norm_cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks = {ks}");
    }

    #[test]
    fn pure_normal_quantile() {
        let spec = MixtureQuantileSpec::new(5, A5, 0.0, 0.975).with_draws(200_000);
        assert!((mixture_quantile(&spec).unwrap() - 1.96).abs() < 0.02);
    }

    #[test]
    fn full_r2_matches_oracle() {
        // 10⁷-draw oracle: 0.52249.
        let spec = MixtureQuantileSpec::new(5, A5, 1.0, 0.975).with_draws(200_000);
        let q = mixture_quantile(&spec).unwrap();
        assert!((q - 0.52249).abs() < 0.01, "{q}");
    }

    #[test]
    fn cache_is_bit_identical_and_deterministic() {
        let cache = QuantileCache::new();
        let spec = MixtureQuantileSpec::new(3, 1.0, 0.4004, 0.975).with_draws(50_000).with_seed(3);
        let first = cache.quantile(&spec).unwrap();
        let again = cache.quantile(&MixtureQuantileSpec { r2: 0.3996, ..spec }).unwrap();
        assert_eq!(first.to_bits(), again.to_bits());
        let fresh = QuantileCache::new().quantile(&spec).unwrap();
        assert_eq!(first.to_bits(), fresh.to_bits());
        let direct = mixture_quantile(&MixtureQuantileSpec { r2: 0.4, ..spec }).unwrap();
        assert_eq!(first.to_bits(), direct.to_bits());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = MixtureQuantileSpec::new(2, 2.0, 0.7, 0.9).with_draws(100_000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = one.install(|| mixture_quantile(&spec).unwrap());
        let b = many.install(|| mixture_quantile(&spec).unwrap());
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn grid_monotone_symmetric_and_below_normal() {
        let cache = QuantileCache::new();
        let mut prev = f64::INFINITY;
        for r2 in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let spec = MixtureQuantileSpec::new(5, A5, r2, 0.975).with_draws(200_000);
            let up = cache.quantile(&spec).unwrap();
            let down = cache.quantile(&MixtureQuantileSpec { p: 0.025, ..spec }).unwrap();
            assert!(up <= prev + 0.01);
            assert!(up <= 1.959_963_984_540_054 + 0.01);
            assert!((up + down).abs() < 0.02, "r2={r2}: {up} vs {down}");
            prev = up;
        }
    }

    #[test]
    fn spec_validation() {
        assert!(MixtureQuantileSpec::new(0, 1.0, 0.5, 0.9).validate().is_err());
        assert!(MixtureQuantileSpec::new(1, 1.0, 1.5, 0.9).validate().is_err());
        assert!(MixtureQuantileSpec::new(1, 1.0, 0.5, 1.0).validate().is_err());
        assert!(MixtureQuantileSpec::new(1, -1.0, 0.5, 0.5).validate().is_err());
    }
}

//! Assignment mechanisms: complete randomization (CRE) and Mahalanobis-distance
//! rerandomization (ReM).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::chi2_quantile;
use crate::error::{CaceError, Result};
use crate::linalg::{column_means, spd_inverse, DEFAULT_CONDITION_CAP};
use crate::population::Assignment;

pub const DEFAULT_MAX_TRIES: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Cre,
    Rem,
}

/// Parameters of the assignment mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n: usize,
    pub n1: usize,
    /// Acceptance threshold on M; `f64::INFINITY` accepts every draw.
    pub threshold_a: f64,
    pub max_tries: u64,
}

impl DesignSpec {
    pub fn cre(n: usize, n1: usize) -> Result<Self> {
        let spec = Self {
            kind: DesignKind::Cre,
            n,
            n1,
            threshold_a: f64::INFINITY,
            max_tries: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn rem(n: usize, n1: usize, threshold_a: f64) -> Result<Self> {
        let spec = Self {
            kind: DesignKind::Rem,
            n,
            n1,
            threshold_a,
            max_tries: DEFAULT_MAX_TRIES,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// ReM whose threshold is the `pa` quantile of χ²_k. `pa = 1` means no
    /// rejection (a = ∞).
    pub fn rem_from_pa(n: usize, n1: usize, k: usize, pa: f64) -> Result<Self> {
        let a = if pa == 1.0 {
            f64::INFINITY
        } else {
            threshold_from_pa(k, pa)?
        };
        Self::rem(n, n1, a)
    }

    pub fn with_max_tries(mut self, max_tries: u64) -> Self {
        self.max_tries = max_tries;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n1 >= self.n {
            return Err(CaceError::BadMargins { n: self.n, n1: self.n1 });
        }
        if self.kind == DesignKind::Rem {
            if !(self.threshold_a > 0.0) {
                return Err(CaceError::InvalidConfig(format!(
                    "rerandomization threshold must be positive, got {}",
                    self.threshold_a
                )));
            }
            if self.max_tries == 0 {
                return Err(CaceError::InvalidConfig("max_tries must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of a balance check on one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub m: f64,
    pub mean_diff: Vec<f64>,
    pub accepted: bool,
    pub tries: u64,
}

/// Completely randomized assignment of `n1` out of `n` units.
pub fn sample_cre<R: Rng + ?Sized>(n: usize, n1: usize, rng: &mut R) -> Result<Assignment> {
    if n1 == 0 || n1 >= n {
        return Err(CaceError::BadMargins { n, n1 });
    }
    let mut z = vec![0u8; n];
    for i in rand::seq::index::sample(rng, n, n1) {
        z[i] = 1;
    }
    Assignment::new(z)
}

/// Finite-population covariance of the covariate columns (divisor `n - 1`).
pub fn finite_pop_cov(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(CaceError::TooFewRows { rows: n });
    }
    let means = column_means(x);
    let mut centered = x.clone();
    for (mut col, m) in centered.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-m);
    }
    Ok(centered.tr_mul(&centered) / (n - 1) as f64)
}

/// `x̄₁ - x̄₀` for the arms defined by `z`.
pub fn mean_difference(x: &DMatrix<f64>, z: &[u8]) -> DVector<f64> {
    let k = x.ncols();
    let mut s1 = DVector::zeros(k);
    let mut s0 = DVector::zeros(k);
    let (mut n1, mut n0) = (0usize, 0usize);
    for (i, &zi) in z.iter().enumerate() {
        let row = x.row(i).transpose();
        if zi == 1 {
            s1 += row;
            n1 += 1;
        } else {
            s0 += row;
            n0 += 1;
        }
    }
    s1 / n1 as f64 - s0 / n0 as f64
}

/// Precomputed `S_xx⁻¹` for repeated Mahalanobis evaluations on one covariate
/// matrix.
#[derive(Debug, Clone)]
pub struct BalanceChecker {
    x: DMatrix<f64>,
    sxx_inv: DMatrix<f64>,
}

impl BalanceChecker {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        Self::with_condition_cap(x, DEFAULT_CONDITION_CAP)
    }

    pub fn with_condition_cap(x: &DMatrix<f64>, cap: f64) -> Result<Self> {
        let sxx_inv = if x.ncols() == 0 {
            DMatrix::zeros(0, 0)
        } else {
            spd_inverse(&finite_pop_cov(x)?, cap)?
        };
        Ok(Self { x: x.clone(), sxx_inv })
    }

    /// `M = (n/4) τ̂ᵀ S_xx⁻¹ τ̂`, returned with `τ̂`.
    pub fn statistic(&self, z: &[u8]) -> (f64, DVector<f64>) {
        let tau = mean_difference(&self.x, z);
        let n = self.x.nrows() as f64;
        let m = if tau.is_empty() {
            0.0
        } else {
            0.25 * n * (tau.transpose() * &self.sxx_inv * &tau)[(0, 0)]
        };
        (m.max(0.0), tau)
    }
}

/// Mahalanobis balance statistic of assignment `a` on covariates `x`.
pub fn mahalanobis(x: &DMatrix<f64>, a: &Assignment) -> Result<f64> {
    Ok(BalanceChecker::new(x)?.statistic(a.z()).0)
}

/// Threshold `a` with `P(χ²_k ≤ a) = pa`.
pub fn threshold_from_pa(k: usize, pa: f64) -> Result<f64> {
    if !(pa > 0.0 && pa < 1.0) {
        return Err(CaceError::BadProbability { value: pa });
    }
    if k == 0 {
        return Err(CaceError::InvalidConfig("rerandomization needs at least one covariate".into()));
    }
    Ok(chi2_quantile(k as f64, pa))
}

/// Rejection-sample CRE draws until `M ≤ a`.
pub fn sample_rem<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    spec: &DesignSpec,
    rng: &mut R,
) -> Result<(Assignment, BalanceReport)> {
    spec.validate()?;
    let checker = BalanceChecker::new(x)?;
    sample_rem_with(&checker, spec, rng)
}

/// [`sample_rem`] with a reusable checker.
pub fn sample_rem_with<R: Rng + ?Sized>(
    checker: &BalanceChecker,
    spec: &DesignSpec,
    rng: &mut R,
) -> Result<(Assignment, BalanceReport)> {
    if checker.x.nrows() != spec.n {
        return Err(CaceError::LengthMismatch {
            what: "covariate rows",
            expected: spec.n,
            got: checker.x.nrows(),
        });
    }
    for tries in 1..=spec.max_tries {
        let a = sample_cre(spec.n, spec.n1, rng)?;
        let (m, tau) = checker.statistic(a.z());
        if m <= spec.threshold_a {
            let report = BalanceReport {
                m,
                mean_diff: tau.iter().copied().collect(),
                accepted: true,
                tries,
            };
            return Ok((a, report));
        }
    }
    Err(CaceError::MaxTriesExceeded { tries: spec.max_tries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn random_x(rng: &mut SimRng, n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn cre_two_units_is_fair() {
        let mut rng = SimRng::seed_from_u64(1);
        let draws = 100_000;
        let ones = (0..draws)
            .filter(|_| sample_cre(2, 1, &mut rng).unwrap().z()[0] == 1)
            .count();
        assert!((ones as f64 / draws as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn cre_allocations_are_uniform() {
        let mut rng = SimRng::seed_from_u64(2);
        let draws = 100_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_cre(4, 2, &mut rng).unwrap().into_inner()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            assert!((*c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn cre_rejects_full_treatment() {
        let mut rng = SimRng::seed_from_u64(3);
        assert_eq!(sample_cre(5, 5, &mut rng), Err(CaceError::BadMargins { n: 5, n1: 5 }));
    }

    #[test]
    fn covariance_by_hand() {
        let x = DMatrix::from_column_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 7.0, 7.0, 7.0, 7.0]);
        let s = finite_pop_cov(&x).unwrap();
        assert!((s[(0, 0)] - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[(1, 1)], 0.0);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(finite_pop_cov(&DMatrix::zeros(1, 2)), Err(CaceError::TooFewRows { rows: 1 }));
    }

    #[test]
    fn covariance_of_orthogonal_columns_is_diagonal() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0],
        );
        let s = finite_pop_cov(&x).unwrap();
        for i in 0..3 {
            assert!((s[(i, i)] - 4.0 / 3.0).abs() < 1e-14);
            for j in 0..3 {
                if i != j {
                    assert!(s[(i, j)].abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn mahalanobis_by_hand() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let a = Assignment::new(vec![1, 1, 0, 0]).unwrap();
        assert!((mahalanobis(&x, &a).unwrap() - 2.4).abs() < 1e-12);
        let balanced = Assignment::new(vec![1, 0, 0, 1]).unwrap();
        assert_eq!(mahalanobis(&x, &balanced).unwrap(), 0.0);
    }

    #[test]
    fn singular_covariance_is_reported() {
        let x = DMatrix::from_column_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0]);
        let a = Assignment::new(vec![1, 1, 0, 0]).unwrap();
        assert!(matches!(mahalanobis(&x, &a), Err(CaceError::SingularCovariance { .. })));
    }

    #[test]
    fn mahalanobis_is_approximately_chi_square() {
        let mut rng = SimRng::seed_from_u64(4);
        let x = random_x(&mut rng, 500, 5);
        let checker = BalanceChecker::new(&x).unwrap();
        let draws = 10_000;
        let mean = (0..draws)
            .map(|_| checker.statistic(sample_cre(500, 250, &mut rng).unwrap().z()).0)
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 5.0).abs() < 0.2, "mean M = {mean}");
    }

    #[test]
    fn thresholds() {
        assert!((threshold_from_pa(1, 0.5).unwrap() - 0.4549).abs() < 1e-4);
        assert!((threshold_from_pa(5, 0.01).unwrap() - 0.5543).abs() < 1e-4);
        let a = threshold_from_pa(3, 0.9).unwrap();
        let b = threshold_from_pa(3, 0.999).unwrap();
        let c = threshold_from_pa(3, 1.0 - 1e-12).unwrap();
        assert!(a < b && b < c && c > 50.0);
        assert_eq!(threshold_from_pa(3, 1.0), Err(CaceError::BadProbability { value: 1.0 }));
    }

    #[test]
    fn rem_with_infinite_threshold_is_cre() {
        let mut rng = SimRng::seed_from_u64(5);
        let x = random_x(&mut rng, 20, 2);
        let spec = DesignSpec::rem(20, 10, f64::INFINITY).unwrap();
        let (_, report) = sample_rem(&x, &spec, &mut rng).unwrap();
        assert_eq!(report.tries, 1);
        assert!(report.accepted);
    }

    #[test]
    fn rem_gives_up_after_max_tries() {
        let mut rng = SimRng::seed_from_u64(6);
        let x = random_x(&mut rng, 50, 3);
        let spec = DesignSpec::rem(50, 25, 1e-12).unwrap().with_max_tries(1);
        assert_eq!(
            sample_rem(&x, &spec, &mut rng).unwrap_err(),
            CaceError::MaxTriesExceeded { tries: 1 }
        );
    }

    #[test]
    fn rem_acceptance_rate_tracks_pa() {
        let mut rng = SimRng::seed_from_u64(7);
        let x = random_x(&mut rng, 200, 5);
        let a = threshold_from_pa(5, 0.01).unwrap();
        let checker = BalanceChecker::new(&x).unwrap();
        let attempts = 20_000;
        let accepted = (0..attempts)
            .filter(|_| checker.statistic(sample_cre(200, 100, &mut rng).unwrap().z()).0 <= a)
            .count();
        let rate = accepted as f64 / attempts as f64;
        assert!((0.004..=0.02).contains(&rate), "rate {rate}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mahalanobis_label_swap_invariant(seed in any::<u64>()) {
            let mut rng = SimRng::seed_from_u64(seed);
            let x = random_x(&mut rng, 30, 3);
            let a = sample_cre(30, 15, &mut rng).unwrap();
            let swapped = Assignment::new(a.z().iter().map(|&z| 1 - z).collect()).unwrap();
            let m1 = mahalanobis(&x, &a).unwrap();
            let m2 = mahalanobis(&x, &swapped).unwrap();
            prop_assert!((m1 - m2).abs() < 1e-10 * (1.0 + m1));
        }

        #[test]
        fn mahalanobis_affine_invariant(seed in any::<u64>()) {
            let mut rng = SimRng::seed_from_u64(seed);
            let x = random_x(&mut rng, 30, 3);
            let mut t = random_x(&mut rng, 3, 3);
            for i in 0..3 { t[(i, i)] += 3.0; }
            let shift = random_x(&mut rng, 1, 3);
            let mut y = &x * &t;
            for mut row in y.row_iter_mut() { row += &shift; }
            let a = sample_cre(30, 12, &mut rng).unwrap();
            let m1 = mahalanobis(&x, &a).unwrap();
            let m2 = mahalanobis(&y, &a).unwrap();
            prop_assert!((m1 - m2).abs() < 1e-8 * (1.0 + m1));
        }

        #[test]
        fn rem_draws_satisfy_threshold(seed in any::<u64>()) {
            let mut rng = SimRng::seed_from_u64(seed);
            let x = random_x(&mut rng, 40, 2);
            let spec = DesignSpec::rem_from_pa(40, 20, 2, 0.2).unwrap();
            let (a, report) = sample_rem(&x, &spec, &mut rng).unwrap();
            prop_assert!(report.m <= spec.threshold_a);
            prop_assert_eq!(mahalanobis(&x, &a).unwrap(), report.m);
            prop_assert_eq!(a.n1(), 20);
        }
    }
}

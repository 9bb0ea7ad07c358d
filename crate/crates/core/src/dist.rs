//! Scalar distribution helpers: standard normal, truncated normal and χ².
//!
//! Tail work is always done on the lower side of the normal, where
//! `Φ(x) = erfc(-x/√2)/2` keeps full relative precision.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardUniform};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_lr, ln_gamma};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Probabilities below this are treated as underflowed.
pub const TINY_PROB: f64 = 1e-300;

pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// Standard normal quantile. Returns ±∞ at the endpoints.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.5 {
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
    } else {
        std::f64::consts::SQRT_2 * erfc_inv(2.0 * (1.0 - p))
    }
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return norm_cdf(x).ln();
    }
    // Asymptotic Mills-ratio series; the first omitted term is below 1e-12.
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - r * (3.0 - r * (15.0 - 105.0 * r)));
    -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

/// `P(a < Z <= b)` for a standard normal `Z`, evaluated on the side of the
/// axis that avoids cancellation.
pub fn norm_interval_prob(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        norm_cdf(-a) - norm_cdf(-b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_cdf(-b)
    }
}

/// Mean of a standard normal truncated to `(a, b]`.
///
/// When the interval carries less than [`TINY_PROB`] mass the endpoint nearer
/// to zero is returned; the exact truncated mean converges to it.
pub fn std_truncated_mean(a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    // Flip so the interval sits on the lower side where Φ is accurate.
    if a > 0.0 {
        return -std_truncated_mean(-b, -a);
    }
    let mass = norm_interval_prob(a, b);
    if mass < TINY_PROB {
        return if b.abs() < a.abs() { b } else { a };
    }
    let pdf_a = if a.is_finite() { norm_pdf(a) } else { 0.0 };
    let pdf_b = if b.is_finite() { norm_pdf(b) } else { 0.0 };
    let mean = (pdf_a - pdf_b) / mass;
    mean.clamp(a, b)
}

/// Mean of `N(mu, sd²)` truncated to `(lo, hi]`.
pub fn truncated_normal_mean(mu: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    mu + sd * std_truncated_mean((lo - mu) / sd, (hi - mu) / sd)
}

/// Draw from `N(mu, sd²)` restricted to `(lo, hi)`. Either bound may be infinite.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    sd: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let z = sample_std_truncated(rng, a, b);
    let x = mu + sd * z;
    // Keep strict inequalities after rescaling.
    if x <= lo {
        lo.next_up()
    } else if x >= hi {
        hi.next_down()
    } else {
        x
    }
}

fn sample_std_truncated<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    debug_assert!(a < b, "empty truncation interval ({a}, {b})");
    if a > 0.0 {
        return -sample_std_truncated(rng, -b, -a);
    }
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    if pb - pa < 1e-15 && b < 0.0 {
        return -tail_rejection(rng, -b, -a);
    }
    let u: f64 = rng.sample(StandardUniform);
    let p = (pa + u * (pb - pa)).clamp(1e-300, 1.0 - 1e-16);
    norm_quantile(p).clamp(a, b)
}

/// Sample a standard normal restricted to `[c, d]` with `c > 0` far in the tail
/// (Robert, 1995).
fn tail_rejection<R: Rng + ?Sized>(rng: &mut R, c: f64, d: f64) -> f64 {
    debug_assert!(c > 0.0);
    let width = d - c;
    if width < 1.0 / c {
        // Narrow band: uniform proposal, envelope exp(-(z² - c²)/2) ≤ 1.
        loop {
            let u: f64 = rng.sample(StandardUniform);
            let z = c + u * width;
            let v: f64 = rng.sample(StandardUniform);
            if v.ln() <= -0.5 * (z * z - c * c) {
                return z;
            }
        }
    }
    let rate = 0.5 * (c + (c * c + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = c + e / rate;
        if z > d {
            continue;
        }
        let v: f64 = rng.sample(StandardUniform);
        if v.ln() <= -0.5 * (z - rate) * (z - rate) {
            return z;
        }
    }
}

/// CDF of χ² with `k` degrees of freedom.
pub fn chi2_cdf(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(0.5 * k, 0.5 * x)
    }
}

fn chi2_pdf(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let h = 0.5 * k;
    ((h - 1.0) * x.ln() - 0.5 * x - h * std::f64::consts::LN_2 - ln_gamma(h)).exp()
}

/// Relative tolerance of [`chi2_quantile`] on the returned value.
pub const CHI2_QUANTILE_TOL: f64 = 1e-12;

/// Quantile of χ²_k by safeguarded Newton iteration inside a bisection bracket.
pub fn chi2_quantile(k: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // Wilson-Hilferty start.
    let z = norm_quantile(p);
    let c = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(f64::MIN_POSITIVE);

    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while chi2_cdf(k, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    if x <= lo || x >= hi {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = chi2_cdf(k, x) - p;
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = chi2_pdf(k, x);
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let tol = CHI2_QUANTILE_TOL * next.max(f64::MIN_POSITIVE);
        if (next - x).abs() <= tol || hi - lo <= tol {
            return next;
        }
        x = next;
    }
    x
}

/// Empirical quantile of sorted data, linear interpolation between order
/// statistics (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median; the midpoint of the two central order statistics for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

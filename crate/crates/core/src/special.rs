//! Special functions and log-space helpers shared by the trainers.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

/// Natural log of the gamma function.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b)`.
#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Digamma function Ψ(x) for x > 0.
///
/// Shifts the argument above 10 with the recurrence Ψ(x) = Ψ(x + 1) − 1/x,
/// then sums the asymptotic series through the x^-14 term. Absolute error is
/// below 1e-13 on (0, ∞).
pub fn digamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma of non-positive argument {x}");
    if !x.is_finite() {
        return x;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_2n / (2n).
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// `ln Σ exp(v)`, returning −∞ for an empty slice or when every entry is −∞.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Turns log weights into a probability vector in place and returns their
/// log normalizer. When every weight is −∞ the row becomes uniform and the
/// returned normalizer is −∞.
pub fn normalize_log_weights(weights: &mut [f64]) -> f64 {
    let lse = log_sum_exp(weights);
    if lse == f64::NEG_INFINITY || lse.is_nan() {
        let u = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
        return f64::NEG_INFINITY;
    }
    for w in weights.iter_mut() {
        *w = (*w - lse).exp();
    }
    lse
}

/// Inverse-CDF draw from a normalized probability vector using one uniform
/// variate. A uniform past the accumulated mass maps to the last index.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (k, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return k;
        }
    }
    probs.len() - 1
}

/// A draw from the flat Dirichlet over `k` categories.
pub fn flat_dirichlet<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / k as f64);
    }
    v
}

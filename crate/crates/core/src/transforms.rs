//! Bijections between constrained model parameters and the unconstrained
//! sampling space, with exact log-Jacobians.
//!
//! Positive parameters (tau, beta) use the log transform. Ordered weight
//! vectors use stick-breaking on their increments: the free weights
//! `0 < omega_1 <= ... <= omega_{K-1} <= 1` are cumulative sums of a
//! K-simplex, whose sticks are logistic-transformed coordinates.

use alloc::vec::Vec;

use crate::math::{exp, ln, ln_1p};

/// Logistic function with stable tails.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Inverse logistic; arguments are clamped away from {0, 1}.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    ln(p) - ln_1p(-p)
}

/// log transform for a positive parameter: returns (value, log-Jacobian).
#[inline]
pub fn positive_from_unconstrained(x: f64) -> (f64, f64) {
    (exp(x), x)
}

#[inline]
pub fn positive_to_unconstrained(v: f64) -> f64 {
    ln(v.max(1e-300))
}

/// Maps `K-1` unconstrained coordinates to the free ordered weights of a
/// K-interval weight function, returning the weights and the log-Jacobian.
///
/// The last (most significant) weight is fixed at 1 and not produced here.
pub fn omegas_from_unconstrained(x: &[f64]) -> (Vec<f64>, f64) {
    let k_free = x.len();
    let mut increments = Vec::with_capacity(k_free);
    let mut remaining = 1.0_f64;
    let mut log_jac = 0.0_f64;
    for &xi in x {
        let v = logistic(xi);
        // d eta_j / d x_j = remaining * v * (1 - v)
        log_jac += ln(remaining) + ln(v) + ln_1p(-v);
        increments.push(remaining * v);
        remaining *= 1.0 - v;
    }
    // Cumulative sums give the ordered weights; the final increment is
    // `remaining` and completes the sum to omega_K = 1.
    let mut omegas = Vec::with_capacity(k_free);
    let mut acc = 0.0;
    for inc in &increments {
        acc += inc;
        omegas.push(acc.clamp(1e-300, 1.0));
    }
    (omegas, log_jac)
}

/// Inverse of [`omegas_from_unconstrained`]. Weights on the boundary are
/// nudged inward so the logit stays finite.
pub fn omegas_to_unconstrained(free_omegas: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(free_omegas.len());
    let mut remaining = 1.0_f64;
    let mut prev = 0.0_f64;
    for &w in free_omegas {
        let inc = (w - prev).max(0.0);
        let v = if remaining > 0.0 { inc / remaining } else { 0.5 };
        x.push(logit(v));
        remaining -= inc;
        prev = w;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn positive_roundtrip() {
        for v in [1e-6, 0.15, 1.0, 42.0] {
            let x = positive_to_unconstrained(v);
            let (back, jac) = positive_from_unconstrained(x);
            assert!((back - v).abs() < 1e-12 * v);
            assert!((jac - x).abs() < 1e-15);
        }
    }

    #[test]
    fn omega_roundtrip_and_ordering() {
        let free = vec![0.1, 0.25, 0.7];
        let x = omegas_to_unconstrained(&free);
        let (back, _) = omegas_from_unconstrained(&x);
        for (a, b) in free.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    /// Finite-difference check of the stick-breaking log-Jacobian.
    #[test]
    fn omega_jacobian_matches_finite_differences() {
        let x = vec![-0.3, 0.8];
        let (_, log_jac) = omegas_from_unconstrained(&x);
        let h = 1e-6;
        let mut jac = [[0.0_f64; 2]; 2];
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (wp, _) = omegas_from_unconstrained(&xp);
            let (wm, _) = omegas_from_unconstrained(&xm);
            for i in 0..2 {
                jac[i][j] = (wp[i] - wm[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        assert!((ln(det.abs()) - log_jac).abs() < 1e-5, "{} vs {}", ln(det.abs()), log_jac);
    }

    proptest! {
        #[test]
        fn omegas_always_ordered_in_unit_interval(x in proptest::collection::vec(-8.0f64..8.0, 1..5)) {
            let (w, jac) = omegas_from_unconstrained(&x);
            let mut prev = 0.0;
            for &wi in &w {
                prop_assert!(wi > 0.0 && wi <= 1.0);
                prop_assert!(wi >= prev);
                prev = wi;
            }
            prop_assert!(jac.is_finite());
        }
    }
}

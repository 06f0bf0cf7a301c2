//! Bernoulli KL divergence and the KL confidence index.
//!
//! Everything is in nats. The index inverts `q -> KL(mean, q)` on
//! `[mean, 1]` by bisection; there is no elementary closed form for the
//! inverse except at the boundary means 0 and 1.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KlError {
    #[error("KL(p, q) undefined: q = {q} is a boundary point while p = {p} differs")]
    QOutOfRange { p: f64, q: f64 },
}

/// KL divergence between Bernoulli(p) and Bernoulli(q), with `0 ln 0 = 0`.
///
/// `p` may sit on the boundary of `[0, 1]` (empirical means do); `q` must be
/// interior unless `p == q`.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64, KlError> {
    debug_assert!((0.0..=1.0).contains(&p), "p out of [0,1]: {p}");
    if p == q {
        return Ok(0.0);
    }
    if q <= 0.0 || q >= 1.0 {
        return Err(KlError::QOutOfRange { p, q });
    }
    let mut d = 0.0;
    if p > 0.0 {
        d += p * (p / q).ln();
    }
    if p < 1.0 {
        d += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    // Rounding can push a near-zero divergence slightly negative.
    Ok(d.max(0.0))
}

/// KL divergence extended with the conventions used by empirical programs:
/// a boundary `q` with `p != q` has infinite divergence (so `1/KL = 0`).
pub fn bernoulli_kl_extended(p: f64, q: f64) -> f64 {
    match bernoulli_kl(p, q) {
        Ok(d) => d,
        Err(KlError::QOutOfRange { .. }) => f64::INFINITY,
    }
}

/// Exploration budget `log t + 3 log log t`, floored at zero.
///
/// For `t` where `log log t` is undefined or the sum is negative the budget
/// degrades to `max(0, log t)`; those early rounds are governed by the
/// unpulled-arm convention anyway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlBudget {
    pub t: u64,
    pub value: f64,
}

impl KlBudget {
    pub fn at(t: u64) -> Self {
        assert!(t >= 1, "time step starts at 1");
        let lt = (t as f64).ln();
        let value = if lt > 0.0 && lt.ln().is_finite() {
            (lt + 3.0 * lt.ln()).max(0.0)
        } else {
            lt.max(0.0)
        };
        KlBudget { t, value }
    }
}

/// Largest `q` in `[mean, 1]` with `pulls * KL(mean, q) <= budget`.
///
/// Bisection on the monotone map `q -> KL(mean, q)`; 60 iterations shrink the
/// bracket below 1e-18, well past the 1e-9 target.
pub fn kl_ucb_index(mean: f64, pulls: u64, budget: KlBudget) -> f64 {
    assert!(pulls >= 1, "unpulled arms use the index-1 convention, not this");
    debug_assert!((0.0..=1.0).contains(&mean));
    if mean >= 1.0 {
        return 1.0;
    }
    let cap = budget.value / pulls as f64;
    if cap <= 0.0 {
        return mean;
    }
    // KL(mean, q) -> +inf as q -> 1 unless mean = 1, so the bracket below is
    // valid once the upper endpoint violates the budget.
    let kl_at = |q: f64| bernoulli_kl(mean, q).expect("q interior by construction");
    let mut lo = mean;
    let mut hi = 1.0;
    if kl_at(1.0 - 1e-16) <= cap {
        return 1.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if kl_at(mid) <= cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

//! Generalized extreme value distribution in the (μ, ϑ = log σ, ξ)
//! parameterization.

use serde::{Deserialize, Serialize};

/// Below this |ξ| the Gumbel limit is used.
pub const XI_GUMBEL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub log_sigma: f64,
    pub xi: f64,
}

impl GevParams {
    pub fn new(mu: f64, log_sigma: f64, xi: f64) -> Self {
        Self { mu, log_sigma, xi }
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    fn is_gumbel(&self) -> bool {
        self.xi.abs() < XI_GUMBEL_TOL
    }

    /// `−log t(x)` where `t(x) = [1 + ξ(x−μ)/σ]^{−1/ξ}`, or `None` off
    /// the support. For the Gumbel limit this is `(x−μ)/σ`.
    fn neg_log_t(&self, x: f64) -> Option<f64> {
        let w = (x - self.mu) / self.sigma();
        if self.is_gumbel() {
            return Some(w);
        }
        let s = self.xi * w;
        (s > -1.0).then(|| s.ln_1p() / self.xi)
    }

    /// Bounded end of the support, if any.
    pub fn support_endpoint(&self) -> Option<f64> {
        (!self.is_gumbel()).then(|| self.mu - self.sigma() / self.xi)
    }
}

/// Log density; `f64::NEG_INFINITY` off the support.
pub fn gev_logpdf(x: f64, p: &GevParams) -> f64 {
    match p.neg_log_t(x) {
        // log f = −ϑ − (1 + ξ)·(−log t) − t
        Some(u) => {
            let xi = if p.is_gumbel() { 0.0 } else { p.xi };
            -p.log_sigma - (1.0 + xi) * u - (-u).exp()
        }
        None => f64::NEG_INFINITY,
    }
}

pub fn gev_pdf(x: f64, p: &GevParams) -> f64 {
    gev_logpdf(x, p).exp()
}

/// Distribution function, complete off the support.
pub fn gev_cdf(x: f64, p: &GevParams) -> f64 {
    match p.neg_log_t(x) {
        Some(u) => (-(-u).exp()).exp(),
        // ξ > 0: below the lower endpoint; ξ < 0: above the upper endpoint
        None if p.xi > 0.0 => 0.0,
        None => 1.0,
    }
}

/// `Pr(X ≥ x) = 1 − F(x)`, computed without cancellation in the tail.
pub fn gev_sf(x: f64, p: &GevParams) -> f64 {
    match p.neg_log_t(x) {
        Some(u) => -(-(-u).exp()).exp_m1(),
        None if p.xi > 0.0 => 1.0,
        None => 0.0,
    }
}

/// Inverse distribution function for `u ∈ (0, 1)`.
pub fn gev_quantile(u: f64, p: &GevParams) -> f64 {
    let y = -u.ln();
    let lny = y.ln();
    if p.is_gumbel() {
        p.mu - p.sigma() * lny
    } else {
        p.mu + p.sigma() * (-p.xi * lny).exp_m1() / p.xi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn gumbel_at_location() {
        let p = GevParams::new(0.7, 0.0, 0.0);
        assert_eq!(gev_logpdf(0.7, &p), -1.0);
        assert_eq!(gev_cdf(0.7, &p), (-1.0f64).exp());
    }

    #[test]
    fn off_support_sentinel() {
        let p = GevParams::new(0.0, 0.0, 0.3);
        // z = 1 + 0.3 (x - 0) <= 0 for x <= -1/0.3
        assert_eq!(gev_logpdf(-4.0, &p), f64::NEG_INFINITY);
        assert_eq!(gev_cdf(-4.0, &p), 0.0);
        let q = GevParams::new(0.0, 0.0, -0.3);
        assert_eq!(gev_logpdf(4.0, &q), f64::NEG_INFINITY);
        assert_eq!(gev_cdf(4.0, &q), 1.0);
        assert_eq!(gev_sf(4.0, &q), 0.0);
    }

    #[test]
    fn cdf_at_location_is_inverse_e() {
        for xi in [-0.6, -0.1, 0.0, 1e-7, 0.2, 0.9] {
            let p = GevParams::new(-1.2, -0.4, xi);
            assert_abs_diff_eq!(gev_cdf(-1.2, &p), 0.3678794, epsilon = 1e-7);
            assert_abs_diff_eq!(gev_quantile((-1.0f64).exp(), &p), -1.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn upper_tail_limit() {
        let p = GevParams::new(0.0, 0.0, 0.2);
        assert_eq!(gev_cdf(1e12, &p), 1.0);
        assert_eq!(gev_cdf(f64::INFINITY, &GevParams::new(0.0, 0.0, 0.0)), 1.0);
    }

    /// Values from a 50-digit evaluation of the ξ ≠ 0 formula
    /// (tests/oracles/gev_reference.py).
    #[test]
    fn matches_high_precision_reference() {
        let p = GevParams::new(-2.499, -0.846, 0.299);
        assert_abs_diff_eq!(gev_logpdf(-1.0, &p), REF_LOGPDF, epsilon = 1e-12);
        let q = GevParams::new(-1.5, -0.7, 0.1);
        assert_abs_diff_eq!(gev_cdf(-0.5, &q), REF_CDF, epsilon = 1e-12);
    }

    const REF_LOGPDF: f64 = -2.3523266868033053153;
    const REF_CDF: f64 = 0.85242824151815473568;

    proptest! {
        #[test]
        fn quantile_inverts_cdf(u in 1e-6..(1.0 - 1e-6), mu in -3.0..0.0f64, ls in -1.5..1.0f64, xi in -0.8..0.8f64) {
            let p = GevParams::new(mu, ls, xi);
            let x = gev_quantile(u, &p);
            prop_assert!((gev_cdf(x, &p) - u).abs() < 1e-9);
        }

        #[test]
        fn cdf_is_monotone(a in -10.0..10.0f64, b in -10.0..10.0f64, xi in -0.9..0.9f64) {
            let p = GevParams::new(-1.0, -0.5, xi);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(gev_cdf(lo, &p) <= gev_cdf(hi, &p));
            prop_assert!((gev_cdf(lo, &p) + gev_sf(lo, &p) - 1.0).abs() < 1e-12);
        }
    }
}

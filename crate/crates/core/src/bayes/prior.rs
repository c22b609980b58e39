//! Prior and process-layer densities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::model::{CoefficientVector, GevComponent, ModelSpec, PreparedData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// Variance of the normal prior on fixed intercepts and on slopes.
    pub coef_var: f64,
    /// Variance of the normal prior on hyper-means.
    pub hyper_mean_var: f64,
    /// Inverse-gamma shape and rate for hyper-variances.
    pub ig_shape: f64,
    pub ig_rate: f64,
    /// Support of the shape parameter.
    pub xi_bounds: [f64; 2],
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            coef_var: 1e5,
            hyper_mean_var: 1e5,
            ig_shape: 1e-3,
            ig_rate: 1e-3,
            xi_bounds: [-1.0, 1.0],
        }
    }
}

impl PriorSpec {
    pub fn is_valid(&self) -> bool {
        self.coef_var > 0.0
            && self.hyper_mean_var > 0.0
            && self.ig_shape > 0.0
            && self.ig_rate > 0.0
            && self.xi_bounds[0] < self.xi_bounds[1]
    }

    fn xi_inside(&self, xi: f64) -> bool {
        xi > self.xi_bounds[0] && xi < self.xi_bounds[1]
    }
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
}

pub fn inv_gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// Prior plus process-layer log density.
///
/// Fixed variants: normal intercepts and slopes, uniform shape. Random
/// variants: site intercepts normal around their hyper-mean, with shape
/// intercepts additionally confined to the shape support (an unnormalized
/// indicator); hyper-means normal, hyper-variances inverse gamma.
pub fn log_prior(spec: &ModelSpec, coeffs: &CoefficientVector, priors: &PriorSpec) -> f64 {
    if coeffs.xi0.iter().any(|&xi| !priors.xi_inside(xi)) {
        return f64::NEG_INFINITY;
    }
    let mut lp: f64 = coeffs
        .mu_slopes
        .iter()
        .chain(&coeffs.theta_slopes)
        .map(|&a| normal_logpdf(a, 0.0, priors.coef_var))
        .sum();
    match &coeffs.hyper {
        Some(hyper) if spec.variant.is_random() => {
            for c in GevComponent::ALL {
                let h = hyper[c as usize];
                if h.var <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                lp += normal_logpdf(h.mean, 0.0, priors.hyper_mean_var);
                lp += inv_gamma_logpdf(h.var, priors.ig_shape, priors.ig_rate);
                lp += coeffs.intercepts(c).iter().map(|&z| normal_logpdf(z, h.mean, h.var)).sum::<f64>();
            }
        }
        _ => {
            lp += coeffs.mu0.iter().chain(&coeffs.theta0).map(|&a| normal_logpdf(a, 0.0, priors.coef_var)).sum::<f64>();
            let width = priors.xi_bounds[1] - priors.xi_bounds[0];
            lp -= coeffs.xi0.len() as f64 * width.ln();
        }
    }
    lp
}

pub fn log_posterior(spec: &ModelSpec, coeffs: &CoefficientVector, data: &PreparedData, priors: &PriorSpec) -> f64 {
    let lp = log_prior(spec, coeffs, priors);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    let ll = data.loglik(coeffs);
    if ll == f64::NEG_INFINITY {
        return ll;
    }
    lp + ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflict::{Block, BlockDataset};
    use crate::gev::{gev_logpdf, GevParams};
    use crate::model::{ModelVariant, PreparedData};
    use approx::assert_abs_diff_eq;

    fn spec(variant: ModelVariant, sites: Vec<u32>) -> ModelSpec {
        ModelSpec::new(variant, vec![], vec![], sites).unwrap()
    }

    #[test]
    fn empty_data_leaves_prior_only() {
        let s = spec(ModelVariant::StationaryRandom, vec![1, 2]);
        let c = CoefficientVector::uniform(&s, -1.0, -0.3, 0.1);
        let data = PreparedData::new(&s, &BlockDataset::new()).unwrap();
        assert_eq!(log_posterior(&s, &c, &data, &PriorSpec::default()), log_prior(&s, &c, &PriorSpec::default()));
    }

    #[test]
    fn shape_outside_support() {
        let s = spec(ModelVariant::StationaryFixed, vec![1]);
        let c = CoefficientVector::uniform(&s, -1.0, -0.3, 1.5);
        assert_eq!(log_prior(&s, &c, &PriorSpec::default()), f64::NEG_INFINITY);
    }

    #[test]
    fn hand_summed_fixed_fixture() {
        let s = spec(ModelVariant::StationaryFixed, vec![4]);
        let c = CoefficientVector::uniform(&s, -1.2, -0.5, 0.2);
        let xs = [-1.0, -1.7, -0.4];
        let data = BlockDataset::from_blocks(xs.iter().enumerate().map(|(k, &x)| Block {
            site_id: 4,
            pair: (k as u64, 100),
            x,
            ttc_frame: 0,
            covariates: Default::default(),
        }));
        let prepared = PreparedData::new(&s, &data).unwrap();
        let ln_norm = |x: f64| -0.5 * (2.0 * PI * 1e5).ln() - x * x / 2e5;
        let p = GevParams::new(-1.2, -0.5, 0.2);
        let expected = ln_norm(-1.2) + ln_norm(-0.5) - 2f64.ln() + xs.iter().map(|&x| gev_logpdf(x, &p)).sum::<f64>();
        assert_abs_diff_eq!(log_posterior(&s, &c, &prepared, &PriorSpec::default()), expected, epsilon = 1e-12);
    }

    #[test]
    fn inverse_gamma_density() {
        // IG(2, 3) at 1.5: 9 · 1.5⁻³ · e⁻²
        let expected = (9.0 * 1.5f64.powi(-3) * (-2.0f64).exp()).ln();
        assert_abs_diff_eq!(inv_gamma_logpdf(1.5, 2.0, 3.0), expected, epsilon = 1e-12);
    }
}

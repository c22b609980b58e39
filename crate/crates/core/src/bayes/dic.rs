//! Deviance information criterion.

use serde::{Deserialize, Serialize};

use super::{BayesError, Posterior};
use crate::model::{CoefficientVector, PreparedData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicResult {
    pub d_bar: f64,
    pub p_d: f64,
    pub dic: f64,
}

impl DicResult {
    pub fn from_parts(d_bar: f64, p_d: f64) -> Self {
        Self { d_bar, p_d, dic: d_bar + p_d }
    }
}

/// Conditional DIC from per-draw log likelihoods and the likelihood at the
/// posterior mean.
pub fn dic_from_logliks(logliks: &[f64], loglik_at_mean: f64) -> Result<DicResult, BayesError> {
    if logliks.is_empty() {
        return Err(BayesError::EmptyDraws);
    }
    let d_bar = logliks.iter().map(|l| -2.0 * l).sum::<f64>() / logliks.len() as f64;
    Ok(DicResult::from_parts(d_bar, d_bar + 2.0 * loglik_at_mean))
}

/// Data-layer DIC of a posterior; site intercepts count as parameters.
pub fn dic(posterior: &Posterior, data: &PreparedData) -> Result<DicResult, BayesError> {
    let logliks: Vec<f64> = posterior
        .draws()
        .map(|d| data.loglik(&CoefficientVector::from_flat(&posterior.spec, d).expect("posterior layout")))
        .collect();
    let mean = posterior.mean_coefficients().ok_or(BayesError::EmptyDraws)?;
    dic_from_logliks(&logliks, data.loglik(&mean))
}

/// Rounds half away from zero at `decimals` places after removing
/// floating-point representation noise below 1e-9.
pub fn display_rounded(x: f64, decimals: u32) -> String {
    let nano = (x * 1e9).round() as i128;
    let unit = 10i128.pow(9 - decimals);
    let half = unit / 2;
    let q = if nano >= 0 { (nano + half) / unit } else { (nano - half) / unit };
    let scale = 10i128.pow(decimals);
    let sign = if q < 0 { "-" } else { "" };
    let q = q.abs();
    if decimals == 0 {
        format!("{sign}{q}")
    } else {
        format!("{sign}{}.{:0width$}", q / scale, q % scale, width = decimals as usize)
    }
}

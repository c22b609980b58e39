//! Chain convergence and marginal posterior summaries.

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};

use super::BayesError;

/// Convergence threshold on the BGR statistic.
pub const BGR_THRESHOLD: f64 = 1.1;

/// Brooks-Gelman-Rubin potential scale reduction of equal-length chains.
pub fn bgr_statistic(chains: &[&[f64]]) -> Result<f64, BayesError> {
    let m = chains.len();
    if m < 2 {
        return Err(BayesError::InvalidConfig("BGR needs at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(BayesError::InvalidConfig("BGR needs equal chains of length >= 2".into()));
    }
    let means: Vec<f64> = chains.iter().map(|c| c.iter().mean()).collect();
    let w = chains.iter().map(|c| c.iter().variance()).sum::<f64>() / m as f64;
    if !(w > 0.0) {
        return Err(BayesError::DegenerateChains);
    }
    let b = n as f64 * means.iter().variance();
    let nf = n as f64;
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    /// `None` when every chain is constant.
    pub bgr: Option<f64>,
}

pub fn summarize_param(name: &str, chains: &[Vec<f64>]) -> ParamSummary {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let mean = pooled.iter().mean();
    let sd = if pooled.len() > 1 { pooled.iter().std_dev() } else { 0.0 };
    let mut data = Data::new(pooled);
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    ParamSummary {
        name: name.to_string(),
        mean,
        sd,
        q025: data.quantile(0.025),
        q975: data.quantile(0.975),
        bgr: bgr_statistic(&refs).ok(),
    }
}

/// Names of parameters whose BGR exceeds the threshold.
pub fn non_converged(params: &[ParamSummary]) -> Vec<String> {
    params
        .iter()
        .filter(|p| p.bgr.is_some_and(|r| r > BGR_THRESHOLD))
        .map(|p| p.name.clone())
        .collect()
}

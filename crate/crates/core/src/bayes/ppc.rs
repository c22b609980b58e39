//! Posterior predictive replication of block maxima.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BayesError, Posterior};
use crate::gev::gev_quantile;
use crate::model::PreparedData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpcConfig {
    pub n_rep: usize,
    pub seed: u64,
    /// Density grid `[lo, hi]` and spacing.
    pub grid: [f64; 2],
    pub grid_step: f64,
}

impl Default for PpcConfig {
    fn default() -> Self {
        Self { n_rep: 200, seed: 0, grid: [-3.0, 0.0], grid_step: 0.05 }
    }
}

impl PpcConfig {
    pub fn grid_points(&self) -> Vec<f64> {
        let n = ((self.grid[1] - self.grid[0]) / self.grid_step).round() as usize;
        (0..=n).map(|k| self.grid[0] + k as f64 * self.grid_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcResult {
    pub grid: Vec<f64>,
    pub observed: Vec<f64>,
    pub lo: Vec<f64>,
    pub median: Vec<f64>,
    pub hi: Vec<f64>,
    /// One replicated dataset per sampled draw, in block order.
    pub replicates: Vec<Vec<f64>>,
}

impl PpcResult {
    /// Share of grid points where the observed density lies inside the
    /// 5–95% replicate envelope.
    pub fn envelope_coverage(&self) -> f64 {
        let inside = self
            .observed
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .filter(|(o, (l, h))| *o >= *l && *o <= *h)
            .count();
        inside as f64 / self.grid.len().max(1) as f64
    }
}

/// Gaussian kernel density with Silverman's bandwidth.
pub fn kde(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = samples.len();
    if n == 0 {
        return vec![0.0; grid.len()];
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = if n > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = var.sqrt().min(iqr / 1.34);
    let spread = if spread > 0.0 { spread } else { var.sqrt().max(1e-3) };
    let h = 0.9 * spread * nf.powf(-0.2);
    let norm = 1.0 / (nf * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| samples.iter().map(|&x| (-0.5 * ((g - x) / h).powi(2)).exp()).sum::<f64>() * norm)
        .collect()
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn posterior_predictive(posterior: &Posterior, data: &PreparedData, config: &PpcConfig) -> Result<PpcResult, BayesError> {
    let draws: Vec<&[f64]> = posterior.draws().collect();
    if draws.is_empty() {
        return Err(BayesError::EmptyDraws);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grid = config.grid_points();
    let replicates: Vec<Vec<f64>> = (0..config.n_rep)
        .map(|_| {
            let coeffs = posterior.coefficients(draws[rng.random_range(0..draws.len())]);
            data.blocks()
                .map(|b| {
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    gev_quantile(u, &data.params(&coeffs, b))
                })
                .collect()
        })
        .collect();
    let observed_x: Vec<f64> = data.blocks().map(|b| b.x).collect();
    let observed = kde(&observed_x, &grid);
    let densities: Vec<Vec<f64>> = replicates.iter().map(|r| kde(r, &grid)).collect();
    let mut lo = Vec::with_capacity(grid.len());
    let mut median = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let mut col: Vec<f64> = densities.iter().map(|d| d[k]).collect();
        col.sort_by(f64::total_cmp);
        if col.is_empty() {
            lo.push(0.0);
            median.push(0.0);
            hi.push(0.0);
        } else {
            lo.push(quantile_sorted(&col, 0.05));
            median.push(quantile_sorted(&col, 0.5));
            hi.push(quantile_sorted(&col, 0.95));
        }
    }
    Ok(PpcResult { grid, observed, lo, median, hi, replicates })
}

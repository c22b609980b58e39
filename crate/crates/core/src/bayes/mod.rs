//! Posterior sampling for the GEV model variants.

pub mod diagnostics;
pub mod dic;
pub mod ppc;
pub mod prior;
pub mod sampler;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CoefficientVector, ModelError, ModelSpec, ModelVariant};

pub use diagnostics::{bgr_statistic, non_converged, ParamSummary, BGR_THRESHOLD};
pub use dic::{dic, DicResult};
pub use ppc::{posterior_predictive, PpcConfig, PpcResult};
pub use prior::{log_posterior, log_prior, PriorSpec};
pub use sampler::{run_mcmc, SamplerConfig};

#[derive(Debug, Error, PartialEq)]
pub enum BayesError {
    #[error("invalid sampler input: {0}")]
    InvalidConfig(String),
    #[error("within-chain variance is zero")]
    DegenerateChains,
    #[error("no posterior draws")]
    EmptyDraws,
    #[error("initial state has zero posterior density")]
    InfeasibleStart,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Retained draws, one flat coefficient vector per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub spec: ModelSpec,
    pub names: Vec<String>,
    /// `chains[c][d]` is draw `d` of chain `c`.
    pub chains: Vec<Vec<Vec<f64>>>,
    /// Data log likelihood at each retained draw.
    pub logliks: Vec<Vec<f64>>,
    /// Post burn-in acceptance rate per chain and Metropolis parameter.
    pub acceptance: Vec<Vec<f64>>,
}

impl Posterior {
    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// All draws, chain by chain.
    pub fn draws(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flatten().map(Vec::as_slice)
    }

    pub fn coefficients(&self, flat: &[f64]) -> CoefficientVector {
        CoefficientVector::from_flat(&self.spec, flat).expect("posterior layout")
    }

    /// Evenly spaced subset of at most `max` draws across all chains.
    pub fn thinned(&self, max: usize) -> Vec<CoefficientVector> {
        let all: Vec<&[f64]> = self.draws().collect();
        if all.is_empty() || max == 0 {
            return Vec::new();
        }
        let n = all.len().min(max);
        (0..n).map(|k| self.coefficients(all[k * all.len() / n])).collect()
    }

    pub fn mean_coefficients(&self) -> Option<CoefficientVector> {
        let n = self.n_draws();
        if n == 0 {
            return None;
        }
        let mut sum = vec![0.0; self.names.len()];
        for d in self.draws() {
            for (s, v) in sum.iter_mut().zip(d) {
                *s += v;
            }
        }
        sum.iter_mut().for_each(|s| *s /= n as f64);
        Some(self.coefficients(&sum))
    }

    /// Draws of one parameter, split by chain.
    pub fn column(&self, index: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.iter().map(|d| d[index]).collect()).collect()
    }

    /// Writes `chain,iteration,<names...>` rows.
    pub fn write_draws<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, draw) in chain.iter().enumerate() {
                let mut row = vec![c.to_string(), i.to_string()];
                row.extend(draw.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub variant: ModelVariant,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub params: Vec<ParamSummary>,
    pub dic: DicResult,
    /// Parameters whose BGR exceeds the threshold.
    pub non_converged: Vec<String>,
}

impl PosteriorSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn converged(&self) -> bool {
        self.non_converged.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcFit {
    pub posterior: Posterior,
    pub summary: PosteriorSummary,
}

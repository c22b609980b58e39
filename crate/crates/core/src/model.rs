//! GEV model variants, their link functions and the data likelihood.
//!
//! Location and log-scale are identity-linked to block covariates; shape
//! depends on the site intercept only. Fixed variants share one intercept
//! per parameter across sites, random variants carry one per site plus a
//! hyper-mean and hyper-variance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{Block, BlockDataset};
use crate::gev::{gev_logpdf, GevParams};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("block is missing covariate `{0}`")]
    MissingCovariate(String),
    #[error("site {0} is not part of the model")]
    UnknownSite(u32),
    #[error("stationary variants take no covariates")]
    StationaryWithCovariates,
    #[error("coefficient vector does not match the model layout")]
    LayoutMismatch,
    #[error("unknown model variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    StationaryFixed,
    StationaryRandom,
    NonStationaryFixed,
    /// Non-stationary with random site intercepts (HBSRP).
    NonStationaryRandom,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::StationaryFixed,
        ModelVariant::StationaryRandom,
        ModelVariant::NonStationaryFixed,
        ModelVariant::NonStationaryRandom,
    ];

    pub fn is_random(self) -> bool {
        matches!(self, ModelVariant::StationaryRandom | ModelVariant::NonStationaryRandom)
    }

    pub fn is_stationary(self) -> bool {
        matches!(self, ModelVariant::StationaryFixed | ModelVariant::StationaryRandom)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::StationaryFixed => "stationary_fixed",
            ModelVariant::StationaryRandom => "stationary_random",
            ModelVariant::NonStationaryFixed => "nonstationary_fixed",
            ModelVariant::NonStationaryRandom => "nonstationary_random",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == s || (s == "hbsrp" && *v == ModelVariant::NonStationaryRandom))
            .ok_or_else(|| ModelError::UnknownVariant(s.to_string()))
    }
}

/// GEV parameter a coefficient or hyper-parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GevComponent {
    Mu,
    Theta,
    Xi,
}

impl GevComponent {
    pub const ALL: [GevComponent; 3] = [GevComponent::Mu, GevComponent::Theta, GevComponent::Xi];

    fn tag(self) -> &'static str {
        match self {
            GevComponent::Mu => "mu",
            GevComponent::Theta => "theta",
            GevComponent::Xi => "xi",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub covariates_mu: Vec<String>,
    pub covariates_theta: Vec<String>,
    /// Site ids in ascending order; random intercept slot k belongs to `sites[k]`.
    pub sites: Vec<u32>,
}

impl ModelSpec {
    pub fn new(
        variant: ModelVariant,
        covariates_mu: Vec<String>,
        covariates_theta: Vec<String>,
        mut sites: Vec<u32>,
    ) -> Result<Self, ModelError> {
        if variant.is_stationary() && !(covariates_mu.is_empty() && covariates_theta.is_empty()) {
            return Err(ModelError::StationaryWithCovariates);
        }
        sites.sort_unstable();
        sites.dedup();
        Ok(Self { variant, covariates_mu, covariates_theta, sites })
    }

    /// Same covariates and sites with a different variant; stationary
    /// variants drop the covariates.
    pub fn with_variant(&self, variant: ModelVariant) -> Self {
        let (mu, theta) = if variant.is_stationary() {
            (Vec::new(), Vec::new())
        } else {
            (self.covariates_mu.clone(), self.covariates_theta.clone())
        };
        Self { variant, covariates_mu: mu, covariates_theta: theta, sites: self.sites.clone() }
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn site_index(&self, site_id: u32) -> Result<usize, ModelError> {
        self.sites.binary_search(&site_id).map_err(|_| ModelError::UnknownSite(site_id))
    }

    /// Number of intercepts per GEV parameter.
    pub fn n_intercepts(&self) -> usize {
        if self.variant.is_random() {
            self.sites.len()
        } else {
            1
        }
    }

    /// Intercept slot used by blocks of site index `site`.
    pub fn slot(&self, site: usize) -> usize {
        if self.variant.is_random() {
            site
        } else {
            0
        }
    }

    /// Every coefficient and hyper-parameter, in storage order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let n = self.n_intercepts();
        let mut ids = Vec::new();
        ids.extend((0..n).map(ParamId::Mu0));
        ids.extend((0..self.covariates_mu.len()).map(ParamId::MuSlope));
        ids.extend((0..n).map(ParamId::Theta0));
        ids.extend((0..self.covariates_theta.len()).map(ParamId::ThetaSlope));
        ids.extend((0..n).map(ParamId::Xi0));
        if self.variant.is_random() {
            for c in GevComponent::ALL {
                ids.push(ParamId::HyperMean(c));
                ids.push(ParamId::HyperVar(c));
            }
        }
        ids
    }

    pub fn param_name(&self, id: ParamId) -> String {
        let intercept = |tag: &str, slot: usize| {
            if self.variant.is_random() {
                format!("alpha_{tag}0[{}]", self.sites[slot])
            } else {
                format!("alpha_{tag}0")
            }
        };
        match id {
            ParamId::Mu0(s) => intercept("mu", s),
            ParamId::Theta0(s) => intercept("theta", s),
            ParamId::Xi0(s) => intercept("xi", s),
            ParamId::MuSlope(k) => format!("alpha_mu[{}]", self.covariates_mu[k]),
            ParamId::ThetaSlope(k) => format!("alpha_theta[{}]", self.covariates_theta[k]),
            ParamId::HyperMean(c) => format!("mean_{}0", c.tag()),
            ParamId::HyperVar(c) => format!("var_{}0", c.tag()),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        self.param_ids().into_iter().map(|id| self.param_name(id)).collect()
    }
}

/// Address of one entry of a [`CoefficientVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    Mu0(usize),
    Theta0(usize),
    Xi0(usize),
    MuSlope(usize),
    ThetaSlope(usize),
    HyperMean(GevComponent),
    HyperVar(GevComponent),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub mu0: Vec<f64>,
    pub theta0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub mu_slopes: Vec<f64>,
    pub theta_slopes: Vec<f64>,
    /// (μ, ϑ, ξ) site-intercept distributions, random variants only.
    pub hyper: Option<[Hyper; 3]>,
}

impl CoefficientVector {
    /// Same intercepts at every site, zero slopes, unit hyper-variances.
    pub fn uniform(spec: &ModelSpec, mu: f64, theta: f64, xi: f64) -> Self {
        let n = spec.n_intercepts();
        Self {
            mu0: vec![mu; n],
            theta0: vec![theta; n],
            xi0: vec![xi; n],
            mu_slopes: vec![0.0; spec.covariates_mu.len()],
            theta_slopes: vec![0.0; spec.covariates_theta.len()],
            hyper: spec.variant.is_random().then_some([
                Hyper { mean: mu, var: 1.0 },
                Hyper { mean: theta, var: 1.0 },
                Hyper { mean: xi, var: 1.0 },
            ]),
        }
    }

    pub fn matches(&self, spec: &ModelSpec) -> bool {
        let n = spec.n_intercepts();
        self.mu0.len() == n
            && self.theta0.len() == n
            && self.xi0.len() == n
            && self.mu_slopes.len() == spec.covariates_mu.len()
            && self.theta_slopes.len() == spec.covariates_theta.len()
            && self.hyper.is_some() == spec.variant.is_random()
    }

    pub fn get(&self, id: ParamId) -> f64 {
        match id {
            ParamId::Mu0(s) => self.mu0[s],
            ParamId::Theta0(s) => self.theta0[s],
            ParamId::Xi0(s) => self.xi0[s],
            ParamId::MuSlope(k) => self.mu_slopes[k],
            ParamId::ThetaSlope(k) => self.theta_slopes[k],
            ParamId::HyperMean(c) => self.hyper.expect("random variant")[c.index()].mean,
            ParamId::HyperVar(c) => self.hyper.expect("random variant")[c.index()].var,
        }
    }

    pub fn set(&mut self, id: ParamId, value: f64) {
        match id {
            ParamId::Mu0(s) => self.mu0[s] = value,
            ParamId::Theta0(s) => self.theta0[s] = value,
            ParamId::Xi0(s) => self.xi0[s] = value,
            ParamId::MuSlope(k) => self.mu_slopes[k] = value,
            ParamId::ThetaSlope(k) => self.theta_slopes[k] = value,
            ParamId::HyperMean(c) => self.hyper.as_mut().expect("random variant")[c.index()].mean = value,
            ParamId::HyperVar(c) => self.hyper.as_mut().expect("random variant")[c.index()].var = value,
        }
    }

    pub fn intercepts(&self, c: GevComponent) -> &[f64] {
        match c {
            GevComponent::Mu => &self.mu0,
            GevComponent::Theta => &self.theta0,
            GevComponent::Xi => &self.xi0,
        }
    }

    pub fn to_flat(&self, spec: &ModelSpec) -> Vec<f64> {
        spec.param_ids().into_iter().map(|id| self.get(id)).collect()
    }

    pub fn from_flat(spec: &ModelSpec, values: &[f64]) -> Result<Self, ModelError> {
        let ids = spec.param_ids();
        if ids.len() != values.len() {
            return Err(ModelError::LayoutMismatch);
        }
        let mut c = CoefficientVector::uniform(spec, 0.0, 0.0, 0.0);
        for (id, v) in ids.into_iter().zip(values) {
            c.set(id, *v);
        }
        Ok(c)
    }
}

/// GEV parameters from intercept slot and covariate values.
pub fn link(coeffs: &CoefficientVector, slot: usize, cov_mu: &[f64], cov_theta: &[f64]) -> GevParams {
    let mu = cov_mu
        .iter()
        .zip(&coeffs.mu_slopes)
        .fold(coeffs.mu0[slot], |acc, (y, a)| acc + a * y);
    let log_sigma = cov_theta
        .iter()
        .zip(&coeffs.theta_slopes)
        .fold(coeffs.theta0[slot], |acc, (y, a)| acc + a * y);
    GevParams { mu, log_sigma, xi: coeffs.xi0[slot] }
}

fn covariate_values(block: &Block, names: &[String]) -> Result<Vec<f64>, ModelError> {
    names
        .iter()
        .map(|n| block.covariate(n).ok_or_else(|| ModelError::MissingCovariate(n.clone())))
        .collect()
}

pub fn link_eval(spec: &ModelSpec, coeffs: &CoefficientVector, block: &Block) -> Result<GevParams, ModelError> {
    if !coeffs.matches(spec) {
        return Err(ModelError::LayoutMismatch);
    }
    let site = spec.site_index(block.site_id)?;
    let cov_mu = covariate_values(block, &spec.covariates_mu)?;
    let cov_theta = covariate_values(block, &spec.covariates_theta)?;
    Ok(link(coeffs, spec.slot(site), &cov_mu, &cov_theta))
}

/// Sum of block log densities; `NEG_INFINITY` when any block is off-support.
pub fn dataset_loglik(spec: &ModelSpec, coeffs: &CoefficientVector, data: &BlockDataset) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for block in data.blocks() {
        let lp = gev_logpdf(block.x, &link_eval(spec, coeffs, block)?);
        if lp == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += lp;
    }
    Ok(total)
}

/// A block with covariates resolved against a model.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBlock {
    pub site: usize,
    pub x: f64,
    pub cov_mu: Vec<f64>,
    pub cov_theta: Vec<f64>,
}

/// Blocks grouped by site index for repeated likelihood evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub spec: ModelSpec,
    pub by_site: Vec<Vec<PreparedBlock>>,
}

impl PreparedData {
    pub fn new(spec: &ModelSpec, data: &BlockDataset) -> Result<Self, ModelError> {
        let mut by_site = vec![Vec::new(); spec.n_sites()];
        for block in data.blocks() {
            let site = spec.site_index(block.site_id)?;
            by_site[site].push(PreparedBlock {
                site,
                x: block.x,
                cov_mu: covariate_values(block, &spec.covariates_mu)?,
                cov_theta: covariate_values(block, &spec.covariates_theta)?,
            });
        }
        Ok(Self { spec: spec.clone(), by_site })
    }

    pub fn n_blocks(&self) -> usize {
        self.by_site.iter().map(Vec::len).sum()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &PreparedBlock> {
        self.by_site.iter().flatten()
    }

    pub fn params(&self, coeffs: &CoefficientVector, b: &PreparedBlock) -> GevParams {
        link(coeffs, self.spec.slot(b.site), &b.cov_mu, &b.cov_theta)
    }

    pub fn site_loglik(&self, coeffs: &CoefficientVector, site: usize) -> f64 {
        let mut total = 0.0;
        for b in &self.by_site[site] {
            let lp = gev_logpdf(b.x, &self.params(coeffs, b));
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += lp;
        }
        total
    }

    pub fn loglik(&self, coeffs: &CoefficientVector) -> f64 {
        let mut total = 0.0;
        for site in 0..self.by_site.len() {
            let lp = self.site_loglik(coeffs, site);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += lp;
        }
        total
    }
}

/// Pooled centring and scaling of named covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// covariate → (mean, sd)
    pub transforms: BTreeMap<String, (f64, f64)>,
}

impl Standardizer {
    pub fn identity() -> Self {
        Self { transforms: BTreeMap::new() }
    }

    /// Fits mean and sample sd over every block of `data`; a constant
    /// covariate keeps unit scale.
    pub fn fit(data: &BlockDataset, names: &[String]) -> Result<Self, ModelError> {
        let mut transforms = BTreeMap::new();
        for name in names {
            let values: Vec<f64> = data
                .blocks()
                .map(|b| b.covariate(name).ok_or_else(|| ModelError::MissingCovariate(name.clone())))
                .collect::<Result<_, _>>()?;
            let n = values.len() as f64;
            let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / n };
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            transforms.insert(name.clone(), (mean, sd));
        }
        Ok(Self { transforms })
    }

    pub fn apply_block(&self, block: &Block) -> Block {
        let mut b = block.clone();
        for (name, (mean, sd)) in &self.transforms {
            if let Some(v) = b.covariates.get_mut(name) {
                *v = (*v - mean) / sd;
            }
        }
        b
    }

    pub fn apply(&self, data: &BlockDataset) -> BlockDataset {
        data.map_blocks(|b| self.apply_block(b))
    }

    /// Coefficients acting on raw covariates equivalent to `coeffs`
    /// acting on standardized ones.
    pub fn to_raw(&self, spec: &ModelSpec, coeffs: &CoefficientVector) -> CoefficientVector {
        let mut raw = coeffs.clone();
        let scale = |names: &[String], slopes: &mut [f64]| -> f64 {
            let mut shift = 0.0;
            for (name, a) in names.iter().zip(slopes.iter_mut()) {
                if let Some((mean, sd)) = self.transforms.get(name) {
                    *a /= sd;
                    shift += *a * mean;
                }
            }
            shift
        };
        let mu_shift = scale(&spec.covariates_mu, &mut raw.mu_slopes);
        let theta_shift = scale(&spec.covariates_theta, &mut raw.theta_slopes);
        raw.mu0.iter_mut().for_each(|v| *v -= mu_shift);
        raw.theta0.iter_mut().for_each(|v| *v -= theta_shift);
        if let Some(h) = raw.hyper.as_mut() {
            h[0].mean -= mu_shift;
            h[1].mean -= theta_shift;
        }
        raw
    }
}

//! Crash risk, crash frequency and near-miss exceedance counts from
//! fitted posteriors, plus per-site k-fold validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::sampler::run_mcmc_prepared;
use crate::bayes::{BayesError, Posterior, PriorSpec, SamplerConfig};
use crate::conflict::{Block, BlockDataset};
use crate::gev::{gev_sf, GevParams};
use crate::model::{ModelError, ModelSpec, ModelVariant, PreparedData};

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("observed block count is zero")]
    ZeroObservation,
    #[error("site {site} has {have} blocks, fewer than the {need} folds")]
    InsufficientBlocks { site: u32, have: usize, need: usize },
    #[error("k_folds must be at least 2")]
    InvalidFolds,
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `Pr(X ≥ 0)`: the probability that a block's negated TTC reaches zero.
pub fn risk_of_crash(p: &GevParams) -> f64 {
    gev_sf(0.0, p)
}

pub fn crash_frequency(rc: &[f64]) -> f64 {
    rc.iter().sum()
}

/// Scales a crash frequency over `t` observed blocks to `t_annual` blocks.
pub fn annualize(cf: f64, t_observed: u64, t_annual: u64) -> Result<f64, RiskError> {
    if t_observed == 0 {
        return Err(RiskError::ZeroObservation);
    }
    Ok(t_annual as f64 / t_observed as f64 * cf)
}

/// Expected number of blocks whose maximum reaches `lambda`.
pub fn expected_near_misses(params: &[GevParams], lambda: f64) -> f64 {
    params.iter().map(|p| gev_sf(lambda, p)).sum()
}

/// Posterior mean with an equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self { mean: f64::NAN, lo: f64::NAN, hi: f64::NAN };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (sorted.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        };
        Self { mean: samples.iter().sum::<f64>() / samples.len() as f64, lo: q(0.025), hi: q(0.975) }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { mean: self.mean * factor, lo: self.lo * factor, hi: self.hi * factor }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRisk {
    pub site_id: u32,
    pub pair: (u64, u64),
    pub x: f64,
    pub rc: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRisk {
    pub site_id: u32,
    /// Observed blocks `t`.
    pub n_blocks: usize,
    pub cf: Interval,
    /// Annual blocks `T`, when configured.
    pub annual_blocks: Option<u64>,
    pub cf_year: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearMissPoint {
    pub site_id: u32,
    pub lambda: f64,
    pub estimate: Interval,
    pub observed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub variant: ModelVariant,
    pub n_draws: usize,
    pub blocks: Vec<BlockRisk>,
    pub sites: Vec<SiteRisk>,
    pub near_misses: Vec<NearMissPoint>,
}

/// Per-draw, per-block GEV parameters for the blocks of `data`.
fn block_params(posterior: &Posterior, data: &PreparedData, max_draws: usize) -> Vec<Vec<GevParams>> {
    posterior
        .thinned(max_draws)
        .iter()
        .map(|c| data.blocks().map(|b| data.params(c, b)).collect())
        .collect()
}

fn site_ranges(data: &PreparedData) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    data.by_site
        .iter()
        .map(|s| {
            let r = start..start + s.len();
            start += s.len();
            r
        })
        .collect()
}

/// Draw-wise crash risk of every block of `data` and per-site crash
/// frequencies, annualized when `annual_blocks` is given.
pub fn risk_report(
    posterior: &Posterior,
    data: &BlockDataset,
    annual_blocks: Option<u64>,
    lambdas: &[f64],
    max_draws: usize,
) -> Result<RiskReport, RiskError> {
    let spec = &posterior.spec;
    let prepared = PreparedData::new(spec, data)?;
    let params = block_params(posterior, &prepared, max_draws);
    if params.is_empty() {
        return Err(BayesError::EmptyDraws.into());
    }
    let ordered: Vec<&Block> = data.blocks().collect();
    let blocks = ordered
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let rc: Vec<f64> = params.iter().map(|d| risk_of_crash(&d[k])).collect();
            BlockRisk { site_id: b.site_id, pair: b.pair, x: b.x, rc: Interval::from_samples(&rc) }
        })
        .collect();
    let mut sites = Vec::new();
    let mut near_misses = Vec::new();
    for (s, range) in site_ranges(&prepared).into_iter().enumerate() {
        let site_id = spec.sites[s];
        if range.is_empty() {
            continue;
        }
        let cf: Vec<f64> = params
            .iter()
            .map(|d| crash_frequency(&d[range.clone()].iter().map(risk_of_crash).collect::<Vec<_>>()))
            .collect();
        let cf = Interval::from_samples(&cf);
        let n = range.len();
        let cf_year = annual_blocks.map(|t| cf.scaled(annualize(1.0, n as u64, t).expect("non-empty site")));
        sites.push(SiteRisk { site_id, n_blocks: n, cf, annual_blocks, cf_year });
        for &lambda in lambdas {
            let c: Vec<f64> = params.iter().map(|d| expected_near_misses(&d[range.clone()], lambda)).collect();
            let observed = prepared.by_site[s].iter().filter(|b| b.x >= lambda).count() as u64;
            near_misses.push(NearMissPoint { site_id, lambda, estimate: Interval::from_samples(&c), observed });
        }
    }
    Ok(RiskReport { variant: spec.variant, n_draws: params.len(), blocks, sites, near_misses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KFoldConfig {
    pub k_folds: usize,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    /// Posterior draws used per fold.
    pub max_draws: usize,
}

impl Default for KFoldConfig {
    fn default() -> Self {
        Self {
            k_folds: 5,
            seed: 0,
            lambdas: (2..=9).map(|k| -(k as f64) / 10.0).collect(),
            max_draws: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCell {
    pub site_id: u32,
    pub lambda: f64,
    /// Expected exceedance count `C`, credible interval.
    pub estimate: Interval,
    /// Posterior predictive interval of the exceedance count.
    pub predictive: Interval,
    pub observed: u64,
}

impl ValidationCell {
    pub fn covered(&self) -> bool {
        self.predictive.contains(self.observed as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub variant: ModelVariant,
    pub k_folds: usize,
    /// Fold index of every block, per site in block order.
    pub folds: BTreeMap<u32, Vec<usize>>,
    pub cells: Vec<ValidationCell>,
}

impl ValidationReport {
    /// Share of (site, λ) cells whose observed count lies in the
    /// predictive interval.
    pub fn coverage(&self) -> f64 {
        if self.cells.is_empty() {
            return f64::NAN;
        }
        self.cells.iter().filter(|c| c.covered()).count() as f64 / self.cells.len() as f64
    }
}

/// Seeded assignment of `n` items to `k` folds of near-equal size.
pub fn fold_assignment(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        folds[item] = pos % k;
    }
    folds
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-site k-fold validation of near-miss exceedance counts.
pub fn kfold_validate(
    data: &BlockDataset,
    spec: &ModelSpec,
    priors: &PriorSpec,
    sampler: &SamplerConfig,
    config: &KFoldConfig,
) -> Result<ValidationReport, RiskError> {
    let k = config.k_folds;
    if k < 2 {
        return Err(RiskError::InvalidFolds);
    }
    for &site in &spec.sites {
        let have = data.site(site).len();
        if have < k {
            return Err(RiskError::InsufficientBlocks { site, have, need: k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let folds: BTreeMap<u32, Vec<usize>> = spec
        .sites
        .iter()
        .map(|&s| (s, fold_assignment(data.site(s).len(), k, &mut rng)))
        .collect();
    let split = |fold: usize, held_out: bool| -> BlockDataset {
        let mut out = BlockDataset::new();
        for &s in &spec.sites {
            out.declare_site(s);
            for (b, f) in data.site(s).iter().zip(&folds[&s]) {
                if (*f == fold) == held_out {
                    out.push(b.clone());
                }
            }
        }
        out
    };

    // per fold: per draw, per site, per λ expected counts and per-block probabilities
    let fold_results: Vec<Result<Vec<Vec<GevParams>>, RiskError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..k)
            .map(|fold| {
                let train = split(fold, false);
                let test = split(fold, true);
                scope.spawn(move || -> Result<Vec<Vec<GevParams>>, RiskError> {
                    let train = PreparedData::new(spec, &train)?;
                    let test = PreparedData::new(spec, &test)?;
                    let cfg = SamplerConfig { seed: fold_seed(sampler.seed, fold), ..*sampler };
                    let fit = run_mcmc_prepared(&train, priors, &cfg)?;
                    Ok(block_params(&fit.posterior, &test, config.max_draws))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
    });
    let fold_params: Vec<Vec<Vec<GevParams>>> = fold_results.into_iter().collect::<Result<_, _>>()?;
    let n_draws = fold_params.iter().map(Vec::len).min().unwrap_or(0);
    if n_draws == 0 {
        return Err(BayesError::EmptyDraws.into());
    }

    // held-out blocks of each fold, grouped by site in spec order
    let held: Vec<PreparedData> = (0..k)
        .map(|fold| PreparedData::new(spec, &split(fold, true)))
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::new();
    for (s, &site_id) in spec.sites.iter().enumerate() {
        for &lambda in &config.lambdas {
            let mut expected = vec![0.0; n_draws];
            let mut counts = vec![0.0; n_draws];
            let mut observed = 0u64;
            for fold in 0..k {
                let ranges = site_ranges(&held[fold]);
                let range = ranges[s].clone();
                observed += held[fold].by_site[s].iter().filter(|b| b.x >= lambda).count() as u64;
                for d in 0..n_draws {
                    for p in &fold_params[fold][d][range.clone()] {
                        let prob = gev_sf(lambda, p);
                        expected[d] += prob;
                        if rng.random::<f64>() < prob {
                            counts[d] += 1.0;
                        }
                    }
                }
            }
            cells.push(ValidationCell {
                site_id,
                lambda,
                estimate: Interval::from_samples(&expected),
                predictive: Interval::from_samples(&counts),
                observed,
            });
        }
    }
    Ok(ValidationReport { variant: spec.variant, k_folds: k, folds, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rc_at_origin() {
        assert_abs_diff_eq!(risk_of_crash(&GevParams::new(0.0, 0.0, 0.0)), 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        assert_eq!(risk_of_crash(&GevParams::new(-1e6, 0.0, 0.0)), 0.0);
    }

    /// 50-digit evaluation of `1 − exp(−[1 − ξμ/σ]^(−1/ξ))`
    /// (tests/oracles/gev_reference.py).
    #[test]
    fn rc_matches_reference() {
        let rc = risk_of_crash(&GevParams::new(-2.499, -0.846, 0.299));
        assert_abs_diff_eq!(rc, 0.033719729358774478383, epsilon = 1e-14);
    }

    #[test]
    fn rc_bounded_support() {
        // ξ < 0 with upper endpoint below zero
        assert_eq!(risk_of_crash(&GevParams::new(-2.0, 0.0, -0.8)), 0.0);
        // ξ > 0 with lower endpoint above zero
        assert_eq!(risk_of_crash(&GevParams::new(3.0, 0.0, 0.8)), 1.0);
    }

    #[test]
    fn frequency_and_annualization() {
        assert_eq!(crash_frequency(&[]), 0.0);
        assert_eq!(crash_frequency(&[0.5, 0.25]), 0.75);
        assert_eq!(annualize(0.5, 10, 100).unwrap(), 5.0);
        assert_eq!(annualize(0.0, 7, 100).unwrap(), 0.0);
        assert_abs_diff_eq!(annualize(0.75, 58, 91_250).unwrap(), 1179.956_896_551_724, epsilon = 1e-9);
        assert_eq!(annualize(1.0, 0, 10), Err(RiskError::ZeroObservation));
    }

    #[test]
    fn exceedance_at_location() {
        let p = GevParams::new(-1.1, -0.4, 0.0);
        assert_abs_diff_eq!(expected_near_misses(&[p], -1.1), 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        let ps = [p, GevParams::new(-0.5, -1.0, 0.3), GevParams::new(-2.0, 0.1, -0.2)];
        let rc: Vec<f64> = ps.iter().map(risk_of_crash).collect();
        assert_eq!(expected_near_misses(&ps, 0.0), crash_frequency(&rc));
    }

    #[test]
    fn folds_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = fold_assignment(4, 2, &mut rng);
        assert_eq!(f.iter().filter(|&&x| x == 0).count(), 2);
        assert_eq!(f.iter().filter(|&&x| x == 1).count(), 2);
    }

    #[test]
    fn interval_from_samples() {
        let i = Interval::from_samples(&(0..=100).map(f64::from).collect::<Vec<_>>());
        assert_eq!(i.mean, 50.0);
        assert_abs_diff_eq!(i.lo, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(i.hi, 97.5, epsilon = 1e-12);
    }
}

//! Adaptive Metropolis-within-Gibbs.
//!
//! Coefficients are updated one at a time by Gaussian random-walk
//! Metropolis; hyper-means and hyper-variances of random variants are drawn
//! from their conjugate normal and inverse-gamma conditionals. Step sizes
//! adapt toward the target acceptance rate during burn-in and are frozen
//! afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::diagnostics::{non_converged, summarize_param};
use super::dic::dic_from_logliks;
use super::prior::{log_prior, PriorSpec};
use super::{BayesError, McmcFit, Posterior, PosteriorSummary};
use crate::conflict::BlockDataset;
use crate::model::{CoefficientVector, GevComponent, Hyper, ModelSpec, ParamId, PreparedData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub adapt_window: usize,
    /// Start every chain from the same stream and initial values.
    pub shared_chain_seed: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 2,
            n_iter: 50_000,
            burn_in: 20_000,
            seed: 0,
            target_accept: 0.44,
            adapt_window: 50,
            shared_chain_seed: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), BayesError> {
        let bad = |m: &str| Err(BayesError::InvalidConfig(m.to_string()));
        if self.n_chains < 2 {
            return bad("n_chains must be at least 2");
        }
        if self.burn_in >= self.n_iter {
            return bad("burn_in must be smaller than n_iter");
        }
        if self.n_iter - self.burn_in < 2 {
            return bad("at least two retained draws per chain are required");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be positive");
        }
        Ok(())
    }
}

fn moment_start(data: &PreparedData) -> (f64, f64, f64) {
    let xs: Vec<f64> = data.blocks().map(|b| b.x).collect();
    if xs.is_empty() {
        return (-1.5, -1.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let sd = if sd > 1e-6 { sd } else { 0.5 };
    let scale = sd * 6f64.sqrt() / std::f64::consts::PI;
    (mean - 0.5772 * scale, scale.ln(), sd)
}

/// Moment-matched Gumbel start with ξ = 0.1, falling back to ξ = 0 when
/// that leaves blocks outside the support.
pub fn initial_coefficients(spec: &ModelSpec, data: &PreparedData, priors: &PriorSpec) -> CoefficientVector {
    let (mu, theta, _) = moment_start(data);
    let mut c = CoefficientVector::uniform(spec, mu, theta, 0.1);
    if data.loglik(&c) == f64::NEG_INFINITY {
        c = CoefficientVector::uniform(spec, mu, theta, 0.0);
    }
    if let Some(h) = c.hyper.as_mut() {
        h[0].var = 0.1;
        h[1].var = 0.1;
        h[2].var = 0.01;
    }
    debug_assert!(log_prior(spec, &c, priors).is_finite());
    c
}

fn jitter(spec: &ModelSpec, base: &CoefficientVector, data: &PreparedData, priors: &PriorSpec, rng: &mut ChaCha8Rng) -> CoefficientVector {
    let (_, _, sd) = moment_start(data);
    let mut scale = 0.5;
    for _ in 0..20 {
        let mut c = base.clone();
        for id in spec.param_ids() {
            let width = match id {
                ParamId::Mu0(_) => sd,
                ParamId::Theta0(_) => 0.25,
                ParamId::Xi0(_) => 0.1,
                ParamId::MuSlope(_) | ParamId::ThetaSlope(_) => 0.1,
                ParamId::HyperMean(_) | ParamId::HyperVar(_) => continue,
            };
            let u: f64 = rng.random_range(-1.0..1.0);
            c.set(id, c.get(id) + scale * width * u);
        }
        if log_prior(spec, &c, priors).is_finite() && data.loglik(&c).is_finite() {
            return c;
        }
        scale *= 0.5;
    }
    base.clone()
}

fn initial_step(id: ParamId) -> f64 {
    match id {
        ParamId::Mu0(_) => 0.1,
        ParamId::Theta0(_) | ParamId::Xi0(_) => 0.05,
        _ => 0.02,
    }
}

struct Chain<'a> {
    spec: &'a ModelSpec,
    data: &'a PreparedData,
    priors: &'a PriorSpec,
    coeffs: CoefficientVector,
    site_ll: Vec<f64>,
    log_prior: f64,
    scratch: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(spec: &'a ModelSpec, data: &'a PreparedData, priors: &'a PriorSpec, coeffs: CoefficientVector) -> Result<Self, BayesError> {
        let site_ll: Vec<f64> = (0..spec.n_sites()).map(|s| data.site_loglik(&coeffs, s)).collect();
        let log_prior = log_prior(spec, &coeffs, priors);
        if !log_prior.is_finite() || site_ll.iter().any(|l| !l.is_finite()) {
            return Err(BayesError::InfeasibleStart);
        }
        Ok(Self { spec, data, priors, coeffs, site_ll, log_prior, scratch: Vec::new() })
    }

    fn loglik(&self) -> f64 {
        self.site_ll.iter().sum()
    }

    fn affected(&self, id: ParamId) -> Option<usize> {
        match id {
            ParamId::Mu0(s) | ParamId::Theta0(s) | ParamId::Xi0(s) if self.spec.variant.is_random() => Some(s),
            _ => None,
        }
    }

    /// One random-walk update; returns whether it was accepted.
    fn metropolis(&mut self, id: ParamId, step: f64, rng: &mut ChaCha8Rng) -> bool {
        let old = self.coeffs.get(id);
        let z: f64 = StandardNormal.sample(rng);
        self.coeffs.set(id, old + step * z);
        let new_prior = log_prior(self.spec, &self.coeffs, self.priors);
        if new_prior == f64::NEG_INFINITY {
            self.coeffs.set(id, old);
            return false;
        }
        let sites: Vec<usize> = match self.affected(id) {
            Some(s) => vec![s],
            None => (0..self.site_ll.len()).collect(),
        };
        self.scratch.clear();
        let mut delta = new_prior - self.log_prior;
        for &s in &sites {
            let l = self.data.site_loglik(&self.coeffs, s);
            if l == f64::NEG_INFINITY {
                self.coeffs.set(id, old);
                return false;
            }
            delta += l - self.site_ll[s];
            self.scratch.push(l);
        }
        let u: f64 = rng.random();
        if u.ln() < delta {
            for (&s, &l) in sites.iter().zip(&self.scratch) {
                self.site_ll[s] = l;
            }
            self.log_prior = new_prior;
            true
        } else {
            self.coeffs.set(id, old);
            false
        }
    }

    /// Conjugate draws of hyper-means then hyper-variances.
    fn gibbs_hyper(&mut self, rng: &mut ChaCha8Rng) {
        let Some(mut hyper) = self.coeffs.hyper else { return };
        for c in GevComponent::ALL {
            let z = self.coeffs.intercepts(c);
            let m = z.len() as f64;
            let Hyper { var, .. } = hyper[c as usize];
            let post_var = 1.0 / (m / var + 1.0 / self.priors.hyper_mean_var);
            let post_mean = post_var * z.iter().sum::<f64>() / var;
            let n: f64 = StandardNormal.sample(rng);
            let mean = post_mean + post_var.sqrt() * n;
            let ss: f64 = z.iter().map(|v| (v - mean).powi(2)).sum();
            let shape = self.priors.ig_shape + 0.5 * m;
            let rate = self.priors.ig_rate + 0.5 * ss;
            let precision = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng);
            // guard against underflow to zero precision
            let var = (1.0 / precision).clamp(f64::MIN_POSITIVE, f64::MAX);
            hyper[c as usize] = Hyper { mean, var };
        }
        self.coeffs.hyper = Some(hyper);
        self.log_prior = log_prior(self.spec, &self.coeffs, self.priors);
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    logliks: Vec<f64>,
    acceptance: Vec<f64>,
}

fn run_chain(
    spec: &ModelSpec,
    data: &PreparedData,
    priors: &PriorSpec,
    config: &SamplerConfig,
    chain_index: usize,
) -> Result<ChainOutput, BayesError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shared = config.shared_chain_seed;
    rng.set_stream(if shared { 0 } else { chain_index as u64 });
    let base = initial_coefficients(spec, data, priors);
    let start = if chain_index == 0 || shared { base } else { jitter(spec, &base, data, priors, &mut rng) };
    let mut chain = Chain::new(spec, data, priors, start)?;

    let ids: Vec<ParamId> = spec
        .param_ids()
        .into_iter()
        .filter(|id| !matches!(id, ParamId::HyperMean(_) | ParamId::HyperVar(_)))
        .collect();
    let mut log_steps: Vec<f64> = ids.iter().map(|&id| initial_step(id).ln()).collect();
    let mut window_accepts = vec![0usize; ids.len()];
    let mut kept_accepts = vec![0usize; ids.len()];
    let mut batch = 0usize;
    let retained = config.n_iter - config.burn_in;
    let mut draws = Vec::with_capacity(retained);
    let mut logliks = Vec::with_capacity(retained);

    for iter in 0..config.n_iter {
        for (k, &id) in ids.iter().enumerate() {
            if chain.metropolis(id, log_steps[k].exp(), &mut rng) {
                if iter < config.burn_in {
                    window_accepts[k] += 1;
                } else {
                    kept_accepts[k] += 1;
                }
            }
        }
        chain.gibbs_hyper(&mut rng);

        if iter < config.burn_in {
            if (iter + 1) % config.adapt_window == 0 {
                batch += 1;
                let delta = (1.0 / (batch as f64).sqrt()).min(0.05);
                for (k, acc) in window_accepts.iter_mut().enumerate() {
                    let rate = *acc as f64 / config.adapt_window as f64;
                    log_steps[k] += if rate > config.target_accept { delta } else { -delta };
                    *acc = 0;
                }
            }
        } else {
            draws.push(chain.coeffs.to_flat(spec));
            logliks.push(chain.loglik());
        }
    }
    let acceptance = kept_accepts.iter().map(|&a| a as f64 / retained as f64).collect();
    Ok(ChainOutput { draws, logliks, acceptance })
}

/// Samples the posterior of `spec` given already prepared data.
pub fn run_mcmc_prepared(data: &PreparedData, priors: &PriorSpec, config: &SamplerConfig) -> Result<McmcFit, BayesError> {
    config.validate()?;
    if !priors.is_valid() {
        return Err(BayesError::InvalidConfig("prior variances, shape and rate must be positive".into()));
    }
    let spec = &data.spec;
    let outputs: Vec<Result<ChainOutput, BayesError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.n_chains)
            .map(|c| scope.spawn(move || run_chain(spec, data, priors, config, c)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let outputs: Vec<ChainOutput> = outputs.into_iter().collect::<Result<_, _>>()?;

    let posterior = Posterior {
        spec: spec.clone(),
        names: spec.param_names(),
        chains: outputs.iter().map(|o| o.draws.clone()).collect(),
        logliks: outputs.iter().map(|o| o.logliks.clone()).collect(),
        acceptance: outputs.iter().map(|o| o.acceptance.clone()).collect(),
    };
    let params: Vec<_> = posterior
        .names
        .iter()
        .enumerate()
        .map(|(k, name)| summarize_param(name, &posterior.column(k)))
        .collect();
    let all_ll: Vec<f64> = posterior.logliks.iter().flatten().copied().collect();
    let mean = posterior.mean_coefficients().ok_or(BayesError::EmptyDraws)?;
    let dic = dic_from_logliks(&all_ll, data.loglik(&mean))?;
    let flagged = non_converged(&params);
    if !flagged.is_empty() {
        log::warn!("{}: BGR above threshold for {}", spec.variant, flagged.join(", "));
    }
    let summary = PosteriorSummary {
        variant: spec.variant,
        n_chains: config.n_chains,
        draws_per_chain: config.n_iter - config.burn_in,
        params,
        dic,
        non_converged: flagged,
    };
    Ok(McmcFit { posterior, summary })
}

pub fn run_mcmc(spec: &ModelSpec, data: &BlockDataset, priors: &PriorSpec, config: &SamplerConfig) -> Result<McmcFit, BayesError> {
    let prepared = PreparedData::new(spec, data)?;
    run_mcmc_prepared(&prepared, priors, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflict::Block;
    use crate::gev::{gev_quantile, GevParams};
    use crate::model::ModelVariant;

    fn gumbel_blocks(n: usize, mu: f64, sigma: f64, site: u32, seed: u64) -> Vec<Block> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = GevParams::new(mu, sigma.ln(), 0.0);
        (0..n)
            .map(|k| Block {
                site_id: site,
                pair: (k as u64, 10_000 + k as u64),
                x: gev_quantile(rng.random_range(1e-12..1.0), &p),
                ttc_frame: 0,
                covariates: Default::default(),
            })
            .collect()
    }

    fn quick() -> SamplerConfig {
        SamplerConfig { n_iter: 6000, burn_in: 2000, seed: 11, ..Default::default() }
    }

    #[test]
    fn recovers_gumbel_truth() {
        let data = BlockDataset::from_blocks(gumbel_blocks(200, -1.5, 0.5, 1, 3));
        let spec = ModelSpec::new(ModelVariant::StationaryFixed, vec![], vec![], vec![1]).unwrap();
        let fit = run_mcmc(&spec, &data, &PriorSpec::default(), &quick()).unwrap();
        let mu = fit.summary.param("alpha_mu0").unwrap();
        let theta = fit.summary.param("alpha_theta0").unwrap();
        assert!((mu.mean + 1.5).abs() < 3.0 * mu.sd, "{mu:?}");
        assert!((theta.mean - 0.5f64.ln()).abs() < 3.0 * theta.sd, "{theta:?}");
    }

    #[test]
    fn deterministic_given_seed() {
        let data = BlockDataset::from_blocks(gumbel_blocks(40, -1.5, 0.5, 1, 5));
        let spec = ModelSpec::new(ModelVariant::StationaryFixed, vec![], vec![], vec![1]).unwrap();
        let cfg = SamplerConfig { n_iter: 500, burn_in: 100, ..quick() };
        let a = run_mcmc(&spec, &data, &PriorSpec::default(), &cfg).unwrap();
        let b = run_mcmc(&spec, &data, &PriorSpec::default(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shared_seed_chains_are_identical() {
        let data = BlockDataset::from_blocks(gumbel_blocks(40, -1.5, 0.5, 1, 6));
        let spec = ModelSpec::new(ModelVariant::StationaryFixed, vec![], vec![], vec![1]).unwrap();
        let cfg = SamplerConfig { n_iter: 800, burn_in: 200, shared_chain_seed: true, ..quick() };
        let fit = run_mcmc(&spec, &data, &PriorSpec::default(), &cfg).unwrap();
        assert_eq!(fit.posterior.chains[0], fit.posterior.chains[1]);
        for p in &fit.summary.params {
            assert!(p.bgr.unwrap() <= 1.0);
        }
    }

    #[test]
    fn random_intercepts_separate_sites() {
        let mut blocks = gumbel_blocks(80, -2.2, 0.35, 1, 7);
        blocks.extend(gumbel_blocks(80, -1.0, 0.35, 2, 8));
        let data = BlockDataset::from_blocks(blocks);
        let spec = ModelSpec::new(ModelVariant::StationaryRandom, vec![], vec![], vec![1, 2]).unwrap();
        let fit = run_mcmc(&spec, &data, &PriorSpec::default(), &quick()).unwrap();
        let a = fit.summary.param("alpha_mu0[1]").unwrap();
        let b = fit.summary.param("alpha_mu0[2]").unwrap();
        assert!(a.q975 < b.q025, "{a:?} {b:?}");
    }

    #[test]
    fn invalid_configs() {
        let bad = SamplerConfig { n_chains: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig { burn_in: 10, n_iter: 10, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}

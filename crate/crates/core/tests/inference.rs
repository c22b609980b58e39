use approx::assert_abs_diff_eq;
use nearmiss_core::bayes::sampler::run_mcmc_prepared;
use nearmiss_core::bayes::{bgr_statistic, log_prior, posterior_predictive, run_mcmc, PpcConfig, PriorSpec, SamplerConfig};
use nearmiss_core::bayes::prior::{inv_gamma_logpdf, normal_logpdf};
use nearmiss_core::model::{CoefficientVector, ModelSpec, ModelVariant, PreparedData, Standardizer};
use nearmiss_core::risk::{crash_frequency, expected_near_misses, risk_of_crash, risk_report};
use nearmiss_core::gev::GevParams;
use nearmiss_core::synth::{gen_blocks, site1_mimic, CovariateDist, SyntheticBlockSpec, SyntheticSite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_chain(seed: u64, n: usize, shift: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); shift + z }).collect::<Vec<f64>>()
}

/// Textbook potential scale reduction written out with explicit sums.
fn reference_bgr(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

#[test]
fn bgr_matches_reference_formula() {
    let chains = vec![normal_chain(1, 1000, 0.0), normal_chain(2, 1000, 5.0)];
    let got = bgr_statistic(&[&chains[0], &chains[1]]).unwrap();
    assert!((got - reference_bgr(&chains)).abs() <= 1e-9);
    assert!(got > 2.0);
}

#[test]
fn bgr_of_independent_normal_chains() {
    let a = normal_chain(10, 10_000, 0.0);
    let b = normal_chain(11, 10_000, 0.0);
    let r = bgr_statistic(&[&a, &b]).unwrap();
    assert!((0.99..=1.05).contains(&r), "{r}");
}

#[test]
fn random_variant_prior_terms() {
    let spec = ModelSpec::new(ModelVariant::StationaryRandom, vec![], vec![], vec![1, 2]).unwrap();
    let mut c = CoefficientVector::uniform(&spec, -1.0, -0.5, 0.1);
    c.mu0[1] = -1.4;
    let h = c.hyper.unwrap();
    let priors = PriorSpec::default();
    let mut expected = 0.0;
    for (k, z) in [&c.mu0, &c.theta0, &c.xi0].iter().enumerate() {
        expected += normal_logpdf(h[k].mean, 0.0, 1e5) + inv_gamma_logpdf(h[k].var, 1e-3, 1e-3);
        expected += z.iter().map(|v| normal_logpdf(*v, h[k].mean, h[k].var)).sum::<f64>();
    }
    assert_abs_diff_eq!(log_prior(&spec, &c, &priors), expected, epsilon = 1e-9);
}

fn linked_spec(seed: u64) -> SyntheticBlockSpec {
    let mut s = SyntheticBlockSpec { seed, ..Default::default() };
    s.sites = vec![
        SyntheticSite { site_id: 1, n_blocks: 120, mu0: -1.2, log_sigma0: -1.0, xi: -0.1 },
        SyntheticSite { site_id: 2, n_blocks: 120, mu0: -0.8, log_sigma0: -0.9, xi: -0.1 },
    ];
    s.covariates.insert("spd_veh2".into(), CovariateDist { mean: 8.0, sd: 3.0 });
    s.slopes_mu.insert("spd_veh2".into(), -0.05);
    s
}

#[test]
fn hbsrp_recovers_planted_slope() {
    let (raw, _) = gen_blocks(&linked_spec(3)).unwrap();
    let names = vec!["spd_veh2".to_string()];
    let standardizer = Standardizer::fit(&raw, &names).unwrap();
    let spec = ModelSpec::new(ModelVariant::NonStationaryRandom, names, vec![], vec![1, 2]).unwrap();
    let config = SamplerConfig { n_iter: 8000, burn_in: 3000, seed: 5, ..Default::default() };
    let fit = run_mcmc(&spec, &standardizer.apply(&raw), &PriorSpec::default(), &config).unwrap();
    let raw_slopes: Vec<f64> = fit
        .posterior
        .draws()
        .map(|d| standardizer.to_raw(&spec, &fit.posterior.coefficients(d)).mu_slopes[0])
        .collect();
    let mut sorted = raw_slopes.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[sorted.len() / 40], sorted[sorted.len() * 39 / 40]);
    assert!(lo <= -0.05 && -0.05 <= hi, "[{lo}, {hi}]");
    assert!(hi < 0.0);
}

#[test]
fn fitted_model_invariants() {
    let (raw, _) = gen_blocks(&linked_spec(8)).unwrap();
    let names = vec!["spd_veh2".to_string()];
    let data = Standardizer::fit(&raw, &names).unwrap().apply(&raw);
    let spec = ModelSpec::new(ModelVariant::NonStationaryRandom, names, vec![], vec![1, 2]).unwrap();
    let prepared = PreparedData::new(&spec, &data).unwrap();
    let config = SamplerConfig { n_iter: 4000, burn_in: 1500, seed: 2, ..Default::default() };
    let fit = run_mcmc_prepared(&prepared, &PriorSpec::default(), &config).unwrap();
    // support safety
    for d in fit.posterior.draws() {
        assert!(prepared.loglik(&fit.posterior.coefficients(d)).is_finite());
    }
    for p in &fit.summary.params {
        assert!(p.q025 <= p.q975, "{p:?}");
        // two sites leave the variance hyperparameters heavy tailed
        if !p.name.starts_with("var_") {
            assert!(p.q025 <= p.mean && p.mean <= p.q975, "{p:?}");
        }
    }

    // exceedance counts shrink as the threshold approaches zero and meet CF at zero
    let lambdas: Vec<f64> = (0..=9).map(|k| -(k as f64) / 10.0).collect();
    let report = risk_report(&fit.posterior, &data, Some(1000), &lambdas, 500).unwrap();
    for site in [1, 2] {
        let pts: Vec<_> = report.near_misses.iter().filter(|p| p.site_id == site).collect();
        for w in pts.windows(2) {
            assert!(w[0].estimate.mean <= w[1].estimate.mean);
        }
        let cf = report.sites.iter().find(|s| s.site_id == site).unwrap().cf.mean;
        assert_eq!(pts[0].lambda, 0.0);
        assert_abs_diff_eq!(pts[0].estimate.mean, cf, epsilon = 1e-12);
        assert!(pts.last().unwrap().estimate.mean <= 120.0);
    }
}

#[test]
fn draw_wise_and_plug_in_crash_frequency_agree() {
    let (data, _) = gen_blocks(&site1_mimic(2)).unwrap();
    let spec = ModelSpec::new(ModelVariant::StationaryFixed, vec![], vec![], vec![1]).unwrap();
    let config = SamplerConfig { n_iter: 5000, burn_in: 2000, seed: 4, ..Default::default() };
    let fit = run_mcmc(&spec, &data, &PriorSpec::default(), &config).unwrap();
    let report = risk_report(&fit.posterior, &data, None, &[], 6000).unwrap();
    let averaged: f64 = report.blocks.iter().map(|b| b.rc.mean).sum();
    assert_eq!(report.blocks.len(), 58);
    assert_abs_diff_eq!(averaged, report.sites[0].cf.mean, epsilon = 1e-9);
}

#[test]
fn rc_continuous_at_gumbel_switch() {
    for mu in [-3.0, -1.5, -0.5, 0.5] {
        for theta in [-1.5, -0.5, 0.0, 0.7] {
            let g = risk_of_crash(&GevParams::new(mu, theta, 0.0));
            for xi in [1e-7, -1e-7] {
                assert!((risk_of_crash(&GevParams::new(mu, theta, xi)) - g).abs() <= 1e-5);
            }
        }
    }
}

#[test]
fn exceedance_bounded_by_block_count() {
    let ps: Vec<GevParams> = (0..30).map(|k| GevParams::new(-2.0 + 0.05 * k as f64, -0.5, 0.2)).collect();
    let rc: Vec<f64> = ps.iter().map(risk_of_crash).collect();
    assert_eq!(expected_near_misses(&ps, 0.0), crash_frequency(&rc));
    for lambda in [-5.0, -1.0, -0.2] {
        let c = expected_near_misses(&ps, lambda);
        assert!((0.0..=30.0).contains(&c));
    }
}

#[test]
fn observed_density_inside_predictive_envelope() {
    let mut coverages = Vec::new();
    for seed in 0..5 {
        let mut spec = SyntheticBlockSpec { seed, ..Default::default() };
        spec.sites = vec![SyntheticSite { site_id: 1, n_blocks: 200, mu0: -1.5, log_sigma0: 0.3f64.ln(), xi: -0.1 }];
        let (data, _) = gen_blocks(&spec).unwrap();
        let model = ModelSpec::new(ModelVariant::StationaryFixed, vec![], vec![], vec![1]).unwrap();
        let prepared = PreparedData::new(&model, &data).unwrap();
        let config = SamplerConfig { n_iter: 4000, burn_in: 1500, seed, ..Default::default() };
        let fit = run_mcmc_prepared(&prepared, &PriorSpec::default(), &config).unwrap();
        let ppc = posterior_predictive(&fit.posterior, &prepared, &PpcConfig { n_rep: 200, seed, ..Default::default() }).unwrap();
        coverages.push(ppc.envelope_coverage());
    }
    assert!(coverages.iter().all(|c| *c >= 0.9), "{coverages:?}");
}

#[test]
fn site1_mimic_near_miss_pattern() {
    let (data, _) = gen_blocks(&site1_mimic(6)).unwrap();
    let spec = ModelSpec::new(ModelVariant::StationaryFixed, vec![], vec![], vec![1]).unwrap();
    let config = SamplerConfig { n_iter: 5000, burn_in: 2000, seed: 6, ..Default::default() };
    let fit = run_mcmc(&spec, &data, &PriorSpec::default(), &config).unwrap();
    let lambdas: Vec<f64> = (2..=9).map(|k| -(k as f64) / 10.0).collect();
    let report = risk_report(&fit.posterior, &data, None, &lambdas, 2000).unwrap();
    let pts = &report.near_misses;
    assert_eq!(pts.len(), 8);
    for w in pts.windows(2) {
        assert!(w[0].estimate.mean < w[1].estimate.mean);
        assert!(w[0].observed <= w[1].observed);
    }
    assert!(pts[0].observed <= 3, "{}", pts[0].observed);
    assert!(pts[0].estimate.mean < 3.0);
}

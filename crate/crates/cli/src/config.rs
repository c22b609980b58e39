//! Pipeline configuration file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nearmiss_core::bayes::{PriorSpec, SamplerConfig};
use nearmiss_core::conflict::BLOCK_COVARIATES;
use nearmiss_core::model::ModelVariant;
use nearmiss_core::synth::{ScenarioSpec, SyntheticBlockSpec};
use nearmiss_core::trajectory::{RadiusRule, TransformConfig};
use nearmiss_core::ttc::TtcConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Output directory; relative paths resolve against the config file.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub segments: Vec<SegmentInput>,
    #[serde(default)]
    pub groups: Vec<GroupConfig>,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub ttc: TtcConfig,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub priors: PriorSpec,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub risk: RiskSettings,
    #[serde(default)]
    pub synth: Option<SynthSettings>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentInput {
    pub path: PathBuf,
    pub site_id: u32,
}

/// Sites fitted jointly, e.g. all sites of one city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    pub sites: Vec<u32>,
    #[serde(default = "all_covariates")]
    pub covariates_mu: Vec<String>,
    #[serde(default = "all_covariates")]
    pub covariates_theta: Vec<String>,
}

fn all_covariates() -> Vec<String> {
    BLOCK_COVARIATES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub variants: Vec<ModelVariant>,
    /// Centre and scale covariates over the group before fitting.
    pub standardize: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self { variants: ModelVariant::ALL.to_vec(), standardize: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub target_accept: f64,
    pub adapt_window: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            n_chains: d.n_chains,
            n_iter: d.n_iter,
            burn_in: d.burn_in,
            target_accept: d.target_accept,
            adapt_window: d.adapt_window,
        }
    }
}

impl SamplerSettings {
    pub fn with_seed(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_chains: self.n_chains,
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            seed,
            target_accept: self.target_accept,
            adapt_window: self.adapt_window,
            shared_chain_seed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSettings {
    /// Annual number of blocks `T`; required by `risk`.
    pub annual_blocks: Option<u64>,
    pub lambdas: Vec<f64>,
    pub k_folds: usize,
    /// Cap on posterior draws used for risk and validation summaries.
    pub max_draws: usize,
    /// Variant used for risk and validation; defaults to the minimum-DIC fit.
    pub variant: Option<ModelVariant>,
}

impl Default for RiskSettings {
    fn default() -> Self {
        Self {
            annual_blocks: None,
            lambdas: (2..=9).map(|k| -(k as f64) / 10.0).collect(),
            k_folds: 5,
            max_draws: 2000,
            variant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub segments: Vec<SynthSegment>,
    pub blocks: Option<SyntheticBlockSpec>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self { segments: Vec::new(), blocks: None }
    }
}

/// `count` seeded segments of one scenario kind for one site. The
/// scenario seed and segment id are derived, not read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSegment {
    pub site_id: u32,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(flatten)]
    pub scenario: ScenarioSpec,
}

fn one() -> usize {
    1
}

/// A parsed config together with where it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
    pub hash: String,
}

impl LoadedConfig {
    /// Reads and validates `path`, applying command-line overrides.
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
        let mut config = parse(&text)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(o) = out {
            // command-line paths are relative to the working directory
            config.out = std::env::current_dir().map(|d| d.join(&o)).unwrap_or(o);
        }
        Self::from_config(config, base_dir)
    }

    pub fn from_config(config: PipelineConfig, base_dir: PathBuf) -> Result<Self, CliError> {
        validate(&config, &base_dir)?;
        let hash = config_hash(&config);
        Ok(Self { config, base_dir, hash })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.out)
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }
}

pub fn parse(text: &str) -> Result<PipelineConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::config("config", e.message().to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "config".to_string() } else { path };
        CliError::config(field, e.inner().message().to_string())
    })
}

/// SHA-256 of the canonical JSON form of every field except `out`.
pub fn config_hash(config: &PipelineConfig) -> String {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Some(map) = value.as_object_mut() {
        map.remove("out");
    }
    let canonical = serde_json::to_string(&value).expect("json value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn validate(c: &PipelineConfig, base_dir: &Path) -> Result<(), CliError> {
    let bad = |field: String, msg: &str| Err(CliError::config(field, msg.to_string()));
    let mut stems = BTreeSet::new();
    for (i, s) in c.segments.iter().enumerate() {
        let p = if s.path.is_absolute() { s.path.clone() } else { base_dir.join(&s.path) };
        if !p.is_file() {
            return bad(format!("segments[{i}].path"), &format!("file {} does not exist", p.display()));
        }
        let stem = s.path.file_stem().map(|x| x.to_string_lossy().to_string()).unwrap_or_default();
        if !stems.insert(stem) {
            return bad(format!("segments[{i}].path"), "segment file names must be unique");
        }
    }
    let known_sites: BTreeSet<u32> = c.segments.iter().map(|s| s.site_id).collect();
    let mut names = BTreeSet::new();
    for (i, g) in c.groups.iter().enumerate() {
        if g.name.is_empty() || g.name.contains(['/', '\\']) || !names.insert(g.name.clone()) {
            return bad(format!("groups[{i}].name"), "group names must be unique, non-empty and path-safe");
        }
        if g.sites.is_empty() {
            return bad(format!("groups[{i}].sites"), "a group needs at least one site");
        }
        for (key, list) in [("covariates_mu", &g.covariates_mu), ("covariates_theta", &g.covariates_theta)] {
            if let Some(c) = list.iter().find(|c| !BLOCK_COVARIATES.contains(&c.as_str())) {
                return bad(format!("groups[{i}].{key}"), &format!("unknown covariate `{c}`"));
            }
        }
        if let Some(s) = g.sites.iter().find(|s| !known_sites.is_empty() && !known_sites.contains(s)) {
            return bad(format!("groups[{i}].sites"), &format!("site {s} has no segment"));
        }
    }
    if !(c.ttc.horizon > 0.0 && c.ttc.root_tol > 0.0 && c.ttc.grid_fraction > 0.0 && c.ttc.grid_fraction <= 1.0) {
        return bad("ttc".into(), "horizon, root_tol and grid_fraction must be positive");
    }
    if !(c.ttc.window[0] >= 0.0 && c.ttc.window[0] < c.ttc.window[1]) {
        return bad("ttc.window".into(), "window must satisfy 0 <= lo < hi");
    }
    if !(c.transform.wheelbase_ratio > 0.0 && c.transform.min_speed >= 0.0) {
        return bad("transform".into(), "wheelbase_ratio must be positive and min_speed nonnegative");
    }
    if let RadiusRule::Fixed { radius } = c.transform.radius_rule {
        if !(radius > 0.0) {
            return bad("transform.radius_rule.radius".into(), "radius must be positive");
        }
    }
    if c.model.variants.is_empty() {
        return bad("model.variants".into(), "at least one variant is required");
    }
    if !c.priors.is_valid() {
        return bad("priors".into(), "variances and inverse-gamma parameters must be positive, xi_bounds ordered");
    }
    if let Err(e) = c.sampler.with_seed(0).validate() {
        return bad("sampler".into(), &e.to_string());
    }
    if c.risk.k_folds < 2 {
        return bad("risk.k_folds".into(), "k_folds must be at least 2");
    }
    if c.risk.lambdas.iter().any(|l| !(*l <= 0.0)) {
        return bad("risk.lambdas".into(), "thresholds are negated TTC values and must be <= 0");
    }
    if c.risk.max_draws == 0 {
        return bad("risk.max_draws".into(), "max_draws must be positive");
    }
    if let Some(s) = &c.synth {
        for (i, seg) in s.segments.iter().enumerate() {
            if let Err(e) = seg.scenario.validate() {
                return bad(format!("synth.segments[{i}]"), &e.to_string());
            }
        }
        if let Some(b) = &s.blocks {
            if let Err(e) = b.validate() {
                return bad("synth.blocks".into(), &e.to_string());
            }
        }
    }
    Ok(())
}

/// Named seed derivation: every random stage draws from
/// `SHA-256(seed ‖ name)` so stages never share a stream.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

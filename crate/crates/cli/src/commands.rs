//! Pipeline stages. Each reads the artifacts of the stage before it from
//! the output directory and writes its own.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nearmiss_core::bayes::diagnostics::summarize_param;
use nearmiss_core::bayes::dic::display_rounded;
use nearmiss_core::bayes::{posterior_predictive, run_mcmc, DicResult, ParamSummary, Posterior, PpcConfig};
use nearmiss_core::conflict::{extract_blocks, read_blocks, summarize_sites, track_pairs, write_blocks, BlockDataset};
use nearmiss_core::model::{ModelSpec, ModelVariant, PreparedData, Standardizer};
use nearmiss_core::risk::{kfold_validate, risk_report, KFoldConfig};
use nearmiss_core::synth::{gen_blocks, gen_segment, ScenarioSpec};
use nearmiss_core::trajectory::{globalize, parse_segment, read_states, write_segment, write_states, FrameStates};
use nearmiss_core::ttc::{ttc_frame, FrameTtc, TtcResult, TtcStatus};
use serde::{Deserialize, Serialize};

use crate::artifacts::{open, read_json, require, write_json, write_table};
use crate::config::{derive_seed, GroupConfig, LoadedConfig};
use crate::error::CliError;

pub type Written = Vec<PathBuf>;

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn states_path(cfg: &LoadedConfig, key: &str) -> PathBuf {
    cfg.out_dir().join("states").join(format!("{key}.csv"))
}

fn ttc_path(cfg: &LoadedConfig, key: &str) -> PathBuf {
    cfg.out_dir().join("ttc").join(format!("{key}.csv"))
}

fn blocks_path(cfg: &LoadedConfig) -> PathBuf {
    cfg.out_dir().join("blocks").join("blocks.csv")
}

fn fit_dir(cfg: &LoadedConfig, group: &str, variant: ModelVariant) -> PathBuf {
    cfg.out_dir().join("fit").join(group).join(variant.name())
}

fn segment_keys(cfg: &LoadedConfig) -> Vec<(String, u32)> {
    cfg.config.segments.iter().map(|s| (stem(&s.path), s.site_id)).collect()
}

fn need_segments(cfg: &LoadedConfig) -> Result<(), CliError> {
    if cfg.config.segments.is_empty() {
        return Err(CliError::config("segments", "no segment inputs configured"));
    }
    Ok(())
}

fn need_groups(cfg: &LoadedConfig) -> Result<(), CliError> {
    if cfg.config.groups.is_empty() {
        return Err(CliError::config("groups", "no site groups configured"));
    }
    Ok(())
}

/// Globalizes every configured segment.
pub fn cmd_ingest(cfg: &LoadedConfig) -> Result<Written, CliError> {
    need_segments(cfg)?;
    let mut written = Vec::new();
    for seg in &cfg.config.segments {
        let input = cfg.resolve(&seg.path);
        let ds = parse_segment(&input, seg.site_id).map_err(|e| CliError::input(&input, e))?;
        let frames = globalize(&ds, &cfg.config.transform).map_err(|e| CliError::input(&input, e))?;
        let out = states_path(cfg, &stem(&seg.path));
        written.push(write_table(cfg, &out, |buf| write_states(buf, &ds, &frames))?);
        info!("ingest: {} frames from {}", frames.len(), input.display());
    }
    Ok(written)
}

fn load_states(cfg: &LoadedConfig, stage: &'static str, key: &str) -> Result<Vec<FrameStates>, CliError> {
    let path = states_path(cfg, key);
    read_states(open(stage, &path)?).map_err(|e| CliError::input(&path, e))
}

/// Per-frame TTC of every pair; rows are in-window conflicts and overlaps.
pub fn cmd_ttc(cfg: &LoadedConfig) -> Result<Written, CliError> {
    need_segments(cfg)?;
    let keys = segment_keys(cfg);
    for (key, _) in &keys {
        require("ttc", &states_path(cfg, key))?;
    }
    let mut written = Vec::new();
    for (key, _) in &keys {
        let frames = load_states(cfg, "ttc", key)?;
        let results: Vec<FrameTtc> = frames.iter().map(|f| ttc_frame(&f.states, f.frame_index, &cfg.config.ttc)).collect();
        let out = ttc_path(cfg, key);
        written.push(write_table(cfg, &out, |buf| write_ttc(buf, &results))?);
    }
    Ok(written)
}

fn write_ttc<W: Write>(writer: W, results: &[FrameTtc]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["frame_index", "obj_i", "obj_j", "ttc", "status"])?;
    for r in results.iter().flat_map(|f| f.conflicts.iter().chain(&f.overlaps)) {
        w.write_record([
            r.frame_index.to_string(),
            r.pair.0.to_string(),
            r.pair.1.to_string(),
            r.value.to_string(),
            r.status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_ttc(path: &Path) -> Result<Vec<FrameTtc>, CliError> {
    let file = open("blocks", path)?;
    let bad = |m: String| CliError::input(path, m);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let mut frames: BTreeMap<u32, FrameTtc> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let frame_index: u32 = field(0).parse().map_err(|_| bad("bad frame_index".into()))?;
        let i: u64 = field(1).parse().map_err(|_| bad("bad obj_i".into()))?;
        let j: u64 = field(2).parse().map_err(|_| bad("bad obj_j".into()))?;
        let value: f64 = field(3).parse().map_err(|_| bad("bad ttc".into()))?;
        let status: TtcStatus = field(4).parse().map_err(bad)?;
        let r = TtcResult { value, pair: (i, j), frame_index, status };
        let f = frames.entry(frame_index).or_default();
        match status {
            TtcStatus::AlreadyOverlapping => f.overlaps.push(r),
            _ => f.conflicts.push(r),
        }
    }
    Ok(frames.into_values().collect())
}

/// One block per conflicting pair and segment, plus per-site summaries.
pub fn cmd_blocks(cfg: &LoadedConfig) -> Result<Written, CliError> {
    need_segments(cfg)?;
    let keys = segment_keys(cfg);
    for (key, _) in &keys {
        require("blocks", &states_path(cfg, key))?;
        require("blocks", &ttc_path(cfg, key))?;
    }
    let mut all = BlockDataset::new();
    for (key, site) in &keys {
        let frames = load_states(cfg, "blocks", key)?;
        let series = track_pairs(&read_ttc(&ttc_path(cfg, key))?);
        let ds = extract_blocks(&series, &frames, *site).map_err(|e| CliError::input(&states_path(cfg, key), e))?;
        all.merge(ds);
    }
    let summary = summarize_sites(&all);
    for w in &summary.warnings {
        warn!("{w}");
    }
    let dir = cfg.out_dir().join("blocks");
    let mut written = vec![write_table(cfg, &blocks_path(cfg), |buf| write_blocks(buf, &all))?];
    written.push(write_table(cfg, &dir.join("site_summary.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["site_id", "count", "avg_ttc", "min_ttc", "max_ttc", "spd_veh1", "spd_veh2", "acc_veh1", "acc_veh2"])?;
        for r in &summary.rows {
            let cov = |k: &str| r.mean_covariates.get(k).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.site_id.to_string(),
                r.count.to_string(),
                r.avg_ttc.to_string(),
                r.min_ttc.to_string(),
                r.max_ttc.to_string(),
                cov("spd_veh1"),
                cov("spd_veh2"),
                cov("acc_veh1"),
                cov("acc_veh2"),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })?);
    Ok(written)
}

fn load_blocks(cfg: &LoadedConfig, stage: &'static str) -> Result<BlockDataset, CliError> {
    let path = blocks_path(cfg);
    read_blocks(open(stage, &path)?, cfg.config.ttc.window).map_err(|e| CliError::input(&path, e))
}

fn group_spec(group: &GroupConfig, variant: ModelVariant) -> ModelSpec {
    let full = ModelSpec {
        variant: ModelVariant::NonStationaryRandom,
        covariates_mu: group.covariates_mu.clone(),
        covariates_theta: group.covariates_theta.clone(),
        sites: {
            let mut s = group.sites.clone();
            s.sort_unstable();
            s.dedup();
            s
        },
    };
    full.with_variant(variant)
}

fn group_data(all: &BlockDataset, group: &GroupConfig) -> BlockDataset {
    let mut data = all.restrict(&group.sites);
    for &s in &group.sites {
        data.declare_site(s);
    }
    data
}

fn standardizer_for(cfg: &LoadedConfig, spec: &ModelSpec, data: &BlockDataset) -> Result<Standardizer, CliError> {
    if !cfg.config.model.standardize {
        return Ok(Standardizer::identity());
    }
    let mut names = spec.covariates_mu.clone();
    names.extend(spec.covariates_theta.iter().cloned());
    names.sort();
    names.dedup();
    Standardizer::fit(data, &names).map_err(|e| CliError::numerical("fit", e))
}

/// Contents of `summary.json` for one fitted variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub group: String,
    pub variant: ModelVariant,
    pub spec: ModelSpec,
    pub n_blocks: usize,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub dic: DicResult,
    pub dic_display: String,
    pub converged: bool,
    pub non_converged: Vec<String>,
    /// On the standardized covariate scale used by the sampler.
    pub params: Vec<ParamSummary>,
    /// Slopes and intercepts acting on raw covariates.
    pub params_raw: Vec<ParamSummary>,
    pub standardizer: Standardizer,
    pub acceptance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
struct PpcFile {
    group: String,
    variant: ModelVariant,
    envelope_coverage: f64,
    grid: Vec<f64>,
    observed: Vec<f64>,
    lo: Vec<f64>,
    median: Vec<f64>,
    hi: Vec<f64>,
}

fn raw_summaries(posterior: &Posterior, standardizer: &Standardizer) -> Vec<ParamSummary> {
    let spec = &posterior.spec;
    let raw_chains: Vec<Vec<Vec<f64>>> = posterior
        .chains
        .iter()
        .map(|c| c.iter().map(|d| standardizer.to_raw(spec, &posterior.coefficients(d)).to_flat(spec)).collect())
        .collect();
    posterior
        .names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let cols: Vec<Vec<f64>> = raw_chains.iter().map(|c| c.iter().map(|d| d[k]).collect()).collect();
            summarize_param(name, &cols)
        })
        .collect()
}

/// Fits every configured variant for every group.
pub fn cmd_fit(cfg: &LoadedConfig) -> Result<Written, CliError> {
    need_groups(cfg)?;
    let all = load_blocks(cfg, "fit")?;
    let mut written = Vec::new();
    for group in &cfg.config.groups {
        let raw = group_data(&all, group);
        for w in raw.warnings() {
            warn!("group {}: {w}", group.name);
        }
        for &variant in &cfg.config.model.variants {
            let spec = group_spec(group, variant);
            let standardizer = standardizer_for(cfg, &spec, &raw)?;
            let data = standardizer.apply(&raw);
            let seed = derive_seed(cfg.seed(), &format!("fit/{}/{}", group.name, variant.name()));
            let sampler = cfg.config.sampler.with_seed(seed);
            let fit = run_mcmc(&spec, &data, &cfg.config.priors, &sampler).map_err(|e| CliError::numerical("fit", e))?;
            let dir = fit_dir(cfg, &group.name, variant);
            written.push(write_table(cfg, &dir.join("draws.csv"), |buf| fit.posterior.write_draws(buf))?);
            let s = &fit.summary;
            let summary = FitSummary {
                group: group.name.clone(),
                variant,
                spec: spec.clone(),
                n_blocks: data.len(),
                n_chains: s.n_chains,
                draws_per_chain: s.draws_per_chain,
                dic: s.dic,
                dic_display: display_rounded(s.dic.dic, 2),
                converged: s.converged(),
                non_converged: s.non_converged.clone(),
                params: s.params.clone(),
                params_raw: raw_summaries(&fit.posterior, &standardizer),
                standardizer: standardizer.clone(),
                acceptance: fit.posterior.acceptance.clone(),
            };
            written.push(write_json(cfg, &dir.join("summary.json"), &summary)?);

            let prepared = PreparedData::new(&spec, &data).map_err(|e| CliError::numerical("fit", e))?;
            let ppc_cfg = PpcConfig {
                seed: derive_seed(cfg.seed(), &format!("ppc/{}/{}", group.name, variant.name())),
                ..PpcConfig::default()
            };
            let ppc = posterior_predictive(&fit.posterior, &prepared, &ppc_cfg).map_err(|e| CliError::numerical("fit", e))?;
            let file = PpcFile {
                group: group.name.clone(),
                variant,
                envelope_coverage: ppc.envelope_coverage(),
                grid: ppc.grid,
                observed: ppc.observed,
                lo: ppc.lo,
                median: ppc.median,
                hi: ppc.hi,
            };
            written.push(write_json(cfg, &dir.join("ppc.json"), &file)?);
            info!("fit {}/{}: DIC {}", group.name, variant.name(), summary.dic_display);
        }
    }
    Ok(written)
}

fn load_summary(cfg: &LoadedConfig, stage: &'static str, group: &str, variant: ModelVariant) -> Result<FitSummary, CliError> {
    read_json(stage, &fit_dir(cfg, group, variant).join("summary.json"))
}

/// Evidence band of a DIC difference from the best variant.
pub fn dic_band(delta: f64) -> &'static str {
    if delta > 10.0 {
        "strong"
    } else if delta >= 5.0 {
        "substantial"
    } else {
        "competitive"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DicRow {
    pub group: String,
    pub variant: ModelVariant,
    pub d_bar: f64,
    pub p_d: f64,
    pub dic: f64,
    pub dic_display: String,
    pub delta: f64,
    pub band: String,
    pub best: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DicTable {
    pub rows: Vec<DicRow>,
}

pub fn dic_table(cfg: &LoadedConfig, stage: &'static str) -> Result<DicTable, CliError> {
    need_groups(cfg)?;
    let mut rows = Vec::new();
    for group in &cfg.config.groups {
        let summaries: Vec<FitSummary> = cfg
            .config
            .model
            .variants
            .iter()
            .map(|&v| load_summary(cfg, stage, &group.name, v))
            .collect::<Result<_, _>>()?;
        let best = summaries
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dic.dic.total_cmp(&b.1.dic.dic))
            .map(|(k, _)| k)
            .expect("at least one variant");
        let min = summaries[best].dic.dic;
        for (k, s) in summaries.iter().enumerate() {
            let delta = if k == best { 0.0 } else { s.dic.dic - min };
            rows.push(DicRow {
                group: group.name.clone(),
                variant: s.variant,
                d_bar: s.dic.d_bar,
                p_d: s.dic.p_d,
                dic: s.dic.dic,
                dic_display: s.dic_display.clone(),
                delta,
                band: if k == best { "best".into() } else { dic_band(delta).into() },
                best: k == best,
                converged: s.converged,
            });
        }
    }
    Ok(DicTable { rows })
}

/// DIC table across variants, minimum marked, differences banded.
pub fn cmd_compare(cfg: &LoadedConfig) -> Result<Written, CliError> {
    let table = dic_table(cfg, "compare")?;
    let dir = cfg.out_dir().join("compare");
    let mut written = vec![write_table(cfg, &dir.join("dic.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["group", "variant", "d_bar", "p_d", "dic", "delta_dic", "band", "best", "converged"])?;
        for r in &table.rows {
            w.write_record([
                r.group.clone(),
                r.variant.name().to_string(),
                r.d_bar.to_string(),
                r.p_d.to_string(),
                r.dic_display.clone(),
                display_rounded(r.delta, 2),
                r.band.clone(),
                if r.best { "*".into() } else { String::new() },
                r.converged.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })?];
    written.push(write_json(cfg, &dir.join("dic.json"), &table)?);
    Ok(written)
}

fn read_draws(path: &Path, spec: &ModelSpec) -> Result<Posterior, CliError> {
    let file = open("risk", path)?;
    let bad = |m: String| CliError::input(path, m);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    if names != spec.param_names() {
        return Err(bad("draw columns do not match the configured model".into()));
    }
    let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let chain: usize = row.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad chain index".into()))?;
        let draw: Vec<f64> = row
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("non-numeric draw".into()))?;
        if chains.len() <= chain {
            chains.resize(chain + 1, Vec::new());
        }
        chains[chain].push(draw);
    }
    let n = chains.len();
    Ok(Posterior {
        spec: spec.clone(),
        names,
        chains,
        logliks: vec![Vec::new(); n],
        acceptance: vec![Vec::new(); n],
    })
}

fn chosen_variant(cfg: &LoadedConfig, stage: &'static str, group: &GroupConfig) -> Result<ModelVariant, CliError> {
    if let Some(v) = cfg.config.risk.variant {
        return Ok(v);
    }
    let table = dic_table(cfg, stage)?;
    Ok(table
        .rows
        .iter()
        .find(|r| r.group == group.name && r.best)
        .map(|r| r.variant)
        .expect("every group has a best row"))
}

/// Crash risk, crash frequency and near-miss exceedance counts per group.
pub fn cmd_risk(cfg: &LoadedConfig) -> Result<Written, CliError> {
    need_groups(cfg)?;
    let annual = cfg
        .config
        .risk
        .annual_blocks
        .ok_or_else(|| CliError::config("risk.annual_blocks", "annual block count T is required for risk reports"))?;
    let all = load_blocks(cfg, "risk")?;
    let mut written = Vec::new();
    for group in &cfg.config.groups {
        let variant = chosen_variant(cfg, "risk", group)?;
        let summary = load_summary(cfg, "risk", &group.name, variant)?;
        let spec = group_spec(group, variant);
        let posterior = read_draws(&fit_dir(cfg, &group.name, variant).join("draws.csv"), &spec)?;
        let data = summary.standardizer.apply(&group_data(&all, group));
        let report = risk_report(&posterior, &data, Some(annual), &cfg.config.risk.lambdas, cfg.config.risk.max_draws)
            .map_err(|e| CliError::numerical("risk", e))?;
        let dir = cfg.out_dir().join("risk");
        written.push(write_json(cfg, &dir.join(format!("{}.json", group.name)), &report)?);
        written.push(write_table(cfg, &dir.join(format!("{}_near_misses.csv", group.name)), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["site_id", "lambda", "estimate", "lo", "hi", "observed"])?;
            for p in &report.near_misses {
                w.write_record([
                    p.site_id.to_string(),
                    p.lambda.to_string(),
                    p.estimate.mean.to_string(),
                    p.estimate.lo.to_string(),
                    p.estimate.hi.to_string(),
                    p.observed.to_string(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)
        })?);
        written.push(write_table(cfg, &dir.join(format!("{}_sites.csv", group.name)), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["site_id", "n_blocks", "cf", "cf_lo", "cf_hi", "annual_blocks", "cf_year", "cf_year_lo", "cf_year_hi"])?;
            for s in &report.sites {
                let y = s.cf_year.expect("annual blocks configured");
                w.write_record([
                    s.site_id.to_string(),
                    s.n_blocks.to_string(),
                    s.cf.mean.to_string(),
                    s.cf.lo.to_string(),
                    s.cf.hi.to_string(),
                    annual.to_string(),
                    y.mean.to_string(),
                    y.lo.to_string(),
                    y.hi.to_string(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)
        })?);
    }
    Ok(written)
}

/// k-fold validation of exceedance counts for the risk variant.
pub fn cmd_validate(cfg: &LoadedConfig) -> Result<Written, CliError> {
    need_groups(cfg)?;
    let all = load_blocks(cfg, "validate")?;
    let mut written = Vec::new();
    for group in &cfg.config.groups {
        let variant = chosen_variant(cfg, "validate", group)?;
        let spec = group_spec(group, variant);
        let raw = group_data(&all, group);
        let data = standardizer_for(cfg, &spec, &raw)?.apply(&raw);
        let sampler = cfg
            .config
            .sampler
            .with_seed(derive_seed(cfg.seed(), &format!("validate/{}/{}", group.name, variant.name())));
        let kfold = KFoldConfig {
            k_folds: cfg.config.risk.k_folds,
            seed: derive_seed(cfg.seed(), &format!("folds/{}", group.name)),
            lambdas: cfg.config.risk.lambdas.clone(),
            max_draws: cfg.config.risk.max_draws,
        };
        let report = kfold_validate(&data, &spec, &cfg.config.priors, &sampler, &kfold)
            .map_err(|e| CliError::numerical("validate", e))?;
        info!("validate {}: coverage {:.3}", group.name, report.coverage());
        let dir = cfg.out_dir().join("validate");
        written.push(write_json(cfg, &dir.join(format!("{}.json", group.name)), &report)?);
        written.push(write_table(cfg, &dir.join(format!("{}_cells.csv", group.name)), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["site_id", "lambda", "estimate", "pred_lo", "pred_hi", "observed", "covered"])?;
            for c in &report.cells {
                w.write_record([
                    c.site_id.to_string(),
                    c.lambda.to_string(),
                    c.estimate.mean.to_string(),
                    c.predictive.lo.to_string(),
                    c.predictive.hi.to_string(),
                    c.observed.to_string(),
                    c.covered().to_string(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)
        })?);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
struct SynthIndex {
    segments: Vec<SynthIndexRow>,
}

#[derive(Debug, Clone, Serialize)]
struct SynthIndexRow {
    path: String,
    site_id: u32,
    kind: String,
    seed: u64,
}

/// Synthetic segments and synthetic block datasets from `[synth]`.
pub fn cmd_synth(cfg: &LoadedConfig) -> Result<Written, CliError> {
    let synth = cfg.config.synth.as_ref().ok_or_else(|| CliError::config("synth", "no [synth] section"))?;
    let dir = cfg.out_dir().join("synth");
    let mut written = Vec::new();
    let mut index = Vec::new();
    for (i, seg) in synth.segments.iter().enumerate() {
        for k in 0..seg.count {
            let seed = derive_seed(cfg.seed(), &format!("synth/segments/{i}/{k}"));
            let kind = serde_json::to_value(seg.scenario.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let id = format!("site{}_{kind}_{i}_{k}", seg.site_id);
            let spec = ScenarioSpec { seed, segment_id: id.clone(), ..seg.scenario.clone() };
            let ds = gen_segment(&spec).map_err(|e| CliError::config(format!("synth.segments[{i}]"), e.to_string()))?;
            let path = dir.join("segments").join(format!("{id}.csv"));
            written.push(write_table(cfg, &path, |buf| write_segment(buf, ds.records()))?);
            index.push(SynthIndexRow { path: format!("segments/{id}.csv"), site_id: seg.site_id, kind, seed });
        }
    }
    if !index.is_empty() {
        written.push(write_json(cfg, &dir.join("segments.json"), &SynthIndex { segments: index })?);
    }
    if let Some(spec) = &synth.blocks {
        let spec = nearmiss_core::synth::SyntheticBlockSpec { seed: derive_seed(cfg.seed(), "synth/blocks"), ..spec.clone() };
        let (data, truth) = gen_blocks(&spec).map_err(|e| CliError::numerical("synth", e))?;
        written.push(write_table(cfg, &dir.join("blocks.csv"), |buf| write_blocks(buf, &data))?);
        written.push(write_json(cfg, &dir.join("truth.json"), &truth)?);
    }
    Ok(written)
}

/// Every stage from ingest to validation.
pub fn cmd_all(cfg: &LoadedConfig) -> Result<Written, CliError> {
    let mut written = Vec::new();
    for stage in [cmd_ingest, cmd_ttc, cmd_blocks, cmd_fit, cmd_compare, cmd_risk, cmd_validate] {
        written.extend(stage(cfg)?);
    }
    Ok(written)
}

//! Conflicting-pair tracking and block maxima extraction.
//!
//! Every unordered vehicle pair with at least one in-window TTC sample in
//! a segment forms one block. The block maximum is the negated minimum
//! TTC; covariates are read at the frame where that minimum occurs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::FrameStates;
use crate::ttc::FrameTtc;

/// Sites with fewer blocks than this are flagged.
pub const MIN_BLOCKS_PER_SITE: usize = 30;

/// Covariates attached to every block, in file order.
pub const BLOCK_COVARIATES: [&str; 4] = ["spd_veh1", "spd_veh2", "acc_veh1", "acc_veh2"];

const BLOCK_KEY_COLUMNS: [&str; 5] = ["site_id", "pair_i", "pair_j", "x", "ttc_frame"];

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("object {object_id} has no state in frame {frame_index}")]
    MissingState { frame_index: u32, object_id: u64 },
    #[error("block file is missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed block at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// In-window TTC samples of one unordered pair across a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictSeries {
    /// Lower object id first.
    pub pair: (u64, u64),
    /// (frame_index, ttc seconds), ascending frames.
    pub samples: Vec<(u32, f64)>,
}

impl ConflictSeries {
    /// Minimum TTC and the earliest frame at which it occurs.
    pub fn minimum(&self) -> Option<(u32, f64)> {
        self.samples
            .iter()
            .copied()
            .fold(None, |best: Option<(u32, f64)>, (f, t)| match best {
                Some((_, bt)) if bt <= t => best,
                _ => Some((f, t)),
            })
    }
}

/// Groups per-frame conflicts into one series per pair, sorted by pair.
pub fn track_pairs(frame_results: &[FrameTtc]) -> Vec<ConflictSeries> {
    let mut by_pair: BTreeMap<(u64, u64), Vec<(u32, f64)>> = BTreeMap::new();
    for frame in frame_results {
        for r in &frame.conflicts {
            let key = (r.pair.0.min(r.pair.1), r.pair.0.max(r.pair.1));
            by_pair.entry(key).or_default().push((r.frame_index, r.value));
        }
    }
    by_pair
        .into_iter()
        .map(|(pair, mut samples)| {
            samples.sort_by_key(|s| s.0);
            ConflictSeries { pair, samples }
        })
        .collect()
}

/// One block maximum with its covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub site_id: u32,
    /// (vehicle-1, vehicle-2): vehicle-1 is the faster member at `ttc_frame`.
    pub pair: (u64, u64),
    /// Negated minimum TTC, seconds.
    pub x: f64,
    pub ttc_frame: u32,
    pub covariates: BTreeMap<String, f64>,
}

impl Block {
    pub fn ttc_min(&self) -> f64 {
        -self.x
    }

    pub fn covariate(&self, name: &str) -> Option<f64> {
        self.covariates.get(name).copied()
    }
}

/// Blocks grouped by site.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockDataset {
    sites: BTreeMap<u32, Vec<Block>>,
}

impl BlockDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_blocks(blocks: impl IntoIterator<Item = Block>) -> Self {
        let mut ds = Self::new();
        for b in blocks {
            ds.push(b);
        }
        ds
    }

    pub fn push(&mut self, block: Block) {
        self.sites.entry(block.site_id).or_default().push(block);
    }

    /// Registers a site even if it ends up without blocks.
    pub fn declare_site(&mut self, site_id: u32) {
        self.sites.entry(site_id).or_default();
    }

    pub fn merge(&mut self, other: BlockDataset) {
        for (site, blocks) in other.sites {
            self.sites.entry(site).or_default().extend(blocks);
        }
    }

    pub fn site_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.sites.keys().copied()
    }

    pub fn site(&self, site_id: u32) -> &[Block] {
        self.sites.get(&site_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sites(&self) -> impl Iterator<Item = (u32, &[Block])> {
        self.sites.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Blocks in site order, then insertion order.
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.sites.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.sites.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Site count, empty sites included.
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Keeps only the listed sites.
    pub fn restrict(&self, site_ids: &[u32]) -> BlockDataset {
        BlockDataset {
            sites: self
                .sites
                .iter()
                .filter(|(k, _)| site_ids.contains(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// Applies `f` to every block.
    pub fn map_blocks(&self, mut f: impl FnMut(&Block) -> Block) -> BlockDataset {
        BlockDataset {
            sites: self
                .sites
                .iter()
                .map(|(k, v)| (*k, v.iter().map(&mut f).collect()))
                .collect(),
        }
    }

    /// Warnings for empty and sparse sites.
    pub fn warnings(&self) -> Vec<String> {
        self.sites
            .iter()
            .filter_map(|(site, blocks)| match blocks.len() {
                0 => Some(format!("site {site} has no blocks")),
                n if n < MIN_BLOCKS_PER_SITE => {
                    Some(format!("site {site} has {n} blocks, fewer than {MIN_BLOCKS_PER_SITE}"))
                }
                _ => None,
            })
            .collect()
    }
}

/// One block per series, covariates taken at the minimum-TTC frame.
pub fn extract_blocks(series: &[ConflictSeries], frames: &[FrameStates], site_id: u32) -> Result<BlockDataset, BlockError> {
    let mut ds = BlockDataset::new();
    ds.declare_site(site_id);
    for s in series {
        let Some((frame_index, ttc)) = s.minimum() else {
            continue;
        };
        let frame = frames
            .binary_search_by_key(&frame_index, |f| f.frame_index)
            .ok()
            .map(|i| &frames[i]);
        let lookup = |object_id: u64| {
            frame
                .and_then(|f| f.get(object_id))
                .ok_or(BlockError::MissingState { frame_index, object_id })
        };
        let a = lookup(s.pair.0)?;
        let b = lookup(s.pair.1)?;
        // faster member is vehicle-1, ties to the lower id
        let (v1, v2) = if b.speed > a.speed { (b, a) } else { (a, b) };
        let covariates = BTreeMap::from([
            ("spd_veh1".to_string(), v1.speed),
            ("spd_veh2".to_string(), v2.speed),
            ("acc_veh1".to_string(), v1.accel),
            ("acc_veh2".to_string(), v2.accel),
        ]);
        ds.push(Block {
            site_id,
            pair: (v1.object_id, v2.object_id),
            x: -ttc,
            ttc_frame: frame_index,
            covariates,
        });
    }
    Ok(ds)
}

/// Row of the per-site summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSummary {
    pub site_id: u32,
    pub count: usize,
    pub avg_ttc: f64,
    pub min_ttc: f64,
    pub max_ttc: f64,
    pub mean_covariates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSummaries {
    pub rows: Vec<SiteSummary>,
    pub warnings: Vec<String>,
}

pub fn summarize_sites(dataset: &BlockDataset) -> SiteSummaries {
    let mut rows = Vec::new();
    for (site_id, blocks) in dataset.sites() {
        if blocks.is_empty() {
            continue;
        }
        let n = blocks.len() as f64;
        let ttcs = blocks.iter().map(Block::ttc_min);
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for b in blocks {
            for (k, v) in &b.covariates {
                *sums.entry(k.clone()).or_default() += v;
            }
        }
        rows.push(SiteSummary {
            site_id,
            count: blocks.len(),
            avg_ttc: ttcs.clone().sum::<f64>() / n,
            min_ttc: ttcs.clone().fold(f64::INFINITY, f64::min),
            max_ttc: ttcs.fold(f64::NEG_INFINITY, f64::max),
            mean_covariates: sums.into_iter().map(|(k, v)| (k, v / n)).collect(),
        });
    }
    SiteSummaries { rows, warnings: dataset.warnings() }
}

/// Writes the block interchange file. Covariate columns follow the fixed
/// key columns: the standard four first, any others alphabetically.
pub fn write_blocks<W: Write>(writer: W, dataset: &BlockDataset) -> Result<(), BlockError> {
    let mut extra: Vec<String> = dataset
        .blocks()
        .flat_map(|b| b.covariates.keys().cloned())
        .filter(|k| !BLOCK_COVARIATES.contains(&k.as_str()))
        .collect();
    extra.sort();
    extra.dedup();
    let cov_cols: Vec<String> = BLOCK_COVARIATES.iter().map(|s| s.to_string()).chain(extra).collect();

    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(BLOCK_KEY_COLUMNS.iter().map(|s| s.to_string()).chain(cov_cols.iter().cloned()))?;
    for b in dataset.blocks() {
        let mut row = vec![
            b.site_id.to_string(),
            b.pair.0.to_string(),
            b.pair.1.to_string(),
            b.x.to_string(),
            b.ttc_frame.to_string(),
        ];
        row.extend(cov_cols.iter().map(|c| b.covariate(c).map(|v| v.to_string()).unwrap_or_default()));
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a block file. Columns beyond the key columns are covariates;
/// `#` lines are comments. Every `x` must lie in `[-window[1], -window[0]]`.
pub fn read_blocks<R: Read>(reader: R, window: [f64; 2]) -> Result<BlockDataset, BlockError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut key_idx = [0usize; 5];
    for (slot, name) in key_idx.iter_mut().zip(BLOCK_KEY_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BlockError::MissingColumn(name.to_string()))?;
    }
    let cov_idx: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !BLOCK_KEY_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut ds = BlockDataset::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |reason: String| BlockError::MalformedRow { line, reason };
        let text = |i: usize| row.get(i).unwrap_or("");
        let site_id: u32 = text(key_idx[0]).parse().map_err(|_| bad("bad site_id".into()))?;
        let pair_i: u64 = text(key_idx[1]).parse().map_err(|_| bad("bad pair_i".into()))?;
        let pair_j: u64 = text(key_idx[2]).parse().map_err(|_| bad("bad pair_j".into()))?;
        let x: f64 = text(key_idx[3]).parse().map_err(|_| bad("bad x".into()))?;
        let ttc_frame: u32 = text(key_idx[4]).parse().map_err(|_| bad("bad ttc_frame".into()))?;
        if !(x >= -window[1] && x <= -window[0]) {
            return Err(bad(format!("x = {x} outside [{}, {}]", -window[1], -window[0])));
        }
        let mut covariates = BTreeMap::new();
        for (i, name) in &cov_idx {
            let raw = text(*i);
            if raw.is_empty() {
                continue;
            }
            let v: f64 = raw
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| bad(format!("covariate `{name}` is not finite")))?;
            covariates.insert(name.clone(), v);
        }
        ds.push(Block { site_id, pair: (pair_i, pair_j), x, ttc_frame, covariates });
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::ObjectState;
    use crate::ttc::{TtcResult, TtcStatus};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn hit(frame: u32, i: u64, j: u64, t: f64) -> TtcResult {
        TtcResult { value: t, pair: (i, j), frame_index: frame, status: TtcStatus::RootFound }
    }

    fn os(id: u64, speed: f64, accel: f64) -> ObjectState {
        ObjectState {
            object_id: id,
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed,
            accel,
            steering: 0.0,
            wheelbase: 2.7,
            radius: 1.0,
        }
    }

    #[test]
    fn pair_disappearing_after_frame_four() {
        let frames: Vec<FrameTtc> = (1..=6)
            .map(|f| FrameTtc {
                conflicts: if f <= 4 { vec![hit(f, 46, 30, 2.0 - 0.1 * f as f64)] } else { vec![] },
                overlaps: vec![],
            })
            .collect();
        let series = track_pairs(&frames);
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].pair, (30, 46));
        assert_eq!(series[0].samples.len(), 4);
    }

    #[test]
    fn no_conflicts_no_series() {
        assert!(track_pairs(&[FrameTtc::default(), FrameTtc::default()]).is_empty());
    }

    #[test]
    fn interleaved_pairs_partition() {
        let frames = vec![
            FrameTtc { conflicts: vec![hit(0, 1, 2, 2.0), hit(0, 3, 4, 1.0)], overlaps: vec![] },
            FrameTtc { conflicts: vec![hit(1, 4, 3, 0.9)], overlaps: vec![] },
            FrameTtc { conflicts: vec![hit(2, 2, 1, 1.5), hit(2, 3, 4, 1.2)], overlaps: vec![] },
        ];
        let series = track_pairs(&frames);
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].pair, (1, 2));
        assert_eq!(series[0].samples, vec![(0, 2.0), (2, 1.5)]);
        assert_eq!(series[1].pair, (3, 4));
        assert_eq!(series[1].samples, vec![(0, 1.0), (1, 0.9), (2, 1.2)]);
    }

    fn frames_with(ids: &[(u64, f64, f64)], n: u32) -> Vec<FrameStates> {
        (0..n)
            .map(|f| FrameStates {
                frame_index: f,
                states: ids.iter().map(|&(id, v, a)| os(id, v, a)).collect(),
            })
            .collect()
    }

    #[test]
    fn block_is_negated_minimum() {
        let series = vec![ConflictSeries { pair: (1, 2), samples: vec![(0, 2.5), (1, 1.7), (2, 2.9)] }];
        let ds = extract_blocks(&series, &frames_with(&[(1, 3.0, 0.5), (2, 8.0, -1.0)], 3), 5).unwrap();
        let b = &ds.site(5)[0];
        assert_eq!(b.x, -1.7);
        assert_eq!(b.ttc_frame, 1);
        // vehicle 2 is faster
        assert_eq!(b.pair, (2, 1));
        assert_eq!(b.covariate("spd_veh1"), Some(8.0));
        assert_eq!(b.covariate("acc_veh2"), Some(0.5));
    }

    #[test]
    fn window_edge_retained() {
        let series = vec![ConflictSeries { pair: (1, 2), samples: vec![(0, 0.10)] }];
        let ds = extract_blocks(&series, &frames_with(&[(1, 3.0, 0.0), (2, 3.0, 0.0)], 1), 1).unwrap();
        assert_eq!(ds.site(1)[0].x, -0.10);
        assert_eq!(ds.site(1)[0].pair, (1, 2));
    }

    #[test]
    fn missing_state_is_an_error() {
        let series = vec![ConflictSeries { pair: (1, 9), samples: vec![(0, 1.0)] }];
        let err = extract_blocks(&series, &frames_with(&[(1, 3.0, 0.0)], 1), 1).unwrap_err();
        assert!(matches!(err, BlockError::MissingState { frame_index: 0, object_id: 9 }));
    }

    #[test]
    fn summary_of_single_block() {
        let mut ds = BlockDataset::new();
        ds.push(Block { site_id: 1, pair: (1, 2), x: -1.5, ttc_frame: 0, covariates: BTreeMap::new() });
        ds.declare_site(2);
        let s = summarize_sites(&ds);
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].count, 1);
        assert_eq!(s.rows[0].avg_ttc, 1.5);
        assert!(s.warnings.iter().any(|w| w.contains("site 2 has no blocks")));
        assert!(s.warnings.iter().any(|w| w.contains("site 1 has 1 blocks")));
    }

    #[test]
    fn block_file_round_trip() {
        let series = vec![
            ConflictSeries { pair: (1, 2), samples: vec![(0, 2.5), (1, 1.7)] },
            ConflictSeries { pair: (1, 3), samples: vec![(1, 0.3)] },
        ];
        let ds = extract_blocks(&series, &frames_with(&[(1, 3.1, 0.2), (2, 8.0, -1.0), (3, 0.7, 0.0)], 2), 4).unwrap();
        let mut buf = Vec::new();
        write_blocks(&mut buf, &ds).unwrap();
        let back = read_blocks(buf.as_slice(), [0.1, 3.0]).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn out_of_window_block_rejected() {
        let text = "site_id,pair_i,pair_j,x,ttc_frame\n1,1,2,-3.5,0\n";
        assert!(matches!(read_blocks(text.as_bytes(), [0.1, 3.0]), Err(BlockError::MalformedRow { line: 2, .. })));
        let text = "site_id,pair_i,x,ttc_frame\n1,1,-1.5,0\n";
        assert!(matches!(read_blocks(text.as_bytes(), [0.1, 3.0]), Err(BlockError::MissingColumn(_))));
    }

    proptest! {
        #[test]
        fn minimum_is_attained_and_stable(ttcs in prop::collection::vec(0.1..3.0f64, 1..30), extra in 0.0..3.0f64) {
            let samples: Vec<(u32, f64)> = ttcs.iter().enumerate().map(|(i, t)| (i as u32, *t)).collect();
            let s = ConflictSeries { pair: (1, 2), samples: samples.clone() };
            let (_, m) = s.minimum().unwrap();
            prop_assert!(ttcs.contains(&m));
            let larger = m + extra;
            let mut more = samples;
            more.push((ttcs.len() as u32, larger));
            prop_assert_eq!(ConflictSeries { pair: (1, 2), samples: more }.minimum().unwrap().1, m);
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let series = vec![ConflictSeries { pair: (1, 2), samples: vec![(0, 2.5), (1, 1.7)] }];
        let frames = frames_with(&[(1, 3.1, 0.2), (2, 3.1, -1.0)], 2);
        let a = extract_blocks(&series, &frames, 4).unwrap();
        let b = extract_blocks(&series, &frames, 4).unwrap();
        assert_eq!(a, b);
        // tie on speed: lower id is vehicle-1
        assert_eq!(a.site(4)[0].pair, (1, 2));
        assert_abs_diff_eq!(a.site(4)[0].covariate("acc_veh2").unwrap(), -1.0);
    }
}

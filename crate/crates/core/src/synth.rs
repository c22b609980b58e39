//! Synthetic trajectories and block maxima with known ground truth, and a
//! dense-simulation TTC reference.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{Block, BlockDataset};
use crate::gev::{gev_quantile, GevParams};
use crate::trajectory::{clamp_steering, wrap_angle, CoordinateFrame, FrameRecord, ObjectState, SegmentDataset, FRAME_PERIOD, MAX_FRAMES};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("site {site_id}: no draw fell inside the truncation window")]
    Infeasible { site_id: u32 },
}

/// One forward-Euler step of the kinematic bicycle model under constant
/// acceleration and steering.
pub fn bicycle_step(s: &ObjectState, dt: f64) -> ObjectState {
    let (sin, cos) = s.heading.sin_cos();
    let yaw_rate = s.speed * clamp_steering(s.steering).tan() / s.wheelbase;
    ObjectState {
        x: s.x + s.speed * cos * dt,
        y: s.y + s.speed * sin * dt,
        heading: s.heading + yaw_rate * dt,
        speed: s.speed + s.accel * dt,
        ..*s
    }
}

/// States at `0, dt, 2dt, …` up to `t_max`.
pub fn simulate_bicycle(initial: &ObjectState, dt: f64, t_max: f64) -> Vec<(f64, ObjectState)> {
    let steps = (t_max / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = *initial;
    out.push((0.0, s));
    for k in 1..=steps {
        s = bicycle_step(&s, dt);
        out.push((k as f64 * dt, s));
    }
    out
}

fn gap(a: &ObjectState, b: &ObjectState) -> f64 {
    (a.x - b.x).hypot(a.y - b.y) - (a.radius + b.radius)
}

/// First time the two bounding circles touch under dense simulation, or
/// infinity within `horizon`.
pub fn oracle_ttc(state_i: &ObjectState, state_j: &ObjectState, dt: f64, horizon: f64) -> f64 {
    let (mut a, mut b) = (*state_i, *state_j);
    if gap(&a, &b) <= 0.0 {
        return 0.0;
    }
    let steps = (horizon / dt).ceil() as usize;
    for k in 0..steps {
        let (na, nb) = (bicycle_step(&a, dt), bicycle_step(&b, dt));
        if gap(&na, &nb) <= 0.0 {
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if gap(&bicycle_step(&a, mid), &bicycle_step(&b, mid)) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let t = k as f64 * dt + hi;
            return if t <= horizon { t } else { f64::INFINITY };
        }
        a = na;
        b = nb;
    }
    f64::INFINITY
}

/// Ranges for randomized two-vehicle encounters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairScenarioSpec {
    pub speed: [f64; 2],
    pub accel: [f64; 2],
    pub steering: [f64; 2],
    /// Time at which vehicle j would reach vehicle i's path, s.
    pub meet: [f64; 2],
    /// Standard deviation of the miss offset at the meeting point, m.
    pub offset_sd: f64,
    pub wheelbase: f64,
    pub radius: f64,
}

impl Default for PairScenarioSpec {
    fn default() -> Self {
        Self {
            speed: [0.0, 15.0],
            accel: [-3.0, 3.0],
            steering: [-0.1, 0.1],
            meet: [0.5, 3.0],
            offset_sd: 2.0,
            wheelbase: 2.7,
            radius: 2.4,
        }
    }
}

/// One seeded encounter: j is aimed, at constant velocity, at the point i
/// reaches after the meeting time, up to a random offset; both vehicles
/// then carry random acceleration and steering.
pub fn pair_scenario(spec: &PairScenarioSpec, seed: u64) -> (ObjectState, ObjectState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r: [f64; 2]| uniform(&mut rng, r);
    let mut i = ObjectState {
        object_id: 1,
        x: 0.0,
        y: 0.0,
        heading: 0.0,
        speed: 0.0,
        accel: 0.0,
        steering: 0.0,
        wheelbase: spec.wheelbase,
        radius: spec.radius,
    };
    i.heading = draw([-PI, PI]);
    i.speed = draw(spec.speed);
    i.accel = draw(spec.accel);
    i.steering = draw(spec.steering);
    let meet = draw(spec.meet);
    let heading_j = draw([-PI, PI]);
    let speed_j = draw(spec.speed);
    let accel_j = draw(spec.accel);
    let steering_j = draw(spec.steering);
    let normal = Normal::new(0.0, spec.offset_sd.max(f64::MIN_POSITIVE)).expect("valid normal");
    let (ox, oy) = (normal.sample(&mut rng), normal.sample(&mut rng));
    let target = simulate_bicycle(&i, 1e-3, meet).last().map(|(_, s)| *s).expect("non-empty trajectory");
    let (sin, cos) = heading_j.sin_cos();
    let j = ObjectState {
        object_id: 2,
        x: target.x + ox - speed_j * meet * cos,
        y: target.y + oy - speed_j * meet * sin,
        heading: heading_j,
        speed: speed_j,
        accel: accel_j,
        steering: steering_j,
        ..i
    };
    (i, j)
}

/// Smallest `d² − (r_i + r_j)²` along the dense simulation within the
/// horizon, with `d` the centre distance.
pub fn min_clearance(state_i: &ObjectState, state_j: &ObjectState, dt: f64, horizon: f64) -> f64 {
    let r2 = (state_i.radius + state_j.radius).powi(2);
    let (mut a, mut b) = (*state_i, *state_j);
    let mut best = (a.x - b.x).powi(2) + (a.y - b.y).powi(2) - r2;
    for _ in 0..(horizon / dt).ceil() as usize {
        a = bicycle_step(&a, dt);
        b = bicycle_step(&b, dt);
        best = best.min((a.x - b.x).powi(2) + (a.y - b.y).powi(2) - r2);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    HeadOn,
    Crossing,
    LaneChange,
    RandomField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_vehicles: usize,
    pub seed: u64,
    pub speed: [f64; 2],
    pub accel: [f64; 2],
    pub steering: [f64; 2],
    /// Half-width of the square holding randomly placed vehicles, m.
    pub position: f64,
    pub length: f64,
    pub width: f64,
    pub segment_id: String,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::RandomField,
            n_vehicles: 10,
            seed: 0,
            speed: [0.0, 15.0],
            accel: [-2.0, 2.0],
            steering: [-0.1, 0.1],
            position: 100.0,
            length: 4.5,
            width: 1.8,
            segment_id: "synthetic".into(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.steering[0].abs() >= 0.5 || self.steering[1].abs() >= 0.5 {
            return err("steering range must stay within |δ| < 0.5 rad");
        }
        if self.speed[0] < 0.0 || self.speed[0] > self.speed[1] {
            return err("speed range must be nonnegative and ordered");
        }
        if self.accel[0] > self.accel[1] || self.steering[0] > self.steering[1] {
            return err("ranges must be ordered");
        }
        if !(self.length > 0.0 && self.width > 0.0 && self.position > 0.0) {
            return err("dimensions and position range must be positive");
        }
        Ok(())
    }

    fn wheelbase(&self) -> f64 {
        0.6 * self.length
    }

    fn radius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

/// Time from the first frame to contact in the head-on scenario.
pub const HEAD_ON_CONTACT: f64 = 3.95;
/// Closing speed of each head-on vehicle, m/s.
pub const HEAD_ON_SPEED: f64 = 5.0;

/// Smallest in-window TTC of the head-on scenario: frames step the TTC
/// down by 0.1 s from [`HEAD_ON_CONTACT`] until it drops below 0.1 s.
pub fn head_on_min_ttc(window: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..MAX_FRAMES {
        let ttc = HEAD_ON_CONTACT - k as f64 * FRAME_PERIOD;
        if ttc >= window[0] && ttc <= window[1] {
            best = best.min(ttc);
        }
    }
    best
}

fn vehicle(spec: &ScenarioSpec, id: u64, x: f64, y: f64, heading: f64, speed: f64, accel: f64, steering: f64) -> ObjectState {
    ObjectState {
        object_id: id,
        x,
        y,
        heading,
        speed,
        accel,
        steering,
        wheelbase: spec.wheelbase(),
        radius: spec.radius(),
    }
}

fn random_vehicle(spec: &ScenarioSpec, id: u64, rng: &mut ChaCha8Rng) -> ObjectState {
    let speed = uniform(rng, spec.speed);
    // keep speed nonnegative over the segment
    let floor = -speed / (MAX_FRAMES as f64 * FRAME_PERIOD);
    let accel = uniform(rng, spec.accel).max(floor);
    vehicle(
        spec,
        id,
        rng.random_range(-spec.position..spec.position),
        rng.random_range(-spec.position..spec.position),
        rng.random_range(-PI..PI),
        speed,
        accel,
        uniform(rng, spec.steering),
    )
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Initial states of every vehicle of a scenario; vehicle 1 is the ego.
pub fn scenario_states(spec: &ScenarioSpec) -> Vec<ObjectState> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_vehicles;
    let mut states = Vec::with_capacity(n);
    let pair_needed = n >= 2 && spec.kind != ScenarioKind::RandomField;
    if pair_needed {
        match spec.kind {
            ScenarioKind::HeadOn => {
                let v = HEAD_ON_SPEED;
                let d0 = 2.0 * spec.radius() + 2.0 * v * HEAD_ON_CONTACT;
                states.push(vehicle(spec, 1, 0.0, 0.0, 0.0, v, 0.0, 0.0));
                states.push(vehicle(spec, 2, d0, 0.0, PI, v, 0.0, 0.0));
            }
            ScenarioKind::Crossing => {
                let va = uniform(&mut rng, [spec.speed[0].max(3.0), spec.speed[1].max(3.0)]);
                let vb = uniform(&mut rng, [spec.speed[0].max(3.0), spec.speed[1].max(3.0)]);
                let arrival = rng.random_range(4.0..10.0);
                let offset = rng.random_range(-0.8..0.8);
                states.push(vehicle(spec, 1, -va * arrival, 0.0, 0.0, va, 0.0, 0.0));
                states.push(vehicle(spec, 2, 0.0, -vb * (arrival + offset), PI / 2.0, vb, 0.0, 0.0));
            }
            ScenarioKind::LaneChange => {
                let v = uniform(&mut rng, [spec.speed[0].max(5.0), spec.speed[1].max(5.0)]);
                let lead = rng.random_range(5.0..20.0);
                let delta = -spec.steering[1].abs().clamp(0.005, 0.05);
                states.push(vehicle(spec, 1, lead, 0.0, 0.0, v, 0.0, 0.0));
                states.push(vehicle(spec, 2, 0.0, 3.5, 0.0, v + rng.random_range(0.0..3.0), 0.0, delta));
            }
            ScenarioKind::RandomField => unreachable!(),
        }
    }
    while states.len() < n {
        let id = states.len() as u64 + 1;
        if spec.kind == ScenarioKind::HeadOn {
            // a parallel convoy far from the conflicting pair
            states.push(vehicle(spec, id, 0.0, 100.0 * (id - 2) as f64, 0.0, HEAD_ON_SPEED, 0.0, 0.0));
        } else {
            let mut s = random_vehicle(spec, id, &mut rng);
            if pair_needed {
                s.y += 3.0 * spec.position;
            }
            states.push(s);
        }
    }
    states
}

/// A 200-frame global segment of constant-control vehicles.
pub fn gen_segment(spec: &ScenarioSpec) -> Result<SegmentDataset, SynthError> {
    spec.validate()?;
    let substeps = 100usize;
    let dt = FRAME_PERIOD / substeps as f64;
    let mut records = Vec::with_capacity(MAX_FRAMES * spec.n_vehicles);
    for (idx, initial) in scenario_states(spec).iter().enumerate() {
        let mut s = *initial;
        for frame in 0..MAX_FRAMES {
            if frame > 0 {
                for _ in 0..substeps {
                    s = bicycle_step(&s, dt);
                }
            }
            let heading = wrap_angle(s.heading);
            let (sin, cos) = heading.sin_cos();
            records.push(FrameRecord {
                segment_id: spec.segment_id.clone(),
                frame_index: frame as u32,
                object_id: s.object_id,
                is_ego: idx == 0,
                x: s.x,
                y: s.y,
                heading_raw: heading,
                speed_x: s.speed * cos,
                speed_y: s.speed * sin,
                accel_x: s.accel * cos,
                accel_y: s.accel * sin,
                length: spec.length,
                width: spec.width,
                coordinate_frame: CoordinateFrame::Global,
            });
        }
    }
    SegmentDataset::new(0, records).map_err(|e| SynthError::InvalidSpec(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSite {
    pub site_id: u32,
    pub n_blocks: usize,
    pub mu0: f64,
    pub log_sigma0: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateDist {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticBlockSpec {
    pub sites: Vec<SyntheticSite>,
    pub slopes_mu: BTreeMap<String, f64>,
    pub slopes_theta: BTreeMap<String, f64>,
    pub covariates: BTreeMap<String, CovariateDist>,
    /// Accepted range of `x = −TTC`.
    pub window: [f64; 2],
    pub seed: u64,
}

impl Default for SyntheticBlockSpec {
    fn default() -> Self {
        Self {
            sites: Vec::new(),
            slopes_mu: BTreeMap::new(),
            slopes_theta: BTreeMap::new(),
            covariates: BTreeMap::new(),
            window: [-3.0, -0.1],
            seed: 0,
        }
    }
}

impl SyntheticBlockSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::InvalidSpec(m));
        for s in &self.sites {
            if !(s.xi.abs() < 1.0) || !s.log_sigma0.is_finite() {
                return err(format!("site {}: need finite log-scale and |xi| < 1", s.site_id));
            }
        }
        for name in self.slopes_mu.keys().chain(self.slopes_theta.keys()) {
            if !self.covariates.contains_key(name) {
                return err(format!("slope on `{name}` without a covariate distribution"));
            }
        }
        if self.covariates.values().any(|c| !(c.sd >= 0.0)) {
            return err("covariate sd must be nonnegative".into());
        }
        if self.window[0] >= self.window[1] {
            return err("window must be ordered".into());
        }
        Ok(())
    }

    pub fn block_params(&self, site: &SyntheticSite, covariates: &BTreeMap<String, f64>) -> GevParams {
        let shift = |slopes: &BTreeMap<String, f64>| -> f64 { slopes.iter().map(|(n, a)| a * covariates[n]).sum() };
        GevParams::new(site.mu0 + shift(&self.slopes_mu), site.log_sigma0 + shift(&self.slopes_theta), site.xi)
    }
}

/// Ground truth of one generated block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTruth {
    pub site_id: u32,
    pub pair: (u64, u64),
    pub params: GevParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub spec: SyntheticBlockSpec,
    pub blocks: Vec<BlockTruth>,
}

const MAX_REJECTIONS: usize = 100_000;

/// Block maxima drawn from each site's GEV, rejection-truncated to the
/// window. Covariates are redrawn together with `x` on rejection.
pub fn gen_blocks(spec: &SyntheticBlockSpec) -> Result<(BlockDataset, SyntheticTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = BlockDataset::new();
    let mut truth = Vec::new();
    for site in &spec.sites {
        data.declare_site(site.site_id);
        for k in 0..site.n_blocks {
            let mut accepted = None;
            for _ in 0..MAX_REJECTIONS {
                let covariates: BTreeMap<String, f64> = spec
                    .covariates
                    .iter()
                    .map(|(n, d)| {
                        let v = if d.sd > 0.0 {
                            Normal::new(d.mean, d.sd).expect("valid normal").sample(&mut rng)
                        } else {
                            d.mean
                        };
                        (n.clone(), v)
                    })
                    .collect();
                let params = spec.block_params(site, &covariates);
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                let x = gev_quantile(u, &params);
                if x >= spec.window[0] && x <= spec.window[1] {
                    accepted = Some((x, covariates, params));
                    break;
                }
            }
            let (x, covariates, params) = accepted.ok_or(SynthError::Infeasible { site_id: site.site_id })?;
            let pair = (2 * k as u64 + 1, 2 * k as u64 + 2);
            data.push(Block { site_id: site.site_id, pair, x, ttc_frame: (k % MAX_FRAMES) as u32, covariates });
            truth.push(BlockTruth { site_id: site.site_id, pair, params });
        }
    }
    Ok((data, SyntheticTruth { spec: spec.clone(), blocks: truth }))
}

/// 58 Gumbel blocks at a single site whose truncated mean TTC is 1.96 s.
/// The scale is the stationary estimate of the first site group; the
/// location is solved so the window-truncated mean matches.
pub fn site1_mimic(seed: u64) -> SyntheticBlockSpec {
    SyntheticBlockSpec {
        sites: vec![SyntheticSite { site_id: 1, n_blocks: 58, mu0: -2.1918, log_sigma0: -0.846, xi: 0.0 }],
        seed,
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn at(x: f64, y: f64, heading: f64, speed: f64, accel: f64, steering: f64) -> ObjectState {
        ObjectState { object_id: 1, x, y, heading, speed, accel, steering, wheelbase: 2.7, radius: 1.0 }
    }

    #[test]
    fn straight_line() {
        let s = simulate_bicycle(&at(1.0, 2.0, 0.3, 7.0, 0.0, 0.0), 1e-3, 2.0);
        let (t, last) = s.last().unwrap();
        assert_abs_diff_eq!(*t, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(last.x, 1.0 + 14.0 * 0.3f64.cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(last.y, 2.0 + 14.0 * 0.3f64.sin(), epsilon = 1e-9);
    }

    #[test]
    fn uniform_acceleration() {
        let s = simulate_bicycle(&at(0.0, 0.0, 0.0, 0.0, 1.0, 0.0), 1e-3, 1.0);
        assert_abs_diff_eq!(s.last().unwrap().1.x, 0.5, epsilon = 1e-3);
    }

    #[test]
    fn constant_speed_circle_heading() {
        let s = simulate_bicycle(&at(0.0, 0.0, 0.2, 6.0, 0.0, 0.1), 1e-3, 3.0);
        assert_abs_diff_eq!(s.last().unwrap().1.heading, 0.2 + 6.0 * 3.0 * 0.1f64.tan() / 2.7, epsilon = 1e-4);
    }

    #[test]
    fn oracle_head_on_and_diverging() {
        let i = at(0.0, 0.0, 0.0, 5.0, 0.0, 0.0);
        let j = ObjectState { object_id: 2, x: 20.0, heading: PI, ..i };
        assert_abs_diff_eq!(oracle_ttc(&i, &j, 1e-3, 10.0), 1.8, epsilon = 1e-3);
        let k = ObjectState { object_id: 2, x: 20.0, heading: 0.0, speed: 9.0, ..i };
        let back = ObjectState { heading: PI, ..i };
        assert!(oracle_ttc(&back, &k, 1e-3, 10.0).is_infinite());
    }

    #[test]
    fn single_vehicle_segment() {
        let ds = gen_segment(&ScenarioSpec { n_vehicles: 1, ..Default::default() }).unwrap();
        assert_eq!(ds.len(), MAX_FRAMES);
        assert!(ds.is_global());
    }

    #[test]
    fn segments_are_deterministic() {
        let spec = ScenarioSpec { n_vehicles: 46, seed: 9, ..Default::default() };
        assert_eq!(gen_segment(&spec).unwrap(), gen_segment(&spec).unwrap());
    }

    #[test]
    fn head_on_min_ttc_value() {
        assert_abs_diff_eq!(head_on_min_ttc([0.1, 3.0]), 0.15, epsilon = 1e-12);
    }

    #[test]
    fn truncation_window_respected() {
        let spec = SyntheticBlockSpec {
            sites: vec![SyntheticSite { site_id: 3, n_blocks: 500, mu0: -1.0, log_sigma0: 0.0, xi: 0.2 }],
            seed: 4,
            ..Default::default()
        };
        let (data, truth) = gen_blocks(&spec).unwrap();
        assert_eq!(data.len(), 500);
        assert_eq!(truth.blocks.len(), 500);
        assert!(data.blocks().all(|b| (-3.0..=-0.1).contains(&b.x)));
    }

    #[test]
    fn tiny_scale_concentrates() {
        let spec = SyntheticBlockSpec {
            sites: vec![SyntheticSite { site_id: 1, n_blocks: 50, mu0: -1.7, log_sigma0: -25.0, xi: 0.0 }],
            ..Default::default()
        };
        let (data, _) = gen_blocks(&spec).unwrap();
        assert!(data.blocks().all(|b| (b.x + 1.7).abs() < 1e-8));
    }

    #[test]
    fn slope_requires_covariate() {
        let mut spec = site1_mimic(0);
        spec.slopes_mu.insert("spd_veh2".into(), -0.05);
        assert!(matches!(gen_blocks(&spec), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn site1_mimic_moments() {
        let (data, _) = gen_blocks(&site1_mimic(1)).unwrap();
        assert_eq!(data.len(), 58);
        let mean_ttc = data.blocks().map(|b| -b.x).sum::<f64>() / 58.0;
        assert!((mean_ttc - 1.96).abs() < 0.2, "{mean_ttc}");
    }
}

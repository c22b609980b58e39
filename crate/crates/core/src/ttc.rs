//! Two-dimensional time-to-collision under constant acceleration and
//! steering.
//!
//! Each vehicle's centre follows a cubic in time; the squared centre
//! distance minus the squared radius sum is a degree-six polynomial whose
//! smallest nonnegative root is the TTC.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::roots::{self, RootSearch};
use crate::trajectory::{clamp_steering, ObjectState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtcConfig {
    /// Upper bound of the root search, seconds.
    pub horizon: f64,
    /// Near-miss window `[lo, hi]`, seconds.
    pub window: [f64; 2],
    pub root_tol: f64,
    /// Root grid step as a fraction of the horizon.
    pub grid_fraction: f64,
}

impl Default for TtcConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            window: [0.1, 3.0],
            root_tol: 1e-9,
            grid_fraction: 1e-3,
        }
    }
}

impl TtcConfig {
    pub fn search(&self) -> RootSearch {
        RootSearch {
            horizon: self.horizon,
            grid_fraction: self.grid_fraction,
            tol: self.root_tol,
        }
    }

    pub fn in_window(&self, ttc: f64) -> bool {
        ttc >= self.window[0] && ttc <= self.window[1]
    }
}

/// Per-vehicle centre trajectory `x(t), y(t)` as ascending cubic coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentreCubic {
    pub x: [f64; 4],
    pub y: [f64; 4],
}

impl CentreCubic {
    pub fn from_state(s: &ObjectState) -> Self {
        let (sin, cos) = s.heading.sin_cos();
        let curvature = clamp_steering(s.steering).tan() / s.wheelbase;
        let (v, a) = (s.speed, s.accel);
        Self {
            x: [
                s.x,
                v * cos,
                0.5 * (a * cos - v * v * sin * curvature),
                -(a * v * sin * curvature) / 12.0,
            ],
            y: [
                s.y,
                v * sin,
                0.5 * (a * sin + v * v * cos * curvature),
                (a * v * cos * curvature) / 12.0,
            ],
        }
    }
}

/// `g(t) = P(t)² + Q(t)² − (r_i + r_j)²` for an ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionPolynomial {
    pub coefficients: [f64; 7],
    pub pair: (u64, u64),
    pub radius_sum: f64,
    /// Relative displacement cubics P (x) and Q (y).
    pub displacement: [[f64; 4]; 2],
}

impl CollisionPolynomial {
    pub fn eval(&self, t: f64) -> f64 {
        roots::eval(&self.coefficients, t)
    }
}

pub fn build_polynomial(state_i: &ObjectState, state_j: &ObjectState) -> CollisionPolynomial {
    let ci = CentreCubic::from_state(state_i);
    let cj = CentreCubic::from_state(state_j);
    let p: [f64; 4] = std::array::from_fn(|k| ci.x[k] - cj.x[k]);
    let q: [f64; 4] = std::array::from_fn(|k| ci.y[k] - cj.y[k]);
    let radius_sum = state_i.radius + state_j.radius;
    let p2 = roots::multiply(&p, &p);
    let q2 = roots::multiply(&q, &q);
    let mut coefficients: [f64; 7] = std::array::from_fn(|k| p2[k] + q2[k]);
    coefficients[0] -= radius_sum * radius_sum;
    CollisionPolynomial {
        coefficients,
        pair: (state_i.object_id, state_j.object_id),
        radius_sum,
        displacement: [p, q],
    }
}

/// Roots of `g` in `[0, horizon]`, ascending.
pub fn real_roots(poly: &CollisionPolynomial, horizon: f64, tol: f64) -> Vec<f64> {
    roots::real_roots(&poly.coefficients, &RootSearch::new(horizon, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtcStatus {
    RootFound,
    NoRoot,
    AlreadyOverlapping,
}

impl fmt::Display for TtcStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TtcStatus::RootFound => "root_found",
            TtcStatus::NoRoot => "no_root",
            TtcStatus::AlreadyOverlapping => "already_overlapping",
        })
    }
}

impl std::str::FromStr for TtcStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "root_found" => Ok(TtcStatus::RootFound),
            "no_root" => Ok(TtcStatus::NoRoot),
            "already_overlapping" => Ok(TtcStatus::AlreadyOverlapping),
            other => Err(format!("unknown TTC status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtcResult {
    /// Seconds, or `f64::INFINITY` when no collision is found.
    pub value: f64,
    pub pair: (u64, u64),
    pub frame_index: u32,
    pub status: TtcStatus,
}

fn evaluate(state_i: &ObjectState, state_j: &ObjectState, search: &RootSearch, frame_index: u32) -> TtcResult {
    let poly = build_polynomial(state_i, state_j);
    let pair = poly.pair;
    let (value, status) = if poly.coefficients[0] < 0.0 {
        (0.0, TtcStatus::AlreadyOverlapping)
    } else {
        match roots::first_root(&poly.coefficients, search) {
            Some(t) => (t, TtcStatus::RootFound),
            None => (f64::INFINITY, TtcStatus::NoRoot),
        }
    };
    TtcResult { value, pair, frame_index, status }
}

/// TTC of an ordered pair with the default search settings.
pub fn ttc_pair(state_i: &ObjectState, state_j: &ObjectState, horizon: f64) -> TtcResult {
    let search = RootSearch {
        horizon,
        ..TtcConfig::default().search()
    };
    evaluate(state_i, state_j, &search, 0)
}

pub fn ttc_pair_with(state_i: &ObjectState, state_j: &ObjectState, config: &TtcConfig) -> TtcResult {
    evaluate(state_i, state_j, &config.search(), 0)
}

/// TTC outcomes for one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameTtc {
    /// Pairs whose TTC falls inside the near-miss window.
    pub conflicts: Vec<TtcResult>,
    /// Pairs whose footprints already overlap at the frame.
    pub overlaps: Vec<TtcResult>,
}

/// Evaluates every unordered pair of a frame; pairs are ordered by
/// ascending object id within and across results.
pub fn ttc_frame(states: &[ObjectState], frame_index: u32, config: &TtcConfig) -> FrameTtc {
    let mut sorted: Vec<&ObjectState> = states.iter().collect();
    sorted.sort_by_key(|s| s.object_id);
    let search = config.search();
    let mut out = FrameTtc::default();
    for (a, si) in sorted.iter().enumerate() {
        for sj in &sorted[a + 1..] {
            let r = evaluate(si, sj, &search, frame_index);
            match r.status {
                TtcStatus::AlreadyOverlapping => out.overlaps.push(r),
                _ if config.in_window(r.value) => out.conflicts.push(r),
                _ => {}
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    pub(crate) fn state(id: u64, x: f64, y: f64, heading: f64, speed: f64) -> ObjectState {
        ObjectState {
            object_id: id,
            x,
            y,
            heading,
            speed,
            accel: 0.0,
            steering: 0.0,
            wheelbase: 2.7,
            radius: 1.0,
        }
    }

    #[test]
    fn head_on_polynomial() {
        let i = state(1, 0.0, 0.0, 0.0, 5.0);
        let j = state(2, 20.0, 0.0, PI, 5.0);
        let g = build_polynomial(&i, &j);
        // (20 - 10t)^2 - 4 = 396 - 400 t + 100 t^2
        assert_abs_diff_eq!(g.coefficients[0], 396.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.coefficients[1], -400.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.coefficients[2], 100.0, epsilon = 1e-12);
        for c in &g.coefficients[3..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-12);
        }
        let roots = real_roots(&g, 10.0, 1e-9);
        assert_eq!(roots.len(), 2);
        assert_abs_diff_eq!(roots[0], 1.8, epsilon = 1e-9);
        assert_abs_diff_eq!(roots[1], 2.2, epsilon = 1e-9);
    }

    #[test]
    fn head_on_ttc() {
        let r = ttc_pair(&state(1, 0.0, 0.0, 0.0, 5.0), &state(2, 20.0, 0.0, PI, 5.0), 10.0);
        assert_eq!(r.status, TtcStatus::RootFound);
        assert_abs_diff_eq!(r.value, 1.8, epsilon = 1e-9);
    }

    #[test]
    fn co_located_states_overlap() {
        let s = state(1, 3.0, 4.0, 0.2, 7.0);
        let g = build_polynomial(&s, &ObjectState { object_id: 2, ..s });
        assert_eq!(g.coefficients[0], -4.0);
        assert!(g.coefficients[1..].iter().all(|c| *c == 0.0));
        let r = ttc_pair(&s, &ObjectState { object_id: 2, ..s }, 10.0);
        assert_eq!((r.value, r.status), (0.0, TtcStatus::AlreadyOverlapping));
    }

    #[test]
    fn parallel_vehicles_never_meet() {
        let r = ttc_pair(&state(1, 0.0, 0.0, 0.3, 8.0), &state(2, -5.0 * 0.3f64.sin(), 5.0 * 0.3f64.cos(), 0.3, 8.0), 10.0);
        assert_eq!(r.status, TtcStatus::NoRoot);
        assert!(r.value.is_infinite());
    }

    #[test]
    fn g0_is_squared_gap() {
        let mut i = state(1, 1.0, 2.0, 0.4, 3.0);
        i.accel = 1.5;
        i.steering = 0.2;
        let j = state(2, 7.0, -1.0, -2.0, 9.0);
        let g = build_polynomial(&i, &j);
        assert_abs_diff_eq!(g.coefficients[0], 36.0 + 9.0 - 4.0, epsilon = 1e-12);
        assert!(g.coefficients[6] >= 0.0);
    }

    #[test]
    fn frame_enumerates_each_pair_once() {
        let states = vec![
            state(3, 0.0, 0.0, 0.0, 5.0),
            state(1, 20.0, 0.0, PI, 5.0),
            state(2, 0.0, 50.0, PI / 2.0, 5.0),
        ];
        let res = ttc_frame(&states, 7, &TtcConfig::default());
        assert_eq!(res.conflicts.len(), 1);
        assert_eq!(res.conflicts[0].pair, (1, 3));
        assert_eq!(res.conflicts[0].frame_index, 7);
        assert!(res.overlaps.is_empty());
    }

    #[test]
    fn diverging_frame_is_empty() {
        let states = vec![
            state(1, 0.0, 0.0, PI, 5.0),
            state(2, 20.0, 0.0, 0.0, 5.0),
            state(3, 10.0, 30.0, PI / 2.0, 5.0),
        ];
        assert_eq!(ttc_frame(&states, 0, &TtcConfig::default()), FrameTtc::default());
    }

    #[test]
    fn window_excludes_distant_collisions() {
        // 5.8 s to contact
        let states = vec![state(1, 0.0, 0.0, 0.0, 5.0), state(2, 60.0, 0.0, PI, 5.0)];
        assert!(ttc_frame(&states, 0, &TtcConfig::default()).conflicts.is_empty());
    }
}

//! Frame-based trajectory records and the ego-relative to global transforms.
//!
//! A segment file holds one row per (frame, object). Rows flagged
//! `coordinate_frame = local` carry heading, speed and acceleration
//! relative to the ego vehicle of the same frame; `globalize` turns every
//! row into an [`ObjectState`] in the global frame.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling period of a segment, seconds.
pub const FRAME_PERIOD: f64 = 0.1;
/// Longest admissible segment (20 s at 10 Hz).
pub const MAX_FRAMES: usize = 200;
/// Margin kept between a steering angle and ±π/2.
pub const STEERING_EPS: f64 = 1e-3;

/// Column names of the segment file, in canonical order.
pub const RECORD_COLUMNS: [&str; 14] = [
    "segment_id",
    "frame_index",
    "object_id",
    "is_ego",
    "x",
    "y",
    "heading_raw",
    "speed_x",
    "speed_y",
    "accel_x",
    "accel_y",
    "length",
    "width",
    "coordinate_frame",
];

/// Columns appended by [`write_states`].
pub const DERIVED_COLUMNS: [&str; 6] = ["heading", "speed", "accel", "steering", "wheelbase", "radius"];

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("object {object_id} appears twice in frame {frame_index}")]
    DuplicateObjectInFrame { frame_index: u32, object_id: u64 },
    #[error("frame {frame_index} has local records but no ego record")]
    MissingEgo { frame_index: u32 },
    #[error("segment spans {0} frames, more than the {MAX_FRAMES} allowed")]
    SegmentTooLong(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateFrame {
    Global,
    Local,
}

impl fmt::Display for CoordinateFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoordinateFrame::Global => "global",
            CoordinateFrame::Local => "local",
        })
    }
}

impl FromStr for CoordinateFrame {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(CoordinateFrame::Global),
            "local" => Ok(CoordinateFrame::Local),
            other => Err(format!("unknown coordinate frame `{other}`")),
        }
    }
}

/// One row of a segment file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub segment_id: String,
    pub frame_index: u32,
    pub object_id: u64,
    pub is_ego: bool,
    pub x: f64,
    pub y: f64,
    /// Global for the ego vehicle, ego-relative for local records.
    pub heading_raw: f64,
    pub speed_x: f64,
    pub speed_y: f64,
    pub accel_x: f64,
    pub accel_y: f64,
    pub length: f64,
    pub width: f64,
    pub coordinate_frame: CoordinateFrame,
}

/// Global-frame kinematic state of one vehicle at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub object_id: u64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    pub steering: f64,
    pub wheelbase: f64,
    pub radius: f64,
}

/// All states observed in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStates {
    pub frame_index: u32,
    pub states: Vec<ObjectState>,
}

impl FrameStates {
    pub fn get(&self, object_id: u64) -> Option<&ObjectState> {
        self.states.iter().find(|s| s.object_id == object_id)
    }
}

/// A validated segment: records sorted by (frame_index, object_id).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDataset {
    pub site_id: u32,
    records: Vec<FrameRecord>,
}

impl SegmentDataset {
    /// Sorts and validates `records`.
    pub fn new(site_id: u32, mut records: Vec<FrameRecord>) -> Result<Self, TrajectoryError> {
        records.sort_by(|a, b| (a.frame_index, a.object_id).cmp(&(b.frame_index, b.object_id)));
        validate(&records)?;
        Ok(Self { site_id, records })
    }

    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by frame, ascending frame order.
    pub fn frames(&self) -> impl Iterator<Item = (u32, &[FrameRecord])> {
        self.records
            .chunk_by(|a, b| a.frame_index == b.frame_index)
            .map(|chunk| (chunk[0].frame_index, chunk))
    }

    pub fn is_global(&self) -> bool {
        self.records.iter().all(|r| r.coordinate_frame == CoordinateFrame::Global)
    }
}

fn validate(records: &[FrameRecord]) -> Result<(), TrajectoryError> {
    let mut frames = 0usize;
    for chunk in records.chunk_by(|a, b| a.frame_index == b.frame_index) {
        frames += 1;
        let frame_index = chunk[0].frame_index;
        for pair in chunk.windows(2) {
            if pair[0].object_id == pair[1].object_id {
                return Err(TrajectoryError::DuplicateObjectInFrame {
                    frame_index,
                    object_id: pair[0].object_id,
                });
            }
        }
        let egos = chunk.iter().filter(|r| r.is_ego).count();
        let has_local = chunk.iter().any(|r| r.coordinate_frame == CoordinateFrame::Local);
        if has_local && egos == 0 {
            return Err(TrajectoryError::MissingEgo { frame_index });
        }
        if egos > 1 {
            let object_id = chunk.iter().filter(|r| r.is_ego).nth(1).map(|r| r.object_id).unwrap_or(0);
            return Err(TrajectoryError::DuplicateObjectInFrame { frame_index, object_id });
        }
    }
    if let (Some(first), Some(last)) = (records.first(), records.last()) {
        let span = (last.frame_index - first.frame_index) as usize + 1;
        if span > MAX_FRAMES || frames > MAX_FRAMES {
            return Err(TrajectoryError::SegmentTooLong(span.max(frames)));
        }
    }
    Ok(())
}

/// Parses a segment file from disk.
pub fn parse_segment(path: impl AsRef<Path>, site_id: u32) -> Result<SegmentDataset, TrajectoryError> {
    let file = std::fs::File::open(path)?;
    read_segment(file, site_id)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Parses a segment from any reader. Lines starting with `#` are ignored.
pub fn read_segment<R: Read>(reader: R, site_id: u32) -> Result<SegmentDataset, TrajectoryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = HashMap::new();
    for name in RECORD_COLUMNS {
        let pos = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TrajectoryError::MissingColumn(name.to_string()))?;
        index.insert(name, pos);
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let malformed = |reason: String| TrajectoryError::MalformedRow { line, reason };
        let field = |name: &str| row.get(index[name]).unwrap_or("");
        let num = |name: &str| -> Result<f64, TrajectoryError> {
            let raw = field(name);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(format!("`{name}` is not a finite number: `{raw}`")))
        };
        let record = FrameRecord {
            segment_id: field("segment_id").to_string(),
            frame_index: field("frame_index")
                .parse()
                .map_err(|_| malformed(format!("bad frame_index `{}`", field("frame_index"))))?,
            object_id: field("object_id")
                .parse()
                .map_err(|_| malformed(format!("bad object_id `{}`", field("object_id"))))?,
            is_ego: parse_bool(field("is_ego")).ok_or_else(|| malformed(format!("bad is_ego `{}`", field("is_ego"))))?,
            x: num("x")?,
            y: num("y")?,
            heading_raw: num("heading_raw")?,
            speed_x: num("speed_x")?,
            speed_y: num("speed_y")?,
            accel_x: num("accel_x")?,
            accel_y: num("accel_y")?,
            length: num("length")?,
            width: num("width")?,
            coordinate_frame: field("coordinate_frame").parse().map_err(malformed)?,
        };
        if record.length <= 0.0 || record.width <= 0.0 {
            return Err(malformed("length and width must be positive".into()));
        }
        records.push(record);
    }
    SegmentDataset::new(site_id, records)
}

/// Writes records in the segment file schema.
pub fn write_segment<W: Write>(writer: W, records: &[FrameRecord]) -> Result<(), TrajectoryError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RECORD_COLUMNS)?;
    for r in records {
        wtr.write_record(record_fields(r))?;
    }
    wtr.flush()?;
    Ok(())
}

fn record_fields(r: &FrameRecord) -> Vec<String> {
    vec![
        r.segment_id.clone(),
        r.frame_index.to_string(),
        r.object_id.to_string(),
        u8::from(r.is_ego).to_string(),
        r.x.to_string(),
        r.y.to_string(),
        r.heading_raw.to_string(),
        r.speed_x.to_string(),
        r.speed_y.to_string(),
        r.accel_x.to_string(),
        r.accel_y.to_string(),
        r.length.to_string(),
        r.width.to_string(),
        r.coordinate_frame.to_string(),
    ]
}

/// Writes the source records with the globalized columns appended.
pub fn write_states<W: Write>(
    writer: W,
    dataset: &SegmentDataset,
    frames: &[FrameStates],
) -> Result<(), TrajectoryError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RECORD_COLUMNS.iter().chain(DERIVED_COLUMNS.iter()))?;
    let lookup: HashMap<(u32, u64), &ObjectState> = frames
        .iter()
        .flat_map(|f| f.states.iter().map(move |s| ((f.frame_index, s.object_id), s)))
        .collect();
    for r in dataset.records() {
        let Some(s) = lookup.get(&(r.frame_index, r.object_id)) else {
            continue;
        };
        let mut fields = record_fields(r);
        fields.extend(
            [s.heading, s.speed, s.accel, s.steering, s.wheelbase, s.radius]
                .iter()
                .map(f64::to_string),
        );
        wtr.write_record(fields)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a file written by [`write_states`] back into per-frame states.
pub fn read_states<R: Read>(reader: R) -> Result<Vec<FrameStates>, TrajectoryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TrajectoryError::MissingColumn(name.to_string()))
    };
    let frame_col = col("frame_index")?;
    let id_col = col("object_id")?;
    let x_col = col("x")?;
    let y_col = col("y")?;
    let derived: Vec<usize> = DERIVED_COLUMNS.iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let mut frames: BTreeMap<u32, Vec<ObjectState>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| -> Result<f64, TrajectoryError> {
            row.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| TrajectoryError::MalformedRow { line, reason: format!("column {i} is not numeric") })
        };
        let frame_index: u32 = row
            .get(frame_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| TrajectoryError::MalformedRow { line, reason: "bad frame_index".into() })?;
        let object_id: u64 = row
            .get(id_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| TrajectoryError::MalformedRow { line, reason: "bad object_id".into() })?;
        frames.entry(frame_index).or_default().push(ObjectState {
            object_id,
            x: get(x_col)?,
            y: get(y_col)?,
            heading: get(derived[0])?,
            speed: get(derived[1])?,
            accel: get(derived[2])?,
            steering: get(derived[3])?,
            wheelbase: get(derived[4])?,
            radius: get(derived[5])?,
        });
    }
    Ok(frames
        .into_iter()
        .map(|(frame_index, states)| FrameStates { frame_index, states })
        .collect())
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

pub fn to_global_heading(ego_heading: f64, local_heading: f64) -> f64 {
    wrap_angle(ego_heading + local_heading)
}

/// Projects a velocity onto the heading direction: `v_x cos θ + v_y sin θ`.
pub fn to_global_speed(speed_x: f64, speed_y: f64, heading: f64) -> f64 {
    speed_x * heading.cos() + speed_y * heading.sin()
}

pub fn to_global_accel(accel_x: f64, accel_y: f64, heading: f64) -> f64 {
    to_global_speed(accel_x, accel_y, heading)
}

/// Clamps a steering angle into (−π/2 + ε, π/2 − ε).
pub fn clamp_steering(steering: f64) -> f64 {
    let limit = std::f64::consts::FRAC_PI_2 - STEERING_EPS;
    steering.clamp(-limit, limit)
}

/// Steering angle implied by a heading rate: `atan(θ̇·L / v)`.
///
/// The speed magnitude is floored at `min_speed`, keeping its sign so a
/// reversing vehicle steers the right way.
pub fn derive_steering(heading_rate: f64, wheelbase: f64, speed: f64, min_speed: f64) -> f64 {
    let floored = speed.abs().max(min_speed);
    let v = if speed < 0.0 { -floored } else { floored };
    clamp_steering((heading_rate * wheelbase / v).atan())
}

/// How vehicle footprint radius is derived from length and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RadiusRule {
    /// Half the diagonal of the footprint rectangle.
    Circumscribed,
    /// Fixed radius for every vehicle.
    Fixed { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    pub radius_rule: RadiusRule,
    /// Wheelbase as a fraction of object length.
    pub wheelbase_ratio: f64,
    pub min_speed: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            radius_rule: RadiusRule::Circumscribed,
            wheelbase_ratio: 0.6,
            min_speed: 0.1,
        }
    }
}

impl TransformConfig {
    pub fn radius(&self, length: f64, width: f64) -> f64 {
        match self.radius_rule {
            RadiusRule::Circumscribed => 0.5 * length.hypot(width),
            RadiusRule::Fixed { radius } => radius,
        }
    }
}

/// Transforms every record of a segment into a global-frame state.
///
/// Steering is derived from the wrapped heading difference to the
/// neighbouring frame of the same object (backward difference, forward
/// for an object's first frame, zero for a single observation).
pub fn globalize(dataset: &SegmentDataset, config: &TransformConfig) -> Result<Vec<FrameStates>, TrajectoryError> {
    struct Partial {
        record_idx: usize,
        heading: f64,
        speed: f64,
        accel: f64,
    }

    let records = dataset.records();
    let mut per_frame: Vec<(u32, Vec<Partial>)> = Vec::new();
    let mut start = 0;
    for (frame_index, chunk) in dataset.frames() {
        let ego = chunk.iter().find(|r| r.is_ego);
        let mut partials = Vec::with_capacity(chunk.len());
        for (k, r) in chunk.iter().enumerate() {
            let heading = match r.coordinate_frame {
                CoordinateFrame::Global => wrap_angle(r.heading_raw),
                CoordinateFrame::Local if r.is_ego => wrap_angle(r.heading_raw),
                CoordinateFrame::Local => {
                    let ego = ego.ok_or(TrajectoryError::MissingEgo { frame_index })?;
                    to_global_heading(ego.heading_raw, r.heading_raw)
                }
            };
            partials.push(Partial {
                record_idx: start + k,
                heading,
                speed: to_global_speed(r.speed_x, r.speed_y, heading),
                accel: to_global_accel(r.accel_x, r.accel_y, heading),
            });
        }
        start += chunk.len();
        per_frame.push((frame_index, partials));
    }

    // heading history per object: (frame_index, heading)
    let mut history: HashMap<u64, Vec<(u32, f64)>> = HashMap::new();
    for (frame_index, partials) in &per_frame {
        for p in partials {
            history
                .entry(records[p.record_idx].object_id)
                .or_default()
                .push((*frame_index, p.heading));
        }
    }

    let heading_rate = |object_id: u64, frame_index: u32| -> f64 {
        let track = &history[&object_id];
        let pos = track.binary_search_by_key(&frame_index, |e| e.0).unwrap_or(0);
        let (a, b) = if pos > 0 {
            (track[pos - 1], track[pos])
        } else if track.len() > 1 {
            (track[0], track[1])
        } else {
            return 0.0;
        };
        let dt = f64::from(b.0 - a.0) * FRAME_PERIOD;
        wrap_angle(b.1 - a.1) / dt
    };

    Ok(per_frame
        .into_iter()
        .map(|(frame_index, partials)| FrameStates {
            frame_index,
            states: partials
                .into_iter()
                .map(|p| {
                    let r = &records[p.record_idx];
                    let wheelbase = config.wheelbase_ratio * r.length;
                    ObjectState {
                        object_id: r.object_id,
                        x: r.x,
                        y: r.y,
                        heading: p.heading,
                        speed: p.speed,
                        accel: p.accel,
                        steering: derive_steering(
                            heading_rate(r.object_id, frame_index),
                            wheelbase,
                            p.speed,
                            config.min_speed,
                        ),
                        wheelbase,
                        radius: config.radius(r.length, r.width),
                    }
                })
                .collect(),
        })
        .collect())
}

/// Global-frame records reproducing `frames`, for round-tripping states
/// through the segment schema.
pub fn states_to_records(segment_id: &str, frames: &[FrameStates], dims: &HashMap<u64, (f64, f64)>) -> Vec<FrameRecord> {
    frames
        .iter()
        .flat_map(|f| {
            f.states.iter().map(move |s| {
                let (length, width) = dims.get(&s.object_id).copied().unwrap_or((4.5, 1.8));
                FrameRecord {
                    segment_id: segment_id.to_string(),
                    frame_index: f.frame_index,
                    object_id: s.object_id,
                    is_ego: false,
                    x: s.x,
                    y: s.y,
                    heading_raw: s.heading,
                    speed_x: s.speed * s.heading.cos(),
                    speed_y: s.speed * s.heading.sin(),
                    accel_x: s.accel * s.heading.cos(),
                    accel_y: s.accel * s.heading.sin(),
                    length,
                    width,
                    coordinate_frame: CoordinateFrame::Global,
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const HEADER: &str = "segment_id,frame_index,object_id,is_ego,x,y,heading_raw,speed_x,speed_y,accel_x,accel_y,length,width,coordinate_frame";

    fn row(frame: u32, id: u64, ego: bool, heading: f64, frame_kind: &str) -> String {
        format!("s0,{frame},{id},{},0,0,{heading},3,4,1,0,4.5,1.8,{frame_kind}", u8::from(ego))
    }

    #[test]
    fn parses_three_frames_two_objects() {
        let mut text = String::from(HEADER);
        for f in 0..3 {
            text.push('\n');
            text.push_str(&row(f, 1, true, 0.0, "global"));
            text.push('\n');
            text.push_str(&row(f, 2, false, 0.5, "local"));
        }
        let ds = read_segment(text.as_bytes(), 1).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.frames().count(), 3);
    }

    #[test]
    fn missing_heading_column() {
        let text = HEADER.replace("heading_raw,", "") + "\ns0,0,1,1,0,0,3,4,1,0,4.5,1.8,global";
        match read_segment(text.as_bytes(), 1) {
            Err(TrajectoryError::MissingColumn(c)) => assert_eq!(c, "heading_raw"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_egos_in_one_frame() {
        let text = format!("{HEADER}\n{}\n{}", row(0, 1, true, 0.0, "local"), row(0, 2, true, 0.0, "local"));
        assert!(matches!(
            read_segment(text.as_bytes(), 1),
            Err(TrajectoryError::DuplicateObjectInFrame { .. })
        ));
    }

    #[test]
    fn duplicate_object_in_frame() {
        let text = format!("{HEADER}\n{}\n{}", row(0, 2, false, 0.0, "global"), row(0, 2, false, 0.1, "global"));
        assert!(matches!(
            read_segment(text.as_bytes(), 1),
            Err(TrajectoryError::DuplicateObjectInFrame { frame_index: 0, object_id: 2 })
        ));
    }

    #[test]
    fn local_frame_without_ego() {
        let text = format!("{HEADER}\n{}", row(0, 2, false, 0.0, "local"));
        assert!(matches!(read_segment(text.as_bytes(), 1), Err(TrajectoryError::MissingEgo { frame_index: 0 })));
    }

    #[test]
    fn non_positive_dimensions_rejected() {
        let text = format!("{HEADER}\ns0,0,1,1,0,0,0,3,4,1,0,0,1.8,global");
        assert!(matches!(read_segment(text.as_bytes(), 1), Err(TrajectoryError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn overlong_segment_rejected() {
        let mut text = String::from(HEADER);
        for f in [0, 200] {
            text.push('\n');
            text.push_str(&row(f, 1, false, 0.0, "global"));
        }
        assert!(matches!(read_segment(text.as_bytes(), 1), Err(TrajectoryError::SegmentTooLong(201))));
    }

    #[test]
    fn heading_examples() {
        assert_eq!(to_global_heading(0.0, 0.5), 0.5);
        assert_eq!(to_global_heading(1.0, 0.5), 1.5);
        assert_abs_diff_eq!(to_global_heading(3.0, 1.0), -2.2831853, epsilon = 1e-7);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
    }

    #[test]
    fn speed_and_accel_examples() {
        assert_eq!(to_global_speed(3.0, 4.0, 0.0), 3.0);
        assert_abs_diff_eq!(to_global_speed(3.0, 4.0, PI / 2.0), 4.0, epsilon = 1e-12);
        // projection onto the velocity direction recovers the norm
        assert_abs_diff_eq!(to_global_speed(3.0, 4.0, 4.0f64.atan2(3.0)), 5.0, epsilon = 1e-12);
        // 0.6435011 = atan2(3, 4) is the complementary angle: 3·0.8 + 4·0.6
        assert_abs_diff_eq!(to_global_speed(3.0, 4.0, 0.6435011), 4.8, epsilon = 1e-7);
        assert_eq!(to_global_accel(1.0, 0.0, 0.0), 1.0);
        assert_abs_diff_eq!(to_global_accel(0.0, 2.0, PI / 2.0), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(to_global_accel(1.0, 1.0, PI / 4.0), std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn steering_examples() {
        assert_eq!(derive_steering(0.0, 3.0, 10.0, 0.1), 0.0);
        assert_abs_diff_eq!(derive_steering(0.1, 3.0, 10.0, 0.1), 0.0299910, epsilon = 1e-7);
        // atan(15) = 1.5042281 lies inside the clamp
        assert_abs_diff_eq!(derive_steering(0.5, 3.0, 0.0, 0.1), 15.0f64.atan(), epsilon = 1e-12);
        assert_eq!(derive_steering(1e6, 3.0, 0.0, 0.1), PI / 2.0 - STEERING_EPS);
        assert!(derive_steering(0.1, 3.0, -10.0, 0.1) < 0.0);
    }

    fn local_dataset() -> SegmentDataset {
        let text = format!(
            "{HEADER}\n{}\n{}",
            "s0,0,1,1,10,5,1.0,0,0,0,0,4.5,1.8,local",
            "s0,0,7,0,20,8,0.5,2,1,0.5,0.2,5.0,2.0,local"
        );
        read_segment(text.as_bytes(), 3).unwrap()
    }

    #[test]
    fn globalize_composes_heading() {
        let frames = globalize(&local_dataset(), &TransformConfig::default()).unwrap();
        let obj = frames[0].get(7).unwrap();
        assert_eq!(obj.heading, 1.5);
        assert_abs_diff_eq!(obj.speed, 2.0 * 1.5f64.cos() + 1.5f64.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(obj.radius, 0.5 * 29.0f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(obj.wheelbase, 3.0, epsilon = 1e-12);
        assert_eq!(frames[0].get(1).unwrap().heading, 1.0);
    }

    #[test]
    fn globalize_identity_on_global_data() {
        let text = format!(
            "{HEADER}\ns0,0,4,0,1,2,0.3,3,0,1,0,4,2,global\ns0,1,4,0,1.3,2,0.35,3,0,1,0,4,2,global"
        );
        let ds = read_segment(text.as_bytes(), 1).unwrap();
        let frames = globalize(&ds, &TransformConfig::default()).unwrap();
        let s0 = frames[0].states[0];
        assert_eq!((s0.x, s0.y, s0.heading), (1.0, 2.0, 0.3));
        assert_abs_diff_eq!(s0.speed, 3.0 * 0.3f64.cos(), epsilon = 1e-15);
        // both frames share the heading rate 0.05 / 0.1 s
        let expected = derive_steering(0.5, 2.4, frames[1].states[0].speed, 0.1);
        assert_abs_diff_eq!(frames[1].states[0].steering, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(s0.steering, derive_steering(0.5, 2.4, s0.speed, 0.1), epsilon = 1e-9);
    }

    #[test]
    fn states_round_trip_through_file() {
        let ds = local_dataset();
        let frames = globalize(&ds, &TransformConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_states(&mut buf, &ds, &frames).unwrap();
        let back = read_states(buf.as_slice()).unwrap();
        assert_eq!(back, frames);
    }

    proptest! {
        #[test]
        fn zero_ego_heading_is_identity(h in -PI + 1e-9..=PI) {
            prop_assert_eq!(to_global_heading(0.0, h), h);
        }

        #[test]
        fn projection_preserves_norm(vx in -30.0..30.0f64, vy in -30.0..30.0f64, t in -PI..PI) {
            let along = to_global_speed(vx, vy, t);
            let across = -vx * t.sin() + vy * t.cos();
            prop_assert!((along * along + across * across - (vx * vx + vy * vy)).abs() < 1e-9);
        }

        #[test]
        fn steering_is_inside_open_interval(rate in -100.0..100.0f64, l in 0.5..10.0f64, v in -30.0..30.0f64) {
            let d = derive_steering(rate, l, v, 0.1);
            prop_assert!(d.abs() < PI / 2.0);
        }
    }
}

//! File formats: line-delimited detection and trajectory records, JSON
//! calibration, scenario, schedule and run configuration files. Every format
//! carries a version in its header.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use mvmot::geometry::CameraRecord;
use mvmot::metrics::{ObjectState, TrajectorySet};
use mvmot::simulator::Scenario;
use mvmot::{BBox2D, CameraModel, Detection, FrameDetections, Keypoint2D};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub const DETECTIONS_MAGIC: &str = "# mvmot-detections v1";
pub const TRAJECTORIES_MAGIC: &str = "# mvmot-trajectories v1";
pub const FORMAT_VERSION: u32 = 1;

const DETECTION_FIXED_FIELDS: usize = 7;
const TRAJECTORY_FIXED_FIELDS: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Record { line: u64, message: String },
    #[error("line {line}, field {field}: {message}")]
    Field { line: u64, field: usize, message: String },
    #[error("missing or unsupported header, expected `{expected}`")]
    Header { expected: &'static str },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Json(String),
}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e.to_string())
    }
}

/// Reads the header line and returns the remaining text. An empty input is
/// accepted as an empty file.
fn split_header<'a>(text: &'a str, magic: &'static str) -> Result<Option<(usize, &'a str)>, FormatError> {
    if text.trim().is_empty() {
        return Ok(None);
    }
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.trim_end_matches('\r');
    let Some(tail) = first.strip_prefix(magic) else {
        return Err(FormatError::Header { expected: magic });
    };
    let keypoints = tail
        .trim()
        .strip_prefix("keypoints=")
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or(FormatError::Header { expected: magic })?;
    Ok(Some((keypoints, rest)))
}

fn records(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(body.as_bytes())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T, FormatError> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| FormatError::Field { line, field: i + 1, message: format!("cannot parse `{raw}`") })
}

fn finite(rec: &csv::StringRecord, i: usize, line: u64) -> Result<f64, FormatError> {
    let v: f64 = field(rec, i, line)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FormatError::Field { line, field: i + 1, message: "value must be finite".into() })
    }
}

fn check_width(rec: &csv::StringRecord, fixed: usize, per_point: usize, keypoints: usize, line: u64) -> Result<(), FormatError> {
    let expected = fixed + per_point * keypoints;
    if rec.len() != expected {
        return Err(FormatError::Record { line, message: format!("expected {expected} fields, found {}", rec.len()) });
    }
    Ok(())
}

/// Detections of a whole sequence, keyed by frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionFile {
    pub keypoints: usize,
    pub frames: BTreeMap<u64, FrameDetections>,
}

impl DetectionFile {
    pub fn new(keypoints: usize) -> Self {
        Self { keypoints, frames: BTreeMap::new() }
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.frames.keys().next_back().copied()
    }
}

/// Parses a detection file: `frame,camera_id,left,top,width,height,confidence`
/// followed by `x,y,v` per keypoint, with width and height in pixels.
pub fn parse_detections(text: &str) -> Result<DetectionFile, FormatError> {
    let Some((keypoints, body)) = split_header(text, DETECTIONS_MAGIC)? else {
        return Ok(DetectionFile::default());
    };
    let mut out = DetectionFile::new(keypoints);
    let mut reader = records(body);
    for rec in reader.records() {
        let rec = rec.map_err(|e| FormatError::Record { line: 0, message: e.to_string() })?;
        // the header occupies line 1
        let line = rec.position().map_or(0, |p| p.line() + 1);
        check_width(&rec, DETECTION_FIXED_FIELDS, 3, keypoints, line)?;
        let frame: u64 = field(&rec, 0, line)?;
        let camera_id: u32 = field(&rec, 1, line)?;
        let left = finite(&rec, 2, line)?;
        let top = finite(&rec, 3, line)?;
        let width = finite(&rec, 4, line)?;
        let height = finite(&rec, 5, line)?;
        if !(width > 0.0 && height > 0.0) {
            return Err(FormatError::Field { line, field: 5, message: "width and height must be positive".into() });
        }
        let confidence = finite(&rec, 6, line)?;
        let mut kps = Vec::with_capacity(keypoints);
        for k in 0..keypoints {
            let base = DETECTION_FIXED_FIELDS + 3 * k;
            let x = finite(&rec, base, line)?;
            let y = finite(&rec, base + 1, line)?;
            let v: u8 = field(&rec, base + 2, line)?;
            kps.push(match v {
                0 => Keypoint2D::missing(),
                1 => Keypoint2D::visible(x, y),
                _ => {
                    return Err(FormatError::Field { line, field: base + 3, message: "visibility must be 0 or 1".into() })
                }
            });
        }
        let bbox = BBox2D::from_pixels(left, top, width, height);
        if !bbox.as_vector().iter().all(|v| v.is_finite()) {
            return Err(FormatError::Record { line, message: "box is not representable".into() });
        }
        out.frames
            .entry(frame)
            .or_default()
            .entry(camera_id)
            .or_default()
            .push(Detection { camera_id, bbox, confidence, keypoints: kps });
    }
    Ok(out)
}

pub fn write_detections(file: &DetectionFile) -> String {
    let mut s = format!("{DETECTIONS_MAGIC} keypoints={}\n", file.keypoints);
    for (frame, cams) in &file.frames {
        for dets in cams.values() {
            for d in dets {
                let _ = write!(
                    s,
                    "{frame},{},{},{},{},{},{}",
                    d.camera_id,
                    d.bbox.left(),
                    d.bbox.top(),
                    d.bbox.width(),
                    d.bbox.height(),
                    d.confidence
                );
                for k in &d.keypoints {
                    let _ = write!(s, ",{},{},{}", k.position.x, k.position.y, u8::from(k.visible));
                }
                s.push('\n');
            }
        }
    }
    s
}

/// Parses `frame,track_id,x,y,z,ax,ay,az` followed by `px,py,pz` per keypoint.
pub fn parse_trajectories(text: &str) -> Result<TrajectorySet, FormatError> {
    let Some((keypoints, body)) = split_header(text, TRAJECTORIES_MAGIC)? else {
        return Ok(TrajectorySet::new());
    };
    let mut out = TrajectorySet::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut reader = records(body);
    for rec in reader.records() {
        let rec = rec.map_err(|e| FormatError::Record { line: 0, message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() + 1);
        check_width(&rec, TRAJECTORY_FIXED_FIELDS, 3, keypoints, line)?;
        let frame: u64 = field(&rec, 0, line)?;
        let id: u64 = field(&rec, 1, line)?;
        if !seen.insert((frame, id)) {
            return Err(FormatError::Record { line, message: format!("track {id} appears twice in frame {frame}") });
        }
        let v = |i| finite(&rec, i, line);
        let position = Vector3::new(v(2)?, v(3)?, v(4)?);
        let half_lengths = Vector3::new(v(5)?, v(6)?, v(7)?);
        let keypoints = (0..keypoints)
            .map(|k| {
                let b = TRAJECTORY_FIXED_FIELDS + 3 * k;
                Ok(Vector3::new(v(b)?, v(b + 1)?, v(b + 2)?))
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        out.insert(frame, id, ObjectState { position, half_lengths, keypoints });
    }
    Ok(out)
}

pub fn write_trajectories(set: &TrajectorySet, keypoints: usize) -> String {
    let mut s = format!("{TRAJECTORIES_MAGIC} keypoints={keypoints}\n");
    for (frame, objects) in set.frames() {
        for (id, o) in objects {
            let (p, a) = (o.position, o.half_lengths);
            let _ = write!(s, "{frame},{id},{},{},{},{},{},{}", p.x, p.y, p.z, a.x, a.y, a.z);
            for k in &o.keypoints {
                let _ = write!(s, ",{},{},{}", k.x, k.y, k.z);
            }
            s.push('\n');
        }
    }
    s
}

/// Calibration file: every camera with its projection matrix and noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub version: u32,
    pub cameras: Vec<CameraRecord>,
}

impl CalibrationFile {
    pub fn new(cameras: Vec<CameraRecord>) -> Self {
        Self { version: FORMAT_VERSION, cameras }
    }

    pub fn cameras(&self) -> Result<Vec<CameraModel>, mvmot::Error> {
        let mut cams = self.cameras.iter().map(CameraModel::try_from).collect::<Result<Vec<_>, _>>()?;
        cams.sort_by_key(|c| c.id);
        if cams.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(mvmot::Error::InvalidConfig("duplicate camera id in calibration".into()));
        }
        Ok(cams)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(flatten)]
    pub scenario: Scenario,
}

/// One camera configuration held over a half-open frame range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub start: u64,
    pub end: u64,
    pub cameras: Vec<u32>,
}

/// Camera reconfiguration schedule as a sequence of configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub version: u32,
    pub configurations: Vec<Configuration>,
}

impl ScheduleFile {
    /// Per-camera on-intervals for `camera_ids`; cameras never listed are off.
    pub fn intervals(&self, camera_ids: &[u32]) -> Result<BTreeMap<u32, Vec<[u64; 2]>>, mvmot::Error> {
        let mut out: BTreeMap<u32, Vec<[u64; 2]>> = camera_ids.iter().map(|id| (*id, Vec::new())).collect();
        for c in &self.configurations {
            if c.start >= c.end {
                return Err(mvmot::Error::InvalidConfig(format!("empty configuration [{}, {})", c.start, c.end)));
            }
            for cam in &c.cameras {
                let Some(list) = out.get_mut(cam) else {
                    return Err(mvmot::Error::InvalidConfig(format!("schedule references unknown camera {cam}")));
                };
                list.push([c.start, c.end]);
            }
        }
        for list in out.values_mut() {
            list.sort_unstable();
        }
        Ok(out)
    }
}

pub fn read_to_string(path: &std::path::Path) -> Result<String, FormatError> {
    let mut s = String::new();
    std::fs::File::open(path)
        .map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))?
        .read_to_string(&mut s)?;
    Ok(s)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, FormatError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::Json(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn check_version(version: u32) -> Result<(), FormatError> {
    if version == FORMAT_VERSION {
        Ok(())
    } else {
        Err(FormatError::Version(version))
    }
}

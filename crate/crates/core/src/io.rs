//! Sequence ingestion and output writers.
//!
//! Inputs follow the TUM RGB-D layout: `depth.txt` / `rgb.txt` list `timestamp filename`,
//! `groundtruth.txt` lists `timestamp tx ty tz qx qy qz qw`, and `#` starts a comment.
//! Detections come from a JSON-lines file with one record per instance and run-length
//! encoded masks.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compositor::MaskedFrameOutput;
use crate::geometry::{euler_from_rotation, rotation_from_euler};
use crate::moc::{Motion, MotionLabel};
use crate::scalar::{lit, to_f64, Real};
use crate::scene::{BinaryMask, BoundingBox, CameraIntrinsics, CameraPose, ClassId, DepthImage, Detection, Frame, SceneError};
use crate::tracker::{TrackId, TrackSnapshot};

pub const TUM_DEPTH_SCALE: f64 = 5000.0;
pub const DEFAULT_DETECTIONS_FILE: &str = "detections.jsonl";
pub const INTRINSICS_FILE: &str = "intrinsics.json";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("missing required file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("invalid run-length mask: {0}")]
    InvalidRle(String),
    #[error("invalid detection record: {0}")]
    InvalidRecord(#[from] SceneError),
    #[error("no depth frame could be associated ({depth_frames} depth frames, all dropped)")]
    EmptyAssociation { depth_frames: usize },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Stamped camera pose as stored in TUM trajectory files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseStamp {
    pub timestamp: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl PoseStamp {
    pub fn to_camera_pose<T: Real>(&self) -> CameraPose<T> {
        let r = self.orientation.to_rotation_matrix().into_inner();
        let e = euler_from_rotation(&r);
        CameraPose::new(
            self.position.map(lit),
            crate::scene::EulerAngles::new(lit(e.roll), lit(e.pitch), lit(e.yaw)),
        )
    }

    pub fn from_camera_pose<T: Real>(timestamp: f64, pose: &CameraPose<T>) -> Self {
        let r = rotation_from_euler(&pose.euler).map(to_f64);
        Self {
            timestamp,
            position: pose.position.map(to_f64),
            orientation: UnitQuaternion::from_matrix(&r),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub root: PathBuf,
    pub depth: Vec<(f64, PathBuf)>,
    pub rgb: Vec<(f64, PathBuf)>,
    pub trajectory: Vec<PoseStamp>,
    pub detections_path: Option<PathBuf>,
    pub intrinsics: Option<CameraIntrinsics<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    /// Trajectory file providing camera poses, relative to the root.
    pub trajectory_file: String,
    /// Detection file, relative to the root unless absolute.
    pub detections_file: PathBuf,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            trajectory_file: "groundtruth.txt".into(),
            detections_file: PathBuf::from(DEFAULT_DETECTIONS_FILE),
        }
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses a `timestamp filename` list.
pub fn parse_tum_list(text: &str, path: &Path) -> Result<Vec<(f64, String)>, IoError> {
    let mut out = Vec::new();
    for (line, content) in data_lines(text) {
        let mut parts = content.split_whitespace();
        let ts = parts.next().unwrap_or_default();
        let ts: f64 = ts
            .parse()
            .map_err(|_| parse_error(path, line, format!("unparseable timestamp {ts:?}")))?;
        let name = parts
            .next()
            .ok_or_else(|| parse_error(path, line, "missing file name"))?;
        out.push((ts, name.to_string()));
    }
    Ok(out)
}

/// Parses `timestamp tx ty tz qx qy qz qw` lines.
pub fn parse_tum_trajectory(text: &str, path: &Path) -> Result<Vec<PoseStamp>, IoError> {
    let mut out = Vec::new();
    for (line, content) in data_lines(text) {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(parse_error(path, line, format!("expected 8 fields, found {}", fields.len())));
        }
        let mut v = [0.0f64; 8];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| parse_error(path, line, format!("unparseable number {f:?}")))?;
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if !(q.norm() > 1e-9) || v.iter().any(|x| !x.is_finite()) {
            return Err(parse_error(path, line, "degenerate quaternion"));
        }
        out.push(PoseStamp {
            timestamp: v[0],
            position: Vector3::new(v[1], v[2], v[3]),
            orientation: UnitQuaternion::from_quaternion(q),
        });
    }
    Ok(out)
}

pub fn format_tum_pose(p: &PoseStamp) -> String {
    let q = p.orientation.quaternion();
    format!(
        "{:.6} {} {} {} {} {} {} {}",
        p.timestamp, p.position.x, p.position.y, p.position.z, q.i, q.j, q.k, q.w
    )
}

pub fn read_tum_trajectory(path: &Path) -> Result<Vec<PoseStamp>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_tum_trajectory(&text, path)
}

pub fn write_tum_trajectory(path: &Path, poses: &[PoseStamp]) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# timestamp tx ty tz qx qy qz qw").map_err(io_err(path))?;
    for p in poses {
        writeln!(w, "{}", format_tum_pose(p)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn sort_by_time<V>(entries: &mut [(f64, V)], what: &str, warnings: &mut Vec<String>) {
    if entries.windows(2).any(|w| w[1].0 < w[0].0) {
        let msg = format!("{what}: timestamps not monotone, sorted");
        log::warn!("{msg}");
        warnings.push(msg);
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
}

pub fn load_sequence(root: &Path, options: &LoadOptions) -> Result<SequenceManifest, IoError> {
    let mut warnings = Vec::new();
    let read_required = |name: &str| -> Result<(PathBuf, String), IoError> {
        let path = root.join(name);
        if !path.is_file() {
            return Err(IoError::MissingFile(path));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok((path, text))
    };

    let (depth_path, depth_text) = read_required("depth.txt")?;
    let mut depth: Vec<(f64, PathBuf)> = parse_tum_list(&depth_text, &depth_path)?
        .into_iter()
        .map(|(t, f)| (t, root.join(f)))
        .collect();
    sort_by_time(&mut depth, "depth.txt", &mut warnings);

    let (traj_path, traj_text) = read_required(&options.trajectory_file)?;
    let mut trajectory = parse_tum_trajectory(&traj_text, &traj_path)?;
    if trajectory.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        let msg = format!("{}: timestamps not monotone, sorted", options.trajectory_file);
        log::warn!("{msg}");
        warnings.push(msg);
        trajectory.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }

    let rgb_path = root.join("rgb.txt");
    let mut rgb = Vec::new();
    if rgb_path.is_file() {
        let text = fs::read_to_string(&rgb_path).map_err(io_err(&rgb_path))?;
        rgb = parse_tum_list(&text, &rgb_path)?
            .into_iter()
            .map(|(t, f)| (t, root.join(f)))
            .collect();
        sort_by_time(&mut rgb, "rgb.txt", &mut warnings);
    }

    let det_path = if options.detections_file.is_absolute() {
        options.detections_file.clone()
    } else {
        root.join(&options.detections_file)
    };
    let detections_path = det_path.is_file().then_some(det_path);

    let intr_path = root.join(INTRINSICS_FILE);
    let intrinsics = if intr_path.is_file() {
        let text = fs::read_to_string(&intr_path).map_err(io_err(&intr_path))?;
        let intr: CameraIntrinsics<f64> = serde_json::from_str(&text).map_err(|source| IoError::Json {
            path: intr_path.clone(),
            source,
        })?;
        intr.validate()?;
        Some(intr)
    } else {
        None
    };

    Ok(SequenceManifest {
        root: root.to_path_buf(),
        depth,
        rgb,
        trajectory,
        detections_path,
        intrinsics,
        warnings,
    })
}

/// One detection as serialized in the detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub timestamp: f64,
    pub class_id: u32,
    pub score: f64,
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
    /// `[start, length]` runs over the row-major pixel index.
    pub rle: Vec<[usize; 2]>,
}

impl DetectionRecord {
    pub fn from_detection<T: Real>(timestamp: f64, det: &Detection<T>) -> Self {
        Self {
            timestamp,
            class_id: det.class_id.0,
            score: to_f64(det.score),
            x_min: det.bbox.x_min,
            y_min: det.bbox.y_min,
            x_max: det.bbox.x_max,
            y_max: det.bbox.y_max,
            rle: rle_encode(&det.mask),
        }
    }

    pub fn to_detection<T: Real>(&self, width: usize, height: usize) -> Result<Detection<T>, IoError> {
        let mask = rle_decode(&self.rle, width, height)?;
        let bbox = BoundingBox::new(self.x_min, self.y_min, self.x_max, self.y_max);
        Ok(Detection::new(ClassId(self.class_id), lit(self.score), bbox, mask)?)
    }
}

pub fn rle_encode(mask: &BinaryMask) -> Vec<[usize; 2]> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &b) in mask.bits().iter().enumerate() {
        match (b, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push([s, i - s]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push([s, mask.bits().len() - s]);
    }
    runs
}

/// Runs must be non-empty, ordered, non-overlapping and inside the image.
pub fn rle_decode(runs: &[[usize; 2]], width: usize, height: usize) -> Result<BinaryMask, IoError> {
    let total = width * height;
    let mut bits = vec![false; total];
    let mut prev_end = 0usize;
    for (i, &[start, len]) in runs.iter().enumerate() {
        if len == 0 {
            return Err(IoError::InvalidRle(format!("run {i} has zero length")));
        }
        if i > 0 && start < prev_end {
            return Err(IoError::InvalidRle(format!("run {i} overlaps or precedes run {}", i - 1)));
        }
        let end = start
            .checked_add(len)
            .filter(|&e| e <= total)
            .ok_or_else(|| IoError::InvalidRle(format!("run {i} exceeds the {width}x{height} image")))?;
        bits[start..end].iter_mut().for_each(|b| *b = true);
        prev_end = end;
    }
    Ok(BinaryMask::new(width, height, bits)?)
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let rec: DetectionRecord =
            serde_json::from_str(trimmed).map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_detections(path: &Path, records: &[DetectionRecord]) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| IoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// A depth frame with everything needed to load it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSkeleton {
    pub timestamp: f64,
    pub depth_path: PathBuf,
    pub rgb_path: Option<PathBuf>,
    pub pose: PoseStamp,
    pub detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamAssociation {
    pub frames: Vec<FrameSkeleton>,
    pub dropped: usize,
}

fn nearest_index(times: &[f64], t: f64) -> Option<usize> {
    if times.is_empty() {
        return None;
    }
    let i = times.partition_point(|&x| x < t);
    let mut best = None;
    for j in [i.checked_sub(1), (i < times.len()).then_some(i)].into_iter().flatten() {
        if best.is_none_or(|b: usize| (times[j] - t).abs() < (times[b] - t).abs()) {
            best = Some(j);
        }
    }
    best
}

/// Camera pose at `t`: interpolated when both bracketing entries lie within `max_dt`,
/// else the nearest entry within `max_dt`.
pub fn interpolate_pose(trajectory: &[PoseStamp], t: f64, max_dt: f64) -> Option<PoseStamp> {
    let i = trajectory.partition_point(|p| p.timestamp < t);
    let before = i.checked_sub(1).map(|j| &trajectory[j]);
    let after = trajectory.get(i);
    if let Some(a) = after.filter(|a| a.timestamp == t) {
        return Some(*a);
    }
    match (before, after) {
        (Some(a), Some(b)) if t - a.timestamp <= max_dt && b.timestamp - t <= max_dt => {
            let s = (t - a.timestamp) / (b.timestamp - a.timestamp);
            let orientation = a
                .orientation
                .try_slerp(&b.orientation, s, 1e-12)
                .unwrap_or(if s < 0.5 { a.orientation } else { b.orientation });
            Some(PoseStamp {
                timestamp: t,
                position: a.position.lerp(&b.position, s),
                orientation,
            })
        }
        _ => {
            let candidates = [before, after];
            let nearest = candidates
                .iter()
                .flatten()
                .min_by(|x, y| (x.timestamp - t).abs().total_cmp(&(y.timestamp - t).abs()))?;
            ((nearest.timestamp - t).abs() <= max_dt).then_some(PoseStamp {
                timestamp: t,
                ..**nearest
            })
        }
    }
}

/// Matches each depth frame to its pose, RGB image and detections.
///
/// Frames without a pose within `max_dt` (or without an RGB image, when the sequence
/// lists any) are dropped. A frame with no detection group within `max_dt` simply has no
/// detections.
pub fn associate_streams(
    manifest: &SequenceManifest,
    detections: &[DetectionRecord],
    max_dt: f64,
) -> Result<StreamAssociation, IoError> {
    let mut groups: Vec<(f64, Vec<DetectionRecord>)> = Vec::new();
    let mut sorted: Vec<&DetectionRecord> = detections.iter().collect();
    sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    for rec in sorted {
        match groups.last_mut() {
            Some((t, g)) if *t == rec.timestamp => g.push(rec.clone()),
            _ => groups.push((rec.timestamp, vec![rec.clone()])),
        }
    }
    let group_times: Vec<f64> = groups.iter().map(|g| g.0).collect();
    let rgb_times: Vec<f64> = manifest.rgb.iter().map(|r| r.0).collect();

    let mut frames = Vec::new();
    let mut dropped = 0;
    for (t, depth_path) in &manifest.depth {
        let Some(pose) = interpolate_pose(&manifest.trajectory, *t, max_dt) else {
            dropped += 1;
            continue;
        };
        let rgb_path = match nearest_index(&rgb_times, *t) {
            Some(i) if (rgb_times[i] - t).abs() <= max_dt => Some(manifest.rgb[i].1.clone()),
            _ if !rgb_times.is_empty() => {
                dropped += 1;
                continue;
            }
            _ => None,
        };
        let dets = match nearest_index(&group_times, *t) {
            Some(i) if (group_times[i] - t).abs() <= max_dt => groups[i].1.clone(),
            _ => Vec::new(),
        };
        frames.push(FrameSkeleton {
            timestamp: *t,
            depth_path: depth_path.clone(),
            rgb_path,
            pose,
            detections: dets,
        });
    }
    if dropped > 0 {
        log::info!("{dropped} depth frames dropped during stream association");
    }
    if frames.is_empty() {
        return Err(IoError::EmptyAssociation {
            depth_frames: manifest.depth.len(),
        });
    }
    Ok(StreamAssociation { frames, dropped })
}

/// Reads a 16-bit single-channel PNG; `raw / scale` meters, raw `0` stays invalid.
pub fn read_depth_png<T: Real>(path: &Path, scale: f64) -> Result<DepthImage<T>, IoError> {
    let img = image::ImageReader::open(path)
        .map_err(io_err(path))?
        .decode()
        .map_err(|e| IoError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let luma = match img {
        image::DynamicImage::ImageLuma16(l) => l,
        other => {
            return Err(IoError::Image {
                path: path.to_path_buf(),
                message: format!("expected 16-bit single-channel depth, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let inv: T = lit(1.0 / scale);
    let data = luma.into_raw().into_iter().map(|raw| lit::<T>(raw as f64) * inv).collect();
    Ok(DepthImage::new(w, h, data)?)
}

pub fn depth_to_raw<T: Real>(depth: &DepthImage<T>, scale: f64) -> Vec<u16> {
    depth
        .data()
        .iter()
        .map(|&d| (to_f64(d) * scale).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect()
}

pub fn write_depth_png<T: Real>(path: &Path, depth: &DepthImage<T>, scale: f64) -> Result<(), IoError> {
    let raw = depth_to_raw(depth, scale);
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(depth.width() as u32, depth.height() as u32, raw)
        .expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| IoError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads depth and decodes detections for one associated frame.
pub fn load_frame<T: Real>(skeleton: &FrameSkeleton, scale: f64) -> Result<Frame<T>, IoError> {
    let depth = read_depth_png::<T>(&skeleton.depth_path, scale)?;
    let detections = skeleton
        .detections
        .iter()
        .map(|r| r.to_detection(depth.width(), depth.height()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Frame::new(skeleton.timestamp, depth, skeleton.pose.to_camera_pose(), detections)?)
}

/// One line of the track log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackLogRecord {
    pub timestamp: f64,
    pub id: TrackId,
    pub class_id: u32,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub label: Motion,
}

impl TrackLogRecord {
    pub fn new<T: Real>(timestamp: f64, snap: &TrackSnapshot<T>, label: Motion) -> Self {
        let v = |x: &Vector3<T>| [to_f64(x.x), to_f64(x.y), to_f64(x.z)];
        Self {
            timestamp,
            id: snap.id,
            class_id: snap.class_id.0,
            position: v(&snap.position),
            velocity: v(&snap.velocity),
            label,
        }
    }
}

pub fn read_track_log(path: &Path) -> Result<Vec<TrackLogRecord>, IoError> {
    read_json_lines(path)
}

pub(crate) fn read_json_lines<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    data_lines(&text)
        .map(|(line, l)| serde_json::from_str(l).map_err(|e| parse_error(path, line, e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub mdi_dir: PathBuf,
    pub mo_mdi_dir: PathBuf,
    pub mdi_list: PathBuf,
    pub mo_mdi_list: PathBuf,
    pub track_log: PathBuf,
    pub trajectory: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            mdi_dir: dir.join("mdi"),
            mo_mdi_dir: dir.join("mo_mdi"),
            mdi_list: dir.join("mdi.txt"),
            mo_mdi_list: dir.join("mo_mdi.txt"),
            track_log: dir.join("tracks.jsonl"),
            trajectory: dir.join("trajectory.txt"),
        }
    }
}

/// Everything written for one processed frame.
#[derive(Debug, Clone)]
pub struct FrameOutput<T: Real> {
    pub timestamp: f64,
    pub pose: CameraPose<T>,
    pub masked: MaskedFrameOutput<T>,
    pub tracks: Vec<(TrackSnapshot<T>, Motion)>,
}

impl<T: Real> FrameOutput<T> {
    pub fn new(
        timestamp: f64,
        pose: CameraPose<T>,
        masked: MaskedFrameOutput<T>,
        snapshots: &[TrackSnapshot<T>],
        labels: &[MotionLabel<T>],
    ) -> Self {
        let tracks = snapshots
            .iter()
            .map(|s| {
                let label = labels
                    .iter()
                    .find(|l| l.track_id == s.id)
                    .map(|l| l.label)
                    .unwrap_or(Motion::Idle);
                (*s, label)
            })
            .collect();
        Self {
            timestamp,
            pose,
            masked,
            tracks,
        }
    }
}

/// Streams frame outputs into a TUM-style directory:
/// `mdi/`, `mo_mdi/` (16-bit PNG), `mdi.txt`, `mo_mdi.txt`, `tracks.jsonl`, `trajectory.txt`.
pub struct OutputWriter {
    paths: OutputPaths,
    scale: f64,
    mdi_list: BufWriter<File>,
    mo_mdi_list: BufWriter<File>,
    track_log: BufWriter<File>,
    trajectory: BufWriter<File>,
    frames: usize,
}

impl OutputWriter {
    pub fn create(dir: &Path, scale: f64) -> Result<Self, IoError> {
        let paths = OutputPaths::in_dir(dir);
        for d in [dir, paths.mdi_dir.as_path(), paths.mo_mdi_dir.as_path()] {
            fs::create_dir_all(d).map_err(io_err(d))?;
        }
        let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(io_err(p));
        let mut mdi_list = open(&paths.mdi_list)?;
        let mut mo_mdi_list = open(&paths.mo_mdi_list)?;
        let track_log = open(&paths.track_log)?;
        let mut trajectory = open(&paths.trajectory)?;
        writeln!(mdi_list, "# timestamp filename").map_err(io_err(&paths.mdi_list))?;
        writeln!(mo_mdi_list, "# timestamp filename").map_err(io_err(&paths.mo_mdi_list))?;
        writeln!(trajectory, "# timestamp tx ty tz qx qy qz qw").map_err(io_err(&paths.trajectory))?;
        Ok(Self {
            paths,
            scale,
            mdi_list,
            mo_mdi_list,
            track_log,
            trajectory,
            frames: 0,
        })
    }

    pub fn paths(&self) -> &OutputPaths {
        &self.paths
    }

    pub fn write_frame<T: Real>(&mut self, out: &FrameOutput<T>) -> Result<(), IoError> {
        let name = format!("{:.6}.png", out.timestamp);
        write_depth_png(&self.paths.mdi_dir.join(&name), &out.masked.mdi, self.scale)?;
        write_depth_png(&self.paths.mo_mdi_dir.join(&name), &out.masked.mo_mdi, self.scale)?;
        writeln!(self.mdi_list, "{:.6} mdi/{name}", out.timestamp).map_err(io_err(&self.paths.mdi_list))?;
        writeln!(self.mo_mdi_list, "{:.6} mo_mdi/{name}", out.timestamp).map_err(io_err(&self.paths.mo_mdi_list))?;
        for (snap, label) in &out.tracks {
            let rec = TrackLogRecord::new(out.timestamp, snap, *label);
            let line = serde_json::to_string(&rec).expect("track record serializes");
            writeln!(self.track_log, "{line}").map_err(io_err(&self.paths.track_log))?;
        }
        let pose = PoseStamp::from_camera_pose(out.timestamp, &out.pose);
        writeln!(self.trajectory, "{}", format_tum_pose(&pose)).map_err(io_err(&self.paths.trajectory))?;
        self.frames += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<OutputPaths, IoError> {
        self.mdi_list.flush().map_err(io_err(&self.paths.mdi_list))?;
        self.mo_mdi_list.flush().map_err(io_err(&self.paths.mo_mdi_list))?;
        self.track_log.flush().map_err(io_err(&self.paths.track_log))?;
        self.trajectory.flush().map_err(io_err(&self.paths.trajectory))?;
        Ok(self.paths)
    }
}

/// Writes a batch of frame outputs into `dir`.
pub fn write_outputs<T: Real>(outputs: &[FrameOutput<T>], dir: &Path, scale: f64) -> Result<OutputPaths, IoError> {
    let mut w = OutputWriter::create(dir, scale)?;
    for o in outputs {
        w.write_frame(o)?;
    }
    w.finish()
}

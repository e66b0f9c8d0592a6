//! Synthetic RGB-D sequences with analytic ground truth.
//!
//! A scene script places simple primitives (spheres, axis-aligned boxes, pulsing spheres)
//! in front of a background plane, moves them and the camera along parametric paths, and
//! ray casts a depth image per frame. Each visible object yields a detection whose mask is
//! the set of pixels where that object is the nearest surface. Everything is seeded, so a
//! given script and seed always produce the same bytes.

use std::f64::consts::TAU;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::rotation_from_euler;
use crate::io::{self, DetectionRecord, IoError, PoseStamp, TUM_DEPTH_SCALE};
use crate::scalar::{lit, Real};
use crate::scene::{BinaryMask, CameraIntrinsics, CameraPose, ClassId, ClassRegistry, DepthImage, Detection, EulerAngles, Frame, SceneError};

pub const TRUTH_FILE: &str = "truth.jsonl";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scene script: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scene script: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Sinusoidal offset `amplitude * sin(2 pi frequency t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillation {
    pub amplitude: [f64; 3],
    pub frequency: f64,
}

impl Oscillation {
    fn offset(&self, t: f64) -> Vector3<f64> {
        Vector3::from(self.amplitude) * (TAU * self.frequency * t).sin()
    }

    fn rate(&self, t: f64) -> Vector3<f64> {
        Vector3::from(self.amplitude) * (TAU * self.frequency * (TAU * self.frequency * t).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraScript {
    pub position: [f64; 3],
    /// Roll, pitch, yaw in radians.
    pub euler: [f64; 3],
    pub velocity: [f64; 3],
    pub euler_rate: [f64; 3],
    pub oscillation: Option<Oscillation>,
}

impl Default for CameraScript {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            euler: [0.0; 3],
            velocity: [0.0; 3],
            euler_rate: [0.0; 3],
            oscillation: None,
        }
    }
}

impl CameraScript {
    pub fn pose_at(&self, t: f64) -> CameraPose<f64> {
        let mut p = Vector3::from(self.position) + Vector3::from(self.velocity) * t;
        if let Some(o) = &self.oscillation {
            p += o.offset(t);
        }
        let e = Vector3::from(self.euler) + Vector3::from(self.euler_rate) * t;
        CameraPose::new(p, EulerAngles::new(e.x, e.y, e.z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned in the world frame.
    Box { half_extents: [f64; 3] },
    /// Radius `radius * (1 + amplitude * sin(2 pi frequency t))`.
    PulsingSphere { radius: f64, amplitude: f64, frequency: f64 },
}

impl Shape {
    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Shape::Sphere { radius } => radius > 0.0,
            Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
            Shape::PulsingSphere { radius, amplitude, frequency } => {
                radius > 0.0 && (0.0..1.0).contains(&amplitude) && frequency >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("degenerate shape {self:?}"))
        }
    }

    /// Nearest positive ray parameter of `origin + t * dir`, if any.
    fn intersect(&self, center: &Vector3<f64>, t_scene: f64, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Sphere { radius } => ray_sphere(center, radius, origin, dir),
            Shape::PulsingSphere { radius, amplitude, frequency } => {
                let r = radius * (1.0 + amplitude * (TAU * frequency * t_scene).sin());
                ray_sphere(center, r, origin, dir)
            }
            Shape::Box { half_extents } => {
                let h = Vector3::from(half_extents);
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let lo = center[k] - h[k];
                    let hi = center[k] + h[k];
                    if dir[k].abs() < 1e-15 {
                        if origin[k] < lo || origin[k] > hi {
                            return None;
                        }
                        continue;
                    }
                    let a = (lo - origin[k]) / dir[k];
                    let b = (hi - origin[k]) / dir[k];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t1 < t0 || t1 <= 0.0 {
                    None
                } else if t0 > 0.0 {
                    Some(t0)
                } else {
                    Some(t1)
                }
            }
        }
    }
}

fn ray_sphere(center: &Vector3<f64>, radius: f64, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let oc = origin - center;
    let a = dir.norm_squared();
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let near = (-b - sq) / a;
    let far = (-b + sq) / a;
    if near > 0.0 {
        Some(near)
    } else if far > 0.0 {
        Some(far)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionScript {
    pub origin: [f64; 3],
    pub velocity: [f64; 3],
    /// Time before which the linear motion has not started.
    pub onset: f64,
    pub oscillation: Option<Oscillation>,
}

impl Default for MotionScript {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0, 2.0],
            velocity: [0.0; 3],
            onset: 0.0,
            oscillation: None,
        }
    }
}

impl MotionScript {
    pub fn position_at(&self, t: f64) -> Vector3<f64> {
        let mut p = Vector3::from(self.origin) + Vector3::from(self.velocity) * (t - self.onset).max(0.0);
        if let Some(o) = &self.oscillation {
            p += o.offset(t);
        }
        p
    }

    pub fn velocity_at(&self, t: f64) -> Vector3<f64> {
        let mut v = if t >= self.onset {
            Vector3::from(self.velocity)
        } else {
            Vector3::zeros()
        };
        if let Some(o) = &self.oscillation {
            v += o.rate(t);
        }
        v
    }
}

fn default_score() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectScript {
    pub class_id: ClassId,
    pub shape: Shape,
    #[serde(default)]
    pub motion: MotionScript,
    #[serde(default = "default_score")]
    pub score: f64,
    /// Detections stop being emitted from this frame index on.
    #[serde(default)]
    pub detect_until_frame: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseScript {
    /// Additive Gaussian depth noise, m.
    pub depth_sigma: f64,
    /// Probability that a valid depth pixel reads 0.
    pub depth_dropout: f64,
    /// Probability that a visible object is not detected in a frame.
    pub detection_dropout: f64,
    /// Maximum mask shift, px, drawn uniformly per detection and axis.
    pub mask_jitter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneScript {
    pub seed: u64,
    pub fps: f64,
    pub frames: usize,
    pub start_time: f64,
    pub intrinsics: CameraIntrinsics<f64>,
    /// World plane `z = background_depth`; `None` leaves the background invalid.
    pub background_depth: Option<f64>,
    pub camera: CameraScript,
    pub noise: NoiseScript,
    pub objects: Vec<ObjectScript>,
}

impl Default for SceneScript {
    fn default() -> Self {
        Self {
            seed: 0,
            fps: 30.0,
            frames: 60,
            start_time: 0.0,
            intrinsics: CameraIntrinsics::tum_fr3(),
            background_depth: Some(4.0),
            camera: CameraScript::default(),
            noise: NoiseScript::default(),
            objects: Vec::new(),
        }
    }
}

/// Ground truth for one object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub object: usize,
    pub class_id: ClassId,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub speed: f64,
    /// `speed` above the class velocity threshold.
    pub moving: bool,
    pub visible_pixels: usize,
    /// Index into the frame's detections, if one was emitted.
    pub detection: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFrame {
    pub index: usize,
    pub timestamp: f64,
    pub objects: Vec<TruthObject>,
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub index: usize,
    pub timestamp: f64,
    pub pose: CameraPose<f64>,
    pub depth: DepthImage<f64>,
    pub detections: Vec<Detection<f64>>,
    pub truth: TruthFrame,
}

impl RenderedFrame {
    pub fn to_frame<T: Real>(&self) -> Frame<T> {
        let depth = DepthImage::new(
            self.depth.width(),
            self.depth.height(),
            self.depth.data().iter().map(|&d| lit(d)).collect(),
        )
        .expect("rendered depth is valid");
        let detections = self
            .detections
            .iter()
            .map(|d| Detection::new(d.class_id, lit(d.score), d.bbox, d.mask.clone()).expect("rendered detection is valid"))
            .collect();
        let pose = CameraPose::new(
            self.pose.position.map(lit),
            EulerAngles::new(lit(self.pose.euler.roll), lit(self.pose.euler.pitch), lit(self.pose.euler.yaw)),
        );
        Frame::new(self.timestamp, depth, pose, detections).expect("rendered frame is consistent")
    }
}

impl SceneScript {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let s: Self = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| SynthError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        self.intrinsics.validate()?;
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        let n = &self.noise;
        if !(n.depth_sigma >= 0.0 && (0.0..=1.0).contains(&n.depth_dropout) && (0.0..=1.0).contains(&n.detection_dropout)) {
            return bad("noise parameters out of range".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            o.shape.validate().map_err(|m| SynthError::Invalid(format!("object {i}: {m}")))?;
            if !(o.score > 0.0 && o.score <= 1.0) {
                return bad(format!("object {i}: score {} outside (0, 1]", o.score));
            }
        }
        Ok(())
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.fps
    }

    /// Scene time (seconds since the first frame) used by the motion paths.
    fn scene_time(&self, index: usize) -> f64 {
        index as f64 / self.fps
    }
}

fn velocity_threshold(registry: &ClassRegistry<f64>, class: ClassId) -> f64 {
    registry.get(class).map(|s| s.velocity_threshold).unwrap_or(0.1)
}

fn shift_mask(mask: &BinaryMask, dx: i64, dy: i64) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BinaryMask::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if (0..w as i64).contains(&nx) && (0..h as i64).contains(&ny) {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

/// Renders frame `index`; moving-or-idle truth uses the default class thresholds.
pub fn render_frame(script: &SceneScript, index: usize) -> RenderedFrame {
    render_frame_with(script, index, &ClassRegistry::with_defaults())
}

pub fn render_frame_with(script: &SceneScript, index: usize, registry: &ClassRegistry<f64>) -> RenderedFrame {
    let t = script.scene_time(index);
    let timestamp = script.timestamp(index);
    let pose = script.camera.pose_at(t);
    let rot = rotation_from_euler(&pose.euler);
    let origin = pose.position;
    let intr = &script.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let centers: Vec<Vector3<f64>> = script.objects.iter().map(|o| o.motion.position_at(t)).collect();

    // z-buffer of (depth, owner); owner usize::MAX is the background
    let mut zbuf = vec![(0.0f64, usize::MAX); w * h];
    zbuf.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, px) in row.iter_mut().enumerate() {
            let dc = Vector3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
            let dir = rot * dc;
            let mut best = f64::INFINITY;
            let mut owner = usize::MAX;
            if let Some(bz) = script.background_depth {
                if dir.z.abs() > 1e-12 {
                    let s = (bz - origin.z) / dir.z;
                    if s > 0.0 {
                        best = s;
                    }
                }
            }
            for (k, o) in script.objects.iter().enumerate() {
                if let Some(s) = o.shape.intersect(&centers[k], t, &origin, &dir) {
                    if s < best {
                        best = s;
                        owner = k;
                    }
                }
            }
            // dc has unit z, so the ray parameter is the camera-frame depth
            *px = if best.is_finite() { (best, owner) } else { (0.0, usize::MAX) };
        }
    });

    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    rng.set_stream(index as u64);
    let noise = script.noise;
    let normal = Normal::new(0.0, noise.depth_sigma.max(0.0)).expect("sigma is finite");
    let depth_data: Vec<f64> = zbuf
        .iter()
        .map(|&(d, _)| {
            if d <= 0.0 {
                return 0.0;
            }
            if noise.depth_dropout > 0.0 && rng.random::<f64>() < noise.depth_dropout {
                return 0.0;
            }
            let noisy = if noise.depth_sigma > 0.0 { d + normal.sample(&mut rng) } else { d };
            noisy.max(0.0)
        })
        .collect();
    let depth = DepthImage::new(w, h, depth_data).expect("rendered depth is finite");

    let mut detections = Vec::new();
    let mut objects = Vec::with_capacity(script.objects.len());
    for (k, o) in script.objects.iter().enumerate() {
        let bits: Vec<bool> = zbuf.iter().map(|&(_, owner)| owner == k).collect();
        let mask = BinaryMask::new(w, h, bits).expect("zbuffer matches dimensions");
        let visible = mask.count();
        let vel = o.motion.velocity_at(t);
        let speed = vel.norm();
        let allowed = o.detect_until_frame.is_none_or(|k| index < k);
        let dropped = noise.detection_dropout > 0.0 && rng.random::<f64>() < noise.detection_dropout;
        let mut detection = None;
        if visible > 0 && allowed && !dropped {
            let mask = if noise.mask_jitter > 0 {
                let j = noise.mask_jitter as i64;
                shift_mask(&mask, rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                mask
            };
            if let Ok(det) = Detection::from_mask(o.class_id, o.score, mask) {
                detection = Some(detections.len());
                detections.push(det);
            }
        }
        let pos = centers[k];
        objects.push(TruthObject {
            object: k,
            class_id: o.class_id,
            position: [pos.x, pos.y, pos.z],
            velocity: [vel.x, vel.y, vel.z],
            speed,
            moving: speed > velocity_threshold(registry, o.class_id),
            visible_pixels: visible,
            detection,
        });
    }

    RenderedFrame {
        index,
        timestamp,
        pose,
        depth,
        detections,
        truth: TruthFrame {
            index,
            timestamp,
            objects,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub frames: usize,
    pub detections: usize,
}

/// Writes a TUM-layout sequence: `depth/*.png`, `depth.txt`, `groundtruth.txt`,
/// `detections.jsonl`, `intrinsics.json` and the `truth.jsonl` sidecar.
pub fn generate_sequence(script: &SceneScript, dir: &Path) -> Result<SynthSummary, SynthError> {
    script.validate()?;
    let depth_dir = dir.join("depth");
    fs::create_dir_all(&depth_dir).map_err(|source| SynthError::Read {
        path: depth_dir.clone(),
        source,
    })?;
    let registry = ClassRegistry::with_defaults();
    let rendered: Vec<(f64, CameraPose<f64>, Vec<DetectionRecord>, TruthFrame)> = (0..script.frames)
        .into_par_iter()
        .map(|i| {
            let f = render_frame_with(script, i, &registry);
            io::write_depth_png(&depth_dir.join(format!("{:.6}.png", f.timestamp)), &f.depth, TUM_DEPTH_SCALE)?;
            let recs = f.detections.iter().map(|d| DetectionRecord::from_detection(f.timestamp, d)).collect();
            Ok((f.timestamp, f.pose, recs, f.truth))
        })
        .collect::<Result<_, IoError>>()?;

    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Read { path, source }
    };
    let depth_list = dir.join("depth.txt");
    let mut lines = String::from("# depth maps\n# timestamp filename\n");
    for (ts, ..) in &rendered {
        lines.push_str(&format!("{ts:.6} depth/{ts:.6}.png\n"));
    }
    fs::write(&depth_list, lines).map_err(write_err(&depth_list))?;

    let poses: Vec<PoseStamp> = rendered.iter().map(|(ts, pose, ..)| PoseStamp::from_camera_pose(*ts, pose)).collect();
    io::write_tum_trajectory(&dir.join("groundtruth.txt"), &poses)?;

    let records: Vec<DetectionRecord> = rendered.iter().flat_map(|r| r.2.iter().cloned()).collect();
    io::write_detections(&dir.join(io::DEFAULT_DETECTIONS_FILE), &records)?;

    let intr_path = dir.join(io::INTRINSICS_FILE);
    let intr = serde_json::to_string_pretty(&script.intrinsics).expect("intrinsics serialize");
    fs::write(&intr_path, intr).map_err(write_err(&intr_path))?;

    let truth_path = dir.join(TRUTH_FILE);
    let file = File::create(&truth_path).map_err(write_err(&truth_path))?;
    let mut wr = BufWriter::new(file);
    for (.., truth) in &rendered {
        let line = serde_json::to_string(truth).expect("truth serializes");
        writeln!(wr, "{line}").map_err(write_err(&truth_path))?;
    }
    wr.flush().map_err(write_err(&truth_path))?;

    Ok(SynthSummary {
        root: dir.to_path_buf(),
        frames: rendered.len(),
        detections: records.len(),
    })
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthFrame>, IoError> {
    io::read_json_lines(path)
}

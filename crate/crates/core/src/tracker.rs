//! Filter bank: one EKF per tracked object.
//!
//! Each [`Tracker::step`] predicts every live track to the frame time, associates the
//! frame's detections, updates or births filters, coasts the rest, and retires tracks
//! that went unobserved for `max_coast_frames` frames.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ekf::{self, EkfError, GammaVelocityExponent, InitialCovariance, NoiseConfig, ObservationNoise, TrackState};
use crate::geometry::{backproject_centroid, camera_to_world, DEFAULT_MIN_VALID_PIXELS};
use crate::moc::{self, MocConfig, MotionLabel};
use crate::scalar::{lit, to_f64, Real};
use crate::scene::{filter_detection_indices, BinaryMask, BoundingBox, CameraIntrinsics, ClassId, ClassRegistry, Frame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("frame timestamp {got} is not after the previous frame at {previous}")]
    OutOfOrder { previous: f64, got: f64 },
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track<T: Real> {
    pub id: TrackId,
    pub class_id: ClassId,
    pub state: TrackState<T>,
    pub frames_since_seen: usize,
    pub last_mask: BinaryMask,
    pub last_bbox: BoundingBox,
    pub status: TrackStatus,
    /// Frames in which the track received a detection.
    pub hits: usize,
    /// Frames since birth.
    pub age: usize,
}

impl<T: Real> Track<T> {
    pub fn is_live(&self) -> bool {
        self.status != TrackStatus::Dead
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMethod {
    /// Repeatedly take the closest admissible pair.
    #[default]
    Greedy,
    /// Minimum total distance assignment over admissible pairs.
    Optimal,
}

/// N-of-M confirmation: a track needs `hits` detections within its first `window` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confirmation {
    pub hits: usize,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig<T: Real> {
    pub max_coast_frames: usize,
    pub gate_distance: T,
    pub score_threshold: T,
    pub max_detections: usize,
    pub min_valid_pixels: usize,
    pub association: AssociationMethod,
    /// `None` confirms tracks on their first detection.
    pub confirmation: Option<Confirmation>,
    pub observation_noise: ObservationNoise<T>,
    pub gamma_velocity_exponent: GammaVelocityExponent,
    pub initial_covariance: InitialCovariance<T>,
    pub max_condition: f64,
    pub moc: MocConfig,
}

impl<T: Real> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            max_coast_frames: 10,
            gate_distance: lit(1.0),
            score_threshold: lit(0.1),
            max_detections: 5,
            min_valid_pixels: DEFAULT_MIN_VALID_PIXELS,
            association: AssociationMethod::Greedy,
            confirmation: None,
            observation_noise: ObservationNoise::default(),
            gamma_velocity_exponent: GammaVelocityExponent::One,
            initial_covariance: InitialCovariance::default(),
            max_condition: ekf::DEFAULT_MAX_CONDITION,
            moc: MocConfig::default(),
        }
    }
}

impl<T: Real> TrackerConfig<T> {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let bad = |m: &str| Err(TrackerError::InvalidConfig(m.to_string()));
        if self.max_coast_frames < 1 {
            return bad("max_coast_frames must be at least 1");
        }
        if !(self.gate_distance > T::zero()) {
            return bad("gate_distance must be positive");
        }
        if let Some(c) = self.confirmation {
            if c.hits == 0 || c.window < c.hits {
                return bad("confirmation needs 1 <= hits <= window");
            }
        }
        if !(self.moc.deformation_threshold >= 0.0 && self.moc.deformation_threshold <= 1.0) {
            return bad("deformation_threshold must lie in [0, 1]");
        }
        Ok(())
    }
}

/// A back-projected detection in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<T: Real> {
    pub class_id: ClassId,
    pub world: Vector3<T>,
}

/// Result of [`associate`]; indices refer to the input slices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_observations: Vec<usize>,
}

/// Pairs tracks with same-class observations closer than `gate`.
///
/// Greedy picks ascending distance, breaking ties by lower track id, then lower
/// observation index. Dead tracks are never matched.
pub fn associate<T: Real>(tracks: &[Track<T>], observations: &[Candidate<T>], gate: T, method: AssociationMethod) -> Matching {
    let mut admissible: Vec<(T, usize, usize)> = Vec::new();
    for (ti, track) in tracks.iter().enumerate().filter(|(_, t)| t.is_live()) {
        let pos = track.state.position();
        for (oi, obs) in observations.iter().enumerate() {
            if obs.class_id != track.class_id {
                continue;
            }
            let d = (obs.world - pos).norm();
            if d < gate {
                admissible.push((d, ti, oi));
            }
        }
    }
    let pairs = match method {
        AssociationMethod::Greedy => greedy(tracks, admissible, observations.len()),
        AssociationMethod::Optimal => optimal(tracks.len(), observations.len(), &admissible),
    };
    let mut track_used = vec![false; tracks.len()];
    let mut obs_used = vec![false; observations.len()];
    for &(t, o) in &pairs {
        track_used[t] = true;
        obs_used[o] = true;
    }
    Matching {
        pairs,
        unmatched_tracks: (0..tracks.len())
            .filter(|&i| !track_used[i] && tracks[i].is_live())
            .collect(),
        unmatched_observations: (0..observations.len()).filter(|&i| !obs_used[i]).collect(),
    }
}

fn greedy<T: Real>(tracks: &[Track<T>], mut admissible: Vec<(T, usize, usize)>, n_obs: usize) -> Vec<(usize, usize)> {
    admissible.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(tracks[a.1].id.cmp(&tracks[b.1].id))
            .then(a.2.cmp(&b.2))
    });
    let mut track_used = vec![false; tracks.len()];
    let mut obs_used = vec![false; n_obs];
    let mut pairs = Vec::new();
    for (_, t, o) in admissible {
        if !track_used[t] && !obs_used[o] {
            track_used[t] = true;
            obs_used[o] = true;
            pairs.push((t, o));
        }
    }
    pairs
}

fn optimal<T: Real>(n_tracks: usize, n_obs: usize, admissible: &[(T, usize, usize)]) -> Vec<(usize, usize)> {
    if admissible.is_empty() {
        return Vec::new();
    }
    const INADMISSIBLE: i64 = 1 << 50;
    // rows must not outnumber columns
    let transpose = n_tracks > n_obs;
    let (rows, cols) = if transpose { (n_obs, n_tracks) } else { (n_tracks, n_obs) };
    let mut weights = Matrix::new(rows, cols, INADMISSIBLE);
    for &(d, t, o) in admissible {
        let cost = (to_f64(d) * 1e9).round() as i64;
        let (r, c) = if transpose { (o, t) } else { (t, o) };
        weights[(r, c)] = cost;
    }
    let (_, assignment) = kuhn_munkres_min(&weights);
    let mut pairs: Vec<(usize, usize)> = assignment
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| weights[(r, c)] < INADMISSIBLE)
        .map(|(r, c)| if transpose { (c, r) } else { (r, c) })
        .collect();
    pairs.sort_unstable();
    pairs
}

/// What happened to one detection that survived score filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionOutcome {
    Matched(TrackId),
    Born(TrackId),
    /// Too few valid depth pixels under the mask to place it in 3D.
    Unobservable,
    UnknownClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionAssignment {
    /// Index into the frame's detection list.
    pub detection_index: usize,
    pub outcome: DetectionOutcome,
}

impl DetectionAssignment {
    pub fn track_id(&self) -> Option<TrackId> {
        match self.outcome {
            DetectionOutcome::Matched(id) | DetectionOutcome::Born(id) => Some(id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTimings {
    pub tracking: Duration,
    pub moc: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T: Real> {
    pub timestamp: f64,
    /// Labels of every track alive after the step, in track-id order.
    pub labels: Vec<MotionLabel<T>>,
    pub assignments: Vec<DetectionAssignment>,
    pub births: Vec<TrackId>,
    pub deaths: Vec<TrackId>,
    /// Updates rejected by the filter; the track coasted instead.
    pub skipped_updates: Vec<(TrackId, EkfError)>,
    pub timings: StepTimings,
}

impl<T: Real> StepOutput<T> {
    pub fn label_of(&self, id: TrackId) -> Option<&MotionLabel<T>> {
        self.labels.iter().find(|l| l.track_id == id)
    }
}

/// Snapshot of a live track for downstream consumers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSnapshot<T: Real> {
    pub id: TrackId,
    pub class_id: ClassId,
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
}

pub fn world_positions<T: Real>(tracks: &[Track<T>]) -> Vec<TrackSnapshot<T>> {
    tracks
        .iter()
        .filter(|t| t.is_live())
        .map(|t| TrackSnapshot {
            id: t.id,
            class_id: t.class_id,
            position: t.state.position(),
            velocity: t.state.velocity(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Tracker<T: Real> {
    config: TrackerConfig<T>,
    registry: Arc<ClassRegistry<T>>,
    intrinsics: CameraIntrinsics<T>,
    tracks: Vec<Track<T>>,
    next_id: u64,
    last_timestamp: Option<f64>,
}

impl<T: Real> Tracker<T> {
    pub fn new(
        config: TrackerConfig<T>,
        registry: Arc<ClassRegistry<T>>,
        intrinsics: CameraIntrinsics<T>,
    ) -> Result<Self, TrackerError> {
        config.validate()?;
        intrinsics
            .validate()
            .map_err(|e| TrackerError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            config,
            registry,
            intrinsics,
            tracks: Vec::new(),
            next_id: 0,
            last_timestamp: None,
        })
    }

    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Track<T>> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.config
    }

    pub fn registry(&self) -> &ClassRegistry<T> {
        &self.registry
    }

    pub fn snapshot(&self) -> Vec<TrackSnapshot<T>> {
        world_positions(&self.tracks)
    }

    fn noise_for(&self, class_id: ClassId) -> NoiseConfig<T> {
        let accel_sigma = self
            .registry
            .get(class_id)
            .map(|s| s.accel_sigma)
            .unwrap_or_else(|| lit(1.0));
        NoiseConfig {
            accel_sigma,
            observation: self.config.observation_noise,
            gamma_velocity_exponent: self.config.gamma_velocity_exponent,
            max_condition: self.config.max_condition,
        }
    }

    pub fn step(&mut self, frame: &Frame<T>) -> Result<StepOutput<T>, TrackerError> {
        let started = Instant::now();
        let mut moc_time = Duration::ZERO;
        let dt = match self.last_timestamp {
            Some(prev) if frame.timestamp <= prev => {
                return Err(TrackerError::OutOfOrder {
                    previous: prev,
                    got: frame.timestamp,
                })
            }
            Some(prev) => frame.timestamp - prev,
            None => 0.0,
        };
        self.last_timestamp = Some(frame.timestamp);
        let dt_t: T = lit(dt);

        let mut deaths = Vec::new();
        let mut skipped_updates = Vec::new();

        for i in 0..self.tracks.len() {
            let noise = self.noise_for(self.tracks[i].class_id);
            let track = &mut self.tracks[i];
            match ekf::predict(&track.state, dt_t, &noise) {
                Ok(s) => {
                    track.state = s;
                    track.age += 1;
                }
                Err(_) => track.status = TrackStatus::Dead,
            }
        }

        // back-project the surviving detections
        let accepted = filter_detection_indices(&frame.detections, self.config.score_threshold, self.config.max_detections);
        let mut assignments = Vec::with_capacity(accepted.len());
        let mut candidates = Vec::new();
        let mut candidate_source = Vec::new();
        for &di in &accepted {
            let det = &frame.detections[di];
            if !self.registry.contains(det.class_id) {
                assignments.push(DetectionAssignment {
                    detection_index: di,
                    outcome: DetectionOutcome::UnknownClass,
                });
                continue;
            }
            match backproject_centroid(det, &frame.depth, &self.intrinsics, self.config.min_valid_pixels) {
                Ok(z) => {
                    candidates.push(Candidate {
                        class_id: det.class_id,
                        world: camera_to_world(z.vector(), &frame.pose),
                    });
                    candidate_source.push((di, z));
                }
                Err(_) => assignments.push(DetectionAssignment {
                    detection_index: di,
                    outcome: DetectionOutcome::Unobservable,
                }),
            }
        }

        let matching = associate(&self.tracks, &candidates, self.config.gate_distance, self.config.association);
        let mut labels = Vec::new();
        let mut observed = vec![false; self.tracks.len()];

        for &(ti, ci) in &matching.pairs {
            let (di, z) = candidate_source[ci];
            let det = &frame.detections[di];
            let noise = self.noise_for(self.tracks[ti].class_id);
            let track = &mut self.tracks[ti];
            observed[ti] = true;
            match ekf::update(&track.state, &z, &frame.pose, &noise) {
                Ok(s) => {
                    track.state = s;
                    track.state.last_update = frame.timestamp;
                    track.frames_since_seen = 0;
                    track.hits += 1;
                }
                Err(EkfError::Divergent) => {
                    track.status = TrackStatus::Dead;
                    continue;
                }
                Err(e) => {
                    track.frames_since_seen += 1;
                    skipped_updates.push((track.id, e));
                }
            }
            let t0 = Instant::now();
            if let Ok(label) = moc::classify(track, &det.mask, &self.registry, &self.config.moc) {
                labels.push(label);
            }
            moc_time += t0.elapsed();
            track.last_mask = det.mask.clone();
            track.last_bbox = det.bbox;
            assignments.push(DetectionAssignment {
                detection_index: di,
                outcome: DetectionOutcome::Matched(track.id),
            });
        }

        for (ti, seen) in observed.iter().enumerate() {
            let track = &mut self.tracks[ti];
            if !seen && track.is_live() {
                track.frames_since_seen += 1;
            }
        }

        let mut births = Vec::new();
        for &ci in &matching.unmatched_observations {
            let (di, z) = candidate_source[ci];
            let det = &frame.detections[di];
            let noise = self.noise_for(det.class_id);
            let state = TrackState::from_observation(&z, &frame.pose, &noise, &self.config.initial_covariance, frame.timestamp);
            let id = TrackId(self.next_id);
            self.next_id += 1;
            let status = match self.config.confirmation {
                Some(c) if c.hits > 1 => TrackStatus::Tentative,
                _ => TrackStatus::Confirmed,
            };
            self.tracks.push(Track {
                id,
                class_id: det.class_id,
                state,
                frames_since_seen: 0,
                last_mask: det.mask.clone(),
                last_bbox: det.bbox,
                status,
                hits: 1,
                age: 0,
            });
            births.push(id);
            assignments.push(DetectionAssignment {
                detection_index: di,
                outcome: DetectionOutcome::Born(id),
            });
            observed.push(true);
        }

        // lifecycle
        for track in self.tracks.iter_mut() {
            if track.status == TrackStatus::Dead {
                continue;
            }
            if track.frames_since_seen >= self.config.max_coast_frames {
                track.status = TrackStatus::Dead;
            } else if let Some(c) = self.config.confirmation {
                if track.status == TrackStatus::Tentative {
                    if track.hits >= c.hits {
                        track.status = TrackStatus::Confirmed;
                    } else if track.age + 1 >= c.window {
                        track.status = TrackStatus::Dead;
                    }
                }
            }
        }
        for track in self.tracks.iter().filter(|t| t.status == TrackStatus::Dead) {
            deaths.push(track.id);
        }
        let mut kept_observed = Vec::with_capacity(self.tracks.len());
        for (track, seen) in self.tracks.iter().zip(observed) {
            if track.is_live() {
                kept_observed.push(seen);
            }
        }
        self.tracks.retain(|t| t.is_live());

        // labels for births and coasting tracks
        let t0 = Instant::now();
        for (track, seen) in self.tracks.iter().zip(kept_observed) {
            if labels.iter().any(|l| l.track_id == track.id) {
                continue;
            }
            debug_assert!(seen || track.frames_since_seen > 0);
            if let Ok(label) = moc::classify(track, &track.last_mask, &self.registry, &self.config.moc) {
                labels.push(label);
            }
        }
        labels.retain(|l| self.tracks.iter().any(|t| t.id == l.track_id));
        labels.sort_by_key(|l| l.track_id);
        moc_time += t0.elapsed();

        assignments.sort_by_key(|a| a.detection_index);
        let total = started.elapsed();
        Ok(StepOutput {
            timestamp: frame.timestamp,
            labels,
            assignments,
            births,
            deaths,
            skipped_updates,
            timings: StepTimings {
                tracking: total.saturating_sub(moc_time),
                moc: moc_time,
            },
        })
    }
}

//! Trajectory and tracking metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::io::{self, IoError, PoseStamp, TrackLogRecord};
use crate::moc::Motion;
use crate::synth::TruthFrame;
use crate::tracker::TrackId;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory timestamps must be strictly increasing (index {index})")]
    NotIncreasing { index: usize },
    #[error("alignment needs at least 3 associated pairs, found {found}")]
    TooFewPairs { found: usize },
    #[error("no pose pairs within max_dt")]
    NoPairs,
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<PoseStamp>,
}

impl Trajectory {
    pub fn new(poses: Vec<PoseStamp>) -> Result<Self, EvalError> {
        if let Some(i) = poses.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(EvalError::NotIncreasing { index: i + 1 });
        }
        Ok(Self { poses })
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        Self::new(io::read_tum_trajectory(path)?)
    }

    pub fn poses(&self) -> &[PoseStamp] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let rot = nalgebra::UnitQuaternion::from_matrix(&t.rotation);
        let poses = self
            .poses
            .iter()
            .map(|p| PoseStamp {
                timestamp: p.timestamp,
                position: t.apply(&p.position),
                orientation: rot * p.orientation,
            })
            .collect();
        Self { poses }
    }
}

/// Greedy timestamp matching: candidate pairs within `max_dt`, closest first, each pose
/// used at most once. Returned sorted by the first index.
pub fn associate_timestamps(a: &[f64], b: &[f64], max_dt: f64) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        let lo = b.partition_point(|&tb| tb < ta - max_dt);
        for (j, &tb) in b.iter().enumerate().skip(lo) {
            if tb > ta + max_dt {
                break;
            }
            cands.push(((ta - tb).abs(), i, j));
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for (_, i, j) in cands {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Points (nearly) collinear: the rotation about their line is unconstrained.
    pub degenerate: bool,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            degenerate: false,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Least-squares rigid transform mapping `src` onto `dst` from the SVD of the
/// cross-covariance of the centered point sets.
pub fn fit_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<RigidTransform, EvalError> {
    let n = src.len().min(dst.len());
    if n < 3 {
        return Err(EvalError::TooFewPairs { found: n });
    }
    let mean = |pts: &[Vector3<f64>]| pts[..n].iter().sum::<Vector3<f64>>() / n as f64;
    let (ms, md) = (mean(src), mean(dst));
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst).take(n) {
        cov += (s - ms) * (d - md).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let degenerate = !(sv[1] > 1e-10 * sv[0].max(f64::MIN_POSITIVE));
    // reflection guard
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if d < 0.0 { -1.0 } else { 1.0 }));
    let rotation = v_t.transpose() * fix * u.transpose();
    if degenerate {
        log::warn!("trajectory alignment is degenerate (collinear positions)");
    }
    Ok(RigidTransform {
        rotation,
        translation: md - rotation * ms,
        degenerate,
    })
}

fn paired_positions(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let ta: Vec<f64> = est.poses.iter().map(|p| p.timestamp).collect();
    let tb: Vec<f64> = reference.poses.iter().map(|p| p.timestamp).collect();
    associate_timestamps(&ta, &tb, max_dt)
        .into_iter()
        .map(|(i, j)| (est.poses[i].position, reference.poses[j].position))
        .unzip()
}

pub fn align_trajectories(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<RigidTransform, EvalError> {
    let (a, b) = paired_positions(est, reference, max_dt);
    fit_rigid(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteResult {
    pub rmse: f64,
    pub pairs: usize,
    pub transform: RigidTransform,
}

/// Translational RMSE over timestamp-associated pairs, after optional rigid alignment
/// of `est` onto `reference`.
pub fn ate(est: &Trajectory, reference: &Trajectory, max_dt: f64, aligned: bool) -> Result<AteResult, EvalError> {
    let (a, b) = paired_positions(est, reference, max_dt);
    if a.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let transform = if aligned { fit_rigid(&a, &b)? } else { RigidTransform::identity() };
    let sq: f64 = a.iter().zip(&b).map(|(p, q)| (transform.apply(p) - q).norm_squared()).sum();
    Ok(AteResult {
        rmse: (sq / a.len() as f64).sqrt(),
        pairs: a.len(),
        transform,
    })
}

pub fn ate_rmse(est: &Trajectory, reference: &Trajectory, max_dt: f64, aligned: bool) -> Result<f64, EvalError> {
    ate(est, reference, max_dt, aligned).map(|r| r.rmse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub true_moving: usize,
    pub false_moving: usize,
    pub true_idle: usize,
    pub false_idle: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: Motion, truth_moving: bool) {
        match (predicted.is_moving(), truth_moving) {
            (true, true) => self.true_moving += 1,
            (true, false) => self.false_moving += 1,
            (false, false) => self.true_idle += 1,
            (false, true) => self.false_idle += 1,
        }
    }

    /// Precision for the moving class; 1.0 when nothing was labeled moving.
    pub fn precision(&self) -> f64 {
        ratio(self.true_moving, self.true_moving + self.false_moving)
    }

    /// Recall for the moving class; 1.0 when nothing was truly moving.
    pub fn recall(&self) -> f64 {
        ratio(self.true_moving, self.true_moving + self.false_idle)
    }

    pub fn idle_recall(&self) -> f64 {
        ratio(self.true_idle, self.true_idle + self.false_moving)
    }

    pub fn total(&self) -> usize {
        self.true_moving + self.false_moving + self.true_idle + self.false_idle
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackError {
    pub track: TrackId,
    pub object: usize,
    pub frames: usize,
    pub position_rmse: f64,
    pub velocity_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackMetrics {
    pub tracks: usize,
    pub per_track: Vec<TrackError>,
    /// Tracks whose best ground-truth object was not unique.
    pub ambiguous: Vec<TrackId>,
    pub unmatched: Vec<TrackId>,
    pub position_rmse: Option<f64>,
    pub velocity_rmse: Option<f64>,
    pub confusion: Confusion,
    pub warnings: Vec<String>,
}

impl TrackMetrics {
    pub fn is_empty(&self) -> bool {
        self.per_track.is_empty()
    }
}

/// Tracks are matched to the ground-truth object they were within `match_radius` of in the
/// most frames, ties broken by mean distance. Two candidates tied on both (mean distances
/// within 1 mm) make the track ambiguous: it is reported and left out of the errors.
pub fn track_metrics(log: &[TrackLogRecord], truth: &[TruthFrame], max_dt: f64, match_radius: f64) -> TrackMetrics {
    let mut out = TrackMetrics::default();
    let mut by_frame: BTreeMap<u64, Vec<&TrackLogRecord>> = BTreeMap::new();
    for r in log {
        by_frame.entry(r.timestamp.to_bits()).or_default().push(r);
    }
    let log_times: Vec<f64> = {
        let mut t: Vec<f64> = by_frame.keys().map(|k| f64::from_bits(*k)).collect();
        t.sort_by(f64::total_cmp);
        t
    };
    let truth_times: Vec<f64> = truth.iter().map(|f| f.timestamp).collect();
    let pairs = associate_timestamps(&log_times, &truth_times, max_dt);

    // (track, object) -> (overlap frames, summed distance)
    let mut overlap: BTreeMap<(TrackId, usize), (usize, f64)> = BTreeMap::new();
    let mut ids: Vec<TrackId> = log.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    ids.dedup();
    out.tracks = ids.len();
    let frames: Vec<(&Vec<&TrackLogRecord>, &TruthFrame)> = pairs
        .iter()
        .map(|&(i, j)| (&by_frame[&log_times[i].to_bits()], &truth[j]))
        .collect();
    for (recs, tf) in &frames {
        for r in recs.iter() {
            for o in &tf.objects {
                let d = (Vector3::from(r.position) - Vector3::from(o.position)).norm();
                if d < match_radius {
                    let e = overlap.entry((r.id, o.object)).or_default();
                    e.0 += 1;
                    e.1 += d;
                }
            }
        }
    }

    let mut assignment: BTreeMap<TrackId, usize> = BTreeMap::new();
    for id in &ids {
        let mut cands: Vec<(usize, f64, usize)> = overlap
            .range((*id, 0)..=(*id, usize::MAX))
            .map(|(&(_, obj), &(n, s))| (n, s / n as f64, obj))
            .collect();
        cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        match cands.as_slice() {
            [] => out.unmatched.push(*id),
            [best, second, ..] if best.0 == second.0 && (second.1 - best.1).abs() < 1e-3 => out.ambiguous.push(*id),
            [best, ..] => {
                assignment.insert(*id, best.2);
            }
        }
    }
    if assignment.is_empty() {
        let msg = "no track overlaps a ground-truth object".to_string();
        log::warn!("{msg}");
        out.warnings.push(msg);
        return out;
    }
    if !out.ambiguous.is_empty() {
        out.warnings.push(format!("{} ambiguous track matches", out.ambiguous.len()));
    }

    let mut acc: BTreeMap<TrackId, (usize, f64, f64)> = BTreeMap::new();
    for (recs, tf) in &frames {
        for r in recs.iter() {
            let Some(&obj) = assignment.get(&r.id) else { continue };
            let Some(o) = tf.objects.iter().find(|o| o.object == obj) else { continue };
            let dp = (Vector3::from(r.position) - Vector3::from(o.position)).norm_squared();
            let dv = (Vector3::from(r.velocity) - Vector3::from(o.velocity)).norm_squared();
            let a = acc.entry(r.id).or_default();
            a.0 += 1;
            a.1 += dp;
            a.2 += dv;
            out.confusion.record(r.label, o.moving);
        }
    }
    let (mut n, mut sp, mut sv) = (0usize, 0.0, 0.0);
    for (id, (k, p, v)) in acc {
        out.per_track.push(TrackError {
            track: id,
            object: assignment[&id],
            frames: k,
            position_rmse: (p / k as f64).sqrt(),
            velocity_rmse: (v / k as f64).sqrt(),
        });
        n += k;
        sp += p;
        sv += v;
    }
    if n > 0 {
        out.position_rmse = Some((sp / n as f64).sqrt());
        out.velocity_rmse = Some((sv / n as f64).sqrt());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencyStats {
    /// `None` for an empty sample; p99 is the nearest-rank percentile.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        Some(Self {
            count: n,
            mean: s.iter().sum::<f64>() / n as f64,
            median,
            p99: s[rank - 1],
            max: s[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub ate: Option<AteResult>,
    pub tracks: Option<TrackMetrics>,
    /// Per-frame latency in milliseconds, keyed by stage name.
    pub latency: Vec<(String, LatencyStats)>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    /// `(metric, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = Vec::new();
        if let Some(a) = &self.ate {
            rows.push(("ate_rmse_m".into(), a.rmse));
            rows.push(("ate_pairs".into(), a.pairs as f64));
        }
        if let Some(t) = &self.tracks {
            rows.push(("tracks".into(), t.tracks as f64));
            rows.push(("tracks_matched".into(), t.per_track.len() as f64));
            rows.push(("tracks_ambiguous".into(), t.ambiguous.len() as f64));
            rows.push(("tracks_unmatched".into(), t.unmatched.len() as f64));
            if let Some(p) = t.position_rmse {
                rows.push(("track_position_rmse_m".into(), p));
            }
            if let Some(v) = t.velocity_rmse {
                rows.push(("track_velocity_rmse_mps".into(), v));
            }
            let c = &t.confusion;
            rows.push(("moc_true_moving".into(), c.true_moving as f64));
            rows.push(("moc_false_moving".into(), c.false_moving as f64));
            rows.push(("moc_true_idle".into(), c.true_idle as f64));
            rows.push(("moc_false_idle".into(), c.false_idle as f64));
            rows.push(("moc_precision".into(), c.precision()));
            rows.push(("moc_recall".into(), c.recall()));
            for e in &t.per_track {
                rows.push((format!("track_{}_position_rmse_m", e.track.0), e.position_rmse));
                rows.push((format!("track_{}_velocity_rmse_mps", e.track.0), e.velocity_rmse));
            }
        }
        for (stage, l) in &self.latency {
            rows.push((format!("latency_{stage}_mean_ms"), l.mean));
            rows.push((format!("latency_{stage}_median_ms"), l.median));
            rows.push((format!("latency_{stage}_p99_ms"), l.p99));
            rows.push((format!("latency_{stage}_max_ms"), l.max));
            rows.push((format!("latency_{stage}_frames"), l.count as f64));
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.rows() {
            writeln!(s, "{k},{v}").expect("writing to a string");
        }
        s
    }
}

pub fn emit_csv(report: &MetricsReport, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, report.to_csv()).map_err(|source| {
        EvalError::Io(IoError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

/// Reads the latency rows back from a metrics CSV such as the one `run` writes.
/// Other rows are ignored; stages keep their first-seen order.
pub fn read_latency_csv(path: &Path) -> Result<Vec<(String, LatencyStats)>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        EvalError::Io(IoError::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    let parse_err = |line: usize, message: String| {
        EvalError::Io(IoError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })
    };
    let mut stages: Vec<(String, [Option<f64>; 5])> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let Some((key, value)) = line.split_once(',') else {
            return Err(parse_err(i + 1, "expected metric,value".into()));
        };
        let Some(rest) = key.strip_prefix("latency_") else { continue };
        let fields = [("_mean_ms", 0), ("_median_ms", 1), ("_p99_ms", 2), ("_max_ms", 3), ("_frames", 4)];
        let Some((stage, slot)) = fields.iter().find_map(|(suffix, k)| rest.strip_suffix(suffix).map(|s| (s, *k))) else {
            continue;
        };
        let v: f64 = value.trim().parse().map_err(|e| parse_err(i + 1, format!("{value}: {e}")))?;
        let idx = match stages.iter().position(|(s, _)| s == stage) {
            Some(idx) => idx,
            None => {
                stages.push((stage.to_string(), [None; 5]));
                stages.len() - 1
            }
        };
        stages[idx].1[slot] = Some(v);
    }
    stages
        .into_iter()
        .map(|(stage, f)| match f {
            [Some(mean), Some(median), Some(p99), Some(max), Some(count)] => Ok((
                stage,
                LatencyStats {
                    count: count as usize,
                    mean,
                    median,
                    p99,
                    max,
                },
            )),
            _ => Err(parse_err(0, format!("incomplete latency rows for stage {stage}"))),
        })
        .collect()
}

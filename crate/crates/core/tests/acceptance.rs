//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use dynmask::config::PipelineConfig;
use dynmask::ekf::{self, NoiseConfig, ObservationNoise, TrackState};
use dynmask::eval::{ate_rmse, RigidTransform, Trajectory};
use dynmask::geometry::{jacobian_h, observe_h, Observation};
use dynmask::io::{self, PoseStamp};
use dynmask::moc::{mask_iou, Motion};
use dynmask::pipeline::{self, process_frame, REFERENCE_FULL_PIPELINE_MS};
use dynmask::scene::{BinaryMask, CameraIntrinsics, CameraPose, ClassId, ClassRegistry, EulerAngles};
use dynmask::synth::{self, CameraScript, MotionScript, ObjectScript, SceneScript, Shape};
use dynmask::tracker::{Tracker, TrackerConfig};
use nalgebra::{Matrix3, Matrix3x6, Matrix6, Rotation3, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Outcome detail on success, reason on failure.
type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> CameraPose<f64> {
    let pi = std::f64::consts::PI;
    CameraPose::new(
        Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
        EulerAngles::new(rng.random_range(-pi..pi), rng.random_range(-1.5..1.5), rng.random_range(-pi..pi)),
    )
}

fn jacobian_finite_differences() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let step = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let pose = random_pose(&mut rng);
        let x = Vector6::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let h = |s: &Vector6<f64>| observe_h(&s.fixed_rows::<3>(0).into_owned(), &pose);
        let mut fd = Matrix3x6::zeros();
        for k in 0..6 {
            let mut hi = x;
            let mut lo = x;
            hi[k] += step;
            lo[k] -= step;
            fd.set_column(k, &((h(&hi) - h(&lo)) / (2.0 * step)));
        }
        let j = jacobian_h(&pose);
        worst = worst.max((j - fd).norm() / j.norm());
    }
    let elapsed = started.elapsed().as_secs_f64();
    ensure(worst < 1e-5, || format!("max relative error {worst:.3e} >= 1e-5"))?;
    ensure(elapsed < 1.0, || format!("took {elapsed:.3} s"))?;
    Ok(format!("max relative error {worst:.2e}, {:.1} ms", elapsed * 1e3))
}

/// Textbook linear KF on the same model, written out independently of the library.
struct LinearKf {
    x: Vector6<f64>,
    p: Matrix6<f64>,
}

impl LinearKf {
    fn step(&mut self, dt: f64, sigma: f64, z: &Vector3<f64>, r: &Matrix3<f64>) {
        let mut f = Matrix6::identity();
        for i in 0..3 {
            f[(i, i + 3)] = dt;
        }
        let mut gamma = nalgebra::Matrix6x3::zeros();
        for i in 0..3 {
            gamma[(i, i)] = 0.5 * dt * dt;
            gamma[(i + 3, i)] = dt;
        }
        let q = gamma * gamma.transpose() * (sigma * sigma);
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + q;
        let mut h = Matrix3x6::zeros();
        for i in 0..3 {
            h[(i, i)] = 1.0;
        }
        let s = h * self.p * h.transpose() + r;
        let k = self.p * h.transpose() * s.try_inverse().expect("innovation covariance invertible");
        self.x += k * (z - h * self.x);
        self.p = (Matrix6::identity() - k * h) * self.p;
    }
}

fn linear_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sigma = 0.62;
    let r_diag = Vector3::new(0.02f64.powi(2), 0.03f64.powi(2), 0.05f64.powi(2));
    let noise = NoiseConfig::new(sigma).with_observation(ObservationNoise::Fixed(r_diag));
    let pose = CameraPose::identity();
    let x0 = Vector6::new(0.2, -0.1, 3.0, 0.0, 0.0, 0.0);
    let p0 = Matrix6::from_diagonal(&Vector6::new(0.01, 0.01, 0.04, 1.0, 1.0, 1.0));
    let mut state = TrackState::new(x0, p0, 0.0);
    let mut oracle = LinearKf { x: x0, p: p0 };
    let r = Matrix3::from_diagonal(&r_diag);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let dt = rng.random_range(0.02..0.05);
        let t = k as f64 * 0.033;
        let truth = Vector3::new(0.2 + 0.3 * t, -0.1 + 0.1 * (t * 2.0).sin(), 3.0 - 0.05 * t);
        let z = truth + Vector3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.05..0.05));
        state = ekf::predict(&state, dt, &noise).map_err(|e| e.to_string())?;
        state = ekf::update(&state, &Observation::new(z).expect("positive depth"), &pose, &noise).map_err(|e| e.to_string())?;
        oracle.step(dt, sigma, &z, &r);
        worst = worst.max((state.x - oracle.x).amax());
    }
    ensure(worst <= 1e-9, || format!("max state deviation {worst:.3e}"))?;
    Ok(format!("max state deviation {worst:.2e} over 200 steps"))
}

fn filter_consistency() -> Check {
    let runs = 500;
    let steps = 60;
    let dt = 1.0 / 30.0;
    let sigma = 1.0;
    let r_diag = Vector3::new(0.02f64.powi(2), 0.02f64.powi(2), 0.04f64.powi(2));
    let noise = NoiseConfig::new(sigma).with_observation(ObservationNoise::Fixed(r_diag));
    let pose = CameraPose::new(Vector3::new(0.5, -0.2, 0.1), EulerAngles::new(0.1, -0.2, 0.3));
    let rot = dynmask::geometry::rotation_from_euler(&pose.euler);
    let p0 = Matrix6::from_diagonal(&Vector6::new(0.01, 0.01, 0.01, 0.25, 0.25, 0.25));
    let p0_sqrt = p0.map(f64::sqrt);
    let mean0 = Vector6::new(0.0, 0.0, 3.0, 0.3, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut total = 0.0;
    for _ in 0..runs {
        let mut truth = mean0 + p0_sqrt * Vector6::from_fn(|_, _| normal());
        let mut est = TrackState::new(mean0, p0, 0.0);
        for _ in 0..steps {
            let a = Vector3::from_fn(|_, _| sigma * normal());
            let p = truth.fixed_rows::<3>(0).into_owned() + truth.fixed_rows::<3>(3) * dt + a * (0.5 * dt * dt);
            let v = truth.fixed_rows::<3>(3).into_owned() + a * dt;
            truth = Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z);
            let v_obs = Vector3::from_fn(|i, _| r_diag[i].sqrt() * normal());
            let z = rot.transpose() * (p - pose.position) + v_obs;
            est = ekf::predict(&est, dt, &noise).map_err(|e| e.to_string())?;
            est = ekf::update(&est, &Observation::new(z).ok_or("non-positive depth")?, &pose, &noise).map_err(|e| e.to_string())?;
        }
        let e = truth.fixed_rows::<3>(0).into_owned() - est.position();
        let chol = est.position_covariance().cholesky().ok_or("position covariance not PD")?;
        total += e.dot(&chol.solve(&e));
    }
    let mean = total / runs as f64;
    let chi = ChiSquared::new(3.0 * runs as f64).expect("valid dof");
    let (lo, hi) = (chi.inverse_cdf(0.025) / runs as f64, chi.inverse_cdf(0.975) / runs as f64);
    ensure(mean >= lo && mean <= hi, || format!("mean NEES {mean:.4} outside [{lo:.4}, {hi:.4}]"))?;
    Ok(format!("mean NEES {mean:.4} in [{lo:.4}, {hi:.4}] ({runs} runs)"))
}

fn panel(class_id: ClassId, origin: [f64; 3], half: [f64; 3]) -> ObjectScript {
    ObjectScript {
        class_id,
        shape: Shape::Box { half_extents: half },
        motion: MotionScript {
            origin,
            ..MotionScript::default()
        },
        score: 0.9,
        detect_until_frame: None,
    }
}

fn default_tracker(intr: CameraIntrinsics<f64>) -> Tracker<f64> {
    Tracker::new(TrackerConfig::default(), Arc::new(ClassRegistry::with_defaults()), intr).expect("valid tracker")
}

fn tracking_convergence() -> Check {
    let onset_frame = 30;
    let mut chair = panel(ClassId::CHAIR, [-0.6, 0.0, 2.0], [0.15, 0.2, 0.005]);
    chair.motion.velocity = [0.5, 0.0, 0.0];
    chair.motion.onset = onset_frame as f64 / 30.0;
    let script = SceneScript {
        frames: onset_frame + 60,
        objects: vec![chair],
        ..SceneScript::default()
    };
    let mut tracker = default_tracker(script.intrinsics);
    let mut first_moving = None;
    let mut worst = 0.0f64;
    for i in 0..script.frames {
        let frame = synth::render_frame(&script, i).to_frame::<f64>();
        let out = tracker.step(&frame).map_err(|e| e.to_string())?;
        ensure(out.labels.len() == 1, || format!("frame {i}: {} tracks", out.labels.len()))?;
        let label = &out.labels[0];
        if i >= onset_frame && first_moving.is_none() && label.label == Motion::Moving {
            first_moving = Some(i);
        }
        if i >= onset_frame + 30 {
            worst = worst.max((label.speed - 0.5).abs());
        }
    }
    let first = first_moving.ok_or("never labeled moving")?;
    ensure(worst <= 0.05, || format!("speed error {worst:.4} m/s after 30 frames"))?;
    ensure(first - onset_frame <= 5, || format!("labeled moving {} frames after onset", first - onset_frame))?;
    Ok(format!(
        "max speed error {worst:.4} m/s from frame onset+30; moving {} frames after onset",
        first - onset_frame
    ))
}

fn idle_handling() -> Check {
    let chair = panel(ClassId::CHAIR, [0.0, 0.1, 2.5], [0.25, 0.3, 0.05]);
    let script = SceneScript {
        frames: 90,
        camera: CameraScript {
            velocity: [0.25, 0.0, 0.05],
            euler_rate: [0.0, 0.05, 0.0],
            ..CameraScript::default()
        },
        objects: vec![chair],
        ..SceneScript::default()
    };
    let mut tracker = default_tracker(script.intrinsics);
    let mut max_speed = 0.0f64;
    for i in 0..script.frames {
        let rendered = synth::render_frame(&script, i);
        let frame = rendered.to_frame::<f64>();
        let p = process_frame(&mut tracker, &frame, 0).map_err(|e| e.to_string())?;
        let det = frame.detections.first().ok_or_else(|| format!("frame {i}: chair not detected"))?;
        let mdi_invalid: HashSet<usize> = (0..det.mask.bits().len()).filter(|&k| !p.masked.mdi.is_valid_at(k)).collect();
        let mask_set: HashSet<usize> = (0..det.mask.bits().len()).filter(|&k| det.mask.bits()[k]).collect();
        ensure(mdi_invalid == mask_set, || format!("frame {i}: MDI invalid set differs from the chair mask"))?;
        if i >= 10 {
            let masked = mask_set.iter().filter(|&&k| !p.masked.mo_mdi.is_valid_at(k)).count();
            ensure(masked == 0, || format!("frame {i}: MO-MDI masks {masked} chair pixels"))?;
            max_speed = max_speed.max(p.step.labels[0].speed);
        }
    }
    Ok(format!("MDI == chair mask in all 90 frames; MO-MDI untouched from frame 10, max speed {max_speed:.4} m/s"))
}

fn track_lifecycle() -> Check {
    let last_seen = 20;
    let mut chair = panel(ClassId::CHAIR, [0.0, 0.0, 2.0], [0.2, 0.2, 0.005]);
    chair.detect_until_frame = Some(last_seen + 1);
    let script = SceneScript {
        frames: last_seen + 20,
        intrinsics: CameraIntrinsics::new(300.0, 300.0, 79.5, 59.5, 160, 120).expect("valid intrinsics"),
        objects: vec![chair],
        ..SceneScript::default()
    };
    let mut tracker = default_tracker(script.intrinsics);
    let mut died = None;
    for i in 0..script.frames {
        let out = tracker.step(&synth::render_frame(&script, i).to_frame()).map_err(|e| e.to_string())?;
        if !out.deaths.is_empty() {
            ensure(died.is_none(), || "track died twice".into())?;
            died = Some(i);
        }
    }
    let died = died.ok_or("track never died")?;
    ensure(died == last_seen + 10, || format!("last detection at {last_seen}, died at {died}"))?;
    Ok(format!("last detection at frame {last_seen}, track died at frame {died}"))
}

fn iou_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 0..1000 {
        let w = rng.random_range(1..40);
        let h = rng.random_range(1..40);
        let pa = rng.random_range(0.0..1.0);
        let pb = rng.random_range(0.0..1.0);
        let a = BinaryMask::new(w, h, (0..w * h).map(|_| rng.random_bool(pa)).collect()).expect("sized");
        let b = BinaryMask::new(w, h, (0..w * h).map(|_| rng.random_bool(pb)).collect()).expect("sized");
        let set = |m: &BinaryMask| -> HashSet<(usize, usize)> {
            (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| m.get(x, y)).collect()
        };
        let (sa, sb) = (set(&a), set(&b));
        let union = sa.union(&sb).count();
        let expect = if union == 0 { 1.0 } else { sa.intersection(&sb).count() as f64 / union as f64 };
        let got = mask_iou(&a, &b).map_err(|e| e.to_string())?;
        ensure(got.to_bits() == expect.to_bits(), || format!("pair {n}: {got} != {expect}"))?;
    }
    Ok("1000 random pairs bit-identical to the pixel-set oracle".into())
}

fn tum_pair() -> (Trajectory, Trajectory) {
    // mirrors tests/data/tum_ate_reference.py
    let axis = nalgebra::Unit::new_normalize(Vector3::new(1.0, 2.0, 3.0));
    let rot = Rotation3::from_axis_angle(&axis, 0.7);
    let trans = Vector3::new(0.5, -1.2, 2.0);
    let (mut est, mut reference) = (Vec::new(), Vec::new());
    for i in 0..100 {
        let f = i as f64;
        let t = 1000.0 + 0.1 * f;
        let p = Vector3::new((0.1 * f).sin() + 0.2 * (0.31 * f).cos(), (0.07 * f).cos(), 0.01 * f + 0.05 * (0.5 * f).sin());
        let noise = Vector3::new((1.3 * f).sin(), (1.7 * f).cos(), (2.1 * f + 0.4).sin()) * 0.01;
        let stamp = |timestamp, position| PoseStamp {
            timestamp,
            position,
            orientation: UnitQuaternion::identity(),
        };
        est.push(stamp(t, p));
        reference.push(stamp(t + 0.003, rot * p + trans + noise));
    }
    (Trajectory::new(est).unwrap(), Trajectory::new(reference).unwrap())
}

/// Horn's closed form with unit quaternions; independent of the SVD route.
fn horn_quaternion_rmse(est: &[Vector3<f64>], reference: &[Vector3<f64>]) -> f64 {
    let n = est.len() as f64;
    let me = est.iter().sum::<Vector3<f64>>() / n;
    let mr = reference.iter().sum::<Vector3<f64>>() / n;
    let mut s = Matrix3::zeros();
    for (a, b) in est.iter().zip(reference) {
        s += (a - me) * (b - mr).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let big_n = nalgebra::Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = big_n.symmetric_eigen();
    let imax = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(imax);
    let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    let t = mr - rot * me;
    let sq: f64 = est.iter().zip(reference).map(|(a, b)| (rot * a + t - b).norm_squared()).sum();
    (sq / n).sqrt()
}

fn ate_validity() -> Check {
    const TUM_TOOL_RMSE: f64 = 0.012223998788548504;
    let (est, reference) = tum_pair();
    let self_err = ate_rmse(&reference, &reference, 0.02, true).map_err(|e| e.to_string())?;
    ensure(self_err == 0.0 || self_err < 1e-15, || format!("ate(x, x) = {self_err:e}"))?;
    let base = ate_rmse(&est, &reference, 0.02, true).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rot = Rotation3::from_euler_angles(rng.random_range(-3.1..3.1), rng.random_range(-1.5..1.5), rng.random_range(-3.1..3.1));
        let t = RigidTransform {
            rotation: *rot.matrix(),
            translation: Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)),
            degenerate: false,
        };
        let moved = ate_rmse(&est.transformed(&t), &reference, 0.02, true).map_err(|e| e.to_string())?;
        worst = worst.max((moved - base).abs());
    }
    ensure(worst <= 1e-9, || format!("rigid-transform invariance violated by {worst:e}"))?;
    ensure((base - TUM_TOOL_RMSE).abs() <= 1e-6, || format!("ate {base} vs TUM tool {TUM_TOOL_RMSE}"))?;
    let positions = |t: &Trajectory| t.poses().iter().map(|p| p.position).collect::<Vec<_>>();
    let horn = horn_quaternion_rmse(&positions(&est), &positions(&reference));
    ensure((base - horn).abs() <= 1e-6, || format!("ate {base} vs quaternion solver {horn}"))?;
    Ok(format!(
        "ate(x,x)={self_err:e}; invariance {worst:.1e}; {base:.9} m vs TUM tool {TUM_TOOL_RMSE:.9} m, quaternion solver {horn:.9} m"
    ))
}

fn performance() -> Check {
    let objects = vec![
        panel(ClassId::PERSON, [-0.8, 0.0, 2.5], [0.25, 0.6, 0.15]),
        panel(ClassId::CHAIR, [0.6, 0.3, 2.0], [0.25, 0.3, 0.25]),
        ObjectScript {
            shape: Shape::Sphere { radius: 0.08 },
            ..panel(ClassId::CUP, [0.1, 0.2, 1.5], [0.0; 3])
        },
        ObjectScript {
            shape: Shape::Sphere { radius: 0.1 },
            ..panel(ClassId::BOTTLE, [-0.2, -0.3, 1.8], [0.0; 3])
        },
        panel(ClassId::CHAIR, [0.2, -0.5, 3.0], [0.3, 0.2, 0.2]),
    ];
    let mut objects = objects;
    objects[0].motion.velocity = [0.4, 0.0, 0.0];
    objects[1].motion.velocity = [0.0, 0.0, -0.2];
    let script = SceneScript {
        frames: 100,
        objects,
        camera: CameraScript {
            velocity: [0.05, 0.0, 0.0],
            ..CameraScript::default()
        },
        ..SceneScript::default()
    };
    let frames: Vec<_> = (0..script.frames).map(|i| synth::render_frame(&script, i).to_frame::<f64>()).collect();
    ensure(frames.iter().all(|f| f.detections.len() == 5), || "expected 5 detections per frame".into())?;
    let radius = PipelineConfig::default().dilation_radius;
    let mut tracker = default_tracker(script.intrinsics);
    let mut total = 0.0;
    for f in &frames {
        let started = Instant::now();
        let p = process_frame(&mut tracker, f, radius).map_err(|e| e.to_string())?;
        total += started.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(&p);
    }
    let mean = total / frames.len() as f64;
    println!(
        "    timing basis: tracking + MOC + compositing on 640x480 with 5 objects, instance segmentation excluded; \
         the full published pipeline including segmentation reported {REFERENCE_FULL_PIPELINE_MS} ms per frame"
    );
    ensure(mean <= 15.0, || format!("mean {mean:.3} ms > 15 ms"))?;
    Ok(format!("mean {mean:.3} ms per frame (budget 15 ms; published full pipeline {REFERENCE_FULL_PIPELINE_MS} ms)"))
}

fn integration_recipe() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = dir.path().join("seq");
    let out = dir.path().join("out");
    let mut walker = panel(ClassId::PERSON, [-0.5, 0.0, 2.5], [0.2, 0.5, 0.1]);
    walker.motion.velocity = [0.5, 0.0, 0.0];
    let script = SceneScript {
        frames: 30,
        start_time: 1305031102.0,
        objects: vec![walker, panel(ClassId::CHAIR, [0.7, 0.2, 2.0], [0.2, 0.25, 0.05])],
        ..SceneScript::default()
    };
    synth::generate_sequence(&script, &seq).map_err(|e| e.to_string())?;
    let summary = pipeline::run_sequence::<f64>(&PipelineConfig::default(), &seq, &out).map_err(|e| e.to_string())?;
    ensure(summary.frames == 30, || format!("{} frames processed", summary.frames))?;
    let count = |d: &std::path::Path| std::fs::read_dir(d).map(|r| r.count()).unwrap_or(0);
    ensure(count(&summary.outputs.mdi_dir) == 30, || "MDI count".into())?;
    ensure(count(&summary.outputs.mo_mdi_dir) == 30, || "MO-MDI count".into())?;
    let traj = io::read_tum_trajectory(&summary.outputs.trajectory).map_err(|e| e.to_string())?;
    ensure(traj.len() == 30, || format!("{} trajectory poses", traj.len()))?;
    let list = std::fs::read_to_string(&summary.outputs.mdi_list).map_err(|e| e.to_string())?;
    let first = list.lines().find(|l| !l.starts_with('#')).ok_or("empty MDI list")?;
    let rel = first.split_whitespace().nth(1).ok_or("malformed MDI list")?;
    let mdi = io::read_depth_png::<f64>(&out.join(rel), 5000.0).map_err(|e| e.to_string())?;
    let raw = io::read_depth_png::<f64>(&summary_depth(&seq, 0)?, 5000.0).map_err(|e| e.to_string())?;
    ensure(mdi.invalid_count() > raw.invalid_count(), || "MDI masks nothing".into())?;
    let log = io::read_track_log(&summary.outputs.track_log).map_err(|e| e.to_string())?;
    ensure(!log.is_empty(), || "empty track log".into())?;
    Ok(format!(
        "30 MDI + 30 MO-MDI 16-bit PNGs, TUM lists, {}-pose trajectory, {} track records",
        traj.len(),
        log.len()
    ))
}

fn summary_depth(seq: &std::path::Path, index: usize) -> Result<std::path::PathBuf, String> {
    let m = io::load_sequence(seq, &io::LoadOptions::default()).map_err(|e| e.to_string())?;
    Ok(m.depth[index].1.clone())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("1 jacobian vs central differences", jacobian_finite_differences),
        ("2 identity-pose EKF vs linear KF", linear_oracle_equivalence),
        ("3 NEES consistency (500 runs)", filter_consistency),
        ("4 tracking convergence at 0.5 m/s", tracking_convergence),
        ("5 idle chair with moving camera", idle_handling),
        ("6 track dies 10 frames after last detection", track_lifecycle),
        ("7 IoU vs pixel-set oracle", iou_oracle),
        ("8 ATE validity", ate_validity),
        ("9 per-frame latency", performance),
        ("10 sequence run emits vSLAM artifacts", integration_recipe),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {name}: {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

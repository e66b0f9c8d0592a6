use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use dynmask::ekf::{self, InitialCovariance, NoiseConfig, ObservationNoise, TrackState};
use dynmask::geometry::Observation;
use dynmask::scene::{filter_detections, BinaryMask, BoundingBox, CameraIntrinsics, CameraPose, ClassId, ClassRegistry, DepthImage, Detection, Frame};
use dynmask::tracker::{StepOutput, TrackId, Tracker, TrackerConfig};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const W: usize = 64;
const H: usize = 48;

fn intrinsics() -> CameraIntrinsics<f64> {
    CameraIntrinsics::new(60.0, 60.0, 31.5, 23.5, W, H).unwrap()
}

#[derive(Debug, Clone)]
struct DetSpec {
    class: u32,
    score: f64,
    x: usize,
    y: usize,
}

fn det_strategy() -> impl Strategy<Value = DetSpec> {
    (prop_oneof![Just(1u32), Just(62), Just(47), Just(5)], 0.05f64..1.0, 0usize..W - 8, 0usize..H - 8)
        .prop_map(|(class, score, x, y)| DetSpec { class, score, x, y })
}

fn build_frame(i: usize, specs: &[DetSpec]) -> Frame<f64> {
    let dets = specs
        .iter()
        .map(|s| {
            let mask = BinaryMask::from_rect(W, H, BoundingBox::new(s.x, s.y, s.x + 6, s.y + 6));
            Detection::from_mask(ClassId(s.class), s.score, mask).unwrap()
        })
        .collect();
    Frame::new(i as f64 / 30.0, DepthImage::filled(W, H, 2.0), CameraPose::identity(), dets).unwrap()
}

fn run(frames: &[Frame<f64>]) -> Vec<StepOutput<f64>> {
    let mut t = Tracker::new(TrackerConfig::default(), Arc::new(ClassRegistry::with_defaults()), intrinsics()).unwrap();
    frames.iter().map(|f| t.step(f).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bank_invariants(seq in proptest::collection::vec(proptest::collection::vec(det_strategy(), 0..7), 1..40)) {
        let frames: Vec<_> = seq.iter().enumerate().map(|(i, s)| build_frame(i, s)).collect();
        let mut tracker = Tracker::new(TrackerConfig::default(), Arc::new(ClassRegistry::with_defaults()), intrinsics()).unwrap();
        let mut seen_ids = HashSet::new();
        let mut prev: BTreeMap<TrackId, usize> = BTreeMap::new();
        for f in &frames {
            let out = tracker.step(f).unwrap();
            let surviving = filter_detections(&f.detections, 0.1, 5).len();
            prop_assert!(out.births.len() <= surviving);
            for id in &out.births {
                prop_assert!(seen_ids.insert(*id), "id {id:?} reused");
            }
            let updated: HashSet<TrackId> = out.assignments.iter().filter_map(|a| a.track_id()).collect();
            let mut now = BTreeMap::new();
            for t in tracker.tracks() {
                let k = t.frames_since_seen;
                if out.births.contains(&t.id) {
                    prop_assert_eq!(k, 0);
                } else if updated.contains(&t.id) {
                    prop_assert_eq!(k, 0);
                } else {
                    // coasted exactly once
                    prop_assert_eq!(Some(&(k - 1)), prev.get(&t.id));
                }
                prop_assert!(k < 10);
                now.insert(t.id, k);
            }
            for id in &out.deaths {
                prop_assert!(tracker.track(*id).is_none());
            }
            prev = now;
        }
    }

    #[test]
    fn identical_inputs_give_identical_histories(seq in proptest::collection::vec(proptest::collection::vec(det_strategy(), 0..5), 1..25)) {
        let frames: Vec<_> = seq.iter().enumerate().map(|(i, s)| build_frame(i, s)).collect();
        let (a, b) = (run(&frames), run(&frames));
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.assignments, &y.assignments);
            prop_assert_eq!(x.labels.len(), y.labels.len());
            for (l, m) in x.labels.iter().zip(&y.labels) {
                prop_assert_eq!(l.track_id, m.track_id);
                prop_assert_eq!(l.speed.to_bits(), m.speed.to_bits());
                prop_assert_eq!(l.label, m.label);
            }
        }
    }
}

/// A stationary object whose model says it is stationary: after N updates the estimate
/// sits within 3 sigma / sqrt(N) of the truth on at least 95% of runs.
#[test]
fn stationary_object_converges() {
    let sigma = Vector3::new(0.02, 0.02, 0.03);
    let noise = NoiseConfig::new(1e-3).with_observation(ObservationNoise::Fixed(sigma.component_mul(&sigma)));
    let init = InitialCovariance {
        position_inflation: 4.0,
        velocity_sigma: 1e-3,
    };
    let pose = CameraPose::identity();
    let truth = Vector3::new(0.3, -0.2, 2.5);
    let n = 60;
    let runs = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut inside = 0;
    for _ in 0..runs {
        let mut draw = || truth + Vector3::from_fn(|i, _| sigma[i] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let z0 = Observation::new(draw()).unwrap();
        let mut s = TrackState::from_observation(&z0, &pose, &noise, &init, 0.0);
        for _ in 1..n {
            s = ekf::predict(&s, 1.0 / 30.0, &noise).unwrap();
            s = ekf::update(&s, &Observation::new(draw()).unwrap(), &pose, &noise).unwrap();
        }
        let err = s.position() - truth;
        let bound = sigma * (3.0 / (n as f64).sqrt());
        if (0..3).all(|i| err[i].abs() <= bound[i]) {
            inside += 1;
        }
    }
    assert!(inside as f64 >= 0.95 * runs as f64, "{inside}/{runs} runs inside the bound");
}

#[test]
fn birth_covariance_is_rotated_observation_noise() {
    let noise = NoiseConfig::new(1.0);
    let pose = CameraPose::new(Vector3::new(1.0, 0.0, 0.0), dynmask::scene::EulerAngles::new(0.0, std::f64::consts::FRAC_PI_2, 0.0));
    let z = Observation::new(Vector3::new(0.0, 0.0, 2.0)).unwrap();
    let s = TrackState::from_observation(&z, &pose, &noise, &InitialCovariance::default(), 0.0);
    let r = noise.observation.r_diag(2.0);
    // pitch a quarter turn swaps camera z into world x
    let p = s.position_covariance();
    assert!((p[(0, 0)] - 4.0 * r.z).abs() < 1e-12);
    assert!((p[(2, 2)] - 4.0 * r.x).abs() < 1e-12);
    let v = s.p.fixed_view::<3, 3>(3, 3);
    assert!((v - nalgebra::Matrix3::identity()).amax() < 1e-12);
    assert_eq!(s.p.fixed_view::<3, 3>(0, 3).amax(), 0.0);
}

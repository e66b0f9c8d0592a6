//! Moving-object classification.
//!
//! An object is moving when its estimated speed exceeds its class threshold, or when it
//! is non-rigid and its mask deformed between consecutive observations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::scene::{BinaryMask, ClassId, ClassRegistry, ObjectClassSpec};
use crate::tracker::{Track, TrackId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MocError {
    #[error("masks differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("class {0} is not registered")]
    UnknownClass(ClassId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Moving,
    Idle,
}

impl Motion {
    pub fn is_moving(self) -> bool {
        self == Motion::Moving
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Motion::Moving => "moving",
            Motion::Idle => "idle",
        }
    }
}

/// Which side of the IoU threshold counts as deformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformationTrigger {
    /// Deformed when `1 - IoU > threshold`.
    #[default]
    LowIou,
    /// Deformed when `IoU > threshold`.
    HighIou,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MocConfig {
    pub deformation_threshold: f64,
    pub trigger: DeformationTrigger,
}

impl Default for MocConfig {
    fn default() -> Self {
        Self {
            deformation_threshold: 0.3,
            trigger: DeformationTrigger::LowIou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionLabel<T: Real> {
    pub track_id: TrackId,
    pub label: Motion,
    pub speed: T,
    /// `1 - IoU` of the last two masks.
    pub deformation: f64,
}

/// `|a & b| / |a | b|`; two empty masks count as identical.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MocError> {
    if !a.same_shape(b) {
        return Err(MocError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x & y) as usize;
        union += (x | y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Decision rule on already-computed quantities.
pub fn motion_rule<T: Real>(speed: T, iou: f64, spec: &ObjectClassSpec<T>, config: &MocConfig) -> Motion {
    if speed > spec.velocity_threshold {
        return Motion::Moving;
    }
    let deformed = match config.trigger {
        DeformationTrigger::LowIou => 1.0 - iou > config.deformation_threshold,
        DeformationTrigger::HighIou => iou > config.deformation_threshold,
    };
    if !spec.rigid && deformed {
        Motion::Moving
    } else {
        Motion::Idle
    }
}

/// Labels `track` given the mask observed this frame and the track's previous mask.
pub fn classify<T: Real>(
    track: &Track<T>,
    current_mask: &BinaryMask,
    registry: &ClassRegistry<T>,
    config: &MocConfig,
) -> Result<MotionLabel<T>, MocError> {
    let spec = registry
        .get(track.class_id)
        .ok_or(MocError::UnknownClass(track.class_id))?;
    let iou = mask_iou(current_mask, &track.last_mask)?;
    let speed = track.state.speed();
    Ok(MotionLabel {
        track_id: track.id,
        label: motion_rule(speed, iou, spec, config),
        speed,
        deformation: (1.0 - iou).clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ekf::TrackState;
    use crate::scene::BoundingBox;
    use crate::tracker::TrackStatus;
    use nalgebra::{Matrix6, Vector6};
    use proptest::prelude::*;

    fn block(x0: usize, y0: usize) -> BinaryMask {
        BinaryMask::from_rect(40, 40, BoundingBox::new(x0, y0, x0 + 9, y0 + 9))
    }

    fn track_with(class_id: ClassId, speed: f64, mask: BinaryMask) -> Track<f64> {
        let x = Vector6::new(0.0, 0.0, 2.0, speed, 0.0, 0.0);
        Track {
            id: TrackId(0),
            class_id,
            state: TrackState::new(x, Matrix6::identity(), 0.0),
            frames_since_seen: 0,
            last_bbox: mask.bounds().unwrap(),
            last_mask: mask,
            status: TrackStatus::Confirmed,
            hits: 1,
            age: 1,
        }
    }

    #[test]
    fn iou_identical_and_disjoint() {
        assert_eq!(mask_iou(&block(0, 0), &block(0, 0)).unwrap(), 1.0);
        assert_eq!(mask_iou(&block(0, 0), &block(20, 20)).unwrap(), 0.0);
        let e = BinaryMask::empty(40, 40);
        assert_eq!(mask_iou(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn iou_half_shift() {
        // 50 shared pixels, 150 in the union
        let iou = mask_iou(&block(0, 0), &block(5, 0)).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_dimension_mismatch() {
        let err = mask_iou(&BinaryMask::empty(4, 4), &BinaryMask::empty(4, 5)).unwrap_err();
        assert_eq!(err, MocError::DimensionMismatch(4, 4, 4, 5));
    }

    #[test]
    fn slow_person_is_moving() {
        let reg = ClassRegistry::with_defaults();
        let t = track_with(ClassId::PERSON, 0.02, block(0, 0));
        let l = classify(&t, &block(0, 0), &reg, &MocConfig::default()).unwrap();
        assert_eq!(l.label, Motion::Moving);
        assert_eq!(l.deformation, 0.0);
    }

    #[test]
    fn slow_chair_is_idle_even_when_deformed() {
        let reg = ClassRegistry::with_defaults();
        let t = track_with(ClassId::CHAIR, 0.05, block(0, 0));
        for current in [block(0, 0), block(5, 0), block(25, 25)] {
            let l = classify(&t, &current, &reg, &MocConfig::default()).unwrap();
            assert_eq!(l.label, Motion::Idle);
        }
    }

    #[test]
    fn still_undeformed_person_is_idle() {
        let reg = ClassRegistry::with_defaults();
        let t = track_with(ClassId::PERSON, 0.0, block(0, 0));
        let l = classify(&t, &block(0, 0), &reg, &MocConfig::default()).unwrap();
        assert_eq!(l.label, Motion::Idle);
    }

    #[test]
    fn deforming_person_is_moving() {
        let reg = ClassRegistry::with_defaults();
        let t = track_with(ClassId::PERSON, 0.0, block(0, 0));
        let l = classify(&t, &block(5, 0), &reg, &MocConfig::default()).unwrap();
        assert_eq!(l.label, Motion::Moving);
        assert!((l.deformation - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn high_iou_trigger() {
        let reg = ClassRegistry::<f64>::with_defaults();
        let spec = reg.get(ClassId::PERSON).unwrap();
        let cfg = MocConfig {
            deformation_threshold: 0.5,
            trigger: DeformationTrigger::HighIou,
        };
        assert_eq!(motion_rule(0.0, 0.9, spec, &cfg), Motion::Moving);
        assert_eq!(motion_rule(0.0, 0.2, spec, &cfg), Motion::Idle);
    }

    #[test]
    fn unknown_class() {
        let reg = ClassRegistry::with_defaults();
        let t = track_with(ClassId(999), 0.0, block(0, 0));
        assert!(matches!(
            classify(&t, &block(0, 0), &reg, &MocConfig::default()),
            Err(MocError::UnknownClass(_))
        ));
    }

    fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
        proptest::collection::vec(any::<bool>(), 64).prop_map(|bits| BinaryMask::new(8, 8, bits).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in mask_strategy(), b in mask_strategy()) {
            let ab = mask_iou(&a, &b).unwrap();
            prop_assert_eq!(ab, mask_iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn rigid_never_moving_by_deformation(iou in 0.0f64..=1.0, thr in 0.0f64..1.0, high in any::<bool>()) {
            let reg = ClassRegistry::<f64>::with_defaults();
            let spec = reg.get(ClassId::CHAIR).unwrap();
            let cfg = MocConfig {
                deformation_threshold: thr,
                trigger: if high { DeformationTrigger::HighIou } else { DeformationTrigger::LowIou },
            };
            prop_assert_eq!(motion_rule(0.0, iou, spec, &cfg), Motion::Idle);
        }

        #[test]
        fn monotone_in_speed(s1 in 0.0f64..1.0, ds in 0.0f64..1.0, iou in 0.0f64..=1.0, person in any::<bool>()) {
            let reg = ClassRegistry::<f64>::with_defaults();
            let spec = reg.get(if person { ClassId::PERSON } else { ClassId::CUP }).unwrap();
            let cfg = MocConfig::default();
            if motion_rule(s1, iou, spec, &cfg).is_moving() {
                prop_assert!(motion_rule(s1 + ds, iou, spec, &cfg).is_moving());
            }
        }
    }
}

//! Domain types shared by the whole pipeline and the registry of dynamic object classes.
//!
//! Depth is stored in meters with `0` meaning "no reading". Every stage treats a zero
//! depth as missing data, never as a measurement.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("class {0} is already registered")]
    DuplicateClass(ClassId),
    #[error("class {0} is not registered")]
    UnknownClass(ClassId),
    #[error("invalid class spec for {class}: {reason}")]
    InvalidClassSpec { class: ClassId, reason: String },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("grid of {width}x{height} needs {expected} values, got {actual}")]
    SizeMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("depth value at index {index} is negative or not finite")]
    InvalidDepth { index: usize },
    #[error("detection score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("bounding box {0:?} is malformed or outside the {1}x{2} image")]
    InvalidBoundingBox(BoundingBox, usize, usize),
    #[error("mask pixel ({x}, {y}) lies outside its bounding box")]
    MaskOutsideBox { x: usize, y: usize },
    #[error("mask is {mask_w}x{mask_h} but the frame is {frame_w}x{frame_h}")]
    MaskDimensions {
        mask_w: usize,
        mask_h: usize,
        frame_w: usize,
        frame_h: usize,
    },
    #[error("mask is empty")]
    EmptyMask,
}

/// Identifier of an object class, e.g. a COCO category id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl ClassId {
    // COCO category ids (91-category indexing).
    pub const PERSON: ClassId = ClassId(1);
    pub const BOTTLE: ClassId = ClassId(44);
    pub const CUP: ClassId = ClassId(47);
    pub const CHAIR: ClassId = ClassId(62);
}

/// Pinhole intrinsics, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self, SceneError> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: &str| Err(SceneError::InvalidIntrinsics(msg.to_string()));
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be nonzero");
        }
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return bad("principal point must lie inside the image");
        }
        Ok(())
    }

    /// Freiburg 3 Kinect calibration of the TUM RGB-D benchmark.
    pub fn tum_fr3() -> Self {
        Self {
            fx: lit(535.4),
            fy: lit(539.2),
            cx: lit(320.1),
            cy: lit(247.6),
            width: 640,
            height: 480,
        }
    }
}

/// Roll, pitch and yaw in radians. The rotation they describe is `Rz(yaw) * Ry(pitch) * Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EulerAngles<T: Real> {
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Real> EulerAngles<T> {
    pub fn new(roll: T, pitch: T, yaw: T) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn normalized(self) -> Self {
        Self {
            roll: normalize_angle(self.roll),
            pitch: normalize_angle(self.pitch),
            yaw: normalize_angle(self.yaw),
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle<T: Real>(angle: T) -> T {
    let two_pi = T::two_pi();
    let mut a = angle % two_pi;
    if a > T::pi() {
        a -= two_pi;
    } else if a <= -T::pi() {
        a += two_pi;
    }
    a
}

/// Camera position and orientation in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CameraPose<T: Real> {
    pub position: Vector3<T>,
    pub euler: EulerAngles<T>,
}

impl<T: Real> CameraPose<T> {
    pub fn new(position: Vector3<T>, euler: EulerAngles<T>) -> Self {
        Self {
            position,
            euler: euler.normalized(),
        }
    }

    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            euler: EulerAngles::default(),
        }
    }
}

impl<T: Real> Default for CameraPose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

/// Row-major metric depth image; `0` is the invalid sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage<T: Real> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> DepthImage<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self, SceneError> {
        check_len(width, height, data.len())?;
        if let Some(index) = data.iter().position(|d| !(d.is_finite() && *d >= T::zero())) {
            return Err(SceneError::InvalidDepth { index });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(value.is_finite() && value >= T::zero());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn is_valid_at(&self, index: usize) -> bool {
        self.data[index] > T::zero()
    }

    /// Marks every set pixel of `mask` as invalid.
    pub(crate) fn invalidate(&mut self, mask: &BinaryMask) {
        debug_assert!(mask.width() == self.width && mask.height() == self.height);
        for (d, &bit) in self.data.iter_mut().zip(mask.bits()) {
            if bit {
                *d = T::zero();
            }
        }
    }

    pub fn invalid_count(&self) -> usize {
        self.data.iter().filter(|d| **d == T::zero()).count()
    }
}

fn check_len(width: usize, height: usize, actual: usize) -> Result<(), SceneError> {
    let expected = width * height;
    if expected != actual {
        return Err(SceneError::SizeMismatch {
            width,
            height,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, SceneError> {
        check_len(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// Mask with the inclusive rectangle set.
    pub fn from_rect(width: usize, height: usize, rect: BoundingBox) -> Self {
        let mut mask = Self::empty(width, height);
        for y in rect.y_min..=rect.y_max.min(height - 1) {
            for x in rect.x_min..=rect.x_max.min(width - 1) {
                mask.set(x, y, true);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Tight bounds of the set pixels, `None` for an empty mask.
    pub fn bounds(&self) -> Option<BoundingBox> {
        let mut bbox: Option<BoundingBox> = None;
        for (y, row) in self.bits.chunks_exact(self.width).enumerate() {
            let Some(first) = row.iter().position(|b| *b) else {
                continue;
            };
            let last = row.iter().rposition(|b| *b).unwrap_or(first);
            bbox = Some(match bbox {
                None => BoundingBox::new(first, y, last, y),
                Some(b) => BoundingBox::new(b.x_min.min(first), b.y_min, b.x_max.max(last), y),
            });
        }
        bbox
    }

    /// Iterates `(x, y)` of set pixels inside `region`.
    pub fn set_pixels_in(&self, region: BoundingBox) -> impl Iterator<Item = (usize, usize)> + '_ {
        let x_end = region.x_max.min(self.width.saturating_sub(1));
        let y_end = region.y_max.min(self.height.saturating_sub(1));
        (region.y_min..=y_end).flat_map(move |y| {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            (region.x_min..=x_end).filter(move |&x| row[x]).map(move |x| (x, y))
        })
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn is_valid_for(&self, width: usize, height: usize) -> bool {
        self.x_min <= self.x_max && self.x_max < width && self.y_min <= self.y_max && self.y_max < height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Center in continuous pixel coordinates.
    pub fn center<T: Real>(&self) -> (T, T) {
        (
            lit((self.x_min + self.x_max) as f64 / 2.0),
            lit((self.y_min + self.y_max) as f64 / 2.0),
        )
    }
}

/// One instance produced by an external segmentation network.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T: Real> {
    pub class_id: ClassId,
    pub score: T,
    pub bbox: BoundingBox,
    pub mask: BinaryMask,
}

impl<T: Real> Detection<T> {
    /// Validates the score range and that `bbox` covers every set mask pixel.
    pub fn new(class_id: ClassId, score: T, bbox: BoundingBox, mask: BinaryMask) -> Result<Self, SceneError> {
        if !(score >= T::zero() && score <= T::one()) {
            return Err(SceneError::InvalidScore(crate::scalar::to_f64(score)));
        }
        if !bbox.is_valid_for(mask.width(), mask.height()) {
            return Err(SceneError::InvalidBoundingBox(bbox, mask.width(), mask.height()));
        }
        for (i, _) in mask.bits().iter().enumerate().filter(|(_, b)| **b) {
            let (x, y) = (i % mask.width(), i / mask.width());
            if !bbox.contains(x, y) {
                return Err(SceneError::MaskOutsideBox { x, y });
            }
        }
        Ok(Self {
            class_id,
            score,
            bbox,
            mask,
        })
    }

    /// Detection whose box is the tight bounds of `mask`.
    pub fn from_mask(class_id: ClassId, score: T, mask: BinaryMask) -> Result<Self, SceneError> {
        let bbox = mask.bounds().ok_or(SceneError::EmptyMask)?;
        Self::new(class_id, score, bbox, mask)
    }
}

/// Per-class priors used by the filter and the motion classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ObjectClassSpec<T: Real> {
    pub class_id: ClassId,
    pub name: String,
    pub rigid: bool,
    /// Random-acceleration standard deviation, m/s^2.
    pub accel_sigma: T,
    /// Speed above which the object counts as moving, m/s.
    pub velocity_threshold: T,
}

impl<T: Real> ObjectClassSpec<T> {
    pub fn new(class_id: ClassId, name: impl Into<String>, rigid: bool, accel_sigma: T, velocity_threshold: T) -> Self {
        Self {
            class_id,
            name: name.into(),
            rigid,
            accel_sigma,
            velocity_threshold,
        }
    }

    fn validate(&self) -> Result<(), SceneError> {
        let invalid = |reason: &str| SceneError::InvalidClassSpec {
            class: self.class_id,
            reason: reason.to_string(),
        };
        if !(self.accel_sigma > T::zero() && self.accel_sigma.is_finite()) {
            return Err(invalid("accel_sigma must be positive"));
        }
        if !(self.velocity_threshold >= T::zero() && self.velocity_threshold.is_finite()) {
            return Err(invalid("velocity_threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Registry of the object classes treated as potentially dynamic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassRegistry<T: Real> {
    classes: BTreeMap<ClassId, ObjectClassSpec<T>>,
}

impl<T: Real> ClassRegistry<T> {
    pub fn new() -> Self {
        Self {
            classes: BTreeMap::new(),
        }
    }

    /// Person, chair, cup and bottle with the experimental priors.
    pub fn with_defaults() -> Self {
        Self::with_priors(lit(0.62), lit(0.01), lit(1.0), lit(0.1))
    }

    /// Person plus the rigid chair/cup/bottle classes with caller-supplied priors.
    pub fn with_priors(person_sigma: T, person_threshold: T, other_sigma: T, other_threshold: T) -> Self {
        let mut registry = Self::new();
        let specs = [
            ObjectClassSpec::new(ClassId::PERSON, "person", false, person_sigma, person_threshold),
            ObjectClassSpec::new(ClassId::CHAIR, "chair", true, other_sigma, other_threshold),
            ObjectClassSpec::new(ClassId::CUP, "cup", true, other_sigma, other_threshold),
            ObjectClassSpec::new(ClassId::BOTTLE, "bottle", true, other_sigma, other_threshold),
        ];
        for spec in specs {
            registry.register(spec).expect("default classes are distinct");
        }
        registry
    }

    pub fn register(&mut self, spec: ObjectClassSpec<T>) -> Result<ClassId, SceneError> {
        spec.validate()?;
        let id = spec.class_id;
        if self.classes.contains_key(&id) {
            return Err(SceneError::DuplicateClass(id));
        }
        self.classes.insert(id, spec);
        Ok(id)
    }

    pub fn get(&self, id: ClassId) -> Option<&ObjectClassSpec<T>> {
        self.classes.get(&id)
    }

    pub fn lookup(&self, id: ClassId) -> Result<&ObjectClassSpec<T>, SceneError> {
        self.get(id).ok_or(SceneError::UnknownClass(id))
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.classes.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObjectClassSpec<T>> {
        self.classes.values()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// One synchronized RGB-D frame with its camera pose and detections.
#[derive(Debug, Clone)]
pub struct Frame<T: Real> {
    pub timestamp: f64,
    /// Carried through for downstream consumers; never interpreted here.
    pub rgb: Option<image::RgbImage>,
    pub depth: DepthImage<T>,
    pub pose: CameraPose<T>,
    pub detections: Vec<Detection<T>>,
}

impl<T: Real> Frame<T> {
    pub fn new(
        timestamp: f64,
        depth: DepthImage<T>,
        pose: CameraPose<T>,
        detections: Vec<Detection<T>>,
    ) -> Result<Self, SceneError> {
        for det in &detections {
            if det.mask.width() != depth.width() || det.mask.height() != depth.height() {
                return Err(SceneError::MaskDimensions {
                    mask_w: det.mask.width(),
                    mask_h: det.mask.height(),
                    frame_w: depth.width(),
                    frame_h: depth.height(),
                });
            }
        }
        Ok(Self {
            timestamp,
            rgb: None,
            depth,
            pose,
            detections,
        })
    }
}

/// Keeps detections scoring strictly above `score_threshold`, best first, at most `max_count`.
///
/// Equal scores keep their input order.
pub fn filter_detections<T: Real>(dets: &[Detection<T>], score_threshold: T, max_count: usize) -> Vec<Detection<T>> {
    let mut kept: Vec<&Detection<T>> = dets.iter().filter(|d| d.score > score_threshold).collect();
    // sort_by is stable
    kept.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    kept.into_iter().take(max_count).cloned().collect()
}

/// Same selection as [`filter_detections`], returning indices into `dets`.
pub fn filter_detection_indices<T: Real>(dets: &[Detection<T>], score_threshold: T, max_count: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score > score_threshold).collect();
    kept.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    kept.truncate(max_count);
    kept
}

//! Pinhole back-projection, Tait-Bryan rotations and the camera-frame observation model.
//!
//! The pose rotation `R` maps camera axes to world axes, so a world point `p` is seen by
//! the camera at `h(p) = R^T (p - c)`.

use nalgebra::{Matrix3, Matrix3x6, Vector3};
use thiserror::Error;

use crate::scalar::{from_usize, Real};
use crate::scene::{CameraIntrinsics, CameraPose, DepthImage, Detection, EulerAngles};

pub const DEFAULT_MIN_VALID_PIXELS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("only {valid} masked pixels carry depth, need {required}")]
    InsufficientDepth { valid: usize, required: usize },
    #[error("mask is {mask_w}x{mask_h} but depth is {depth_w}x{depth_h}")]
    DimensionMismatch {
        mask_w: usize,
        mask_h: usize,
        depth_w: usize,
        depth_h: usize,
    },
}

/// Object centroid in the camera frame, meters. Always in front of the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T: Real>(Vector3<T>);

impl<T: Real> Observation<T> {
    /// `None` unless the point is finite and has positive depth.
    pub fn new(z: Vector3<T>) -> Option<Self> {
        (z.iter().all(|v| v.is_finite()) && z.z > T::zero()).then_some(Self(z))
    }

    pub fn vector(&self) -> &Vector3<T> {
        &self.0
    }

    pub fn depth(&self) -> T {
        self.0.z
    }
}

/// Centroid observation of a detected object.
///
/// The pixel location is the bounding-box center and the depth is the mean over mask
/// pixels that carry a reading.
pub fn backproject_centroid<T: Real>(
    det: &Detection<T>,
    depth: &DepthImage<T>,
    intr: &CameraIntrinsics<T>,
    min_valid_pixels: usize,
) -> Result<Observation<T>, GeometryError> {
    if det.mask.width() != depth.width() || det.mask.height() != depth.height() {
        return Err(GeometryError::DimensionMismatch {
            mask_w: det.mask.width(),
            mask_h: det.mask.height(),
            depth_w: depth.width(),
            depth_h: depth.height(),
        });
    }
    let mut sum = T::zero();
    let mut valid = 0usize;
    for (x, y) in det.mask.set_pixels_in(det.bbox) {
        let d = depth.get(x, y);
        if d > T::zero() {
            sum += d;
            valid += 1;
        }
    }
    let required = min_valid_pixels.max(1);
    if valid < required {
        return Err(GeometryError::InsufficientDepth { valid, required });
    }
    let z_z = sum / from_usize(valid);
    let (mu_x, mu_y) = det.bbox.center::<T>();
    let z = unproject_pixel(mu_x, mu_y, z_z, intr);
    Observation::new(z).ok_or(GeometryError::InsufficientDepth { valid: 0, required })
}

/// Camera-frame point at pixel `(u, v)` with depth `z`.
pub fn unproject_pixel<T: Real>(u: T, v: T, z: T, intr: &CameraIntrinsics<T>) -> Vector3<T> {
    Vector3::new((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z)
}

/// Pixel coordinates of a camera-frame point.
pub fn project<T: Real>(z: &Vector3<T>, intr: &CameraIntrinsics<T>) -> (T, T) {
    (intr.fx * z.x / z.z + intr.cx, intr.fy * z.y / z.z + intr.cy)
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll)`, i.e. rotate about x, then y, then z.
pub fn rotation_from_euler<T: Real>(euler: &EulerAngles<T>) -> Matrix3<T> {
    let (sr, cr) = euler.roll.sin_cos();
    let (sp, cp) = euler.pitch.sin_cos();
    let (sy, cy) = euler.yaw.sin_cos();
    #[rustfmt::skip]
    let r = Matrix3::new(
        cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
        sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
        -sp,     cp * sr,                cp * cr,
    );
    r
}

/// Inverse of [`rotation_from_euler`]; pitch is kept in `[-pi/2, pi/2]`.
pub fn euler_from_rotation<T: Real>(r: &Matrix3<T>) -> EulerAngles<T> {
    let sp = -r[(2, 0)];
    let one = T::one();
    let pitch = if sp >= one {
        T::frac_pi_2()
    } else if sp <= -one {
        -T::frac_pi_2()
    } else {
        sp.asin()
    };
    let gimbal = (one - sp.abs()) < nalgebra::convert(1e-12);
    let (roll, yaw) = if gimbal {
        // roll and yaw are coupled; put everything in yaw
        (T::zero(), (-r[(0, 1)]).atan2(r[(1, 1)]))
    } else {
        (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
    };
    EulerAngles::new(roll, pitch, yaw)
}

/// World point expressed in the camera frame.
pub fn observe_h<T: Real>(p: &Vector3<T>, pose: &CameraPose<T>) -> Vector3<T> {
    rotation_from_euler(&pose.euler).transpose() * (p - pose.position)
}

/// Camera-frame point expressed in the world frame; inverse of [`observe_h`].
pub fn camera_to_world<T: Real>(z: &Vector3<T>, pose: &CameraPose<T>) -> Vector3<T> {
    rotation_from_euler(&pose.euler) * z + pose.position
}

/// Jacobian of [`observe_h`] with respect to the `[position, velocity]` state.
pub fn jacobian_h<T: Real>(pose: &CameraPose<T>) -> Matrix3x6<T> {
    let rt = rotation_from_euler(&pose.euler).transpose();
    let mut h = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    h
}

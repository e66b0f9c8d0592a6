//! Single-object extended Kalman filter in world coordinates.
//!
//! State is `[px, py, pz, vx, vy, vz]` under a constant-velocity model driven by white
//! random acceleration. Observations are object centroids in the camera frame, so the
//! measurement model depends on the camera pose of each frame.

use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{camera_to_world, jacobian_h, observe_h, rotation_from_euler, Observation};
use crate::scalar::{lit, to_f64, Real};
use crate::scene::CameraPose;

pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkfError {
    #[error("time step must be non-negative, got {0}")]
    NegativeDt(f64),
    #[error("filter produced non-finite values")]
    Divergent,
    #[error("innovation covariance is numerically singular (condition number {condition:e})")]
    SingularInnovation { condition: f64 },
}

/// Exponent of `dt` in the velocity rows of the noise gain.
///
/// `One` is the standard random-acceleration model. `Two` reproduces the gain as printed
/// in the original method description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GammaVelocityExponent {
    #[default]
    One,
    Two,
}

impl GammaVelocityExponent {
    pub fn from_exponent(exp: u8) -> Option<Self> {
        match exp {
            1 => Some(Self::One),
            2 => Some(Self::Two),
            _ => None,
        }
    }
}

/// Observation noise of the depth camera, as per-axis variances in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum ObservationNoise<T: Real> {
    /// Constant variances (m^2).
    Fixed(Vector3<T>),
    /// Constant lateral std-dev; depth std-dev `quadratic * z^2 + constant`.
    DepthDependent { lateral_sigma: T, quadratic: T, constant: T },
}

impl<T: Real> ObservationNoise<T> {
    pub fn r_diag(&self, depth: T) -> Vector3<T> {
        match *self {
            Self::Fixed(v) => v,
            Self::DepthDependent {
                lateral_sigma,
                quadratic,
                constant,
            } => {
                let lat = lateral_sigma * lateral_sigma;
                let sd = quadratic * depth * depth + constant;
                Vector3::new(lat, lat, sd * sd)
            }
        }
    }
}

impl<T: Real> Default for ObservationNoise<T> {
    fn default() -> Self {
        Self::DepthDependent {
            lateral_sigma: lit(0.02),
            quadratic: lit(0.0012),
            constant: lit(0.0019),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig<T: Real> {
    pub accel_sigma: T,
    pub observation: ObservationNoise<T>,
    pub gamma_velocity_exponent: GammaVelocityExponent,
    pub max_condition: f64,
}

impl<T: Real> NoiseConfig<T> {
    pub fn new(accel_sigma: T) -> Self {
        Self {
            accel_sigma,
            observation: ObservationNoise::default(),
            gamma_velocity_exponent: GammaVelocityExponent::One,
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }

    pub fn with_observation(mut self, observation: ObservationNoise<T>) -> Self {
        self.observation = observation;
        self
    }
}

/// Covariance used when a track is born.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCovariance<T: Real> {
    /// Multiplier applied to the observation covariance for the position block.
    pub position_inflation: T,
    /// Velocity std-dev, m/s.
    pub velocity_sigma: T,
}

impl<T: Real> Default for InitialCovariance<T> {
    fn default() -> Self {
        Self {
            position_inflation: lit(4.0),
            velocity_sigma: lit(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState<T: Real> {
    pub x: Vector6<T>,
    pub p: Matrix6<T>,
    pub last_update: f64,
}

impl<T: Real> TrackState<T> {
    pub fn new(x: Vector6<T>, p: Matrix6<T>, last_update: f64) -> Self {
        Self { x, p, last_update }
    }

    /// State at rest at the observed position. The position covariance is the observation
    /// covariance rotated into the world frame and inflated.
    pub fn from_observation(
        z: &Observation<T>,
        pose: &CameraPose<T>,
        noise: &NoiseConfig<T>,
        init: &InitialCovariance<T>,
        timestamp: f64,
    ) -> Self {
        let world = camera_to_world(z.vector(), pose);
        let r = rotation_from_euler(&pose.euler);
        let r_cam = Matrix3::from_diagonal(&noise.observation.r_diag(z.depth()));
        let pos_cov = r * r_cam * r.transpose() * init.position_inflation;
        let mut p = Matrix6::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&pos_cov);
        let vv = init.velocity_sigma * init.velocity_sigma;
        p.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * vv));
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&world);
        Self::new(x, symmetrize(&p), timestamp)
    }

    pub fn position(&self) -> Vector3<T> {
        self.x.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<T> {
        self.x.fixed_rows::<3>(3).into_owned()
    }

    pub fn position_covariance(&self) -> Matrix3<T> {
        self.p.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn speed(&self) -> T {
        self.velocity().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

/// `[[I, dt I], [0, I]]`.
pub fn make_transition<T: Real>(dt: T) -> Result<Matrix6<T>, EkfError> {
    if !(dt >= T::zero()) {
        return Err(EkfError::NegativeDt(to_f64(dt)));
    }
    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    Ok(f)
}

/// Random-acceleration process noise `G S G^T` with isotropic `S = sigma^2 I`.
pub fn make_process_noise<T: Real>(dt: T, accel_sigma: T) -> Matrix6<T> {
    make_process_noise_with(dt, accel_sigma, GammaVelocityExponent::One)
}

pub fn make_process_noise_with<T: Real>(dt: T, accel_sigma: T, exponent: GammaVelocityExponent) -> Matrix6<T> {
    let pos_gain = dt * dt / lit(2.0);
    let vel_gain = match exponent {
        GammaVelocityExponent::One => dt,
        GammaVelocityExponent::Two => dt * dt,
    };
    let mut gamma = Matrix6x3::zeros();
    gamma
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * pos_gain));
    gamma
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(Matrix3::identity() * vel_gain));
    let sigma = Matrix3::identity() * (accel_sigma * accel_sigma);
    symmetrize(&(gamma * sigma * gamma.transpose()))
}

pub fn predict<T: Real>(state: &TrackState<T>, dt: T, noise: &NoiseConfig<T>) -> Result<TrackState<T>, EkfError> {
    let f = make_transition(dt)?;
    let q = make_process_noise_with(dt, noise.accel_sigma, noise.gamma_velocity_exponent);
    let x = f * state.x;
    let p = symmetrize(&(f * state.p * f.transpose() + q));
    let next = TrackState::new(x, p, state.last_update + to_f64(dt));
    if !next.is_finite() {
        return Err(EkfError::Divergent);
    }
    Ok(next)
}

pub fn update<T: Real>(
    state: &TrackState<T>,
    z: &Observation<T>,
    pose: &CameraPose<T>,
    noise: &NoiseConfig<T>,
) -> Result<TrackState<T>, EkfError> {
    let h = jacobian_h(pose);
    let innovation = z.vector() - observe_h(&state.position(), pose);
    let r = Matrix3::from_diagonal(&noise.observation.r_diag(z.depth()));
    let s = h * state.p * h.transpose() + r;
    let s = (s + s.transpose()) * lit::<T>(0.5);

    let eig = s.symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), e| {
            let e = to_f64(e.abs());
            (lo.min(e), hi.max(e))
        });
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= noise.max_condition) || eig.iter().any(|e| *e <= T::zero()) {
        return Err(EkfError::SingularInnovation { condition });
    }
    let s_inv = s
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(EkfError::SingularInnovation { condition })?;

    let k = state.p * h.transpose() * s_inv;
    let x = state.x + k * innovation;
    let p = symmetrize(&((Matrix6::identity() - k * h) * state.p));
    let next = TrackState::new(x, p, state.last_update);
    if !next.is_finite() {
        return Err(EkfError::Divergent);
    }
    Ok(next)
}

/// Normalized position error squared, `e^T P_pos^-1 e`.
pub fn position_nees<T: Real>(state: &TrackState<T>, truth: &Vector3<T>) -> Option<T> {
    let e = state.position() - truth;
    let inv = state.position_covariance().try_inverse()?;
    Some((e.transpose() * inv * e)[(0, 0)])
}

pub(crate) fn symmetrize<T: Real>(m: &Matrix6<T>) -> Matrix6<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

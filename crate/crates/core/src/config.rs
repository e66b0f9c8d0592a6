//! Pipeline configuration (TOML).
//!
//! Every key is optional; missing keys take the experimental defaults. The command-line
//! flags of the `dynmask` binary mirror these keys one to one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ekf::{GammaVelocityExponent, InitialCovariance, ObservationNoise};
use crate::io::{LoadOptions, DEFAULT_DETECTIONS_FILE, TUM_DEPTH_SCALE};
use crate::moc::{DeformationTrigger, MocConfig};
use crate::scalar::{lit, Real};
use crate::scene::{CameraIntrinsics, ClassRegistry, ObjectClassSpec, SceneError};
use crate::tracker::{AssociationMethod, Confirmation, TrackerConfig, TrackerError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    // tracking
    pub max_coast_frames: usize,
    pub score_threshold: f64,
    pub max_detections: usize,
    pub gate_distance: f64,
    pub association: AssociationMethod,
    /// `0` disables N-of-M confirmation.
    pub confirm_hits: usize,
    pub confirm_window: usize,
    pub min_valid_pixels: usize,

    // class priors
    pub person_velocity_threshold: f64,
    pub person_accel_sigma: f64,
    pub other_velocity_threshold: f64,
    pub other_accel_sigma: f64,
    pub extra_classes: Vec<ObjectClassSpec<f64>>,

    // filter noise
    pub lateral_sigma: f64,
    pub depth_sigma_quadratic: f64,
    pub depth_sigma_constant: f64,
    pub init_position_inflation: f64,
    pub init_velocity_sigma: f64,
    pub gamma_velocity_exponent: u8,
    pub max_condition: f64,

    // motion classification
    pub deformation_threshold: f64,
    pub deformation_trigger: DeformationTrigger,

    // compositing and I/O
    pub dilation_radius: usize,
    pub depth_scale: f64,
    pub max_dt: f64,
    pub queue_depth: usize,
    pub seed: u64,
    pub detections_file: PathBuf,
    pub trajectory_file: String,
    /// Overrides `intrinsics.json` in the sequence directory.
    pub intrinsics: Option<CameraIntrinsics<f64>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_coast_frames: 10,
            score_threshold: 0.1,
            max_detections: 5,
            gate_distance: 1.0,
            association: AssociationMethod::Greedy,
            confirm_hits: 0,
            confirm_window: 0,
            min_valid_pixels: crate::geometry::DEFAULT_MIN_VALID_PIXELS,
            person_velocity_threshold: 0.01,
            person_accel_sigma: 0.62,
            other_velocity_threshold: 0.1,
            other_accel_sigma: 1.0,
            extra_classes: Vec::new(),
            lateral_sigma: 0.02,
            depth_sigma_quadratic: 0.0012,
            depth_sigma_constant: 0.0019,
            init_position_inflation: 4.0,
            init_velocity_sigma: 1.0,
            gamma_velocity_exponent: 1,
            max_condition: crate::ekf::DEFAULT_MAX_CONDITION,
            deformation_threshold: 0.3,
            deformation_trigger: DeformationTrigger::LowIou,
            dilation_radius: 2,
            depth_scale: TUM_DEPTH_SCALE,
            max_dt: 0.02,
            queue_depth: 4,
            seed: 0,
            detections_file: PathBuf::from(DEFAULT_DETECTIONS_FILE),
            trajectory_file: "groundtruth.txt".into(),
            intrinsics: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return bad(format!("depth_scale must be positive, got {}", self.depth_scale));
        }
        if !(self.max_dt >= 0.0 && self.max_dt.is_finite()) {
            return bad(format!("max_dt must be non-negative, got {}", self.max_dt));
        }
        if self.queue_depth == 0 {
            return bad("queue_depth must be at least 1".into());
        }
        if (self.confirm_hits == 0) != (self.confirm_window == 0) {
            return bad("confirm_hits and confirm_window must both be zero or both be set".into());
        }
        if let Some(intr) = &self.intrinsics {
            intr.validate()?;
        }
        self.tracker_config::<f64>()?.validate()?;
        self.registry::<f64>()?;
        Ok(())
    }

    pub fn gamma_exponent(&self) -> Result<GammaVelocityExponent, ConfigError> {
        GammaVelocityExponent::from_exponent(self.gamma_velocity_exponent).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "gamma_velocity_exponent must be 1 or 2, got {}",
                self.gamma_velocity_exponent
            ))
        })
    }

    pub fn tracker_config<T: Real>(&self) -> Result<TrackerConfig<T>, ConfigError> {
        let confirmation = (self.confirm_hits > 0).then_some(Confirmation {
            hits: self.confirm_hits,
            window: self.confirm_window,
        });
        Ok(TrackerConfig {
            max_coast_frames: self.max_coast_frames,
            gate_distance: lit(self.gate_distance),
            score_threshold: lit(self.score_threshold),
            max_detections: self.max_detections,
            min_valid_pixels: self.min_valid_pixels,
            association: self.association,
            confirmation,
            observation_noise: ObservationNoise::DepthDependent {
                lateral_sigma: lit(self.lateral_sigma),
                quadratic: lit(self.depth_sigma_quadratic),
                constant: lit(self.depth_sigma_constant),
            },
            gamma_velocity_exponent: self.gamma_exponent()?,
            initial_covariance: InitialCovariance {
                position_inflation: lit(self.init_position_inflation),
                velocity_sigma: lit(self.init_velocity_sigma),
            },
            max_condition: self.max_condition,
            moc: MocConfig {
                deformation_threshold: self.deformation_threshold,
                trigger: self.deformation_trigger,
            },
        })
    }

    pub fn registry<T: Real>(&self) -> Result<ClassRegistry<T>, ConfigError> {
        let mut reg = ClassRegistry::with_priors(
            lit(self.person_accel_sigma),
            lit(self.person_velocity_threshold),
            lit(self.other_accel_sigma),
            lit(self.other_velocity_threshold),
        );
        for c in &self.extra_classes {
            reg.register(ObjectClassSpec::new(
                c.class_id,
                c.name.clone(),
                c.rigid,
                lit(c.accel_sigma),
                lit(c.velocity_threshold),
            ))?;
        }
        Ok(reg)
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            trajectory_file: self.trajectory_file.clone(),
            detections_file: self.detections_file.clone(),
        }
    }
}

//! Dynamic-object tracking and depth masking for RGB-D visual SLAM front-ends.
//!
//! Detections from an external instance-segmentation network are back-projected into
//! the world frame and tracked with one extended Kalman filter per object. Each tracked
//! object is labeled moving or idle, and every depth frame is turned into two masked
//! depth images: one with all dynamic objects removed (for mapping and loop closure)
//! and one with only the moving objects removed (for odometry).
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`). The `*F64` / `*F32`
//! aliases below name the concrete instantiations.

pub mod compositor;
pub mod config;
pub mod eval;
pub mod ekf;
pub mod geometry;
pub mod io;
pub mod moc;
pub mod pipeline;
pub mod scalar;
pub mod scene;
pub mod synth;
pub mod tracker;

pub use scalar::Real;

pub type CameraIntrinsicsF64 = scene::CameraIntrinsics<f64>;
pub type CameraIntrinsicsF32 = scene::CameraIntrinsics<f32>;
pub type CameraPoseF64 = scene::CameraPose<f64>;
pub type CameraPoseF32 = scene::CameraPose<f32>;
pub type DepthImageF64 = scene::DepthImage<f64>;
pub type DepthImageF32 = scene::DepthImage<f32>;
pub type DetectionF64 = scene::Detection<f64>;
pub type DetectionF32 = scene::Detection<f32>;
pub type FrameF64 = scene::Frame<f64>;
pub type FrameF32 = scene::Frame<f32>;
pub type ClassRegistryF64 = scene::ClassRegistry<f64>;
pub type ClassRegistryF32 = scene::ClassRegistry<f32>;
pub type TrackStateF64 = ekf::TrackState<f64>;
pub type TrackStateF32 = ekf::TrackState<f32>;
pub type TrackF64 = tracker::Track<f64>;
pub type TrackF32 = tracker::Track<f32>;
pub type TrackerF64 = tracker::Tracker<f64>;
pub type TrackerF32 = tracker::Tracker<f32>;
pub type FrameOutputF64 = io::FrameOutput<f64>;
pub type FrameOutputF32 = io::FrameOutput<f32>;

//! Omnidirectional multi-fisheye camera stack: Double and Triple Sphere
//! projection models, robust chessboard calibration, sphere-sweep distance
//! estimation and distance-aware 360° stitching, plus a ray-casting scene
//! renderer used as ground truth.
//!
//! Geometry is generic over the scalar ([`scalar::Real`]); the pipeline runs
//! in `f64` and the aliases below name the common instantiations.

pub mod calibration;
pub mod camera;
pub mod dual;
pub mod error;
pub mod image;
pub mod io;
pub mod linalg;
pub mod rig;
pub mod scalar;
pub mod spherical;
pub mod stitcher;
pub mod sweep;
pub mod synth;
pub mod verify;

pub use camera::ModelKind;
pub use error::{Error, Result};
pub use rig::{RigCamera, RigConfig};

/// Intrinsics at pipeline precision.
pub type Intrinsics = camera::CameraIntrinsics<f64>;
/// Single-precision intrinsics, e.g. for GPU-side tables.
pub type Intrinsics32 = camera::CameraIntrinsics<f32>;
pub type Pose = rig::Pose<f64>;
pub type Point3 = linalg::Vec3<f64>;
pub type PixelCoord = camera::Pixel<f64>;

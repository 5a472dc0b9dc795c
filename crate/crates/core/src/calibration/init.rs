//! Initial guesses for intrinsics and board poses.
//!
//! Poses come from a coarse search: every rotation on a 30° Euler grid is
//! scored after solving the translation in closed form, and the best one is
//! refined by coordinate descent on the rotation.

use nalgebra::{Matrix3, Vector3};

use super::{prepare, CalibrationProblem, MIN_CORNERS_PER_IMAGE};
use crate::camera::{CameraIntrinsics, ModelKind, Pixel};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::rig::Pose;

/// Largest mean angular residual (degrees) an initial pose may have.
pub const MAX_INITIAL_ANGLE_DEG: f64 = 45.0;

const GRID_STEP_DEG: f64 = 30.0;
const REFINE_START_DEG: f64 = 15.0;
const REFINE_STOP_DEG: f64 = 0.005;

/// Sensor-size heuristic: `fx = fy = W/π`, principal point at the image
/// center, `α = 0.5`, `ξ = λ = 0`.
pub fn initial_intrinsics_guess(model: ModelKind, image_size: [usize; 2]) -> CameraIntrinsics<f64> {
    let (w, h) = (image_size[0] as f64, image_size[1] as f64);
    let f = w / std::f64::consts::PI;
    CameraIntrinsics {
        model,
        fx: f,
        fy: f,
        cx: w / 2.0,
        cy: h / 2.0,
        alpha: 0.5,
        xi: 0.0,
        lambda: 0.0,
    }
}

fn to_na(v: &Vec3<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

fn euler(yaw: f64, pitch: f64, roll: f64) -> Mat3<f64> {
    let ry = Pose::<f64>::exp_rotation(&Vec3::new(0.0, yaw, 0.0));
    let rx = Pose::<f64>::exp_rotation(&Vec3::new(pitch, 0.0, 0.0));
    let rz = Pose::<f64>::exp_rotation(&Vec3::new(0.0, 0.0, roll));
    ry.mul_mat(&rx).mul_mat(&rz)
}

fn is_collinear(points: &[Vec3<f64>]) -> bool {
    let Some(&a) = points.first() else { return true };
    let Some(&b) = points.iter().max_by(|p, q| (**p - a).norm().total_cmp(&(**q - a).norm())) else {
        return true;
    };
    let axis = b - a;
    let len = axis.norm();
    if len == 0.0 {
        return true;
    }
    let dir = axis.scale(1.0 / len);
    let spread = points.iter().map(|p| (*p - a).cross(&dir).norm()).fold(0.0, f64::max);
    spread <= 1e-9 * len
}

struct PoseSearch<'a> {
    rays: Vec<Vec3<f64>>,
    points: &'a [Vec3<f64>],
    a_inv: Matrix3<f64>,
    projectors: Vec<Matrix3<f64>>,
}

impl PoseSearch<'_> {
    /// Least-squares translation for a rotation: minimizes the components of
    /// `R·x + t` orthogonal to each ray, then the mean angular residual.
    fn score(&self, r: &Mat3<f64>) -> (Vec3<f64>, f64) {
        let mut rhs = Vector3::zeros();
        for (p, x) in self.projectors.iter().zip(self.points) {
            rhs -= p * to_na(&r.mul_vec(x));
        }
        let t = self.a_inv * rhs;
        let t = Vec3::new(t[0], t[1], t[2]);
        let mut sum = 0.0;
        for (b, x) in self.rays.iter().zip(self.points) {
            sum += b.angle_to(&(r.mul_vec(x) + t));
        }
        (t, sum / self.rays.len() as f64)
    }
}

/// Board-to-camera pose from corners, with the mean angle (radians) between
/// observed rays and transformed corners.
pub fn initialize_pose(
    intrinsics: &CameraIntrinsics<f64>,
    points: &[Vec3<f64>],
    pixels: &[Pixel<f64>],
) -> Result<(Pose<f64>, f64)> {
    let mut rays = Vec::new();
    let mut used = Vec::new();
    for (x, u) in points.iter().zip(pixels) {
        if let Some(ray) = intrinsics.unproject(u) {
            rays.push(ray.direction());
            used.push(*x);
        }
    }
    if rays.len() < MIN_CORNERS_PER_IMAGE {
        return Err(Error::DegenerateInput(format!(
            "only {} corners unproject under the initial intrinsics",
            rays.len()
        )));
    }
    if is_collinear(&used) {
        return Err(Error::DegenerateInput("board corners are collinear".into()));
    }
    let projectors: Vec<Matrix3<f64>> = rays
        .iter()
        .map(|b| {
            let b = to_na(b);
            Matrix3::identity() - b * b.transpose()
        })
        .collect();
    let a: Matrix3<f64> = projectors.iter().sum();
    let a_inv = a
        .try_inverse()
        .ok_or_else(|| Error::DegenerateInput("all observed rays are parallel".into()))?;
    let search = PoseSearch {
        rays,
        points: &used,
        a_inv,
        projectors,
    };

    let step = GRID_STEP_DEG.to_radians();
    let mut best = (Mat3::identity(), Vec3::zero(), f64::INFINITY);
    for iy in 0..12 {
        for ip in 0..7 {
            for ir in 0..12 {
                let r = euler(
                    -std::f64::consts::PI + iy as f64 * step,
                    -std::f64::consts::FRAC_PI_2 + ip as f64 * step,
                    -std::f64::consts::PI + ir as f64 * step,
                );
                let (t, e) = search.score(&r);
                if e < best.2 {
                    best = (r, t, e);
                }
            }
        }
    }

    let mut s = REFINE_START_DEG.to_radians();
    while s >= REFINE_STOP_DEG.to_radians() {
        let mut improved = false;
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut w = [0.0; 3];
                w[axis] = sign * s;
                let r = Pose::exp_rotation(&Vec3::from_array(w)).mul_mat(&best.0);
                let (t, e) = search.score(&r);
                if e < best.2 {
                    best = (r, t, e);
                    improved = true;
                }
            }
        }
        if !improved {
            s /= 2.0;
        }
    }

    let pose = Pose::new(best.0, best.1)?;
    Ok((pose, best.2))
}

/// Initial intrinsics (given, or the sensor heuristic) and one pose per
/// usable image (given, or searched).
pub fn initialize(problem: &CalibrationProblem) -> Result<(CameraIntrinsics<f64>, Vec<Pose<f64>>)> {
    let obs = &problem.observations;
    let images = prepare(obs)?;
    let intrinsics = match &problem.initial_intrinsics {
        Some(i) => i.with_model(problem.model),
        None => {
            let size = obs.image_size.ok_or_else(|| {
                Error::InvalidArgument("image_size is required when no initial intrinsics are given".into())
            })?;
            initial_intrinsics_guess(problem.model, size)
        }
    };
    intrinsics.validate()?;

    if let Some(poses) = &problem.initial_poses {
        if poses.len() != images.len() {
            return Err(Error::InvalidArgument(format!(
                "{} initial poses for {} usable images",
                poses.len(),
                images.len()
            )));
        }
        return Ok((intrinsics, poses.clone()));
    }

    let mut poses = Vec::with_capacity(images.len());
    for img in &images {
        let (pose, err) = initialize_pose(&intrinsics, &img.points, &img.pixels)
            .map_err(|e| Error::DegenerateInput(format!("image {}: {e}", img.id)))?;
        if err.to_degrees() >= MAX_INITIAL_ANGLE_DEG {
            return Err(Error::DegenerateInput(format!(
                "image {}: initial pose residual {:.1}° exceeds {MAX_INITIAL_ANGLE_DEG}°",
                img.id,
                err.to_degrees()
            )));
        }
        poses.push(pose);
    }
    Ok((intrinsics, poses))
}

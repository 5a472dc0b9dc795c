//! Rigid transforms and the four-camera rig layout.

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Tolerance on `RᵀR = I` and `det R = 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-10;

/// Default full field of view of the fisheye lenses, degrees.
pub const DEFAULT_FOV_DEG: f64 = 220.0;

/// Rigid transform `p ↦ R·p + t` from a source frame to a target frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T> {
    rotation: Mat3<T>,
    translation: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        let tol = T::lit(ROTATION_TOLERANCE);
        if rotation.orthonormality_error() > tol || (rotation.determinant() - T::one()).abs() > tol {
            return Err(Error::InvalidPose("rotation is not a proper orthonormal matrix".into()));
        }
        if !translation.is_finite() {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3<T> {
        self.translation
    }

    #[inline]
    pub fn transform(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    #[inline]
    pub fn rotate(&self, v: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(v)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.transform(&other.translation),
        }
        .revalidated()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -rt.mul_vec(&self.translation),
        }
        .revalidated()
    }

    /// Re-projects the rotation onto SO(3) if round-off has pushed it past
    /// the tolerance.
    fn revalidated(mut self) -> Self {
        if self.rotation.orthonormality_error() > T::lit(ROTATION_TOLERANCE * 1e-2) {
            self.rotation = quaternion_to_matrix(matrix_to_quaternion(&self.rotation));
        }
        self
    }

    /// Rotation from a rotation vector (axis · angle).
    pub fn exp_rotation(w: &Vec3<T>) -> Mat3<T> {
        let theta = w.norm();
        if theta < T::lit(1e-12) {
            // first-order term keeps derivatives sensible at zero
            let o = T::one();
            return Mat3::from_rows([o, -w.z, w.y], [w.z, o, -w.x], [-w.y, w.x, o]);
        }
        let half = theta / T::lit(2.0);
        let s = half.sin() / theta;
        quaternion_to_matrix([half.cos(), w.x * s, w.y * s, w.z * s])
    }

    /// Rotation vector of a rotation matrix, angle in [0, π].
    pub fn log_rotation(r: &Mat3<T>) -> Vec3<T> {
        let q = matrix_to_quaternion(r);
        let (w, v) = (q[0], Vec3::new(q[1], q[2], q[3]));
        let sn = v.norm();
        if sn < T::lit(1e-12) {
            return v.scale(T::lit(2.0));
        }
        let angle = T::lit(2.0) * sn.atan2(w);
        v.scale(angle / sn)
    }

    pub fn from_rotation_vector(w: &Vec3<T>, t: Vec3<T>) -> Self {
        Self {
            rotation: Self::exp_rotation(w),
            translation: t,
        }
    }

    pub fn rotation_vector(&self) -> Vec3<T> {
        Self::log_rotation(&self.rotation)
    }

    /// Unit quaternion `[w, x, y, z]` with `w ≥ 0`.
    pub fn quaternion(&self) -> [T; 4] {
        matrix_to_quaternion(&self.rotation)
    }

    pub fn from_quaternion(q: [T; 4], t: Vec3<T>) -> Result<Self> {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::InvalidPose("degenerate quaternion".into()));
        }
        let q = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        Self::new(quaternion_to_matrix(q), t)
    }

    /// Angle of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &Self) -> T {
        let rel = self.rotation.transpose().mul_mat(&other.rotation);
        let tr = rel.m[0][0] + rel.m[1][1] + rel.m[2][2];
        let c = ((tr - T::one()) / T::lit(2.0)).max(-T::one()).min(T::one());
        c.acos()
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.cast(),
            translation: self.translation.cast(),
        }
    }
}

fn quaternion_to_matrix<T: Real>(q: [T; 4]) -> Mat3<T> {
    let [w, x, y, z] = q;
    let two = T::lit(2.0);
    let o = T::one();
    Mat3::from_rows(
        [o - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), o - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), o - two * (x * x + y * y)],
    )
}

fn matrix_to_quaternion<T: Real>(r: &Mat3<T>) -> [T; 4] {
    let m = &r.m;
    let one = T::one();
    let quarter = T::lit(0.25);
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > T::zero() {
        let s = (tr + one).sqrt() * T::lit(2.0);
        [quarter * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::lit(2.0);
        [(m[2][1] - m[1][2]) / s, quarter * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] > m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::lit(2.0);
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, quarter * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::lit(2.0);
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, quarter * s]
    };
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let sign = if q[0] < T::zero() { -one } else { one };
    [sign * q[0] / n, sign * q[1] / n, sign * q[2] / n, sign * q[3] / n]
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    q: [f64; 4],
    t: [f64; 3],
}

impl Serialize for Pose<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRecord {
            q: self.quaternion(),
            t: self.translation.to_array(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PoseRecord::deserialize(d)?;
        Pose::from_quaternion(r.q, Vec3::from_array(r.t)).map_err(serde::de::Error::custom)
    }
}

fn default_fov() -> f64 {
    DEFAULT_FOV_DEG
}

fn is_default_fov(v: &f64) -> bool {
    *v == DEFAULT_FOV_DEG
}

/// One camera of the rig. `pose` maps camera-frame points into the rig
/// frame, so its translation is the camera center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigCamera {
    pub id: usize,
    pub intrinsics: CameraIntrinsics<f64>,
    pub pose: Pose<f64>,
    #[serde(default = "default_fov", skip_serializing_if = "is_default_fov")]
    pub fov_deg: f64,
}

impl RigCamera {
    pub fn center(&self) -> Vec3<f64> {
        self.pose.translation()
    }

    pub fn optical_axis(&self) -> Vec3<f64> {
        self.pose.rotation().column(2)
    }

    pub fn half_fov(&self) -> f64 {
        self.fov_deg.to_radians() / 2.0
    }

    /// Rig-frame point expressed in this camera's frame.
    #[inline]
    pub fn to_camera(&self, p_rig: &Vec3<f64>) -> Vec3<f64> {
        let r = self.pose.rotation();
        let d = *p_rig - self.pose.translation();
        // Rᵀ·d
        Vec3::new(
            r.m[0][0] * d.x + r.m[1][0] * d.y + r.m[2][0] * d.z,
            r.m[0][1] * d.x + r.m[1][1] * d.y + r.m[2][1] * d.z,
            r.m[0][2] * d.x + r.m[1][2] * d.y + r.m[2][2] * d.z,
        )
    }

    /// True when a camera-frame point is inside both the model's valid
    /// domain and the lens field of view.
    #[inline]
    pub fn sees(&self, p_cam: &Vec3<f64>) -> bool {
        let n = p_cam.norm();
        n > 0.0 && p_cam.z >= n * self.half_fov().cos() && self.intrinsics.in_valid_domain(p_cam)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigRecord")]
pub struct RigConfig {
    pub cameras: Vec<RigCamera>,
    pub reference_ids: [usize; 2],
}

#[derive(Deserialize)]
struct RigRecord {
    cameras: Vec<RigCamera>,
    reference_ids: [usize; 2],
}

impl TryFrom<RigRecord> for RigConfig {
    type Error = Error;
    fn try_from(r: RigRecord) -> Result<Self> {
        RigConfig::new(r.cameras, r.reference_ids)
    }
}

impl RigConfig {
    pub fn new(cameras: Vec<RigCamera>, reference_ids: [usize; 2]) -> Result<Self> {
        if cameras.len() < 2 {
            return Err(Error::InvalidRig(format!("need at least 2 cameras, got {}", cameras.len())));
        }
        let mut ids: Vec<usize> = cameras.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != cameras.len() {
            return Err(Error::InvalidRig("camera ids must be unique".into()));
        }
        if reference_ids[0] == reference_ids[1] {
            return Err(Error::InvalidRig("reference cameras must be distinct".into()));
        }
        for r in reference_ids {
            if !ids.contains(&r) {
                return Err(Error::InvalidRig(format!("reference id {r} is not a rig camera")));
            }
        }
        for c in &cameras {
            c.intrinsics.validate()?;
            if !(c.fov_deg > 0.0 && c.fov_deg <= 360.0) {
                return Err(Error::InvalidRig(format!("camera {} has invalid fov {}", c.id, c.fov_deg)));
            }
        }
        Ok(Self { cameras, reference_ids })
    }

    pub fn camera(&self, id: usize) -> Option<&RigCamera> {
        self.cameras.iter().find(|c| c.id == id)
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.cameras.iter().position(|c| c.id == id)
    }

    /// Same rig with the two reference cameras swapped.
    pub fn with_swapped_references(&self) -> Self {
        let mut out = self.clone();
        out.reference_ids.swap(0, 1);
        out
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Ids used by [`default_rig`].
pub mod ids {
    pub const TOP_FRONT: usize = 0;
    pub const TOP_BACK: usize = 1;
    pub const BOTTOM_RIGHT: usize = 2;
    pub const BOTTOM_LEFT: usize = 3;
}

/// TSCM intrinsics for a 220° lens on a `width`×`height` sensor, with the
/// focal length chosen so the 110° ray lands at 48% of the shorter side
/// from the principal point.
pub fn fisheye_intrinsics(width: usize, height: usize, alpha: f64, xi: f64, lambda: f64) -> Result<CameraIntrinsics<f64>> {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let unit = CameraIntrinsics::tscm(1.0, 1.0, 0.0, 0.0, alpha, xi, lambda)?;
    let edge = 110f64.to_radians();
    let px = unit
        .project(&Vec3::new(edge.sin(), 0.0, edge.cos()))
        .ok_or_else(|| Error::InvalidIntrinsics("110° ray outside the valid domain".into()))?;
    let f = 0.48 * width.min(height) as f64 / px.u;
    CameraIntrinsics::tscm(f, f, cx, cy, alpha, xi, lambda)
}

/// Intrinsics used by [`default_rig`]; λ ≠ 0 stands in for the housing and
/// water refraction.
pub fn default_intrinsics(width: usize, height: usize) -> CameraIntrinsics<f64> {
    fisheye_intrinsics(width, height, 0.58, -0.12, 0.1).expect("default intrinsics are valid")
}

/// Baseline of the bundled rig description, in meters.
pub const DEFAULT_BASELINE: f64 = 0.12;

/// Four-camera layout: two top cameras facing forward/backward, two bottom
/// cameras facing right/left. Each top camera is `baseline` away from each
/// bottom camera. The rig frame has its origin at the centroid of the camera
/// centers, +z along the forward top camera's axis and +y pointing down.
pub fn default_rig(baseline: f64) -> Result<RigConfig> {
    default_rig_with(baseline, default_intrinsics(1024, 1024))
}

pub fn default_rig_with(baseline: f64, intrinsics: CameraIntrinsics<f64>) -> Result<RigConfig> {
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(Error::InvalidArgument(format!("baseline must be positive, got {baseline}")));
    }
    // centers (0, -h, ±a) and (±a, h, 0) with h = a/2: adjacent distance a·√3
    let a = baseline / 3f64.sqrt();
    let h = a / 2.0;
    let x = Vec3::new(1.0, 0.0, 0.0);
    let y = Vec3::new(0.0, 1.0, 0.0);
    let z = Vec3::new(0.0, 0.0, 1.0);
    // camera axes (x right, y down, z forward) as rig-frame columns
    let layout = [
        (ids::TOP_FRONT, Vec3::new(0.0, -h, a), x, y, z),
        (ids::TOP_BACK, Vec3::new(0.0, -h, -a), -x, y, -z),
        (ids::BOTTOM_RIGHT, Vec3::new(a, h, 0.0), -z, y, x),
        (ids::BOTTOM_LEFT, Vec3::new(-a, h, 0.0), z, y, -x),
    ];
    let cameras = layout
        .into_iter()
        .map(|(id, c, cx, cy, cz)| {
            Ok(RigCamera {
                id,
                intrinsics,
                pose: Pose::new(Mat3::from_columns(cx, cy, cz), c)?,
                fov_deg: DEFAULT_FOV_DEG,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RigConfig::new(cameras, [ids::TOP_FRONT, ids::TOP_BACK])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
        let w = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let t = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        Pose::from_rotation_vector(&w, t)
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = random_pose(&mut rng);
            let e = a.compose(&a.inverse());
            assert!(e.rotation().orthonormality_error() < 1e-12);
            assert!((e.rotation().m[0][0] - 1.0).abs() < 1e-12);
            assert!(e.translation().norm() < 1e-12);
            assert!(e.rotation_angle_to(&Pose::identity()) < 1e-7);
        }
    }

    #[test]
    fn identity_transform_is_noop() {
        let p = Vec3::new(0.3, -1.2, 4.0);
        assert_eq!(Pose::<f64>::identity().transform(&p), p);
    }

    #[test]
    fn composition_is_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
            let p = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let lhs = a.compose(&b).transform(&p);
            let rhs = a.transform(&b.transform(&p));
            assert!((lhs - rhs).norm() < 1e-10);
            let c = a.compose(&b);
            assert!(c.rotation().orthonormality_error() < ROTATION_TOLERANCE);
            assert!((c.rotation().determinant() - 1.0).abs() < ROTATION_TOLERANCE);
        }
    }

    #[test]
    fn rotation_vector_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = random_pose(&mut rng);
            let w = a.rotation_vector();
            let back = Pose::from_rotation_vector(&w, a.translation());
            assert!(a.rotation_angle_to(&back) < 1e-7);
        }
    }

    #[test]
    fn rejects_improper_rotation() {
        let m = Mat3::from_rows([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]);
        assert!(Pose::new(m, Vec3::zero()).is_err());
    }

    #[test]
    fn default_rig_geometry() {
        let rig = default_rig(0.1).unwrap();
        let c = |id| rig.camera(id).unwrap();
        let adjacent = [
            (ids::TOP_FRONT, ids::BOTTOM_RIGHT),
            (ids::BOTTOM_RIGHT, ids::TOP_BACK),
            (ids::TOP_BACK, ids::BOTTOM_LEFT),
            (ids::BOTTOM_LEFT, ids::TOP_FRONT),
        ];
        for (a, b) in adjacent {
            assert!(((c(a).center() - c(b).center()).norm() - 0.1).abs() < 1e-12);
        }
        let top = c(ids::TOP_FRONT).optical_axis().dot(&c(ids::TOP_BACK).optical_axis());
        assert!((top + 1.0).abs() < 1e-15);
        for b in [ids::BOTTOM_RIGHT, ids::BOTTOM_LEFT] {
            for t in [ids::TOP_FRONT, ids::TOP_BACK] {
                assert!(c(b).optical_axis().dot(&c(t).optical_axis()).abs() < 1e-15);
            }
        }
        let centroid = rig.cameras.iter().fold(Vec3::zero(), |acc, cam| acc + cam.center()).scale(0.25);
        assert!(centroid.norm() < 1e-15);
        for cam in &rig.cameras {
            assert!((cam.pose.rotation().determinant() - 1.0).abs() < 1e-12);
        }
        assert_eq!(c(ids::TOP_FRONT).optical_axis(), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn default_lens_covers_220_degrees() {
        let rig = default_rig(0.12).unwrap();
        let cam = &rig.cameras[0];
        let edge = 109.9f64.to_radians();
        let p = Vec3::new(edge.sin(), 0.0, edge.cos());
        assert!(cam.sees(&p));
        let px = cam.intrinsics.project(&p).unwrap();
        assert!(px.u > 0.0 && px.u < 1024.0);
        let beyond = 110.5f64.to_radians();
        assert!(!cam.sees(&Vec3::new(beyond.sin(), 0.0, beyond.cos())));
    }

    #[test]
    fn rig_json_layout() {
        let rig = default_rig(0.12).unwrap();
        let s = rig.to_json_string().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v["cameras"][0]["pose"]["q"].as_array().unwrap().len() == 4);
        assert!(v["cameras"][0]["pose"]["t"].as_array().unwrap().len() == 3);
        assert!(v["cameras"][0]["intrinsics"]["model"] == "tscm");
        assert_eq!(v["reference_ids"], serde_json::json!([0, 1]));
        let back = RigConfig::from_json_str(&s).unwrap();
        for (a, b) in rig.cameras.iter().zip(&back.cameras) {
            assert!(a.pose.rotation_angle_to(&b.pose) < 1e-7);
            assert!((a.center() - b.center()).norm() < 1e-15);
        }
    }

    #[test]
    fn rig_validation() {
        let rig = default_rig(0.12).unwrap();
        assert!(RigConfig::new(rig.cameras.clone(), [0, 0]).is_err());
        assert!(RigConfig::new(rig.cameras.clone(), [0, 9]).is_err());
        assert!(RigConfig::new(rig.cameras[..1].to_vec(), [0, 1]).is_err());
        assert!(default_rig(0.0).is_err());
    }
}

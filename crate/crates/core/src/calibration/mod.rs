//! Intrinsic calibration from board corner observations.
//!
//! The objective is the Huber-robust reprojection error
//!
//! ```text
//! s* = argmin_s  Σ_n Σ_k ρ( ‖π(T_n·x_k, i) − u_nk‖² )
//! ```
//!
//! over the intrinsics `i` and one board-to-camera pose `T_n` per image.
//! `ρ(s) = s` for `s ≤ δ²` and `2δ√s − δ²` beyond, so the contribution is
//! the squared error inside the knee and grows linearly outside it.
//!
//! Each camera is calibrated on its own; [`compare_models`] fits DSCM and
//! TSCM on identical observations and [`ComparisonTable`] prints the result
//! in a per-camera layout.

mod init;
mod solver;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, ModelKind, Pixel};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::rig::Pose;
use crate::scalar::Real;

pub use init::{initial_intrinsics_guess, initialize, initialize_pose};
pub use solver::SolverOptions;

/// Default Huber knee, pixels.
pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

/// Fewest corners an image needs to take part in calibration.
pub const MIN_CORNERS_PER_IMAGE: usize = 4;

/// Fewest usable images for [`optimize`].
pub const MIN_IMAGES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardCorner {
    pub id: usize,
    pub xyz: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerObservation {
    pub id: usize,
    pub uv: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageCorners {
    pub id: usize,
    pub corners: Vec<CornerObservation>,
}

/// Detected board corners for a calibration sequence of one camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerObservations {
    pub board: Vec<BoardCorner>,
    pub images: Vec<ImageCorners>,
    /// Sensor size `[width, height]`; used for the initial guess and the
    /// penalty assigned to corners that leave the valid domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[usize; 2]>,
}

impl CornerObservations {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashMap::new();
        for b in &self.board {
            if b.xyz.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("board corner {} is not finite", b.id)));
            }
            if ids.insert(b.id, ()).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate board corner id {}", b.id)));
            }
        }
        for img in &self.images {
            for c in &img.corners {
                if !ids.contains_key(&c.id) {
                    return Err(Error::InvalidArgument(format!(
                        "image {} observes corner {} missing from the board",
                        img.id, c.id
                    )));
                }
                if c.uv.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("image {} corner {} is not finite", img.id, c.id)));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let obs: Self = serde_json::from_str(s)?;
        obs.validate()?;
        Ok(obs)
    }

    pub fn total_corners(&self) -> usize {
        self.images.iter().map(|i| i.corners.len()).sum()
    }

    /// Penalty residual magnitude for corners outside the valid domain: two
    /// image diagonals.
    pub fn invalid_penalty(&self) -> f64 {
        let [w, h] = self.image_size.unwrap_or_else(|| {
            let max_u = self.images.iter().flat_map(|i| &i.corners).map(|c| c.uv[0]).fold(1.0, f64::max);
            let max_v = self.images.iter().flat_map(|i| &i.corners).map(|c| c.uv[1]).fold(1.0, f64::max);
            [max_u.ceil() as usize, max_v.ceil() as usize]
        });
        2.0 * (w as f64).hypot(h as f64)
    }
}

/// Board-point/pixel pairs of one image, ready for residual evaluation.
#[derive(Clone, Debug)]
pub(crate) struct PreparedImage {
    pub id: usize,
    pub points: Vec<Vec3<f64>>,
    pub pixels: Vec<Pixel<f64>>,
}

/// Images with enough corners, in input order.
pub(crate) fn prepare(obs: &CornerObservations) -> Result<Vec<PreparedImage>> {
    obs.validate()?;
    let board: HashMap<usize, Vec3<f64>> = obs.board.iter().map(|b| (b.id, Vec3::from_array(b.xyz))).collect();
    Ok(obs
        .images
        .iter()
        .filter(|img| img.corners.len() >= MIN_CORNERS_PER_IMAGE)
        .map(|img| PreparedImage {
            id: img.id,
            points: img.corners.iter().map(|c| board[&c.id]).collect(),
            pixels: img.corners.iter().map(|c| Pixel::new(c.uv[0], c.uv[1])).collect(),
        })
        .collect())
}

/// Flat optimizer state `s = [i, T_0, …, T_n]`: the intrinsic parameters
/// followed by a rotation vector and translation per image.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    pub model: ModelKind,
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(intrinsics: &CameraIntrinsics<f64>, poses: &[Pose<f64>]) -> Self {
        let mut values = intrinsics.to_params();
        for p in poses {
            values.extend(p.rotation_vector().to_array());
            values.extend(p.translation().to_array());
        }
        Self {
            model: intrinsics.model,
            values,
        }
    }

    pub fn intrinsic_count(&self) -> usize {
        self.model.parameter_count()
    }

    pub fn pose_count(&self) -> usize {
        (self.values.len() - self.intrinsic_count()) / 6
    }

    pub fn intrinsics(&self) -> CameraIntrinsics<f64> {
        CameraIntrinsics::from_params(self.model, &self.values)
    }

    pub fn pose(&self, n: usize) -> Pose<f64> {
        let o = self.intrinsic_count() + 6 * n;
        let v = &self.values;
        Pose::from_rotation_vector(&Vec3::new(v[o], v[o + 1], v[o + 2]), Vec3::new(v[o + 3], v[o + 4], v[o + 5]))
    }

    pub fn poses(&self) -> Vec<Pose<f64>> {
        (0..self.pose_count()).map(|n| self.pose(n)).collect()
    }
}

/// Reprojection residual `π(T·x, i) − u` for one corner, generic over the
/// scalar so it can be differentiated with dual numbers. `intrinsics` holds
/// the model's parameters and `pose` the rotation vector and translation.
/// `None` when the transformed corner leaves the valid domain.
pub fn corner_residual<T: Real>(
    model: ModelKind,
    intrinsics: &[T],
    pose: &[T],
    point: &Vec3<f64>,
    observed: &Pixel<f64>,
) -> Option<[T; 2]> {
    let cam = CameraIntrinsics {
        model,
        fx: intrinsics[0],
        fy: intrinsics[1],
        cx: intrinsics[2],
        cy: intrinsics[3],
        alpha: intrinsics[4],
        xi: intrinsics[5],
        lambda: if model == ModelKind::Tscm { intrinsics[6] } else { T::zero() },
    };
    let t = Pose::from_rotation_vector(&Vec3::new(pose[0], pose[1], pose[2]), Vec3::new(pose[3], pose[4], pose[5]));
    let p = t.transform(&point.cast());
    let px = cam.project(&p)?;
    Some([px.u - T::lit(observed.u), px.v - T::lit(observed.v)])
}

/// Huber loss of a squared residual norm.
#[inline]
pub fn huber(squared_norm: f64, delta: f64) -> f64 {
    if squared_norm <= delta * delta {
        squared_norm
    } else {
        2.0 * delta * squared_norm.sqrt() - delta * delta
    }
}

/// IRLS weight `ρ'(s)` for a squared residual norm.
#[inline]
pub fn huber_weight(squared_norm: f64, delta: f64) -> f64 {
    if squared_norm <= delta * delta {
        1.0
    } else {
        delta / squared_norm.sqrt()
    }
}

/// Residuals of every observed corner at a parameter vector.
#[derive(Clone, Debug)]
pub struct ResidualSet {
    /// Per image, per corner residual (pixels).
    pub residuals: Vec<Vec<[f64; 2]>>,
    /// Per image, per corner: false when the corner left the valid domain
    /// and carries the fixed penalty residual instead.
    pub valid: Vec<Vec<bool>>,
    /// Images with more than half of their corners invalid.
    pub degenerate_images: Vec<usize>,
}

impl ResidualSet {
    pub fn robust_cost(&self, delta: f64) -> f64 {
        self.residuals
            .iter()
            .flatten()
            .map(|r| huber(r[0] * r[0] + r[1] * r[1], delta))
            .sum()
    }

    /// Mean pixel distance over valid corners, plus per-image means.
    pub fn reprojection_errors(&self) -> (f64, Vec<f64>) {
        let mut total = 0.0;
        let mut count = 0usize;
        let mut per_image = Vec::with_capacity(self.residuals.len());
        for (res, ok) in self.residuals.iter().zip(&self.valid) {
            let (mut s, mut n) = (0.0, 0usize);
            for (r, &v) in res.iter().zip(ok) {
                if v {
                    s += r[0].hypot(r[1]);
                    n += 1;
                }
            }
            total += s;
            count += n;
            per_image.push(if n > 0 { s / n as f64 } else { f64::NAN });
        }
        (if count > 0 { total / count as f64 } else { f64::NAN }, per_image)
    }
}

/// Residuals of all images for a parameter vector. Observations must be the
/// same set (in the same order) the parameter vector was built for.
pub fn residuals(s: &ParameterVector, obs: &CornerObservations) -> Result<ResidualSet> {
    let images = prepare(obs)?;
    if images.len() != s.pose_count() {
        return Err(Error::InvalidArgument(format!(
            "parameter vector has {} poses but {} usable images",
            s.pose_count(),
            images.len()
        )));
    }
    Ok(solver::evaluate(s, &images, obs.invalid_penalty()))
}

/// Finite-difference Jacobian block of image `n`: rows are the corner
/// residuals `(u, v)` in order, columns the intrinsics followed by the
/// image's rotation vector and translation. Row-major.
pub fn image_jacobian(s: &ParameterVector, obs: &CornerObservations, n: usize) -> Result<Vec<f64>> {
    let images = prepare(obs)?;
    let img = images
        .get(n)
        .ok_or_else(|| Error::InvalidArgument(format!("no usable image at index {n}")))?;
    if images.len() != s.pose_count() {
        return Err(Error::InvalidArgument("parameter vector does not match observations".into()));
    }
    Ok(solver::image_jacobian(s, n, img))
}

#[derive(Clone, Debug)]
pub struct CalibrationProblem {
    pub observations: CornerObservations,
    pub initial_intrinsics: Option<CameraIntrinsics<f64>>,
    pub initial_poses: Option<Vec<Pose<f64>>>,
    pub huber_delta: f64,
    pub model: ModelKind,
    pub solver: SolverOptions,
}

impl CalibrationProblem {
    pub fn new(observations: CornerObservations, model: ModelKind) -> Self {
        Self {
            observations,
            initial_intrinsics: None,
            initial_poses: None,
            huber_delta: DEFAULT_HUBER_DELTA,
            model,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_initial_intrinsics(mut self, i: CameraIntrinsics<f64>) -> Self {
        self.initial_intrinsics = Some(i);
        self
    }

    pub fn with_initial_poses(mut self, poses: Vec<Pose<f64>>) -> Self {
        self.initial_poses = Some(poses);
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub model: ModelKind,
    pub intrinsics: CameraIntrinsics<f64>,
    pub image_ids: Vec<usize>,
    pub poses: Vec<Pose<f64>>,
    pub mean_reprojection_error: f64,
    pub per_image_errors: Vec<f64>,
    pub degenerate_images: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    /// Robust objective after the initial evaluation and every accepted step.
    pub cost_history: Vec<f64>,
}

/// Minimizes the Huber reprojection objective. A result is returned even
/// when the iteration cap is hit; check `converged`.
pub fn optimize(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    if !(problem.huber_delta > 0.0) {
        return Err(Error::InvalidArgument("huber_delta must be positive".into()));
    }
    let images = prepare(&problem.observations)?;
    if images.len() < MIN_IMAGES {
        return Err(Error::DegenerateInput(format!(
            "need at least {MIN_IMAGES} images with {MIN_CORNERS_PER_IMAGE}+ corners, got {}",
            images.len()
        )));
    }
    let (intrinsics, poses) = initialize(problem)?;
    let s0 = ParameterVector::new(&intrinsics.with_model(problem.model), &poses);
    let penalty = problem.observations.invalid_penalty();

    let start = solver::evaluate(&s0, &images, penalty);
    let usable = start
        .valid
        .iter()
        .filter(|v| v.iter().filter(|&&b| b).count() >= MIN_CORNERS_PER_IMAGE)
        .count();
    if usable < MIN_IMAGES {
        return Err(Error::DegenerateInput(format!(
            "only {usable} images have {MIN_CORNERS_PER_IMAGE}+ corners in the valid domain at the initial guess"
        )));
    }

    let mut out = solver::levenberg_marquardt(s0, &images, penalty, problem.huber_delta, &problem.solver);
    let mut cost = *out.cost_history.last().expect("history starts with the initial cost");
    let mut iterations = out.iterations;
    if problem.initial_poses.is_none() {
        // Poses searched under rough intrinsics can land on the wrong side of
        // a planar board's tilt ambiguity. Search again under the fitted
        // intrinsics and keep the restart only if it lowers the objective.
        for _ in 0..MAX_RESEEDS {
            let Some(s1) = reseeded(&out.params, &images) else { break };
            let retry = solver::levenberg_marquardt(s1, &images, penalty, problem.huber_delta, &problem.solver);
            iterations += retry.iterations;
            let retry_cost = *retry.cost_history.last().expect("non-empty history");
            if retry_cost >= cost {
                break;
            }
            cost = retry_cost;
            out = retry;
        }
    }
    let res = solver::evaluate(&out.params, &images, penalty);
    let (mean, per_image) = res.reprojection_errors();
    Ok(CalibrationResult {
        model: problem.model,
        intrinsics: out.params.intrinsics(),
        image_ids: images.iter().map(|i| i.id).collect(),
        poses: out.params.poses(),
        mean_reprojection_error: mean,
        per_image_errors: per_image,
        degenerate_images: res.degenerate_images.iter().map(|&k| images[k].id).collect(),
        converged: out.converged,
        iterations,
        final_cost: res.robust_cost(problem.huber_delta),
        cost_history: out.cost_history,
    })
}

/// Pose searches repeated under fitted intrinsics.
const MAX_RESEEDS: usize = 2;

/// Poses differing by more than this from a fresh search are replaced.
const RESEED_ANGLE_DEG: f64 = 5.0;

/// The parameters with every pose that a fresh search under the current
/// intrinsics places elsewhere replaced; `None` when all poses agree.
fn reseeded(s: &ParameterVector, images: &[PreparedImage]) -> Option<ParameterVector> {
    let intrinsics = s.intrinsics();
    let mut poses = s.poses();
    let mut changed = false;
    for (pose, img) in poses.iter_mut().zip(images) {
        if let Ok((fresh, _)) = initialize_pose(&intrinsics, &img.points, &img.pixels) {
            if fresh.rotation_angle_to(pose).to_degrees() > RESEED_ANGLE_DEG {
                *pose = fresh;
                changed = true;
            }
        }
    }
    changed.then(|| ParameterVector::new(&intrinsics, &poses))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelComparison {
    pub dscm: CalibrationResult,
    pub tscm: CalibrationResult,
}

/// ξ seeds for starts from the sensor heuristic.
const XI_SEEDS: [f64; 4] = [-0.3, 0.0, 0.3, 0.6];

/// λ seeds around a DSCM optimum.
const LAMBDA_SEEDS: [f64; 4] = [-0.3, -0.15, 0.15, 0.3];

fn better(a: CalibrationResult, b: CalibrationResult) -> CalibrationResult {
    if b.final_cost < a.final_cost {
        b
    } else {
        a
    }
}

/// Best DSCM fit: a local run from the given intrinsics, or the best of
/// several ξ-seeded starts derived from the sensor heuristic.
fn calibrate_dscm(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    let mut p = problem.clone();
    p.model = ModelKind::Dscm;
    if problem.initial_intrinsics.is_some() {
        return optimize(&p);
    }
    let size = problem
        .observations
        .image_size
        .ok_or_else(|| Error::InvalidArgument("image_size is required when no initial intrinsics are given".into()))?;
    let base = initial_intrinsics_guess(ModelKind::Dscm, size);
    let mut best: Option<CalibrationResult> = None;
    let mut first_err = None;
    for xi in XI_SEEDS {
        let mut seed = base;
        // keep the near-axis image scale of the heuristic
        let scale = (1.0 + xi + base.w1()) / (1.0 + base.xi + base.w1());
        seed.fx *= scale;
        seed.fy *= scale;
        seed.xi = xi;
        p.initial_intrinsics = Some(seed);
        match optimize(&p) {
            Ok(r) => best = Some(match best {
                Some(b) => better(b, r),
                None => r,
            }),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start ran"))
}

/// TSCM fits started from a DSCM optimum: λ = 0 itself and λ seeds along
/// the valley where ξ and λ trade off, `ξ₀ = (ξ' − λ₀)/(1 − ξ'λ₀)`.
fn tscm_from_dscm(problem: &CalibrationProblem, dscm: &CalibrationResult) -> Result<CalibrationResult> {
    let mut p = problem.clone();
    p.model = ModelKind::Tscm;
    p.initial_poses = Some(dscm.poses.clone());
    let warm = dscm.intrinsics.with_model(ModelKind::Tscm);
    p.initial_intrinsics = Some(warm);
    let mut best = optimize(&p)?;
    let xi_d = warm.xi;
    for lambda in LAMBDA_SEEDS {
        let den = 1.0 - xi_d * lambda;
        if den.abs() < 1e-3 {
            continue;
        }
        let mut seed = warm;
        seed.lambda = lambda;
        seed.xi = (xi_d - lambda) / den;
        if seed.validate().is_err() {
            continue;
        }
        p.initial_intrinsics = Some(seed);
        if let Ok(r) = optimize(&p) {
            best = better(best, r);
        }
    }
    Ok(best)
}

/// Global-effort calibration. The (fx, ξ, α, λ) family is close to
/// degenerate and its objective has several local minima, so besides the
/// plain local run this tries several starts and keeps the lowest Huber
/// objective. For TSCM the DSCM optimum is a stationary point of the TSCM
/// objective (λ's first-order effect there is absorbed by the other
/// parameters), which is why the λ seeds are needed.
pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    match problem.model {
        ModelKind::Dscm => calibrate_dscm(problem),
        ModelKind::Tscm => Ok(compare_models(problem)?.tscm),
    }
}

/// Calibrates the same observations with both models. The TSCM candidates
/// include the DSCM optimum with λ = 0, so the TSCM objective never exceeds
/// the DSCM one.
pub fn compare_models(problem: &CalibrationProblem) -> Result<ModelComparison> {
    let dscm = calibrate_dscm(problem)?;
    let mut tscm = tscm_from_dscm(problem, &dscm)?;
    if problem.initial_intrinsics.is_some() {
        let mut cold = problem.clone();
        cold.model = ModelKind::Tscm;
        if let Ok(r) = optimize(&cold) {
            tscm = better(tscm, r);
        }
    }
    Ok(ModelComparison { dscm, tscm })
}

/// Per-camera mean reprojection errors of both models plus their average.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub camera: String,
    pub dscm_error: f64,
    pub tscm_error: f64,
}

impl ComparisonTable {
    pub fn push(&mut self, camera: impl Into<String>, cmp: &ModelComparison) {
        self.rows.push(ComparisonRow {
            camera: camera.into(),
            dscm_error: cmp.dscm.mean_reprojection_error,
            tscm_error: cmp.tscm.mean_reprojection_error,
        });
    }

    pub fn average(&self) -> (f64, f64) {
        let n = self.rows.len().max(1) as f64;
        (
            self.rows.iter().map(|r| r.dscm_error).sum::<f64>() / n,
            self.rows.iter().map(|r| r.tscm_error).sum::<f64>() / n,
        )
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mean reprojection error (pixels)")?;
        writeln!(f, "{:<10} | {:>12} | {:>12}", "Camera", "DSCM Error", "TSCM Error")?;
        writeln!(f, "{:-<10}-+-{:->12}-+-{:->12}", "", "", "")?;
        for r in &self.rows {
            writeln!(f, "{:<10} | {:>12} | {:>12}", r.camera, fmt_err(r.dscm_error), fmt_err(r.tscm_error))?;
        }
        let (d, t) = self.average();
        writeln!(f, "{:-<10}-+-{:->12}-+-{:->12}", "", "", "")?;
        write!(f, "{:<10} | {:>12} | {:>12}", "Average", fmt_err(d), fmt_err(t))
    }
}

fn fmt_err(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_is_quadratic_then_linear_with_matching_slope() {
        let d = 1.5;
        assert_eq!(huber(1.0, d), 1.0);
        assert_eq!(huber(d * d, d), d * d);
        // slope in the norm r: 2r inside, 2δ outside; equal at r = δ
        let h = 1e-6;
        let f = |r: f64| huber(r * r, d);
        let left = (f(d) - f(d - h)) / h;
        let right = (f(d + h) - f(d)) / h;
        assert!((left - 2.0 * d).abs() < 1e-5 && (right - 2.0 * d).abs() < 1e-5);
        // linear growth beyond the knee
        assert!(((f(10.0) - f(9.0)) - 2.0 * d).abs() < 1e-12);
        assert_eq!(huber_weight(0.5, d), 1.0);
        assert!((huber_weight(9.0, d) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_corner_ids() {
        let obs = CornerObservations {
            board: vec![BoardCorner { id: 0, xyz: [0.0; 3] }],
            images: vec![ImageCorners {
                id: 0,
                corners: vec![CornerObservation { id: 7, uv: [1.0, 2.0] }],
            }],
            image_size: None,
        };
        assert!(obs.validate().is_err());
    }

    #[test]
    fn json_schema() {
        let s = r#"{"board":[{"id":0,"xyz":[0,0,0]}],"images":[{"id":3,"corners":[{"id":0,"uv":[10.5,20.0]}]}]}"#;
        let obs = CornerObservations::from_json_str(s).unwrap();
        assert_eq!(obs.images[0].corners[0].uv, [10.5, 20.0]);
        assert_eq!(obs.image_size, None);
    }

    #[test]
    fn table_layout() {
        let t = ComparisonTable {
            rows: vec![
                ComparisonRow {
                    camera: "1".into(),
                    dscm_error: 2.12,
                    tscm_error: 2.11,
                },
                ComparisonRow {
                    camera: "2".into(),
                    dscm_error: 1.89,
                    tscm_error: 1.81,
                },
            ],
        };
        let s = t.to_string();
        assert!(s.contains("DSCM Error") && s.contains("TSCM Error"));
        assert!(s.lines().last().unwrap().starts_with("Average"));
        assert!(s.contains("2.00") && s.contains("1.96"));
    }
}

//! Self-check suites run by `omnisweep check`.
//!
//! Each suite draws its inputs from a seeded generator and compares the
//! pipeline against an independent evaluation: projection round trips, the
//! DSCM code path against TSCM with λ = 0, brute-force camera selection,
//! filter invariants, and calibration on rendered corners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::{optimize, CalibrationProblem};
use crate::camera::{dscm_in_valid_domain, dscm_project, dscm_unproject, CameraIntrinsics, ModelKind, Pixel};
use crate::image::RgbImage;
use crate::linalg::Vec3;
use crate::rig::{default_rig, fisheye_intrinsics, DEFAULT_BASELINE};
use crate::spherical::SphericalCoord;
use crate::sweep::{aggregate_slice, refine_minimum, select_camera, selection_score, DistanceCandidates, MAX_COST};
use crate::synth::{board_poses, render_corners, ChessBoard};

/// Round-trip tolerance, radians.
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-8;
/// Agreement required between DSCM and TSCM with λ = 0.
pub const REDUCTION_TOLERANCE: f64 = 1e-12;
const REDUCTION_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Roundtrip,
    Sweep,
    Calib,
    All,
}

impl std::str::FromStr for Suite {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "roundtrip" => Ok(Suite::Roundtrip),
            "sweep" => Ok(Suite::Sweep),
            "calib" => Ok(Suite::Calib),
            "all" => Ok(Suite::All),
            other => Err(crate::error::Error::InvalidArgument(format!("unknown suite {other:?}"))),
        }
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Random intrinsics of either model with a 220°-class lens shape.
pub fn random_intrinsics(rng: &mut impl Rng, model: ModelKind) -> CameraIntrinsics<f64> {
    let f = rng.random_range(150.0..600.0);
    let lambda = match model {
        ModelKind::Tscm => rng.random_range(-0.4..0.4),
        ModelKind::Dscm => 0.0,
    };
    CameraIntrinsics {
        model,
        fx: f,
        fy: f * rng.random_range(0.95..1.05),
        cx: rng.random_range(400.0..600.0),
        cy: rng.random_range(400.0..600.0),
        alpha: rng.random_range(0.2..0.8),
        xi: rng.random_range(-0.5..0.5),
        lambda,
    }
}

/// Uniform random direction scaled to a random range, resampled until it
/// lies in the model's valid domain.
pub fn random_point_in_domain(rng: &mut impl Rng, intr: &CameraIntrinsics<f64>) -> Vec3<f64> {
    loop {
        let z: f64 = rng.random_range(-1.0..1.0);
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).sqrt();
        let p = Vec3::new(r * t.cos(), r * t.sin(), z).scale(rng.random_range(0.1..100.0));
        if intr.in_valid_domain(&p) && intr.project(&p).is_some() {
            return p;
        }
    }
}

/// Worst angle between a point and the unprojection of its projection.
pub fn round_trip_error(intr: &CameraIntrinsics<f64>, points: &[Vec3<f64>]) -> f64 {
    points
        .iter()
        .map(|p| {
            let px = intr.project(p).expect("point in domain");
            intr.unproject(&px).map_or(f64::INFINITY, |r| r.direction().angle_to(p))
        })
        .fold(0.0, f64::max)
}

/// Difference of two projections in normalized image coordinates, relative
/// to their magnitude once it exceeds one (far off-axis points land
/// thousands of pixels out, where only relative precision is meaningful).
pub fn projection_difference(intr: &CameraIntrinsics<f64>, a: &Pixel<f64>, b: &Pixel<f64>) -> f64 {
    let norm = |p: &Pixel<f64>| ((p.u - intr.cx) / intr.fx, (p.v - intr.cy) / intr.fy);
    let ((ax, ay), (bx, by)) = (norm(a), norm(b));
    let scale = bx.abs().max(by.abs()).max(1.0);
    (ax - bx).abs().max((ay - by).abs()) / scale
}

pub fn roundtrip_suite(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, model) in [("round trip DSCM", ModelKind::Dscm), ("round trip TSCM", ModelKind::Tscm)] {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let intr = random_intrinsics(&mut rng, model);
            let pts: Vec<_> = (0..500).map(|_| random_point_in_domain(&mut rng, &intr)).collect();
            worst = worst.max(round_trip_error(&intr, &pts));
        }
        out.push(check(name, worst < ROUND_TRIP_TOLERANCE, format!("worst angle {worst:.2e} rad")));
    }

    let mut worst = 0.0f64;
    let mut mismatched = 0;
    for _ in 0..REDUCTION_SAMPLES {
        let d = random_intrinsics(&mut rng, ModelKind::Dscm);
        let t = d.with_model(ModelKind::Tscm);
        let p = Vec3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        if t.in_valid_domain(&p) != dscm_in_valid_domain(&p, &d) {
            mismatched += 1;
        }
        if let (Some(a), Some(b)) = (t.project(&p), dscm_project(&p, &d)) {
            worst = worst.max(projection_difference(&d, &a, &b));
        }
        let px = Pixel::new(rng.random_range(0.0..1024.0), rng.random_range(0.0..1024.0));
        match (t.unproject(&px), dscm_unproject(&px, &d)) {
            (Some(a), Some(b)) => worst = worst.max(a.direction().angle_to(&b.direction())),
            (None, None) => {}
            _ => mismatched += 1,
        }
    }
    out.push(check(
        "lambda = 0 reduces to DSCM",
        worst < REDUCTION_TOLERANCE && mismatched == 0,
        format!("worst difference {worst:.2e}, {mismatched} domain mismatches"),
    ));
    out
}

pub fn sweep_suite(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let rig = default_rig(DEFAULT_BASELINE).expect("default rig");
    let cands = DistanceCandidates::inverse_uniform(0.3, 50.0, 32).expect("candidates");

    let mut disagreements = 0;
    for _ in 0..500 {
        let coord = SphericalCoord::new(rng.random_range(-1.9..1.9), rng.random_range(-1.5..1.5));
        let reference = rig.camera(rig.reference_ids[0]).expect("reference");
        let d = coord.direction();
        let near = reference.pose.transform(&d.scale(cands.d_min()));
        let far = reference.pose.transform(&d.scale(cands.d_max()));
        let scores: Vec<(usize, f64)> = rig
            .cameras
            .iter()
            .filter(|c| c.id != reference.id)
            .filter_map(|c| selection_score(c, &near, &far).map(|q| (c.id, q)))
            .collect();
        let top = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let best = scores.iter().filter(|s| s.1 >= top * (1.0 - 1e-12)).min_by_key(|s| s.0);
        if select_camera(reference.id, &coord, &rig, &cands).ok() != best.map(|b| b.0) {
            disagreements += 1;
        }
    }
    out.push(check(
        "camera selection",
        disagreements == 0,
        format!("{disagreements} of 500 directions disagree with exhaustive search"),
    ));

    let guide = RgbImage::from_fn(64, 48, |x, y| {
        let v = if x < 31 { 0.2 } else { 0.8 };
        [v, v * 0.5 + 0.01 * (y % 3) as f32, 0.3]
    });
    let mut constant = vec![0.75f32; 64 * 48];
    aggregate_slice(&mut constant, &guide, 0.05, 3);
    let keep = constant.iter().all(|&v| (v as f64 - 0.75).abs() <= 1e-12);
    out.push(check("aggregation keeps constants", keep, "0.75 slice".into()));

    let noise: Vec<f32> = (0..64 * 48).map(|_| rng.random_range(0.0..MAX_COST)).collect();
    let (lo, hi) = noise.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let mut filtered = noise.clone();
    aggregate_slice(&mut filtered, &guide, 0.05, 3);
    let bounded = filtered.iter().all(|&v| v >= lo && v <= hi);
    out.push(check("aggregation stays in range", bounded, format!("input range [{lo:.3}, {hi:.3}]")));

    let mut moved = 0;
    for _ in 0..1000 {
        let row: Vec<f32> = (0..32).map(|_| rng.random_range(0.0..MAX_COST)).collect();
        if let Some((i, f)) = refine_minimum(&row) {
            if (f - i as f64).abs() > 1.0 {
                moved += 1;
            }
        }
    }
    out.push(check("refinement stays within a layer", moved == 0, format!("{moved} of 1000 rows")));
    out
}

pub fn calib_suite(seed: u64) -> Vec<CheckResult> {
    let size = [1024, 1024];
    let truth = fisheye_intrinsics(size[0], size[1], 0.58, -0.12, 0.1).expect("intrinsics");
    let poses = board_poses(8, 85.0, seed);
    let mut out = Vec::new();
    let obs = match render_corners(&ChessBoard::default(), &truth, size, &poses, 0.0, seed) {
        Ok(o) => o,
        Err(e) => return vec![check("calibration recovery", false, e.to_string())],
    };
    let start = CameraIntrinsics::from_params(
        ModelKind::Tscm,
        &truth.to_params().iter().map(|v| v * 1.05).collect::<Vec<_>>(),
    );
    match optimize(&CalibrationProblem::new(obs, ModelKind::Tscm).with_initial_intrinsics(start)) {
        Ok(r) => {
            let rel = r
                .intrinsics
                .to_params()
                .iter()
                .zip(truth.to_params())
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0, f64::max);
            out.push(check(
                "calibration recovery",
                r.mean_reprojection_error < 1e-6 && rel < 1e-3,
                format!("error {:.2e} px, worst relative parameter error {rel:.2e}", r.mean_reprojection_error),
            ));
        }
        Err(e) => out.push(check("calibration recovery", false, e.to_string())),
    }
    out
}

pub fn run(suite: Suite, seed: u64) -> Vec<CheckResult> {
    match suite {
        Suite::Roundtrip => roundtrip_suite(seed),
        Suite::Sweep => sweep_suite(seed),
        Suite::Calib => calib_suite(seed),
        Suite::All => {
            let mut v = roundtrip_suite(seed);
            v.extend(sweep_suite(seed));
            v.extend(calib_suite(seed));
            v
        }
    }
}

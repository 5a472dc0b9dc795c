use omnisweep::calibration::{
    calibrate, compare_models, corner_residual, image_jacobian, initialize_pose, optimize, residuals, CalibrationProblem,
    CornerObservations, ParameterVector,
};
use omnisweep::camera::{CameraIntrinsics, ModelKind, Pixel};
use omnisweep::dual::Dual;
use omnisweep::error::Error;
use omnisweep::linalg::Vec3;
use omnisweep::rig::{fisheye_intrinsics, Pose};
use omnisweep::synth::{board_poses, render_corners, ChessBoard};

const SIZE: [usize; 2] = [1024, 1024];

fn truth() -> CameraIntrinsics<f64> {
    fisheye_intrinsics(SIZE[0], SIZE[1], 0.58, -0.12, 0.1).unwrap()
}

fn perturbed(i: &CameraIntrinsics<f64>, frac: f64) -> CameraIntrinsics<f64> {
    let p: Vec<f64> = i
        .to_params()
        .iter()
        .map(|v| v * (1.0 + frac))
        .collect();
    CameraIntrinsics::from_params(i.model, &p)
}

fn dataset(cam: &CameraIntrinsics<f64>, boards: usize, sigma: f64, seed: u64) -> (CornerObservations, Vec<Pose<f64>>) {
    let poses = board_poses(boards, 85.0, seed);
    let obs = render_corners(&ChessBoard::default(), cam, SIZE, &poses, sigma, seed ^ 0xABCD).unwrap();
    (obs, poses)
}

#[test]
fn residuals_vanish_at_ground_truth() {
    let cam = truth();
    let (obs, poses) = dataset(&cam, 8, 0.0, 1);
    let s = ParameterVector::new(&cam, &poses);
    let res = residuals(&s, &obs).unwrap();
    let worst = res.residuals.iter().flatten().map(|r| r[0].hypot(r[1])).fold(0.0, f64::max);
    assert!(worst < 1e-9, "worst residual {worst}");
    assert!(res.valid.iter().flatten().all(|&v| v));
}

#[test]
fn noise_free_recovery_from_perturbed_start() {
    let cam = truth();
    let (obs, _) = dataset(&cam, 8, 0.0, 2);
    let problem = CalibrationProblem::new(obs, ModelKind::Tscm).with_initial_intrinsics(perturbed(&cam, 0.05));
    let result = optimize(&problem).unwrap();
    assert!(result.converged);
    assert!(result.mean_reprojection_error < 1e-6, "{}", result.mean_reprojection_error);
    for (a, b) in result.intrinsics.to_params().iter().zip(cam.to_params()) {
        assert!(((a - b) / b).abs() < 1e-3, "{a} vs {b}");
    }
}

#[test]
fn noisy_corners_give_noise_level_error() {
    let cam = truth();
    for seed in 0..3 {
        let (obs, _) = dataset(&cam, 8, 0.5, 100 + seed);
        let problem = CalibrationProblem::new(obs, ModelKind::Tscm).with_initial_intrinsics(perturbed(&cam, 0.05));
        let result = optimize(&problem).unwrap();
        let e = result.mean_reprojection_error;
        assert!((0.3..=0.7).contains(&e), "seed {seed}: {e}");
    }
}

#[test]
fn objective_never_increases() {
    let cam = truth();
    for seed in 0..4 {
        let (obs, _) = dataset(&cam, 6, 1.0, 200 + seed);
        let problem = CalibrationProblem::new(obs, ModelKind::Tscm).with_initial_intrinsics(perturbed(&cam, 0.08));
        let result = optimize(&problem).unwrap();
        assert!(result.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(result.final_cost <= result.cost_history[0]);
    }
}

#[test]
fn multi_start_from_sensor_heuristic_reaches_truth() {
    let cam = truth();
    for seed in 1..4 {
        let (obs, _) = dataset(&cam, 8, 0.0, seed);
        let result = calibrate(&CalibrationProblem::new(obs, ModelKind::Tscm)).unwrap();
        assert!(result.mean_reprojection_error < 1e-6, "seed {seed}: {}", result.mean_reprojection_error);
    }
}

#[test]
fn single_local_run_can_stall_in_the_dscm_valley() {
    // documents why calibrate() multi-starts: TSCM started on the DSCM
    // optimum does not move away from lambda = 0
    let cam = fisheye_intrinsics(SIZE[0], SIZE[1], 0.58, -0.12, 0.3).unwrap();
    let (obs, _) = dataset(&cam, 10, 0.0, 3);
    let dscm = optimize(&CalibrationProblem::new(obs.clone(), ModelKind::Dscm).with_initial_intrinsics(cam.with_model(ModelKind::Dscm)))
        .unwrap();
    assert!(dscm.mean_reprojection_error > 1e-3);
    let warm = CalibrationProblem::new(obs, ModelKind::Tscm)
        .with_initial_intrinsics(dscm.intrinsics.with_model(ModelKind::Tscm))
        .with_initial_poses(dscm.poses.clone());
    let stuck = optimize(&warm).unwrap();
    assert!(stuck.intrinsics.lambda.abs() < 1e-6);
    assert!((stuck.final_cost - dscm.final_cost).abs() <= 1e-6 * dscm.final_cost);
}

#[test]
fn finite_difference_jacobian_matches_dual_numbers() {
    let cam = truth();
    let (obs, poses) = dataset(&cam, 3, 0.0, 4);
    let s = ParameterVector::new(&perturbed(&cam, 0.02), &poses);
    let k = s.intrinsic_count();
    let cols = k + 6;
    let board: std::collections::HashMap<usize, Vec3<f64>> =
        obs.board.iter().map(|b| (b.id, Vec3::from_array(b.xyz))).collect();
    for n in 0..s.pose_count() {
        let jac = image_jacobian(&s, &obs, n).unwrap();
        let pose_vals = &s.values[k + 6 * n..k + 6 * n + 6];
        for (j, c) in obs.images[n].corners.iter().enumerate() {
            for col in 0..cols {
                let seed = |vals: &[f64], offset: usize| -> Vec<Dual> {
                    vals.iter()
                        .enumerate()
                        .map(|(i, &v)| if i + offset == col { Dual::variable(v) } else { Dual::constant(v) })
                        .collect()
                };
                let intr = seed(&s.values[..k], 0);
                let pose = seed(pose_vals, k);
                let r = corner_residual(ModelKind::Tscm, &intr, &pose, &board[&c.id], &Pixel::new(c.uv[0], c.uv[1]))
                    .unwrap();
                for (row, d) in [(2 * j, r[0].eps), (2 * j + 1, r[1].eps)] {
                    let fd = jac[row * cols + col];
                    assert!((fd - d).abs() <= 1e-5 * (1.0 + d.abs()), "image {n} corner {j} col {col}: {fd} vs {d}");
                }
            }
        }
    }
}

#[test]
fn initializer_recovers_frontal_board() {
    let cam = truth();
    let truth_pose = Pose::from_translation(Vec3::new(0.0, 0.0, 1.0));
    let board = ChessBoard::default();
    let pts: Vec<Vec3<f64>> = board.corners().iter().map(|c| Vec3::from_array(c.xyz)).collect();
    let px: Vec<Pixel<f64>> = pts.iter().map(|p| cam.project(&truth_pose.transform(p)).unwrap()).collect();
    let guess = perturbed(&cam, 0.05);
    let (pose, _) = initialize_pose(&guess, &pts, &px).unwrap();
    assert!(pose.rotation_angle_to(&truth_pose).to_degrees() < 10.0);
    assert!((pose.translation() - truth_pose.translation()).norm() < 0.3);
}

#[test]
fn too_few_images_is_degenerate() {
    let cam = truth();
    let (obs, _) = dataset(&cam, 2, 0.0, 5);
    let problem = CalibrationProblem::new(obs, ModelKind::Tscm).with_initial_intrinsics(cam);
    assert!(matches!(optimize(&problem), Err(Error::DegenerateInput(_))));
}

#[test]
fn refraction_favors_the_triple_sphere_model() {
    let refractive = fisheye_intrinsics(SIZE[0], SIZE[1], 0.58, -0.12, 0.6).unwrap();
    let (obs, _) = dataset(&refractive, 8, 0.5, 6);
    let cmp = compare_models(&CalibrationProblem::new(obs, ModelKind::Tscm).with_initial_intrinsics(perturbed(&refractive, 0.03)))
        .unwrap();
    assert!(cmp.tscm.mean_reprojection_error < cmp.dscm.mean_reprojection_error);
    assert!(cmp.tscm.final_cost <= cmp.dscm.final_cost);

    let plain = fisheye_intrinsics(SIZE[0], SIZE[1], 0.58, -0.12, 0.0).unwrap();
    let (obs, _) = dataset(&plain, 8, 0.5, 7);
    let cmp = compare_models(&CalibrationProblem::new(obs, ModelKind::Tscm).with_initial_intrinsics(perturbed(&plain, 0.03)))
        .unwrap();
    let (d, t) = (cmp.dscm.mean_reprojection_error, cmp.tscm.mean_reprojection_error);
    assert!((d - t).abs() / d < 0.05, "{d} vs {t}");
}

//! Levenberg–Marquardt with iteratively reweighted Huber residuals.
//!
//! Jacobians are central differences computed one image block at a time:
//! each image's residuals depend only on the shared intrinsics and that
//! image's own six pose parameters, so the normal matrix is assembled from
//! small dense blocks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{corner_residual, huber_weight, ParameterVector, PreparedImage, ResidualSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when `‖δ‖ ≤ tol·(‖s‖ + tol)`.
    pub step_tolerance: f64,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            step_tolerance: 1e-14,
            gradient_tolerance: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

const MAX_DAMPING: f64 = 1e16;
const GAUSS_NEWTON_DAMPING: f64 = 1e-6;

pub(crate) struct SolverOutput {
    pub params: ParameterVector,
    pub converged: bool,
    pub iterations: usize,
    pub cost_history: Vec<f64>,
}

fn pose_slice(s: &ParameterVector, n: usize) -> &[f64] {
    let o = s.intrinsic_count() + 6 * n;
    &s.values[o..o + 6]
}

fn image_residuals(
    s: &ParameterVector,
    intrinsics: &[f64],
    pose: &[f64],
    img: &PreparedImage,
    penalty: f64,
) -> (Vec<[f64; 2]>, Vec<bool>) {
    img.points
        .iter()
        .zip(&img.pixels)
        .map(|(x, u)| match corner_residual(s.model, intrinsics, pose, x, u) {
            Some(r) if r[0].is_finite() && r[1].is_finite() => (r, true),
            _ => ([penalty, 0.0], false),
        })
        .unzip()
}

pub(crate) fn evaluate(s: &ParameterVector, images: &[PreparedImage], penalty: f64) -> ResidualSet {
    let k = s.intrinsic_count();
    let per: Vec<_> = images
        .par_iter()
        .enumerate()
        .map(|(n, img)| image_residuals(s, &s.values[..k], pose_slice(s, n), img, penalty))
        .collect();
    let mut degenerate_images = Vec::new();
    let (residuals, valid): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    for (n, v) in valid.iter().enumerate() {
        let bad = v.iter().filter(|&&ok| !ok).count();
        if 2 * bad > v.len() {
            degenerate_images.push(n);
        }
    }
    ResidualSet {
        residuals,
        valid,
        degenerate_images,
    }
}

fn step_size(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Central-difference Jacobian of one image's residuals with respect to the
/// intrinsics and that image's pose. Row-major, `2·corners × (k + 6)`.
/// Rows of corners that are invalid at any of the evaluation points are
/// zero.
pub(crate) fn image_jacobian(s: &ParameterVector, n: usize, img: &PreparedImage) -> Vec<f64> {
    let k = s.intrinsic_count();
    let cols = k + 6;
    let m = img.points.len();
    let mut intr = s.values[..k].to_vec();
    let mut pose = pose_slice(s, n).to_vec();
    let (_, base_ok) = image_residuals(s, &intr, &pose, img, 0.0);
    let mut jac = vec![0.0; 2 * m * cols];
    for c in 0..cols {
        let slot = if c < k { &mut intr[c] } else { &mut pose[c - k] };
        let orig = *slot;
        let h = step_size(orig);
        *slot = orig + h;
        let (rp, okp) = image_residuals(s, &intr, &pose, img, 0.0);
        let slot = if c < k { &mut intr[c] } else { &mut pose[c - k] };
        *slot = orig - h;
        let (rm, okm) = image_residuals(s, &intr, &pose, img, 0.0);
        let slot = if c < k { &mut intr[c] } else { &mut pose[c - k] };
        *slot = orig;
        for j in 0..m {
            if base_ok[j] && okp[j] && okm[j] {
                jac[(2 * j) * cols + c] = (rp[j][0] - rm[j][0]) / (2.0 * h);
                jac[(2 * j + 1) * cols + c] = (rp[j][1] - rm[j][1]) / (2.0 * h);
            }
        }
    }
    jac
}

/// Weighted normal equations `H = Σ Jᵀ W J`, `g = Σ Jᵀ W r`.
fn normal_equations(
    s: &ParameterVector,
    images: &[PreparedImage],
    res: &ResidualSet,
    delta: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let k = s.intrinsic_count();
    let cols = k + 6;
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = images
        .par_iter()
        .enumerate()
        .map(|(n, img)| {
            let jac = image_jacobian(s, n, img);
            let mut h = vec![0.0; cols * cols];
            let mut g = vec![0.0; cols];
            for (j, r) in res.residuals[n].iter().enumerate() {
                let w = huber_weight(r[0] * r[0] + r[1] * r[1], delta);
                for (row, rv) in [(2 * j, r[0]), (2 * j + 1, r[1])] {
                    let jr = &jac[row * cols..(row + 1) * cols];
                    for a in 0..cols {
                        if jr[a] == 0.0 {
                            continue;
                        }
                        g[a] += w * jr[a] * rv;
                        for b in a..cols {
                            h[a * cols + b] += w * jr[a] * jr[b];
                        }
                    }
                }
            }
            (h, g)
        })
        .collect();

    let dim = s.values.len();
    let mut hm = DMatrix::zeros(dim, dim);
    let mut gv = DVector::zeros(dim);
    let global = |n: usize, c: usize| if c < k { c } else { k + 6 * n + (c - k) };
    for (n, (h, g)) in blocks.iter().enumerate() {
        for a in 0..cols {
            gv[global(n, a)] += g[a];
            for b in a..cols {
                let v = h[a * cols + b];
                let (ga, gb) = (global(n, a), global(n, b));
                hm[(ga, gb)] += v;
                if ga != gb {
                    hm[(gb, ga)] += v;
                }
            }
        }
    }
    (hm, gv)
}

pub(crate) fn levenberg_marquardt(
    mut s: ParameterVector,
    images: &[PreparedImage],
    penalty: f64,
    delta: f64,
    opts: &SolverOptions,
) -> SolverOutput {
    let mut res = evaluate(&s, images, penalty);
    let mut cost = res.robust_cost(delta);
    let mut history = vec![cost];
    let mut mu = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let (h, g) = normal_equations(&s, images, &res, delta);
        if g.amax() <= opts.gradient_tolerance {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * h.diagonal().amax().max(1e-300);
        loop {
            let mut a = h.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu * h[(i, i)].max(diag_floor);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 4.0;
                if mu > MAX_DAMPING {
                    converged = true;
                    break 'outer;
                }
                continue;
            };
            let step = chol.solve(&(-&g));
            let s_norm = s.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            // heavy damping also shortens steps, so only a near Gauss-Newton
            // step counts as a small-step stop
            if step.norm() <= opts.step_tolerance * (s_norm + opts.step_tolerance) && mu <= GAUSS_NEWTON_DAMPING {
                converged = true;
                break 'outer;
            }
            let mut trial = s.clone();
            for (v, d) in trial.values.iter_mut().zip(step.iter()) {
                *v += d;
            }
            let trial_res = evaluate(&trial, images, penalty);
            let trial_cost = trial_res.robust_cost(delta);
            if trial_cost < cost {
                s = trial;
                res = trial_res;
                cost = trial_cost;
                history.push(cost);
                mu = (mu / 3.0).max(1e-15);
                break;
            }
            mu *= 4.0;
            if mu > MAX_DAMPING {
                // no step lowers the objective: a numerical minimum
                converged = true;
                break 'outer;
            }
        }
    }
    log::debug!("LM finished after {iterations} iterations, cost {cost:.6e}, converged {converged}");
    SolverOutput {
        params: s,
        converged,
        iterations,
        cost_history: history,
    }
}

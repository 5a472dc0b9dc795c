//! Ray-casting ground truth: textured analytic scenes rendered through the
//! camera models, plus calibration board corner observations.
//!
//! Spheres and planes are surfaces, so a camera may sit inside a sphere (the
//! usual "room" setup); it may not sit on one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{BoardCorner, CornerObservation, CornerObservations, ImageCorners};
use crate::camera::{CameraIntrinsics, Pixel};
use crate::error::{Error, Result};
use crate::image::{Plane, Rgb, RgbImage};
use crate::linalg::{Mat3, Vec3};
use crate::rig::{Pose, RigCamera, RigConfig};
use crate::spherical::SphericalGrid;

/// Closest distance a camera center may have to any surface.
pub const MIN_SURFACE_CLEARANCE: f64 = 0.01;

/// Distance written for pixels with no valid ray or no hit.
pub use crate::sweep::DISTANCE_SENTINEL;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerNoise {
    /// Checker cell size, meters.
    pub cell: f64,
    /// Feature size of the value noise, meters.
    pub noise_scale: f64,
    /// Brightness modulation of the noise, 0..1.
    pub noise_amplitude: f64,
    /// Noise octaves, each at twice the frequency of the previous.
    pub octaves: u32,
    /// Edge softness: 0 gives a sinusoidal pattern, large values a hard
    /// checker.
    pub sharpness: f64,
    pub seed: u64,
    pub colors: [Rgb; 2],
}

impl Default for CheckerNoise {
    fn default() -> Self {
        Self {
            cell: 0.3,
            noise_scale: 0.2,
            noise_amplitude: 0.35,
            octaves: 2,
            sharpness: 2.0,
            seed: 0,
            colors: [[0.10, 0.22, 0.30], [0.80, 0.78, 0.62]],
        }
    }
}

/// Procedural surface texture, evaluated at world points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Texture {
    Solid { color: Rgb },
    CheckerNoise(CheckerNoise),
}

impl Default for Texture {
    fn default() -> Self {
        Texture::CheckerNoise(CheckerNoise::default())
    }
}

fn hash3(x: i64, y: i64, z: i64, seed: u64) -> f64 {
    let mut h = seed.wrapping_mul(0xD6E8_FEB8_6659_FD93)
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinearly interpolated lattice noise in [0, 1].
fn value_noise(p: Vec3<f64>, seed: u64) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let (tx, ty, tz) = (smooth(p.x - fx), smooth(p.y - fy), smooth(p.z - fz));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let mut c = [0.0; 4];
    for (k, slot) in c.iter_mut().enumerate() {
        let (dy, dz) = ((k & 1) as i64, (k >> 1) as i64);
        *slot = lerp(hash3(ix, iy + dy, iz + dz, seed), hash3(ix + 1, iy + dy, iz + dz, seed), tx);
    }
    lerp(lerp(c[0], c[1], ty), lerp(c[2], c[3], ty), tz)
}

fn fbm(p: Vec3<f64>, seed: u64, octaves: u32) -> f64 {
    let (mut sum, mut amp, mut norm, mut q) = (0.0, 1.0, 0.0, p);
    for octave in 0..octaves.max(1) as u64 {
        sum += amp * value_noise(q, seed.wrapping_add(octave));
        norm += amp;
        amp *= 0.5;
        q = q.scale(2.0);
    }
    sum / norm
}

impl Texture {
    pub fn color(&self, p: &Vec3<f64>) -> Rgb {
        match self {
            Texture::Solid { color } => *color,
            Texture::CheckerNoise(t) => {
                let a = std::f64::consts::PI / t.cell;
                // phase offsets keep the pattern alive on axis-aligned planes
                let s = (a * p.x).sin() * (a * p.y + 1.1).sin() * (a * p.z + 2.3).sin();
                let k = 0.5 + 0.5 * (t.sharpness * s).tanh();
                let q = p.scale(1.0 / t.noise_scale);
                let bright = 1.0 + t.noise_amplitude * (2.0 * fbm(q, t.seed, t.octaves) - 1.0);
                let mut out = [0.0f32; 3];
                for (c, o) in out.iter_mut().enumerate() {
                    let tint = 1.0 + 0.15 * (2.0 * value_noise(q.scale(0.5), t.seed ^ (0x51 + c as u64)) - 1.0);
                    let base = t.colors[0][c] as f64 * (1.0 - k) + t.colors[1][c] as f64 * k;
                    *o = (base * bright * tint).clamp(0.0, 1.0) as f32;
                }
                out
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        texture: Texture,
    },
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        #[serde(default)]
        texture: Texture,
    },
}

impl Primitive {
    fn texture(&self) -> &Texture {
        match self {
            Primitive::Sphere { texture, .. } | Primitive::Plane { texture, .. } => texture,
        }
    }

    /// Smallest positive ray parameter of an intersection with a unit-length
    /// direction.
    pub fn intersect(&self, origin: &Vec3<f64>, dir: &Vec3<f64>) -> Option<f64> {
        const T_MIN: f64 = 1e-9;
        match self {
            Primitive::Sphere { center, radius, .. } => {
                let oc = *origin - Vec3::from_array(*center);
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // stable pair of roots
                let q = if b > 0.0 { -b - sq } else { -b + sq };
                let (t0, t1) = if q == 0.0 { (0.0, 0.0) } else { (q, c / q) };
                let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                [lo, hi].into_iter().find(|&t| t > T_MIN)
            }
            Primitive::Plane { point, normal, .. } => {
                let n = Vec3::from_array(*normal).normalized();
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (Vec3::from_array(*point) - *origin).dot(&n) / denom;
                (t > T_MIN).then_some(t)
            }
        }
    }

    /// Unsigned distance from a point to the surface.
    pub fn surface_distance(&self, p: &Vec3<f64>) -> f64 {
        match self {
            Primitive::Sphere { center, radius, .. } => ((*p - Vec3::from_array(*center)).norm() - radius).abs(),
            Primitive::Plane { point, normal, .. } => {
                (*p - Vec3::from_array(*point)).dot(&Vec3::from_array(*normal).normalized()).abs()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Primitive::Sphere { center, radius, .. } => {
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("sphere needs a finite center and positive radius".into()));
                }
            }
            Primitive::Plane { point, normal, .. } => {
                let n = Vec3::from_array(*normal);
                if point.iter().any(|v| !v.is_finite()) || !n.is_finite() || n.norm() == 0.0 {
                    return Err(Error::InvalidArgument("plane needs a finite point and nonzero normal".into()));
                }
            }
        }
        Ok(())
    }
}

/// Surface hit: distance along the ray and shaded color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub color: Rgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default)]
    pub background: Rgb,
    pub primitives: Vec<Primitive>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.background.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("background color is not finite".into()));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// Checks that no camera center lies on a surface.
    pub fn validate_for_rig(&self, rig: &RigConfig) -> Result<()> {
        self.validate()?;
        for cam in &rig.cameras {
            let c = cam.center();
            for p in &self.primitives {
                if p.surface_distance(&c) < MIN_SURFACE_CLEARANCE {
                    return Err(Error::InvalidArgument(format!(
                        "camera {} lies within {MIN_SURFACE_CLEARANCE} m of a scene surface",
                        cam.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let scene: Self = serde_json::from_str(s)?;
        scene.validate()?;
        Ok(scene)
    }

    /// Nearest surface along a unit-direction ray.
    pub fn trace(&self, origin: &Vec3<f64>, dir: &Vec3<f64>) -> Option<Hit> {
        let mut best: Option<(f64, &Primitive)> = None;
        for p in &self.primitives {
            if let Some(t) = p.intersect(origin, dir) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, p));
                }
            }
        }
        best.map(|(t, p)| Hit {
            distance: t,
            color: p.texture().color(&(*origin + dir.scale(t))),
        })
    }

    fn shade(&self, origin: &Vec3<f64>, dir: &Vec3<f64>) -> (Rgb, f64) {
        match self.trace(origin, dir) {
            Some(h) => (h.color, h.distance),
            None => (self.background, DISTANCE_SENTINEL),
        }
    }
}

/// Sub-pixel sampling for renders: `samples × samples` rays per pixel for
/// color; distance always comes from the pixel center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub samples: usize,
    /// Pixels whose ray leaves this cone are treated as invalid.
    pub fov_deg: Option<f64>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            samples: 2,
            fov_deg: None,
        }
    }
}

fn sample_offsets(n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..n).map(|i| (i as f64 + 0.5) / n as f64 - 0.5).collect()
}

fn average(colors: &[Rgb]) -> Rgb {
    let mut s = [0.0f64; 3];
    for c in colors {
        for k in 0..3 {
            s[k] += c[k] as f64;
        }
    }
    let n = colors.len() as f64;
    [(s[0] / n) as f32, (s[1] / n) as f32, (s[2] / n) as f32]
}

/// Renders a fisheye image and its per-pixel ray distance. `pose` maps camera
/// coordinates to scene coordinates. Pixels without a valid ray (or outside
/// the FOV cone) are black with the sentinel distance.
pub fn render_fisheye(
    scene: &Scene,
    intrinsics: &CameraIntrinsics<f64>,
    pose: &Pose<f64>,
    size: [usize; 2],
    opts: &RenderOptions,
) -> (RgbImage, Plane<f64>) {
    let [w, h] = size;
    let offsets = sample_offsets(opts.samples);
    let cos_half = opts.fov_deg.map(|f| (f.to_radians() / 2.0).cos());
    let origin = pose.translation();
    let ray = |u: f64, v: f64| -> Option<Vec3<f64>> {
        let d = intrinsics.unproject(&Pixel::new(u, v))?.direction();
        if cos_half.is_some_and(|c| d.z < c) {
            return None;
        }
        Some(pose.rotate(&d))
    };
    let rows: Vec<(Vec<Rgb>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut colors = Vec::with_capacity(w);
            let mut dists = Vec::with_capacity(w);
            let mut sub = Vec::with_capacity(offsets.len() * offsets.len());
            for x in 0..w {
                let (u, v) = (x as f64, y as f64);
                let Some(center) = ray(u, v) else {
                    colors.push([0.0; 3]);
                    dists.push(DISTANCE_SENTINEL);
                    continue;
                };
                dists.push(scene.shade(&origin, &center).1);
                sub.clear();
                for dy in &offsets {
                    for dx in &offsets {
                        if let Some(d) = ray(u + dx, v + dy) {
                            sub.push(scene.shade(&origin, &d).0);
                        }
                    }
                }
                colors.push(average(&sub));
            }
            (colors, dists)
        })
        .collect();
    let mut img = RgbImage::new(w, h);
    let mut dist = Plane::filled(w, h, DISTANCE_SENTINEL);
    for (y, (c, d)) in rows.into_iter().enumerate() {
        img.data[y * w..(y + 1) * w].copy_from_slice(&c);
        dist.data[y * w..(y + 1) * w].copy_from_slice(&d);
    }
    (img, dist)
}

/// Renders one rig camera, masking rays outside its field of view.
pub fn render_rig_camera(scene: &Scene, cam: &RigCamera, size: [usize; 2], samples: usize) -> (RgbImage, Plane<f64>) {
    let opts = RenderOptions {
        samples,
        fov_deg: Some(cam.fov_deg),
    };
    render_fisheye(scene, &cam.intrinsics, &cam.pose, size, &opts)
}

/// Equirectangular render (full-sphere grid, `width = 2·height` expected)
/// from `origin`, with directions in the scene frame.
pub fn render_equirect(
    scene: &Scene,
    origin: &Vec3<f64>,
    width: usize,
    height: usize,
    samples: usize,
) -> Result<(RgbImage, Plane<f64>)> {
    let grid = SphericalGrid::full(width, height)?;
    let offsets = sample_offsets(samples);
    let (dt, dp) = (
        (grid.theta_max - grid.theta_min) / width as f64,
        (grid.phi_max - grid.phi_min) / height as f64,
    );
    let rows: Vec<(Vec<Rgb>, Vec<f64>)> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut colors = Vec::with_capacity(width);
            let mut dists = Vec::with_capacity(width);
            let mut sub = Vec::with_capacity(offsets.len() * offsets.len());
            for x in 0..width {
                let c = grid.coord(x, y);
                dists.push(scene.shade(origin, &c.direction()).1);
                sub.clear();
                for oy in &offsets {
                    for ox in &offsets {
                        let s = crate::spherical::SphericalCoord::new(c.theta + ox * dt, c.phi - oy * dp);
                        sub.push(scene.shade(origin, &s.direction()).0);
                    }
                }
                colors.push(average(&sub));
            }
            (colors, dists)
        })
        .collect();
    let mut img = RgbImage::new(width, height);
    let mut dist = Plane::filled(width, height, DISTANCE_SENTINEL);
    for (y, (c, d)) in rows.into_iter().enumerate() {
        img.data[y * width..(y + 1) * width].copy_from_slice(&c);
        dist.data[y * width..(y + 1) * width].copy_from_slice(&d);
    }
    Ok((img, dist))
}

/// Planar calibration board; corners lie in its z = 0 plane, centered on
/// the origin, numbered row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChessBoard {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl Default for ChessBoard {
    fn default() -> Self {
        Self {
            rows: 6,
            cols: 8,
            spacing: 0.04,
        }
    }
}

impl ChessBoard {
    pub fn corners(&self) -> Vec<BoardCorner> {
        let (r0, c0) = ((self.rows as f64 - 1.0) / 2.0, (self.cols as f64 - 1.0) / 2.0);
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(BoardCorner {
                    id: r * self.cols + c,
                    xyz: [(c as f64 - c0) * self.spacing, (r as f64 - r0) * self.spacing, 0.0],
                });
            }
        }
        out
    }
}

/// Projects board corners through `intrinsics` for each board-to-camera
/// pose and adds Gaussian pixel noise. Corners outside the valid domain or
/// the image are left out; every pose keeps its (possibly empty) entry.
pub fn render_corners(
    board: &ChessBoard,
    intrinsics: &CameraIntrinsics<f64>,
    image_size: [usize; 2],
    poses: &[Pose<f64>],
    noise_sigma: f64,
    seed: u64,
) -> Result<CornerObservations> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument("noise sigma must be finite and nonnegative".into()));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corners = board.corners();
    let (w, h) = (image_size[0] as f64, image_size[1] as f64);
    let mut images = Vec::with_capacity(poses.len());
    for (n, pose) in poses.iter().enumerate() {
        let mut obs = Vec::new();
        for c in &corners {
            let p = pose.transform(&Vec3::from_array(c.xyz));
            let Some(px) = intrinsics.project(&p) else { continue };
            // draw noise for every projected corner so streams stay aligned
            let (nu, nv) = (noise.sample(&mut rng), noise.sample(&mut rng));
            let (u, v) = (px.u + nu, px.v + nv);
            if u < 0.0 || v < 0.0 || u > w - 1.0 || v > h - 1.0 {
                continue;
            }
            obs.push(CornerObservation { id: c.id, uv: [u, v] });
        }
        images.push(ImageCorners { id: n, corners: obs });
    }
    Ok(CornerObservations {
        board: corners,
        images,
        image_size: Some(image_size),
    })
}

fn look_rotation(forward: &Vec3<f64>) -> Mat3<f64> {
    let z = forward.normalized();
    let helper = if z.y.abs() < 0.9 { Vec3::new(0.0, 1.0, 0.0) } else { Vec3::new(1.0, 0.0, 0.0) };
    let x = helper.cross(&z).normalized();
    let y = z.cross(&x);
    Mat3::from_columns(x, y, z)
}

/// Random board-to-camera poses spread over a fisheye's field of view:
/// board centers up to `max_off_axis_deg` from the optical axis at 0.35 to
/// 0.7 m, each board facing the camera with up to 30° of tilt.
pub fn board_poses(count: usize, max_off_axis_deg: f64, seed: u64) -> Vec<Pose<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    let max_off = max_off_axis_deg.to_radians();
    (0..count)
        .map(|_| {
            let off = max_off * unit.sample(&mut rng).sqrt();
            let az = 2.0 * std::f64::consts::PI * unit.sample(&mut rng);
            let dir = Vec3::new(off.sin() * az.cos(), off.sin() * az.sin(), off.cos());
            let dist = 0.35 + 0.35 * unit.sample(&mut rng);
            let tilt = Vec3::new(
                (unit.sample(&mut rng) - 0.5) * 60f64.to_radians(),
                (unit.sample(&mut rng) - 0.5) * 60f64.to_radians(),
                (unit.sample(&mut rng) - 0.5) * 2.0 * std::f64::consts::PI,
            );
            let r = look_rotation(&dir).mul_mat(&Pose::exp_rotation(&tilt));
            Pose::new(r, dir.scale(dist)).expect("rotation is orthonormal")
        })
        .collect()
}

/// Default scene: a textured room sphere of radius 4 m around the rig, a
/// floor 1.2 m below it and a 0.5 m ball about 2 m away.
pub fn bundled_scene() -> Scene {
    Scene {
        background: [0.0; 3],
        primitives: vec![
            Primitive::Sphere {
                center: [0.0, 0.0, 0.0],
                radius: 4.0,
                texture: Texture::CheckerNoise(CheckerNoise::default()),
            },
            Primitive::Plane {
                point: [0.0, 1.2, 0.0],
                normal: [0.0, -1.0, 0.0],
                texture: Texture::CheckerNoise(CheckerNoise {
                    cell: 0.2,
                    seed: 7,
                    colors: [[0.55, 0.45, 0.30], [0.20, 0.30, 0.25]],
                    ..CheckerNoise::default()
                }),
            },
            Primitive::Sphere {
                center: [1.2, 0.2, 1.6],
                radius: 0.5,
                texture: Texture::CheckerNoise(CheckerNoise {
                    cell: 0.12,
                    noise_scale: 0.08,
                    seed: 3,
                    colors: [[0.70, 0.25, 0.15], [0.95, 0.85, 0.40]],
                    ..CheckerNoise::default()
                }),
            },
        ],
    }
}

/// Single textured sphere of radius `radius` centered on the origin.
pub fn sphere_scene(radius: f64, seed: u64) -> Scene {
    Scene {
        background: [0.0; 3],
        primitives: vec![Primitive::Sphere {
            center: [0.0; 3],
            radius,
            texture: Texture::CheckerNoise(CheckerNoise {
                cell: 0.3 * radius / 4.0,
                noise_scale: 0.2 * radius / 4.0,
                seed,
                ..CheckerNoise::default()
            }),
        }],
    }
}

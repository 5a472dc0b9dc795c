//! Distance-aware 360° stitching.
//!
//! The two reference distance maps are lifted to 3D, re-centered on the rig
//! origin and merged into one full-sphere map. Every panorama pixel is then
//! placed at its fused distance, projected into each camera that sees it and
//! blended with weights that favor rays close to a camera's optical axis.

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Rgb, RgbImage};
use crate::linalg::Vec3;
use crate::rig::{RigCamera, RigConfig};
use crate::spherical::{SphericalCoord, SphericalGrid};
use crate::sweep::{
    aggregate, build_volume, extract_distance, normalize_exposure, DistanceCandidates, DistanceMap, DEFAULT_D_MAX,
    DEFAULT_D_MIN, DEFAULT_GRID, DEFAULT_LAYERS, DISTANCE_SENTINEL, REFERENCE_FOV_DEG,
};

pub const DEFAULT_PSI0_DEG: f64 = 60.0;
pub const DEFAULT_FEATHER: f64 = 0.05;
pub const DEFAULT_PANORAMA: [usize; 2] = [2048, 1024];
pub const DEFAULT_FUSED_GRID: [usize; 2] = [1024, 512];
pub const DEFAULT_INPAINT_ITERATIONS: usize = 50;
/// Inpainting stops once no pixel moves by more than this fraction of
/// `d_max`.
pub const INPAINT_TOLERANCE: f64 = 1e-4;

/// Equirectangular RGB image with a per-pixel coverage flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Panorama {
    pub image: RgbImage,
    pub coverage: Vec<bool>,
}

impl Panorama {
    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    pub fn coverage_fraction(&self) -> f64 {
        self.coverage.iter().filter(|&&c| c).count() as f64 / self.coverage.len() as f64
    }

    /// 8-bit sRGB PNG with coverage in the alpha channel.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.image.save_png(path, Some(&self.coverage))
    }
}

/// Blending parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendOptions {
    /// Angle from the optical axis at which the weight falls to 1/e.
    pub psi0_deg: f64,
    /// Fraction of the half field of view over which weights fade to zero at
    /// the image edge.
    pub feather: f64,
}

impl Default for BlendOptions {
    fn default() -> Self {
        Self {
            psi0_deg: DEFAULT_PSI0_DEG,
            feather: DEFAULT_FEATHER,
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if height == 0 || width != 2 * height {
        return Err(Error::InvalidArgument(format!(
            "equirectangular size must be 2:1, got {width}×{height}"
        )));
    }
    Ok(())
}

/// Merges reference distance maps into one full-sphere map centered on the
/// rig origin. Overlapping estimates keep the nearer surface; holes are
/// filled by confidence-weighted diffusion.
pub fn fuse_distance_maps(
    maps: &[DistanceMap],
    rig: &RigConfig,
    size: [usize; 2],
    inpaint_iterations: usize,
) -> Result<DistanceMap> {
    check_dims(size[0], size[1])?;
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("no distance maps to fuse".into()))?;
    let grid = SphericalGrid::full(size[0], size[1])?;
    let mut out = DistanceMap {
        reference_id: None,
        grid,
        distance: vec![DISTANCE_SENTINEL; grid.len()],
        confidence: vec![0.0; grid.len()],
        d_min: first.d_min,
        d_max: first.d_max,
        n_layers: first.n_layers,
    };
    let mut order: Vec<&DistanceMap> = maps.iter().collect();
    order.sort_by_key(|m| m.reference_id);
    for m in order {
        let pose = match m.reference_id {
            Some(id) => {
                rig.camera(id)
                    .ok_or_else(|| Error::InvalidArgument(format!("distance map for unknown camera {id}")))?
                    .pose
            }
            None => crate::rig::Pose::identity(),
        };
        for i in 0..m.distance.len() {
            if !m.is_estimated(i) {
                continue;
            }
            let p = pose.transform(&m.direction(i).scale(m.distance[i]));
            let d = p.norm();
            if d <= 0.0 {
                continue;
            }
            let Some((x, y)) = grid.nearest_pixel(&SphericalCoord::from_direction(&p)) else {
                continue;
            };
            let j = y * grid.width + x;
            if !out.is_estimated(j) || d < out.distance[j] {
                out.distance[j] = d;
                out.confidence[j] = m.confidence[i];
            }
        }
    }
    inpaint(&mut out, inpaint_iterations);
    let (lo, hi) = (out.d_min, out.d_max);
    for d in &mut out.distance {
        if *d != DISTANCE_SENTINEL {
            *d = d.clamp(lo, hi);
        }
    }
    Ok(out)
}

/// Fills unestimated pixels from their four neighbors (azimuth wraps),
/// weighting each neighbor by its confidence. Estimated pixels are left
/// untouched; filled pixels take the mean neighbor confidence so the fill
/// fades with distance from real data.
pub fn inpaint(map: &mut DistanceMap, max_iterations: usize) {
    let (w, h) = (map.grid.width, map.grid.height);
    let fixed: Vec<bool> = (0..w * h).map(|i| map.is_estimated(i)).collect();
    // estimates with zero confidence still anchor the fill
    let mut conf: Vec<f64> = map
        .confidence
        .iter()
        .zip(&fixed)
        .map(|(&c, &f)| if f { c.max(1e-6) } else { 0.0 })
        .collect();
    let mut dist = map.distance.clone();
    let tol = INPAINT_TOLERANCE * map.d_max;
    for _ in 0..max_iterations {
        let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut d_row = dist[y * w..(y + 1) * w].to_vec();
                let mut c_row = conf[y * w..(y + 1) * w].to_vec();
                let mut change = 0.0f64;
                for x in 0..w {
                    let i = y * w + x;
                    if fixed[i] {
                        continue;
                    }
                    let mut nbrs = [y * w + (x + w - 1) % w, y * w + (x + 1) % w, 0, 0];
                    let mut count = 2;
                    if y > 0 {
                        nbrs[count] = i - w;
                        count += 1;
                    }
                    if y + 1 < h {
                        nbrs[count] = i + w;
                        count += 1;
                    }
                    let (mut sw, mut sd) = (0.0, 0.0);
                    for &n in &nbrs[..count] {
                        if conf[n] > 0.0 {
                            sw += conf[n];
                            sd += conf[n] * dist[n];
                        }
                    }
                    if sw > 0.0 {
                        let d = sd / sw;
                        change = change.max(if conf[i] > 0.0 { (d - dist[i]).abs() } else { f64::INFINITY });
                        d_row[x] = d;
                        c_row[x] = sw / count as f64;
                    }
                }
                (d_row, c_row, change)
            })
            .collect();
        let mut change = 0.0f64;
        for (y, (d, c, ch)) in rows.into_iter().enumerate() {
            dist[y * w..(y + 1) * w].copy_from_slice(&d);
            conf[y * w..(y + 1) * w].copy_from_slice(&c);
            change = change.max(ch);
        }
        if change < tol {
            break;
        }
    }
    for i in 0..w * h {
        if !fixed[i] && conf[i] > 0.0 {
            map.distance[i] = dist[i];
            map.confidence[i] = conf[i].min(1.0);
        }
    }
}

/// Distance from the fused map along a rig-frame direction: bilinear in
/// inverse distance over the estimated neighbors.
pub fn lookup_distance(map: &DistanceMap, dir: &Vec3<f64>) -> Option<f64> {
    let g = &map.grid;
    let (fx, fy) = g.to_pixel(&SphericalCoord::from_direction(dir));
    let fy = fy.clamp(0.0, (g.height - 1) as f64);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (ax, ay) = (fx - x0, fy - y0);
    let (mut sw, mut sinv) = (0.0, 0.0);
    for (dx, dy, wt) in [
        (0, 0, (1.0 - ax) * (1.0 - ay)),
        (1, 0, ax * (1.0 - ay)),
        (0, 1, (1.0 - ax) * ay),
        (1, 1, ax * ay),
    ] {
        if wt <= 0.0 {
            continue;
        }
        let x = (x0 as i64 + dx).rem_euclid(g.width as i64) as usize;
        let y = (y0 as usize + dy).min(g.height - 1);
        let d = map.get(x, y);
        if d != DISTANCE_SENTINEL {
            sw += wt;
            sinv += wt / d;
        }
    }
    (sw > 0.0).then(|| sw / sinv)
}

/// Unnormalized blend weight of a camera-frame point, zero outside the
/// camera's view.
pub fn camera_weight(cam: &RigCamera, p_cam: &Vec3<f64>, opts: &BlendOptions) -> f64 {
    if !cam.sees(p_cam) {
        return 0.0;
    }
    let psi = p_cam.angle_to(&Vec3::unit_z());
    let half = cam.half_fov();
    let band = opts.feather * half;
    let feather = if band > 0.0 { ((half - psi) / band).clamp(0.0, 1.0) } else { 1.0 };
    let falloff = (-(psi / opts.psi0_deg.to_radians()).powi(2)).exp();
    falloff * feather
}

/// Normalized blend weights `(camera index, weight)` for a rig-frame point.
/// Cameras that see the point but sit exactly on their feather edge share
/// the weight equally when nothing else contributes. Empty when no camera
/// sees the point.
pub fn blend_weights(rig: &RigConfig, p: &Vec3<f64>, opts: &BlendOptions) -> Vec<(usize, f64)> {
    let mut seen = Vec::new();
    let mut total = 0.0;
    for (k, cam) in rig.cameras.iter().enumerate() {
        let pc = cam.to_camera(p);
        if cam.sees(&pc) {
            let w = camera_weight(cam, &pc, opts);
            total += w;
            seen.push((k, w));
        }
    }
    if seen.is_empty() {
        return seen;
    }
    if total > 0.0 {
        seen.iter_mut().for_each(|(_, w)| *w /= total);
    } else {
        let n = seen.len() as f64;
        seen.iter_mut().for_each(|(_, w)| *w = 1.0 / n);
    }
    seen
}

/// Renders the panorama at the rig origin. `images` are indexed like
/// `rig.cameras`. Points without a fused distance are placed at `d_max`.
pub fn compose_panorama(
    images: &[RgbImage],
    fused: &DistanceMap,
    rig: &RigConfig,
    size: [usize; 2],
    opts: &BlendOptions,
) -> Result<Panorama> {
    crate::sweep::check_images(images, rig)?;
    check_dims(size[0], size[1])?;
    let grid = SphericalGrid::full(size[0], size[1])?;
    let (w, h) = (size[0], size[1]);
    let rows: Vec<(Vec<Rgb>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut colors = vec![[0.0f32; 3]; w];
            let mut covered = vec![false; w];
            for x in 0..w {
                let dir = grid.direction(x, y);
                let d = lookup_distance(fused, &dir).unwrap_or(fused.d_max);
                let p = dir.scale(d);
                let mut acc = [0.0f64; 3];
                let mut total = 0.0;
                let mut fallback = Vec::new();
                for (k, cam) in rig.cameras.iter().enumerate() {
                    let pc = cam.to_camera(&p);
                    if !cam.sees(&pc) {
                        continue;
                    }
                    let Some(px) = cam.intrinsics.project(&pc) else { continue };
                    let Some(c) = images[k].sample_bilinear(px.u, px.v) else { continue };
                    let wt = camera_weight(cam, &pc, opts);
                    for ch in 0..3 {
                        acc[ch] += wt * c[ch] as f64;
                    }
                    total += wt;
                    fallback.push(c);
                }
                if total > 0.0 {
                    colors[x] = acc.map(|v| (v / total) as f32);
                    covered[x] = true;
                } else if !fallback.is_empty() {
                    let n = fallback.len() as f64;
                    let mut s = [0.0f64; 3];
                    for c in &fallback {
                        for ch in 0..3 {
                            s[ch] += c[ch] as f64;
                        }
                    }
                    colors[x] = s.map(|v| (v / n) as f32);
                    covered[x] = true;
                }
            }
            (colors, covered)
        })
        .collect();
    let mut image = RgbImage::new(w, h);
    let mut coverage = vec![false; w * h];
    for (y, (c, m)) in rows.into_iter().enumerate() {
        image.data[y * w..(y + 1) * w].copy_from_slice(&c);
        coverage[y * w..(y + 1) * w].copy_from_slice(&m);
    }
    Ok(Panorama { image, coverage })
}

/// Pipeline settings; defaults are the module defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StitchParams {
    pub n_layers: usize,
    pub d_min: f64,
    pub d_max: f64,
    /// Sweep grid, width × height, over each reference camera's field of view.
    pub grid: [usize; 2],
    pub sigma_i: f64,
    pub n_levels: usize,
    pub panorama: [usize; 2],
    pub fused_grid: [usize; 2],
    pub inpaint_iterations: usize,
    pub blend: BlendOptions,
    /// Overrides the rig's reference pair.
    pub reference_ids: Option<[usize; 2]>,
}

impl Default for StitchParams {
    fn default() -> Self {
        Self {
            n_layers: DEFAULT_LAYERS,
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            grid: DEFAULT_GRID,
            sigma_i: 0.05,
            n_levels: 3,
            panorama: DEFAULT_PANORAMA,
            fused_grid: DEFAULT_FUSED_GRID,
            inpaint_iterations: DEFAULT_INPAINT_ITERATIONS,
            blend: BlendOptions::default(),
            reference_ids: None,
        }
    }
}

impl StitchParams {
    pub fn candidates(&self) -> Result<DistanceCandidates> {
        DistanceCandidates::inverse_uniform(self.d_min, self.d_max, self.n_layers)
    }
}

/// Wall-clock time of one pipeline stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct StitchOutput {
    pub panorama: Panorama,
    pub fused: DistanceMap,
    pub reference_maps: Vec<DistanceMap>,
    pub timings: Vec<StageTiming>,
}

impl StitchOutput {
    pub fn total_time(&self) -> Duration {
        self.timings.iter().map(|t| t.elapsed).sum()
    }
}

struct Clock {
    timings: Vec<StageTiming>,
}

impl Clock {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        let elapsed = start.elapsed();
        log::debug!("{stage}: {elapsed:.2?}");
        match self.timings.iter_mut().find(|t| t.stage == stage) {
            Some(t) => t.elapsed += elapsed,
            None => self.timings.push(StageTiming { stage, elapsed }),
        }
        Ok(out)
    }
}

/// Full pipeline: exposure normalization, sweep volumes for both reference
/// cameras, aggregation, distance extraction, fusion and blending.
pub fn stitch(images: &[RgbImage], rig: &RigConfig, params: &StitchParams) -> Result<StitchOutput> {
    crate::sweep::check_images(images, rig)?;
    let cands = params.candidates()?;
    let refs = params.reference_ids.unwrap_or(rig.reference_ids);
    let grid = SphericalGrid::fisheye(params.grid[0], params.grid[1], REFERENCE_FOV_DEG)?;
    let mut clock = Clock { timings: Vec::new() };

    let normalized = clock.time("normalize", || normalize_exposure(images, rig))?;
    let mut reference_maps = Vec::with_capacity(2);
    for id in refs {
        let volume = clock.time("sweep", || build_volume(&normalized, rig, id, &cands, &grid))?;
        let (filtered, _) = clock.time("aggregate", || aggregate(&volume, &volume.reference, params.sigma_i, params.n_levels))?;
        drop(volume);
        reference_maps.push(clock.time("extract", || extract_distance(&filtered, &cands))?);
    }
    let fused = clock.time("fuse", || fuse_distance_maps(&reference_maps, rig, params.fused_grid, params.inpaint_iterations))?;
    let panorama = clock.time("compose", || compose_panorama(images, &fused, rig, params.panorama, &params.blend))?;
    Ok(StitchOutput {
        panorama,
        fused,
        reference_maps,
        timings: clock.timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::default_rig;

    fn map_with(reference_id: Option<usize>, grid: SphericalGrid, f: impl Fn(usize) -> f64) -> DistanceMap {
        let n = grid.len();
        DistanceMap {
            reference_id,
            grid,
            distance: (0..n).map(&f).collect(),
            confidence: (0..n).map(|i| if f(i) > 0.0 { 1.0 } else { 0.0 }).collect(),
            d_min: 0.3,
            d_max: 50.0,
            n_layers: 32,
        }
    }

    #[test]
    fn nearer_surface_wins() {
        let rig = default_rig(0.1).unwrap();
        let g = SphericalGrid::full(64, 32).unwrap();
        let near = map_with(None, g, |_| 1.0);
        let far = map_with(None, g, |_| 5.0);
        let fused = fuse_distance_maps(&[far, near], &rig, [64, 32], 0).unwrap();
        assert!(fused.distance.iter().all(|&d| (d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn inpainting_stays_within_the_data_range() {
        let g = SphericalGrid::full(32, 16).unwrap();
        let mut m = map_with(None, g, |i| if i % 7 == 0 { 0.5 + (i % 5) as f64 } else { 0.0 });
        inpaint(&mut m, 50);
        assert!(m.distance.iter().all(|&d| (0.5..=4.5).contains(&d)));
    }

    #[test]
    fn weights_are_normalized() {
        let rig = default_rig(0.1).unwrap();
        let opts = BlendOptions::default();
        let g = SphericalGrid::full(36, 18).unwrap();
        for y in 0..18 {
            for x in 0..36 {
                let w = blend_weights(&rig, &g.direction(x, y).scale(3.0), &opts);
                let s: f64 = w.iter().map(|p| p.1).sum();
                assert!(w.iter().all(|p| p.1 >= 0.0));
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn panorama_size_must_be_two_to_one() {
        let rig = default_rig(0.1).unwrap();
        let imgs = vec![RgbImage::new(4, 4); 4];
        let g = SphericalGrid::full(8, 4).unwrap();
        let m = map_with(None, g, |_| 2.0);
        assert!(compose_panorama(&imgs, &m, &rig, [10, 4], &BlendOptions::default()).is_err());
    }
}

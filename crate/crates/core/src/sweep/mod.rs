//! Sphere-sweep distance estimation around one reference camera.
//!
//! The reference camera's rays are sampled on an equiangular grid. For each
//! ray the best partner camera is chosen once, then every candidate distance
//! is scored by warping the partner image onto the sphere of that radius.
//! Costs are filtered with an edge-aware pyramid and the per-pixel minimum is
//! refined to sub-layer precision.

mod aggregate;
mod distance;

pub use aggregate::{aggregate, aggregate_slice, bilateral_weight, color_weight, downsample, AggregationStats};
pub use distance::{extract_distance, refine_minimum, DistanceMap, DistanceMapHeader};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Rgb, RgbImage};
use crate::linalg::Vec3;
use crate::rig::{RigCamera, RigConfig};
use crate::spherical::{SphericalCoord, SphericalGrid};

/// Cost of an impossible match: L1 distance of black against white over
/// three channels.
pub const MAX_COST: f32 = 3.0;

/// Distance stored for pixels without an estimate.
pub const DISTANCE_SENTINEL: f64 = 0.0;

pub const DEFAULT_D_MIN: f64 = 0.3;
pub const DEFAULT_D_MAX: f64 = 50.0;
pub const DEFAULT_LAYERS: usize = 32;
pub const DEFAULT_GRID: [usize; 2] = [512, 256];
pub const REFERENCE_FOV_DEG: f64 = 220.0;

/// Scores within this relative margin of the best one count as ties.
const TIE_TOLERANCE: f64 = 1e-12;

/// Increasing list of sweep radii in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceCandidates {
    distances: Vec<f64>,
}

impl DistanceCandidates {
    pub fn new(distances: Vec<f64>) -> Result<Self> {
        if distances.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 distance candidates".into()));
        }
        if !distances.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(Error::InvalidArgument("distance candidates must be positive".into()));
        }
        if !distances.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("distance candidates must be strictly increasing".into()));
        }
        Ok(Self { distances })
    }

    /// `n` radii evenly spaced in inverse distance from `d_min` to `d_max`.
    pub fn inverse_uniform(d_min: f64, d_max: f64, n: usize) -> Result<Self> {
        if !(d_min > 0.0 && d_max > d_min && d_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad distance range [{d_min}, {d_max}]")));
        }
        if n < 2 {
            return Err(Error::InvalidArgument("need at least 2 distance candidates".into()));
        }
        let (a, b) = (1.0 / d_min, 1.0 / d_max);
        let mut d: Vec<f64> = (0..n)
            .map(|i| 1.0 / (a + (b - a) * i as f64 / (n - 1) as f64))
            .collect();
        d[0] = d_min;
        d[n - 1] = d_max;
        Self::new(d)
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn get(&self, i: usize) -> f64 {
        self.distances[i]
    }

    pub fn d_min(&self) -> f64 {
        self.distances[0]
    }

    pub fn d_max(&self) -> f64 {
        self.distances[self.len() - 1]
    }

    /// Meters at a fractional layer index, interpolating linearly in
    /// inverse distance.
    pub fn at_fraction(&self, f: f64) -> f64 {
        let last = self.len() - 1;
        let f = f.clamp(0.0, last as f64);
        let i = (f.floor() as usize).min(last - 1);
        let t = f - i as f64;
        let inv = (1.0 - t) / self.distances[i] + t / self.distances[i + 1];
        1.0 / inv
    }

    /// Gap between the two candidates bracketing `d` (the nearest gap when
    /// `d` is outside the range).
    pub fn spacing_at(&self, d: f64) -> f64 {
        let i = self.distances.partition_point(|&c| c <= d).clamp(1, self.len() - 1);
        self.distances[i] - self.distances[i - 1]
    }
}

/// Photometric normalization: each image is scaled so its mean intensity
/// over pixels inside the camera's field of view is 0.5.
pub fn normalize_exposure(images: &[RgbImage], rig: &RigConfig) -> Result<Vec<RgbImage>> {
    check_images(images, rig)?;
    Ok(images
        .par_iter()
        .zip(&rig.cameras)
        .map(|(img, cam)| {
            let mask = field_of_view_mask(cam, img.width, img.height);
            let mean = img.mean_intensity(Some(&mask));
            if mean > 0.0 {
                img.scaled((0.5 / mean) as f32)
            } else {
                img.clone()
            }
        })
        .collect())
}

/// Pixels whose rays lie inside the camera's field of view.
pub fn field_of_view_mask(cam: &RigCamera, width: usize, height: usize) -> Vec<bool> {
    let cos_half = cam.half_fov().cos();
    (0..width * height)
        .map(|i| {
            let px = crate::camera::Pixel::new((i % width) as f64, (i / width) as f64);
            cam.intrinsics.unproject(&px).is_some_and(|r| r.direction().z >= cos_half)
        })
        .collect()
}

pub(crate) fn check_images(images: &[RgbImage], rig: &RigConfig) -> Result<()> {
    if images.len() != rig.cameras.len() {
        return Err(Error::InvalidArgument(format!(
            "{} images for {} rig cameras",
            images.len(),
            rig.cameras.len()
        )));
    }
    Ok(())
}

/// Selection score of one camera: the angle between the nearest and
/// farthest sweep points of a reference ray as seen from that camera.
/// `None` when the camera does not see both points.
pub fn selection_score(cam: &RigCamera, near: &Vec3<f64>, far: &Vec3<f64>) -> Option<f64> {
    let (a, b) = (cam.to_camera(near), cam.to_camera(far));
    if !(cam.sees(&a) && cam.sees(&b)) {
        return None;
    }
    Some(a.cross(&b).norm().atan2(a.dot(&b)))
}

fn probe_points(reference: &RigCamera, dir_cam: &Vec3<f64>, cands: &DistanceCandidates) -> (Vec3<f64>, Vec3<f64>) {
    let d = dir_cam.normalized();
    (
        reference.pose.transform(&d.scale(cands.d_min())),
        reference.pose.transform(&d.scale(cands.d_max())),
    )
}

fn select_for_direction(
    rig: &RigConfig,
    ref_id: usize,
    reference: &RigCamera,
    dir_cam: &Vec3<f64>,
    cands: &DistanceCandidates,
) -> Result<usize> {
    let (near, far) = probe_points(reference, dir_cam, cands);
    let mut scores: Vec<(usize, f64)> = rig
        .cameras
        .iter()
        .filter(|c| c.id != ref_id)
        .filter_map(|c| selection_score(c, &near, &far).map(|q| (c.id, q)))
        .collect();
    scores.sort_by_key(|s| s.0);
    let top = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .find(|s| s.1 >= top - TIE_TOLERANCE * top)
        .map(|s| s.0)
        .ok_or(Error::NoVisibleCamera)
}

/// Partner camera for a reference ray: among the other cameras that see the
/// ray's nearest and farthest sweep points, the one for which those points
/// are the furthest apart in angle. Ties go to the lowest id.
pub fn select_camera(ref_id: usize, coord: &SphericalCoord, rig: &RigConfig, cands: &DistanceCandidates) -> Result<usize> {
    let reference = rig
        .camera(ref_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no camera with id {ref_id}")))?;
    select_for_direction(rig, ref_id, reference, &coord.direction(), cands)
}

/// Matching costs for every reference grid pixel and candidate distance.
#[derive(Clone, Debug)]
pub struct SphereSweepVolume {
    pub reference_id: usize,
    pub grid: SphericalGrid,
    pub n_layers: usize,
    /// Layer-major: `costs[i·W·H + y·W + x]`.
    pub costs: Vec<f32>,
    /// Partner camera per pixel; `None` where no camera qualifies or the
    /// reference itself has no color.
    pub selected_camera: Vec<Option<usize>>,
    /// Reference colors resampled onto the grid (black where unavailable).
    pub reference: RgbImage,
    pub reference_valid: Vec<bool>,
}

impl SphereSweepVolume {
    pub fn slice_len(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize, layer: usize) -> f32 {
        self.costs[layer * self.slice_len() + y * self.grid.width + x]
    }

    pub fn slice(&self, layer: usize) -> &[f32] {
        let n = self.slice_len();
        &self.costs[layer * n..(layer + 1) * n]
    }

    /// Costs of one pixel across all layers.
    pub fn row(&self, x: usize, y: usize) -> Vec<f32> {
        (0..self.n_layers).map(|i| self.cost(x, y, i)).collect()
    }
}

#[inline]
fn l1(a: &Rgb, b: &Rgb) -> f32 {
    ((a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()).min(MAX_COST)
}

struct PixelSetup {
    color: Rgb,
    origin: Vec3<f64>,
    dir: Vec3<f64>,
    partner: usize,
}

/// Cost volume for one reference camera. `images` are indexed like
/// `rig.cameras` and should already be photometrically normalized.
pub fn build_volume(
    images: &[RgbImage],
    rig: &RigConfig,
    ref_id: usize,
    cands: &DistanceCandidates,
    grid: &SphericalGrid,
) -> Result<SphereSweepVolume> {
    check_images(images, rig)?;
    let ref_idx = rig
        .index_of(ref_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no camera with id {ref_id}")))?;
    let reference = &rig.cameras[ref_idx];
    let ref_img = &images[ref_idx];
    let (w, h) = (grid.width, grid.height);

    let setup: Vec<Option<PixelSetup>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let dir = grid.direction(i % w, i / w);
            if !reference.sees(&dir) {
                return None;
            }
            let px = reference.intrinsics.project(&dir)?;
            let color = ref_img.sample_bilinear(px.u, px.v)?;
            let partner = select_for_direction(rig, ref_id, reference, &dir, cands).ok()?;
            let idx = rig.index_of(partner).expect("selected camera belongs to the rig");
            Some(PixelSetup {
                color,
                origin: reference.center(),
                dir: reference.pose.rotate(&dir),
                partner: idx,
            })
        })
        .collect();

    let n = w * h;
    let mut costs = vec![MAX_COST; n * cands.len()];
    costs.par_chunks_mut(n).enumerate().for_each(|(layer, out)| {
        let d = cands.get(layer);
        for (c, s) in out.iter_mut().zip(&setup) {
            let Some(s) = s else { continue };
            let cam = &rig.cameras[s.partner];
            let p = cam.to_camera(&(s.origin + s.dir.scale(d)));
            if !cam.sees(&p) {
                continue;
            }
            let Some(px) = cam.intrinsics.project(&p) else { continue };
            if let Some(warped) = images[s.partner].sample_bilinear(px.u, px.v) {
                *c = l1(&warped, &s.color);
            }
        }
    });

    let mut reference_img = RgbImage::new(w, h);
    let mut reference_valid = vec![false; n];
    let mut selected_camera = vec![None; n];
    for (i, s) in setup.iter().enumerate() {
        if let Some(s) = s {
            reference_img.data[i] = s.color;
            reference_valid[i] = true;
            selected_camera[i] = Some(rig.cameras[s.partner].id);
        }
    }
    Ok(SphereSweepVolume {
        reference_id: ref_id,
        grid: *grid,
        n_layers: cands.len(),
        costs,
        selected_camera,
        reference: reference_img,
        reference_valid,
    })
}

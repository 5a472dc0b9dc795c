//! Winner-takes-all distance extraction and distance map files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DistanceCandidates, SphereSweepVolume, DISTANCE_SENTINEL, MAX_COST};
use crate::error::{Error, Result};
use crate::io::{read_json, read_pfm, write_json, write_pfm};
use crate::linalg::Vec3;
use crate::spherical::SphericalGrid;

/// Fractional index of the minimum of a cost row: the lowest cost (first
/// one on ties), moved to the vertex of the parabola through it and its two
/// neighbors. The vertex is clamped to one layer either side; the first and
/// last layers are not refined. `None` when every cost is `MAX_COST`.
pub fn refine_minimum(row: &[f32]) -> Option<(usize, f64)> {
    let (best, &c0) = row
        .iter()
        .enumerate()
        .fold(None::<(usize, &f32)>, |acc, (i, c)| match acc {
            Some((_, b)) if *b <= *c => acc,
            _ => Some((i, c)),
        })?;
    if c0 >= MAX_COST {
        return None;
    }
    if best == 0 || best + 1 == row.len() {
        return Some((best, best as f64));
    }
    let (cm, cp) = (row[best - 1] as f64, row[best + 1] as f64);
    let c0 = c0 as f64;
    let denom = cm + cp - 2.0 * c0;
    let offset = if denom > 0.0 { ((cm - cp) / (2.0 * denom)).clamp(-1.0, 1.0) } else { 0.0 };
    Some((best, best as f64 + offset))
}

/// Per-pixel distances (meters) on a spherical grid, with a confidence in
/// [0, 1]. Unestimated pixels hold [`DISTANCE_SENTINEL`].
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    /// Camera the grid is centered on; `None` for maps at the rig origin.
    pub reference_id: Option<usize>,
    pub grid: SphericalGrid,
    pub distance: Vec<f64>,
    pub confidence: Vec<f64>,
    pub d_min: f64,
    pub d_max: f64,
    pub n_layers: usize,
}

/// JSON sidecar stored next to the PFM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMapHeader {
    pub reference_id: Option<usize>,
    pub grid: SphericalGrid,
    pub d_min: f64,
    pub d_max: f64,
    pub n_layers: usize,
}

impl DistanceMap {
    pub fn empty(reference_id: Option<usize>, grid: SphericalGrid, cands: &DistanceCandidates) -> Self {
        Self {
            reference_id,
            grid,
            distance: vec![DISTANCE_SENTINEL; grid.len()],
            confidence: vec![0.0; grid.len()],
            d_min: cands.d_min(),
            d_max: cands.d_max(),
            n_layers: cands.len(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.distance[y * self.grid.width + x]
    }

    #[inline]
    pub fn is_estimated(&self, i: usize) -> bool {
        self.distance[i] != DISTANCE_SENTINEL
    }

    pub fn coverage(&self) -> f64 {
        (0..self.distance.len()).filter(|&i| self.is_estimated(i)).count() as f64 / self.distance.len() as f64
    }

    /// Unit direction of pixel `i` in the map's own frame.
    pub fn direction(&self, i: usize) -> Vec3<f64> {
        self.grid.direction(i % self.grid.width, i / self.grid.width)
    }

    pub fn header(&self) -> DistanceMapHeader {
        DistanceMapHeader {
            reference_id: self.reference_id,
            grid: self.grid,
            d_min: self.d_min,
            d_max: self.d_max,
            n_layers: self.n_layers,
        }
    }

    /// Sidecar path used by [`DistanceMap::save`]: the PFM path with a
    /// `.json` extension.
    pub fn sidecar_path(pfm: &Path) -> PathBuf {
        pfm.with_extension("json")
    }

    pub fn save(&self, pfm: impl AsRef<Path>) -> Result<()> {
        let pfm = pfm.as_ref();
        let data: Vec<f32> = self.distance.iter().map(|&d| d as f32).collect();
        write_pfm(pfm, self.grid.width, self.grid.height, 1, &data)?;
        write_json(Self::sidecar_path(pfm), &self.header())
    }

    /// Reads a map written by [`DistanceMap::save`]. Confidence is not
    /// stored, so it comes back as 1 for estimated pixels and 0 otherwise.
    pub fn load(pfm: impl AsRef<Path>) -> Result<Self> {
        let pfm = pfm.as_ref();
        let header: DistanceMapHeader = read_json(Self::sidecar_path(pfm))?;
        let img = read_pfm(pfm)?;
        if img.channels != 1 || img.width != header.grid.width || img.height != header.grid.height {
            return Err(Error::Format(format!(
                "distance map is {}×{}×{}, sidecar expects {}×{}×1",
                img.width, img.height, img.channels, header.grid.width, header.grid.height
            )));
        }
        let distance: Vec<f64> = img.data.iter().map(|&d| d as f64).collect();
        let confidence = distance.iter().map(|&d| if d != DISTANCE_SENTINEL { 1.0 } else { 0.0 }).collect();
        Ok(Self {
            reference_id: header.reference_id,
            grid: header.grid,
            distance,
            confidence,
            d_min: header.d_min,
            d_max: header.d_max,
            n_layers: header.n_layers,
        })
    }
}

/// Distance map of a cost volume: winner-takes-all layer, parabolic
/// refinement, and inverse-distance interpolation between candidates.
pub fn extract_distance(volume: &SphereSweepVolume, cands: &DistanceCandidates) -> Result<DistanceMap> {
    if cands.len() != volume.n_layers {
        return Err(Error::InvalidArgument(format!(
            "{} candidates for a {}-layer volume",
            cands.len(),
            volume.n_layers
        )));
    }
    let n = volume.slice_len();
    let est: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f32> = (0..volume.n_layers).map(|l| volume.costs[l * n + i]).collect();
            match refine_minimum(&row) {
                Some((best, f)) => (cands.at_fraction(f), 1.0 - row[best] as f64 / MAX_COST as f64),
                None => (DISTANCE_SENTINEL, 0.0),
            }
        })
        .collect();
    let mut map = DistanceMap::empty(Some(volume.reference_id), volume.grid, cands);
    for (i, (d, c)) in est.into_iter().enumerate() {
        map.distance[i] = d;
        map.confidence[i] = c.clamp(0.0, 1.0);
    }
    Ok(map)
}

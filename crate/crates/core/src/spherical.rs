//! Equiangular (azimuth, elevation) sampling grids.
//!
//! Directions use the camera convention (x right, y down, z forward):
//! `dir(θ, φ) = (cos φ·sin θ, −sin φ, cos φ·cos θ)`, so θ = 0, φ = 0 looks
//! down +z and positive elevation looks up. Row 0 is the top row.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec3;

/// Azimuth θ in [−π, π) and elevation φ in [−π/2, π/2], radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalCoord {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalCoord {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn direction(&self) -> Vec3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(cp * st, -sp, cp * ct)
    }

    pub fn from_direction(d: &Vec3<f64>) -> Self {
        let n = d.norm();
        let theta = d.x.atan2(d.z);
        let theta = if theta >= PI { theta - 2.0 * PI } else { theta };
        Self {
            theta,
            phi: (-d.y / n).clamp(-1.0, 1.0).asin(),
        }
    }
}

/// Pixel-centered equiangular grid over an azimuth/elevation window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalGrid {
    pub width: usize,
    pub height: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl SphericalGrid {
    pub fn new(width: usize, height: usize, theta_range: (f64, f64), phi_range: (f64, f64)) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("grid must be non-empty".into()));
        }
        if !(theta_range.1 > theta_range.0 && phi_range.1 > phi_range.0) {
            return Err(Error::InvalidArgument("grid ranges must be increasing".into()));
        }
        Ok(Self {
            width,
            height,
            theta_min: theta_range.0,
            theta_max: theta_range.1,
            phi_min: phi_range.0,
            phi_max: phi_range.1,
        })
    }

    /// Full 360°×180° grid.
    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, (-PI, PI), (-FRAC_PI_2, FRAC_PI_2))
    }

    /// Grid spanning `fov_deg` of azimuth around the optical axis and the
    /// full elevation range.
    pub fn fisheye(width: usize, height: usize, fov_deg: f64) -> Result<Self> {
        let half = fov_deg.to_radians() / 2.0;
        Self::new(width, height, (-half, half), (-FRAC_PI_2, FRAC_PI_2))
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full_sphere(&self) -> bool {
        (self.theta_max - self.theta_min - 2.0 * PI).abs() < 1e-12
    }

    #[inline]
    pub fn coord(&self, x: usize, y: usize) -> SphericalCoord {
        let theta = self.theta_min + (x as f64 + 0.5) * (self.theta_max - self.theta_min) / self.width as f64;
        let phi = self.phi_max - (y as f64 + 0.5) * (self.phi_max - self.phi_min) / self.height as f64;
        SphericalCoord::new(theta, phi)
    }

    #[inline]
    pub fn direction(&self, x: usize, y: usize) -> Vec3<f64> {
        self.coord(x, y).direction()
    }

    /// Continuous pixel coordinates of a spherical coordinate (pixel centers
    /// at integers).
    #[inline]
    pub fn to_pixel(&self, c: &SphericalCoord) -> (f64, f64) {
        let x = (c.theta - self.theta_min) / (self.theta_max - self.theta_min) * self.width as f64 - 0.5;
        let y = (self.phi_max - c.phi) / (self.phi_max - self.phi_min) * self.height as f64 - 0.5;
        (x, y)
    }

    /// Nearest pixel, `None` outside the window. Azimuth wraps on full-sphere
    /// grids.
    pub fn nearest_pixel(&self, c: &SphericalCoord) -> Option<(usize, usize)> {
        const SLACK: f64 = 1e-12;
        if c.phi < self.phi_min - SLACK || c.phi > self.phi_max + SLACK {
            return None;
        }
        let (x, y) = self.to_pixel(c);
        let yi = (y.round() as i64).clamp(0, self.height as i64 - 1) as usize;
        let xi = if self.is_full_sphere() {
            (x.round() as i64).rem_euclid(self.width as i64)
        } else {
            if c.theta < self.theta_min - SLACK || c.theta > self.theta_max + SLACK {
                return None;
            }
            (x.round() as i64).clamp(0, self.width as i64 - 1)
        };
        Some((xi as usize, yi))
    }

    /// Solid angle of one pixel row, proportional to cos φ.
    pub fn row_weight(&self, y: usize) -> f64 {
        self.coord(0, y).phi.cos()
    }
}

//! Double Sphere (DSCM) and Triple Sphere (TSCM) fisheye camera models.
//!
//! The TSCM pushes a scene point through three displaced unit spheres before
//! a final perspective division:
//!
//! ```text
//! d0 = |P|
//! d1 = |(X, Y, ξ·d0 + Z)|
//! d2 = |(X, Y, ξ·d0 + λ·d1 + Z)|
//! φ  = Z + ξ·d0 + λ·d1 + α/(1−α)·d2
//! u  = fx·X/φ + cx,   v = fy·Y/φ + cy
//! ```
//!
//! With `λ = 0` this is the Double Sphere model with the focal lengths
//! expressed as `f/(1−α)`. The DSCM entry points ([`dscm_project`],
//! [`dscm_unproject`], [`dscm_in_valid_domain`]) evaluate the classic
//! `α·d2 + (1−α)·(ξ·d1 + Z)` form instead, so the two code paths can be
//! checked against each other.
//!
//! Valid domain notes:
//!
//! * The closed-form test `z > −w2·d0` uses `w1 = α/(1−α)` for `α ≤ 0.5` and
//!   `(1−α)/α` above; with `α/(1−α)` for every α, points such as `(0, 0, −1)`
//!   at α = 0.6 pass the test yet land on the principal point.
//! * Unprojection always uses `α/(1−α)` as the final sphere offset; the
//!   piecewise form would not invert the projection for α > 0.5.
//! * The closed form treats ξ+λ as a single shift, which is not exact for
//!   three spheres, so [`CameraIntrinsics::in_valid_domain`] also checks each
//!   sphere stage directly.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Threshold on the normalized projection denominator `φ/|P|`.
pub const PHI_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dscm,
    Tscm,
}

impl ModelKind {
    pub fn parameter_count(self) -> usize {
        match self {
            ModelKind::Dscm => 6,
            ModelKind::Tscm => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dscm => "DSCM",
            ModelKind::Tscm => "TSCM",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "dscm" => Ok(ModelKind::Dscm),
            "tscm" => Ok(ModelKind::Tscm),
            other => Err(Error::InvalidArgument(format!("unknown camera model '{other}'"))),
        }
    }
}

/// Intrinsic parameters of a DSCM/TSCM camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub model: ModelKind,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub alpha: T,
    pub xi: T,
    pub lambda: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixel<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> Pixel<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, o: &Self) -> T {
        (self.u - o.u).hypot(self.v - o.v)
    }
}

/// Unit-length outgoing ray direction in the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<T> {
    direction: Vec3<T>,
}

impl<T: Real> Ray<T> {
    /// Normalizes `v`; returns `None` for a zero or non-finite vector.
    pub fn from_vector(v: Vec3<T>) -> Option<Self> {
        let n = v.norm();
        if !(n > T::zero()) || !v.is_finite() {
            return None;
        }
        Some(Self {
            direction: v.scale(n.recip()),
        })
    }

    pub fn direction(&self) -> Vec3<T> {
        self.direction
    }

    pub fn at(&self, distance: T) -> Vec3<T> {
        self.direction.scale(distance)
    }
}

impl<T: Real> CameraIntrinsics<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn tscm(fx: T, fy: T, cx: T, cy: T, alpha: T, xi: T, lambda: T) -> Result<Self, Error> {
        let i = Self {
            model: ModelKind::Tscm,
            fx,
            fy,
            cx,
            cy,
            alpha,
            xi,
            lambda,
        };
        i.validate()?;
        Ok(i)
    }

    pub fn dscm(fx: T, fy: T, cx: T, cy: T, alpha: T, xi: T) -> Result<Self, Error> {
        let i = Self {
            model: ModelKind::Dscm,
            fx,
            fy,
            cx,
            cy,
            alpha,
            xi,
            lambda: T::zero(),
        };
        i.validate()?;
        Ok(i)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.alpha, self.xi, self.lambda];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite parameter".into()));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={:?}, fy={:?})",
                self.fx, self.fy
            )));
        }
        if !(self.alpha >= T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidIntrinsics(format!("alpha must lie in [0, 1), got {:?}", self.alpha)));
        }
        if self.model == ModelKind::Dscm && self.lambda != T::zero() {
            return Err(Error::InvalidIntrinsics("a DSCM camera must have lambda = 0".into()));
        }
        Ok(())
    }

    /// Same parameters, relabelled as the other model. Converting to DSCM
    /// zeroes λ.
    pub fn with_model(&self, model: ModelKind) -> Self {
        let mut out = *self;
        out.model = model;
        if model == ModelKind::Dscm {
            out.lambda = T::zero();
        }
        out
    }

    /// Final-sphere offset `α/(1−α)`.
    #[inline]
    pub fn w1(&self) -> T {
        self.alpha / (T::one() - self.alpha)
    }

    /// The offset used by the valid-domain test: `α/(1−α)` for α ≤ 0.5,
    /// `(1−α)/α` otherwise.
    #[inline]
    pub fn domain_w1(&self) -> T {
        if self.alpha <= T::lit(0.5) {
            self.w1()
        } else {
            (T::one() - self.alpha) / self.alpha
        }
    }

    /// `w2` of the closed-form valid-domain test, or `None` when the square
    /// root argument is not positive (extreme ξ+λ).
    pub fn w2(&self) -> Option<T> {
        let w1 = self.domain_w1();
        let s = self.xi + self.lambda;
        let den = T::one() + s * s + T::lit(2.0) * w1 * s;
        (den > T::zero()).then(|| (s + w1) / den.sqrt())
    }

    /// Membership in the set of points with a valid (invertible) projection.
    pub fn in_valid_domain(&self, p: &Vec3<T>) -> bool {
        let d0 = p.norm();
        if !(d0 > T::zero()) || !p.is_finite() {
            return false;
        }
        let Some(w2) = self.w2() else { return false };
        if !(p.z > -w2 * d0) {
            return false;
        }
        self.staged_valid(p, d0)
    }

    /// Each sphere shift has to stay on its injective branch and the final
    /// point has to stay in front of the last sphere's validity limit.
    fn staged_valid(&self, p: &Vec3<T>, d0: T) -> bool {
        let rho2 = p.x * p.x + p.y * p.y;
        let z1 = self.xi * d0 + p.z;
        let d1 = (rho2 + z1 * z1).sqrt();
        let z2 = z1 + self.lambda * d1;
        let d2 = (rho2 + z2 * z2).sqrt();
        let w_eff = self.domain_w1();
        d0 + self.xi * p.z > T::zero() && d1 + self.lambda * z1 > T::zero() && z2 > -w_eff * d2
    }

    /// Projection denominator φ together with the sphere distances.
    #[inline]
    fn phi(&self, p: &Vec3<T>) -> (T, T) {
        let rho2 = p.x * p.x + p.y * p.y;
        let d0 = (rho2 + p.z * p.z).sqrt();
        let z1 = self.xi * d0 + p.z;
        let d1 = (rho2 + z1 * z1).sqrt();
        let z2 = z1 + self.lambda * d1;
        let d2 = (rho2 + z2 * z2).sqrt();
        (p.z + self.xi * d0 + self.lambda * d1 + self.w1() * d2, d0)
    }

    /// Projects a camera-frame point, `None` outside the valid domain.
    pub fn project(&self, p: &Vec3<T>) -> Option<Pixel<T>> {
        if !self.in_valid_domain(p) {
            return None;
        }
        let (phi, d0) = self.phi(p);
        if !(phi > T::lit(PHI_EPSILON) * d0) {
            return None;
        }
        Some(Pixel::new(self.fx * p.x / phi + self.cx, self.fy * p.y / phi + self.cy))
    }

    /// Evaluates the projection formula without any domain check. Only
    /// meaningful for points where [`project`](Self::project) succeeds.
    pub fn project_unchecked(&self, p: &Vec3<T>) -> Pixel<T> {
        let (phi, _) = self.phi(p);
        Pixel::new(self.fx * p.x / phi + self.cx, self.fy * p.y / phi + self.cy)
    }

    /// Back-projects a pixel to a unit ray. `None` when one of the square
    /// roots has a negative argument, i.e. the pixel is outside the image of
    /// the valid domain.
    pub fn unproject(&self, px: &Pixel<T>) -> Option<Ray<T>> {
        let one = T::one();
        let x = (px.u - self.cx) / self.fx;
        let y = (px.v - self.cy) / self.fy;
        let r2 = x * x + y * y;
        let w1 = self.w1();

        let disc_gamma = one + (one - w1 * w1) * r2;
        if disc_gamma < T::zero() {
            return None;
        }
        let gamma = (w1 + disc_gamma.sqrt()) / (r2 + one);
        let qz = gamma - w1;

        let lam2 = self.lambda * self.lambda;
        let disc_eta = lam2 * qz * qz - lam2 + one;
        if disc_eta < T::zero() {
            return None;
        }
        let eta = self.lambda * qz + disc_eta.sqrt();
        let mz = eta * qz - self.lambda;

        let xi2 = self.xi * self.xi;
        let disc_mu = xi2 * mz * mz - xi2 + one;
        if disc_mu < T::zero() {
            return None;
        }
        let mu = self.xi * mz + disc_mu.sqrt();
        if !(eta > T::zero() && mu > T::zero()) {
            return None;
        }
        let s = mu * eta * gamma;
        Ray::from_vector(Vec3::new(s * x, s * y, mu * mz - self.xi))
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        let c = |v: T| U::from(v).expect("cast");
        CameraIntrinsics {
            model: self.model,
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            alpha: c(self.alpha),
            xi: c(self.xi),
            lambda: c(self.lambda),
        }
    }
}

impl CameraIntrinsics<f64> {
    /// Parameter vector in optimizer order: fx, fy, cx, cy, α, ξ and, for
    /// TSCM, λ.
    pub fn to_params(&self) -> Vec<f64> {
        let mut v = vec![self.fx, self.fy, self.cx, self.cy, self.alpha, self.xi];
        if self.model == ModelKind::Tscm {
            v.push(self.lambda);
        }
        v
    }

    /// Inverse of [`to_params`](Self::to_params). Does not validate.
    pub fn from_params(model: ModelKind, p: &[f64]) -> Self {
        Self {
            model,
            fx: p[0],
            fy: p[1],
            cx: p[2],
            cy: p[3],
            alpha: p[4],
            xi: p[5],
            lambda: if model == ModelKind::Tscm { p[6] } else { 0.0 },
        }
    }
}

/// DSCM projection in the classic `α·d2 + (1−α)·(ξ·d1 + Z)` form. λ is
/// ignored (treated as zero).
pub fn dscm_project<T: Real>(p: &Vec3<T>, i: &CameraIntrinsics<T>) -> Option<Pixel<T>> {
    if !dscm_in_valid_domain(p, i) {
        return None;
    }
    let one = T::one();
    let d1 = p.norm();
    let zs = i.xi * d1 + p.z;
    let d2 = (p.x * p.x + p.y * p.y + zs * zs).sqrt();
    let den = i.alpha * d2 + (one - i.alpha) * zs;
    if !(den > T::lit(PHI_EPSILON) * (one - i.alpha) * d1) {
        return None;
    }
    let fu = i.fx * (one - i.alpha);
    let fv = i.fy * (one - i.alpha);
    Some(Pixel::new(fu * p.x / den + i.cx, fv * p.y / den + i.cy))
}

/// DSCM valid domain (`z > −w2·d` with the piecewise `w1`, plus the per-stage
/// check). λ is ignored.
pub fn dscm_in_valid_domain<T: Real>(p: &Vec3<T>, i: &CameraIntrinsics<T>) -> bool {
    let d1 = p.norm();
    if !(d1 > T::zero()) || !p.is_finite() {
        return false;
    }
    let w1 = i.domain_w1();
    let den = T::lit(2.0) * w1 * i.xi + i.xi * i.xi + T::one();
    if !(den > T::zero()) {
        return false;
    }
    let w2 = (w1 + i.xi) / den.sqrt();
    if !(p.z > -w2 * d1) {
        return false;
    }
    let zs = i.xi * d1 + p.z;
    let d2 = (p.x * p.x + p.y * p.y + zs * zs).sqrt();
    d1 + i.xi * p.z > T::zero() && zs > -w1 * d2
}

/// Closed-form DSCM unprojection. λ is ignored.
pub fn dscm_unproject<T: Real>(px: &Pixel<T>, i: &CameraIntrinsics<T>) -> Option<Ray<T>> {
    let one = T::one();
    let two = T::lit(2.0);
    let a = i.alpha;
    let mx = (px.u - i.cx) / (i.fx * (one - a));
    let my = (px.v - i.cy) / (i.fy * (one - a));
    let r2 = mx * mx + my * my;
    let disc = one - (two * a - one) * r2;
    if disc < T::zero() {
        return None;
    }
    let mz = (one - a * a * r2) / (a * disc.sqrt() + one - a);
    let inner = mz * mz + (one - i.xi * i.xi) * r2;
    if inner < T::zero() {
        return None;
    }
    let k = (mz * i.xi + inner.sqrt()) / (mz * mz + r2);
    Ray::from_vector(Vec3::new(k * mx, k * my, k * mz - i.xi))
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRecord {
    model: ModelKind,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    alpha: f64,
    xi: f64,
    #[serde(default)]
    lambda: f64,
}

impl Serialize for CameraIntrinsics<f64> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        IntrinsicsRecord {
            model: self.model,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            alpha: self.alpha,
            xi: self.xi,
            lambda: self.lambda,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraIntrinsics<f64> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = IntrinsicsRecord::deserialize(d)?;
        let i = CameraIntrinsics {
            model: r.model,
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            alpha: r.alpha,
            xi: r.xi,
            lambda: r.lambda,
        };
        i.validate().map_err(serde::de::Error::custom)?;
        Ok(i)
    }
}

//! SURF interest points and 64-dimensional descriptors.
//!
//! Detection approximates the determinant of the Hessian with box filters
//! evaluated on an [`IntegralImage`]: filter sizes follow the usual ladder
//! (9, 15, 21, 27 in the first octave, then doubling strides), maxima are
//! found by 3x3x3 non-maximum suppression and refined with a quadratic fit.
//! Descriptors sum Gaussian-weighted Haar responses over a 4x4 grid of
//! subregions spanning a 20-scale window.

mod descriptor;
mod detector;
pub mod dump;
mod orientation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{integral_image, GrayImage, IntegralImage};

pub use descriptor::{compute_descriptor, DESCRIPTOR_LEN};
pub use detector::{detect_interest_points, filter_size, hessian_response, HessianResponse, MIN_IMAGE_SIZE};
pub use orientation::{assign_orientation, Orientation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub octaves: usize,
    pub levels_per_octave: usize,
    /// Minimum area-normalized determinant response on `[0, 1]` intensities.
    pub hessian_threshold: f64,
    /// Skip orientation assignment and describe every point at angle 0.
    pub upright: bool,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { octaves: 4, levels_per_octave: 4, hessian_threshold: 1e-4, upright: true }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.octaves < 1 {
            return Err(Error::InvalidParams("octaves must be >= 1".into()));
        }
        if self.levels_per_octave < 3 {
            return Err(Error::InvalidParams("levels_per_octave must be >= 3".into()));
        }
        if !(self.hessian_threshold.is_finite() && self.hessian_threshold >= 0.0) {
            return Err(Error::InvalidParams("hessian_threshold must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// A scale-space maximum of the Hessian determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterestPoint {
    pub x: f64,
    pub y: f64,
    /// Gaussian sigma equivalent of the detecting filter, `1.2 * size / 9`.
    pub scale: f64,
    pub strength: f64,
    /// Radians in `[0, 2pi)`; zero in upright mode.
    pub orientation: f64,
    /// Sign of `Dxx + Dyy`: -1 for bright blobs on dark ground.
    pub laplacian_sign: i8,
    pub octave: usize,
    pub level: usize,
}

/// 4x4 subregions x `[sum dx, sum |dx|, sum dy, sum |dy|]`, unit L2 norm
/// unless `degenerate`, in which case every component is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptor {
    pub values: [f64; DESCRIPTOR_LEN],
    pub point: InterestPoint,
    pub degenerate: bool,
}

impl Descriptor {
    pub fn strength(&self) -> f64 {
        self.point.strength
    }
}

/// Full extraction path for one image: detect, orient (unless upright),
/// describe. Points whose descriptor window leaves the image and degenerate
/// descriptors are dropped.
pub fn extract_features(img: &GrayImage, params: &DetectorParams) -> Result<Vec<Descriptor>> {
    let ii = integral_image(img);
    extract_from_integral(&ii, params)
}

pub fn extract_from_integral(ii: &IntegralImage, params: &DetectorParams) -> Result<Vec<Descriptor>> {
    let points = detect_interest_points(ii, params)?;
    let mut out = Vec::with_capacity(points.len());
    for mut ip in points {
        ip.orientation = if params.upright { 0.0 } else { assign_orientation(ii, &ip).angle };
        match compute_descriptor(ii, &ip) {
            Ok(d) if !d.degenerate => out.push(d),
            Ok(_) | Err(Error::WindowOutOfBounds { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Haar wavelet responses of side `2 * half` centred on `(x, y)`.
#[inline]
pub(crate) fn haar_x(ii: &IntegralImage, x: i64, y: i64, half: i64) -> f64 {
    ii.block(x, y - half, half, 2 * half) - ii.block(x - half, y - half, half, 2 * half)
}

#[inline]
pub(crate) fn haar_y(ii: &IntegralImage, x: i64, y: i64, half: i64) -> f64 {
    ii.block(x - half, y, 2 * half, half) - ii.block(x - half, y - half, 2 * half, half)
}

/// Orders points by strength descending, breaking ties by `(y, x, scale)`.
pub(crate) fn strength_order(a: &InterestPoint, b: &InterestPoint) -> std::cmp::Ordering {
    b.strength
        .total_cmp(&a.strength)
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
        .then(a.scale.total_cmp(&b.scale))
}

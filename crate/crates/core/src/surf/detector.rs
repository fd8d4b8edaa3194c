use super::{strength_order, DetectorParams, InterestPoint};
use crate::error::{Error, Result};
use crate::imgio::IntegralImage;

/// Smallest image side the 9x9 base filter can be evaluated on.
pub const MIN_IMAGE_SIZE: usize = 9;

const DXY_WEIGHT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianResponse {
    pub det: f64,
    pub laplacian_sign: i8,
}

/// Box filter side for `level` of `octave` (both zero-based):
/// 9, 15, 21, 27 / 15, 27, 39, 51 / 27, 51, 75, 99 / ...
pub fn filter_size(octave: usize, level: usize) -> usize {
    3 * ((2 << octave) * (level + 1) + 1)
}

/// Area-normalized determinant of the box-filter Hessian at `(x, y)`.
///
/// `filter_size` must be odd and a multiple of 3 (the 9 + 6k ladder). Lobes
/// that fall outside the image are clamped, so the function is total.
pub fn hessian_response(ii: &IntegralImage, x: i64, y: i64, filter_size: usize) -> HessianResponse {
    debug_assert!(filter_size >= 9 && filter_size % 6 == 3);
    let size = filter_size as i64;
    let border = (size - 1) / 2;
    let lobe = size / 3;
    let inv_area = 1.0 / (size * size) as f64;

    let dxx = ii.block(x - border, y - lobe + 1, size, 2 * lobe - 1)
        - 3.0 * ii.block(x - lobe / 2, y - lobe + 1, lobe, 2 * lobe - 1);
    let dyy = ii.block(x - lobe + 1, y - border, 2 * lobe - 1, size)
        - 3.0 * ii.block(x - lobe + 1, y - lobe / 2, 2 * lobe - 1, lobe);
    let dxy = ii.block(x - lobe, y - lobe, lobe, lobe) + ii.block(x + 1, y + 1, lobe, lobe)
        - ii.block(x + 1, y - lobe, lobe, lobe)
        - ii.block(x - lobe, y + 1, lobe, lobe);

    let (dxx, dyy, dxy) = (dxx * inv_area, dyy * inv_area, dxy * inv_area);
    HessianResponse {
        det: dxx * dyy - (DXY_WEIGHT * dxy) * (DXY_WEIGHT * dxy),
        laplacian_sign: if dxx + dyy >= 0.0 { 1 } else { -1 },
    }
}

/// Determinant responses of one filter size, sampled every `step` pixels.
struct ResponseLayer {
    size: usize,
    cols: usize,
    rows: usize,
    det: Vec<f64>,
    sign: Vec<i8>,
}

impl ResponseLayer {
    fn build(ii: &IntegralImage, size: usize, step: usize) -> Self {
        let cols = ii.width().div_ceil(step);
        let rows = ii.height().div_ceil(step);
        let mut det = Vec::with_capacity(cols * rows);
        let mut sign = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                let h = hessian_response(ii, (c * step) as i64, (r * step) as i64, size);
                det.push(h.det);
                sign.push(h.laplacian_sign);
            }
        }
        ResponseLayer { size, cols, rows, det, sign }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.det[r * self.cols + c]
    }
}

/// Finds scale-space maxima of the Hessian determinant, strongest first.
pub fn detect_interest_points(ii: &IntegralImage, params: &DetectorParams) -> Result<Vec<InterestPoint>> {
    params.validate()?;
    let (w, h) = (ii.width(), ii.height());
    if w < MIN_IMAGE_SIZE || h < MIN_IMAGE_SIZE {
        return Err(Error::ImageTooSmall { width: w, height: h, min: MIN_IMAGE_SIZE });
    }

    let mut points = Vec::new();
    for octave in 0..params.octaves {
        let step = 1usize << octave;
        // smallest border among this octave's candidate levels
        let inner_border = (filter_size(octave, 2) - 1) / 2;
        if 2 * inner_border + 1 > w.min(h) {
            break;
        }
        let layers: Vec<ResponseLayer> = (0..params.levels_per_octave)
            .map(|level| ResponseLayer::build(ii, filter_size(octave, level), step))
            .collect();
        for level in 1..params.levels_per_octave - 1 {
            scan_level(&layers, octave, level, step, w, h, params.hessian_threshold, &mut points);
        }
    }
    points.sort_by(strength_order);
    Ok(suppress_across_octaves(points))
}

/// Octaves overlap in filter size, so one blob can peak in two of them.
/// Greedily keeps the stronger point when two points from different octaves
/// lie within one sample step of the coarser octave in x and y and within one
/// of its ladder steps in filter size. Input must be strength-ordered.
fn suppress_across_octaves(points: Vec<InterestPoint>) -> Vec<InterestPoint> {
    let mut kept: Vec<InterestPoint> = Vec::with_capacity(points.len());
    for p in points {
        let shadowed = kept.iter().any(|q| {
            if q.octave == p.octave {
                return false;
            }
            let coarse = p.octave.max(q.octave);
            let step = (1usize << coarse) as f64;
            let size_step = 6.0 * step;
            let size = |ip: &InterestPoint| ip.scale * 9.0 / 1.2;
            (p.x - q.x).abs() <= step && (p.y - q.y).abs() <= step && (size(&p) - size(q)).abs() <= size_step
        });
        if !shadowed {
            kept.push(p);
        }
    }
    kept
}

#[allow(clippy::too_many_arguments)]
fn scan_level(
    layers: &[ResponseLayer],
    octave: usize,
    level: usize,
    step: usize,
    width: usize,
    height: usize,
    threshold: f64,
    out: &mut Vec<InterestPoint>,
) {
    let (below, mid, above) = (&layers[level - 1], &layers[level], &layers[level + 1]);
    // the coarsest neighbouring filter must fit around the candidate
    let border = (above.size - 1) / 2;
    let c_lo = border.div_ceil(step).max(1);
    let r_lo = c_lo;
    if width <= border + 1 || height <= border + 1 {
        return;
    }
    let c_hi = (width - 1 - border) / step;
    let r_hi = (height - 1 - border) / step;
    for r in r_lo..=r_hi.min(mid.rows - 2) {
        for c in c_lo..=c_hi.min(mid.cols - 2) {
            let v = mid.at(r, c);
            if v <= threshold || !is_strict_max(v, r, c, below, mid, above) {
                continue;
            }
            let (x, y, size) = match refine(r, c, below, mid, above) {
                Some((dx, dy, ds)) => (
                    (c as f64 + dx) * step as f64,
                    (r as f64 + dy) * step as f64,
                    mid.size as f64 + ds * (mid.size - below.size) as f64,
                ),
                None => ((c * step) as f64, (r * step) as f64, mid.size as f64),
            };
            out.push(InterestPoint {
                x,
                y,
                scale: 1.2 * size / 9.0,
                strength: v,
                orientation: 0.0,
                laplacian_sign: mid.sign[r * mid.cols + c],
                octave,
                level,
            });
        }
    }
}

fn is_strict_max(v: f64, r: usize, c: usize, below: &ResponseLayer, mid: &ResponseLayer, above: &ResponseLayer) -> bool {
    for layer in [below, mid, above] {
        for rr in r - 1..=r + 1 {
            for cc in c - 1..=c + 1 {
                if std::ptr::eq(layer, mid) && rr == r && cc == c {
                    continue;
                }
                if layer.at(rr, cc) >= v {
                    return false;
                }
            }
        }
    }
    true
}

/// Quadratic fit of the 3x3x3 neighbourhood. Returns the sub-sample offset
/// `(dx, dy, ds)` or `None` when the fit is singular or steps further than
/// half a sample along any axis.
fn refine(r: usize, c: usize, below: &ResponseLayer, mid: &ResponseLayer, above: &ResponseLayer) -> Option<(f64, f64, f64)> {
    let v = mid.at(r, c);
    let gx = (mid.at(r, c + 1) - mid.at(r, c - 1)) / 2.0;
    let gy = (mid.at(r + 1, c) - mid.at(r - 1, c)) / 2.0;
    let gs = (above.at(r, c) - below.at(r, c)) / 2.0;

    let hxx = mid.at(r, c + 1) + mid.at(r, c - 1) - 2.0 * v;
    let hyy = mid.at(r + 1, c) + mid.at(r - 1, c) - 2.0 * v;
    let hss = above.at(r, c) + below.at(r, c) - 2.0 * v;
    let hxy = (mid.at(r + 1, c + 1) - mid.at(r + 1, c - 1) - mid.at(r - 1, c + 1) + mid.at(r - 1, c - 1)) / 4.0;
    let hxs = (above.at(r, c + 1) - above.at(r, c - 1) - below.at(r, c + 1) + below.at(r, c - 1)) / 4.0;
    let hys = (above.at(r + 1, c) - above.at(r - 1, c) - below.at(r + 1, c) + below.at(r - 1, c)) / 4.0;

    let m = [[hxx, hxy, hxs], [hxy, hyy, hys], [hxs, hys, hss]];
    let offset = solve3(m, [-gx, -gy, -gs])?;
    if offset.iter().all(|o| o.is_finite() && o.abs() <= 0.5) {
        Some((offset[0], offset[1], offset[2]))
    } else {
        None
    }
}

/// Cramer's rule; `None` for a (numerically) singular system.
fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 || d.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut x = [0.0; 3];
    for (i, xi) in x.iter_mut().enumerate() {
        let mut mi = m;
        for row in 0..3 {
            mi[row][i] = b[row];
        }
        *xi = det3(&mi) / d;
    }
    Some(x)
}

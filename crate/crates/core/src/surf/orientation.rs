use std::f64::consts::{FRAC_PI_3, TAU};

use super::{haar_x, haar_y, InterestPoint};
use crate::imgio::IntegralImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    /// Radians in `[0, 2pi)`.
    pub angle: f64,
    /// Set when every Haar response in the neighbourhood vanished; the angle
    /// is then 0.
    pub degenerate: bool,
}

/// Dominant gradient direction around `ip`.
///
/// Haar responses of side `4 * scale` are sampled every `scale` pixels within
/// a radius of `6 * scale`, weighted by a Gaussian of sigma `2 * scale`, and a
/// window of pi/3 slides around the circle; the window with the longest summed
/// response vector gives the orientation.
pub fn assign_orientation(ii: &IntegralImage, ip: &InterestPoint) -> Orientation {
    let s = ip.scale;
    let half = ((2.0 * s).round() as i64).max(1);
    let area = (4 * half * half) as f64;

    let mut responses: Vec<(f64, f64, f64)> = Vec::with_capacity(113);
    let mut peak = 0.0f64;
    for j in -6i64..=6 {
        for i in -6i64..=6 {
            let r2 = i * i + j * j;
            if r2 >= 36 {
                continue;
            }
            let px = (ip.x + i as f64 * s).round() as i64;
            let py = (ip.y + j as f64 * s).round() as i64;
            let g = (-(r2 as f64) / 8.0).exp();
            let dx = g * haar_x(ii, px, py, half);
            let dy = g * haar_y(ii, px, py, half);
            peak = peak.max(dx.abs()).max(dy.abs());
            responses.push((angle_of(dx, dy), dx, dy));
        }
    }
    if peak <= 1e-10 * area {
        return Orientation { angle: 0.0, degenerate: true };
    }

    responses.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = responses.len();
    let mut best = (0.0, 0.0, 0.0); // (|v|^2, sx, sy)
    for start in 0..n {
        let a0 = responses[start].0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for k in 0..n {
            let (a, dx, dy) = responses[(start + k) % n];
            let rel = (a - a0).rem_euclid(TAU);
            if rel >= FRAC_PI_3 {
                break;
            }
            sx += dx;
            sy += dy;
        }
        let m = sx * sx + sy * sy;
        if m > best.0 {
            best = (m, sx, sy);
        }
    }
    Orientation { angle: angle_of(best.1, best.2), degenerate: false }
}

/// `atan2` mapped onto `[0, 2pi)`.
pub(crate) fn angle_of(dx: f64, dy: f64) -> f64 {
    let a = dy.atan2(dx);
    let a = if a < 0.0 { a + TAU } else { a };
    if a >= TAU {
        0.0
    } else {
        a
    }
}

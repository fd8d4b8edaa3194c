use super::{haar_x, haar_y, Descriptor, InterestPoint};
use crate::error::{Error, Result};
use crate::imgio::IntegralImage;

pub const DESCRIPTOR_LEN: usize = 64;

/// Half-side of the descriptor window, in units of the point's scale.
const WINDOW_HALF: f64 = 10.0;
const GAUSS_SIGMA: f64 = 3.3;

/// Describes the `20 * scale` window around `ip`, rotated to its orientation.
///
/// The window is split into 4x4 subregions of 5x5 samples spaced one scale
/// apart. Each sample contributes Haar responses of side `2 * scale`, rotated
/// into the point's frame and weighted by a Gaussian of sigma `3.3 * scale`
/// centred on the point. Fails with `WindowOutOfBounds` when the axis-aligned
/// window is not fully inside the image.
pub fn compute_descriptor(ii: &IntegralImage, ip: &InterestPoint) -> Result<Descriptor> {
    let s = ip.scale;
    let reach = WINDOW_HALF * s;
    let (w, h) = (ii.width() as f64, ii.height() as f64);
    if ip.x - reach < 0.0 || ip.y - reach < 0.0 || ip.x + reach > w - 1.0 || ip.y + reach > h - 1.0 {
        return Err(Error::WindowOutOfBounds { x: ip.x, y: ip.y, scale: s });
    }

    let half = (s.round() as i64).max(1);
    let (sin, cos) = ip.orientation.sin_cos();
    let mut values = [0.0; DESCRIPTOR_LEN];
    for sub_y in 0..4 {
        for sub_x in 0..4 {
            let (mut sdx, mut sadx, mut sdy, mut sady) = (0.0, 0.0, 0.0, 0.0);
            for v in 0..5 {
                for u in 0..5 {
                    // sample offset in scale units, -9.5 ..= 9.5
                    let ou = -WINDOW_HALF + (5 * sub_x + u) as f64 + 0.5;
                    let ov = -WINDOW_HALF + (5 * sub_y + v) as f64 + 0.5;
                    let px = (ip.x + s * (ou * cos - ov * sin)).round() as i64;
                    let py = (ip.y + s * (ou * sin + ov * cos)).round() as i64;
                    let g = (-(ou * ou + ov * ov) / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA)).exp();
                    let rx = haar_x(ii, px, py, half);
                    let ry = haar_y(ii, px, py, half);
                    let dx = g * (cos * rx + sin * ry);
                    let dy = g * (-sin * rx + cos * ry);
                    sdx += dx;
                    sadx += dx.abs();
                    sdy += dy;
                    sady += dy.abs();
                }
            }
            let base = 4 * (4 * sub_y + sub_x);
            values[base..base + 4].copy_from_slice(&[sdx, sadx, sdy, sady]);
        }
    }

    // Haar sums of a flat window are pure cancellation noise.
    let noise_floor = 1e-9 * (4 * half * half) as f64;
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let degenerate = norm <= noise_floor;
    if degenerate {
        values = [0.0; DESCRIPTOR_LEN];
    } else {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(Descriptor { values, point: *ip, degenerate })
}

//! Independent reference implementations shared by the integration tests
//! and the acceptance harness.
#![allow(dead_code)]

use bovw_core::imgio::GrayImage;

/// Population standard deviation per dimension, computed with the textbook
/// two-pass formula.
pub fn two_pass_scales(points: &[Vec<f64>], floor: f64) -> Vec<f64> {
    let n = points.len() as f64;
    (0..points[0].len())
        .map(|d| {
            let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
            let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
            1.0 / var.sqrt().max(floor)
        })
        .collect()
}

/// Minimum mean squared standardized distortion over every labeling of the
/// points into exactly `k` non-empty clusters.
pub fn exhaustive_kmeans_optimum(points: &[Vec<f64>], k: usize, scales: &[f64]) -> f64 {
    let n = points.len();
    let total = k.pow(n as u32);
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        let mut used = vec![false; k];
        labels.iter().for_each(|&l| used[l] = true);
        if used.iter().any(|u| !u) {
            continue;
        }
        let mut cost = 0.0;
        for cluster in 0..k {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| labels[i] == cluster).map(|i| &points[i]).collect();
            for d in 0..scales.len() {
                let mean = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                cost += members.iter().map(|p| (scales[d] * (p[d] - mean)).powi(2)).sum::<f64>();
            }
        }
        best = best.min(cost / n as f64);
    }
    best
}

/// Sum of the pixels in `[x, x + w) x [y, y + h)` clipped to the image.
pub fn naive_box_sum(pixels: &[f64], width: usize, height: usize, x: i64, y: i64, w: i64, h: i64) -> f64 {
    let mut s = 0.0;
    for yy in y.max(0)..(y + h).min(height as i64) {
        for xx in x.max(0)..(x + w).min(width as i64) {
            s += pixels[yy as usize * width + xx as usize];
        }
    }
    s
}

/// Regularized mean hinge objective of a binary linear classifier.
pub fn hinge_objective(lambda: f64, w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let loss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b)).max(0.0))
        .sum::<f64>()
        / xs.len() as f64;
    reg + loss
}

/// Grid-search minimum of the 1-d objective over `(w, b)` in `[-5, 5]^2`
/// with step 0.01.
pub fn grid_search_1d(lambda: f64, xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let mut best = f64::INFINITY;
    for i in 0..=1000 {
        let w = -5.0 + 0.01 * i as f64;
        for j in 0..=1000 {
            let b = -5.0 + 0.01 * j as f64;
            best = best.min(hinge_objective(lambda, &[w], b, &pts, ys));
        }
    }
    best
}

/// Ids of `corpus` sorted by Euclidean distance to `q`, ties by id.
pub fn exhaustive_ranking(corpus: &[(String, Vec<f64>)], q: &[f64]) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = corpus
        .iter()
        .map(|(id, v)| (id.clone(), v.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    all
}

/// Sum of isotropic Gaussian bumps `(cx, cy, sigma)` of unit height.
pub fn gaussian_blobs(w: usize, h: usize, blobs: &[(f64, f64, f64)]) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| {
        blobs
            .iter()
            .map(|&(cx, cy, s)| (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum()
    })
    .unwrap()
}

/// Bilinear 2x upscale; input pixel `x` maps to output `2x + 0.5`.
pub fn upscale2(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(2 * w, 2 * h, |x, y| {
        let sx = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
        let sy = ((y as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
        let bot = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    })
    .unwrap()
}

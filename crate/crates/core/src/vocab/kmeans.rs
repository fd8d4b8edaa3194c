use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nearest, standardized_distance_sq, TrainStats, Vocabulary};
use crate::error::{Error, Result};

/// Floor on per-dimension standard deviations; a constant dimension gets
/// scale `1 / STD_FLOOR`.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// `k` distinct points drawn uniformly without replacement.
    Random,
    /// D^2-weighted seeding.
    PlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the largest standardized centroid move.
    pub tol: f64,
    pub init: Init,
    /// Independent runs with seeds `seed, seed + 1, ...`; the lowest final
    /// distortion wins.
    pub restarts: usize,
    /// After Lloyd converges, move single points between clusters while a
    /// move lowers the distortion (Hartigan's criterion).
    pub refine: bool,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams { k: 500, seed: 42, max_iter: 100, tol: 1e-6, init: Init::Random, restarts: 1, refine: true }
    }
}

/// Per-dimension `1 / max(std, STD_FLOOR)` over the pool, using the
/// population standard deviation (two-pass).
pub fn standardization<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: points.len() });
    }
    let dim = points[0].as_ref().len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for p in points {
        for ((acc, v), m) in var.iter_mut().zip(p.as_ref()).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    Ok(var.into_iter().map(|s| 1.0 / (s / n).sqrt().max(STD_FLOOR)).collect())
}

/// Lloyd's algorithm under the standardized Euclidean distance, optionally
/// followed by single-point transfer refinement.
///
/// Standardization scales are computed from `points` themselves. Empty
/// clusters are re-seeded with the point farthest from its centroid among
/// clusters that can spare one, so `k` is preserved and distortion never rises.
pub fn kmeans<P: AsRef<[f64]> + Sync>(points: &[P], params: &KMeansParams) -> Result<Vocabulary> {
    if params.k == 0 {
        return Err(Error::InvalidParams("k must be >= 1".into()));
    }
    if params.max_iter == 0 {
        return Err(Error::InvalidParams("max_iter must be >= 1".into()));
    }
    let scales = standardization(points)?;
    let distinct = distinct_indices(points);
    if params.k > distinct.len() {
        return Err(Error::TooFewPoints { k: params.k, distinct: distinct.len() });
    }

    let mut best: Option<Vocabulary> = None;
    for r in 0..params.restarts.max(1) {
        let seed = params.seed.wrapping_add(r as u64);
        let run = lloyd(points, &scales, &distinct, params, seed)?;
        if best.as_ref().is_none_or(|b| run.train_stats.final_distortion < b.train_stats.final_distortion) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// First occurrence of every bitwise-distinct point.
fn distinct_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let mut seen = HashSet::new();
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| seen.insert(p.as_ref().iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .map(|(i, _)| i)
        .collect()
}

fn initial_centroids<P: AsRef<[f64]>>(
    points: &[P],
    scales: &[f64],
    distinct: &[usize],
    k: usize,
    init: Init,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    match init {
        Init::Random => index::sample(rng, distinct.len(), k)
            .into_iter()
            .map(|i| points[distinct[i]].as_ref().to_vec())
            .collect(),
        Init::PlusPlus => {
            let first = distinct[rng.random_range(0..distinct.len())];
            let mut centroids = vec![points[first].as_ref().to_vec()];
            let mut d2: Vec<f64> =
                distinct.iter().map(|&i| standardized_distance_sq(scales, points[i].as_ref(), &centroids[0])).collect();
            while centroids.len() < k {
                let total: f64 = d2.iter().sum();
                let pick = if total > 0.0 {
                    let mut target = rng.random::<f64>() * total;
                    let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
                    for (j, &d) in d2.iter().enumerate() {
                        if d > 0.0 && target < d {
                            chosen = j;
                            break;
                        }
                        target -= d;
                    }
                    chosen
                } else {
                    // every distinct point already chosen would contradict k <= distinct
                    d2.iter().position(|&d| d > 0.0).unwrap_or(0)
                };
                let c = points[distinct[pick]].as_ref().to_vec();
                for (dj, &i) in d2.iter_mut().zip(distinct) {
                    *dj = dj.min(standardized_distance_sq(scales, points[i].as_ref(), &c));
                }
                centroids.push(c);
            }
            centroids
        }
    }
}

fn assign_all<P: AsRef<[f64]> + Sync>(points: &[P], scales: &[f64], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points.par_iter().map(|p| nearest(scales, centroids, p.as_ref())).collect()
}

fn mean_distortion(assignment: &[(usize, f64)]) -> f64 {
    assignment.iter().map(|a| a.1).sum::<f64>() / assignment.len() as f64
}

fn lloyd<P: AsRef<[f64]> + Sync>(
    points: &[P],
    scales: &[f64],
    distinct: &[usize],
    params: &KMeansParams,
    seed: u64,
) -> Result<Vocabulary> {
    let k = params.k;
    let dim = scales.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = initial_centroids(points, scales, distinct, k, params.init, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        iterations += 1;
        let mut assignment = assign_all(points, scales, &centroids);
        history.push(mean_distortion(&assignment));
        repair_empty_clusters(&mut assignment, k);

        // index-order accumulation keeps the result independent of threads
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &(j, _)) in points.iter().zip(&assignment) {
            counts[j] += 1;
            sums[j].iter_mut().zip(p.as_ref()).for_each(|(s, v)| *s += v);
        }
        let mut shift = 0.0f64;
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            let updated: Vec<f64> = s.into_iter().map(|v| v / n as f64).collect();
            shift = shift.max(standardized_distance_sq(scales, c, &updated).sqrt());
            *c = updated;
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if shift < params.tol {
            converged = true;
            break;
        }
    }

    let mut final_distortion = mean_distortion(&assign_all(points, scales, &centroids));
    history.push(final_distortion);
    if params.refine && k > 1 {
        let refined = transfer_refine(points, scales, centroids.clone(), params.max_iter);
        let d = mean_distortion(&assign_all(points, scales, &refined));
        if d < final_distortion {
            centroids = refined;
            final_distortion = d;
            history.push(d);
        }
    }
    Vocabulary::new(
        scales.to_vec(),
        centroids,
        TrainStats { iterations, final_distortion, seed, converged, distortion_history: history },
    )
}

/// Hartigan-style refinement: visits points in index order and moves one to
/// another cluster whenever that strictly lowers the total distortion, until
/// a full pass makes no move or `max_passes` is reached. Every Lloyd fixpoint
/// that such a move improves is escaped; the result is again a Lloyd fixpoint.
fn transfer_refine<P: AsRef<[f64]> + Sync>(
    points: &[P],
    scales: &[f64],
    mut centroids: Vec<Vec<f64>>,
    max_passes: usize,
) -> Vec<Vec<f64>> {
    let k = centroids.len();
    let mut labels: Vec<usize> = assign_all(points, scales, &centroids).into_iter().map(|a| a.0).collect();
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&j| counts[j] += 1);
    // centroids as exact means of the current labels
    let recompute = |labels: &[usize], counts: &[usize], centroids: &mut Vec<Vec<f64>>| {
        let mut sums = vec![vec![0.0; scales.len()]; k];
        for (p, &j) in points.iter().zip(labels) {
            sums[j].iter_mut().zip(p.as_ref()).for_each(|(s, v)| *s += v);
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(counts) {
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
    };
    recompute(&labels, &counts, &mut centroids);
    for _ in 0..max_passes {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let x = p.as_ref();
            let a = labels[i];
            let na = counts[a] as f64;
            if counts[a] < 2 {
                continue;
            }
            let removal_gain = na / (na - 1.0) * standardized_distance_sq(scales, x, &centroids[a]);
            let mut best: Option<(usize, f64)> = None;
            for (b, c) in centroids.iter().enumerate() {
                if b == a {
                    continue;
                }
                let nb = counts[b] as f64;
                let cost = nb / (nb + 1.0) * standardized_distance_sq(scales, x, c);
                if best.is_none_or(|(_, bc)| cost < bc) {
                    best = Some((b, cost));
                }
            }
            let Some((b, cost)) = best else { continue };
            // relative margin keeps rounding noise from triggering moves
            if cost < removal_gain * (1.0 - 1e-12) {
                let nb = counts[b] as f64;
                for (d, &v) in x.iter().enumerate() {
                    centroids[a][d] = (na * centroids[a][d] - v) / (na - 1.0);
                    centroids[b][d] = (nb * centroids[b][d] + v) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                labels[i] = b;
                moved = true;
            }
        }
        recompute(&labels, &counts, &mut centroids);
        if !moved {
            break;
        }
    }
    centroids
}

/// Moves the farthest point of a multi-member cluster into each empty one.
fn repair_empty_clusters(assignment: &mut [(usize, f64)], k: usize) {
    let mut sizes = vec![0usize; k];
    for &(j, _) in assignment.iter() {
        sizes[j] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = assignment
            .iter()
            .enumerate()
            .filter(|(_, (j, _))| sizes[*j] >= 2)
            .fold(None::<(usize, f64)>, |best, (i, &(_, d))| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        // k <= distinct points guarantees a donor exists
        let Some((i, _)) = donor else { return };
        sizes[assignment[i].0] -= 1;
        sizes[empty] = 1;
        assignment[i] = (empty, 0.0);
    }
}

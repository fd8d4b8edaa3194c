//! Visual vocabulary: strongest-feature pruning, standardized distances and
//! k-means codebooks.

mod io;
mod kmeans;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surf::{Descriptor, DESCRIPTOR_LEN};

pub use io::{read_vocabulary, vocabulary_from_bytes, vocabulary_to_bytes, write_vocabulary, VOCAB_MAGIC};
pub use kmeans::{kmeans, standardization, Init, KMeansParams, STD_FLOOR};

/// Descriptors of one image.
#[derive(Debug, Clone)]
pub struct ImageFeatures {
    pub image_id: String,
    /// Class index, when known.
    pub label: Option<usize>,
    pub descriptors: Vec<Descriptor>,
}

/// The per-image descriptor lists of a corpus.
#[derive(Debug, Clone, Default)]
pub struct FeatureBag {
    pub images: Vec<ImageFeatures>,
}

impl FeatureBag {
    pub fn total_descriptors(&self) -> usize {
        self.images.iter().map(|i| i.descriptors.len()).sum()
    }

    /// All descriptors, image by image.
    pub fn descriptors(&self) -> impl Iterator<Item = &Descriptor> {
        self.images.iter().flat_map(|i| i.descriptors.iter())
    }
}

impl AsRef<[f64]> for Descriptor {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Number of descriptors kept out of `n` for a retention `fraction`:
/// `ceil(fraction * n)`, never zero for a non-empty image.
pub fn retained_count(n: usize, fraction: f64) -> usize {
    // the epsilon keeps 0.7 * 10 from rounding up to 8
    if n == 0 {
        return 0;
    }
    (((fraction * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

/// The strongest `ceil(fraction * n)` descriptors of one image, strongest
/// first. Ties in strength are broken by `(y, x, scale)` ascending.
pub fn prune_descriptors(descriptors: &[Descriptor], fraction: f64) -> Result<Vec<Descriptor>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParams(format!("prune fraction {fraction} outside (0, 1]")));
    }
    let mut ds = descriptors.to_vec();
    ds.sort_by(|a, b| crate::surf::strength_order(&a.point, &b.point));
    ds.truncate(retained_count(ds.len(), fraction));
    Ok(ds)
}

/// Applies [`prune_descriptors`] to every image of the bag.
pub fn prune_strongest(bag: &FeatureBag, fraction: f64) -> Result<FeatureBag> {
    let images = bag
        .images
        .iter()
        .map(|img| {
            if img.descriptors.is_empty() {
                return Err(Error::EmptyImage(img.image_id.clone()));
            }
            let descriptors = prune_descriptors(&img.descriptors, fraction)?;
            Ok(ImageFeatures { image_id: img.image_id.clone(), label: img.label, descriptors })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureBag { images })
}

/// Statistics of the k-means run that produced a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub iterations: usize,
    pub final_distortion: f64,
    pub seed: u64,
    pub converged: bool,
    /// Mean squared standardized distance after every assignment step.
    pub distortion_history: Vec<f64>,
}

/// `k` centroids plus the per-dimension inverse standard deviations of the
/// training pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub k: usize,
    pub dim: usize,
    pub dim_scales: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub train_stats: TrainStats,
}

impl Vocabulary {
    pub fn new(dim_scales: Vec<f64>, centroids: Vec<Vec<f64>>, train_stats: TrainStats) -> Result<Self> {
        let dim = dim_scales.len();
        if centroids.is_empty() {
            return Err(Error::InvalidParams("vocabulary needs at least one centroid".into()));
        }
        if let Some(c) = centroids.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
        }
        if dim_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParams("dim_scales must be positive and finite".into()));
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Vocabulary { k: centroids.len(), dim, dim_scales, centroids, train_stats })
    }

    /// Squared standardized Euclidean distance.
    #[inline]
    pub fn distance_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        standardized_distance_sq(&self.dim_scales, a, b)
    }

    /// Index of the nearest centroid; ties go to the lowest word id.
    pub fn assign_word(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(nearest(&self.dim_scales, &self.centroids, v).0)
    }

    /// True when this vocabulary describes SURF descriptors.
    pub fn is_descriptor_vocabulary(&self) -> bool {
        self.dim == DESCRIPTOR_LEN
    }
}

/// Free-function form of [`Vocabulary::assign_word`].
pub fn assign_word(vocab: &Vocabulary, descriptor: &Descriptor) -> Result<usize> {
    vocab.assign_word(&descriptor.values)
}

#[inline]
pub(crate) fn standardized_distance_sq(scales: &[f64], a: &[f64], b: &[f64]) -> f64 {
    scales
        .iter()
        .zip(a.iter().zip(b))
        .map(|(s, (x, y))| {
            let d = s * (x - y);
            d * d
        })
        .sum()
}

/// `(index, squared distance)` of the nearest centroid, lowest index on ties.
#[inline]
pub(crate) fn nearest(scales: &[f64], centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = standardized_distance_sq(scales, v, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

//! Shared fixtures for the benchmarks: a small synthetic corpus and the
//! intermediate products of each pipeline stage.

use bovw_core::synth::{generate_corpus, SyntheticCorpusSpec};
use bovw_core::{extract_features, DetectorParams, Descriptor, GrayImage, KMeansParams, Vocabulary};

/// Images of a 4-class synthetic corpus, `per_class` (at least 4) images per
/// class.
pub fn images(per_class: usize, size: usize) -> Vec<GrayImage> {
    generate_corpus(&SyntheticCorpusSpec::standard(4, per_class, size, 7))
        .expect("valid corpus spec")
        .into_iter()
        .map(|s| s.image)
        .collect()
}

/// Descriptors of every image, one list per image.
pub fn descriptors(images: &[GrayImage]) -> Vec<Vec<Descriptor>> {
    let params = DetectorParams::default();
    images.iter().map(|img| extract_features(img, &params).expect("extraction")).collect()
}

/// Descriptor values pooled for clustering.
pub fn pool(descriptors: &[Vec<Descriptor>]) -> Vec<[f64; 64]> {
    descriptors.iter().flatten().map(|d| d.values).collect()
}

pub fn vocabulary(pool: &[[f64; 64]], k: usize) -> Vocabulary {
    bovw_core::kmeans(pool, &KMeansParams { k, ..Default::default() }).expect("clustering")
}

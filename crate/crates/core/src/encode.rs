//! Histograms of visual-word occurrences.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binfmt::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::surf::Descriptor;
use crate::vocab::{FeatureBag, Vocabulary};

pub const INDEX_MAGIC: &[u8; 8] = b"BOVWIDX1";
const UNLABELED: u32 = u32::MAX;

/// Word counts of one image plus their L1-normalized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BovwHistogram {
    pub image_id: String,
    pub label: Option<usize>,
    pub counts: Vec<u32>,
    pub normalized: Vec<f64>,
    pub n_features: usize,
    /// No descriptors: counts and normalized are all zero.
    pub degenerate: bool,
}

impl BovwHistogram {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// The single-precision form written to index files.
    pub fn to_stored(&self) -> StoredHistogram {
        StoredHistogram {
            image_id: self.image_id.clone(),
            label: self.label,
            n_features: self.n_features,
            normalized: self.normalized.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Counts the nearest-word assignments of `descriptors`.
///
/// An empty list gives the all-zero degenerate histogram.
pub fn encode_histogram(vocab: &Vocabulary, descriptors: &[Descriptor]) -> Result<BovwHistogram> {
    let mut counts = vec![0u32; vocab.k];
    for d in descriptors {
        counts[vocab.assign_word(&d.values)?] += 1;
    }
    Ok(from_counts(String::new(), None, counts))
}

fn from_counts(image_id: String, label: Option<usize>, counts: Vec<u32>) -> BovwHistogram {
    let n: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    let normalized = if n == 0 {
        vec![0.0; counts.len()]
    } else {
        counts.iter().map(|&c| f64::from(c) / n as f64).collect()
    };
    BovwHistogram { image_id, label, counts, normalized, n_features: n as usize, degenerate: n == 0 }
}

/// One histogram per image, ordered by image id.
pub fn encode_corpus(vocab: &Vocabulary, bag: &FeatureBag) -> Result<Vec<BovwHistogram>> {
    if bag.images.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut out = bag
        .images
        .par_iter()
        .map(|img| {
            let mut h = encode_histogram(vocab, &img.descriptors)?;
            h.image_id = img.image_id.clone();
            h.label = img.label;
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(out)
}

/// Inverse document frequencies, `ln(N / (1 + df))`, floored at zero.
///
/// Not part of the default pipeline; available for ranking experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfWeights(pub Vec<f64>);

impl IdfWeights {
    pub fn fit(histograms: &[BovwHistogram]) -> Result<Self> {
        let k = histograms.first().ok_or(Error::EmptyCorpus)?.k();
        let mut df = vec![0usize; k];
        for h in histograms {
            if h.k() != k {
                return Err(Error::DimensionMismatch { expected: k, got: h.k() });
            }
            for (d, &c) in df.iter_mut().zip(&h.counts) {
                *d += usize::from(c > 0);
            }
        }
        let n = histograms.len() as f64;
        Ok(IdfWeights(df.into_iter().map(|d| (n / (1.0 + d as f64)).ln().max(0.0)).collect()))
    }

    /// Reweights the normalized vector and renormalizes it to unit L1 norm.
    pub fn apply(&self, h: &BovwHistogram) -> Vec<f64> {
        let w: Vec<f64> = h.normalized.iter().zip(&self.0).map(|(v, i)| v * i).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.into_iter().map(|v| v / total).collect()
        } else {
            w
        }
    }
}

/// A histogram as stored in `BOVWIDX1` files.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredHistogram {
    pub image_id: String,
    pub label: Option<usize>,
    pub n_features: usize,
    pub normalized: Vec<f32>,
}

/// `BOVWIDX1` layout, little-endian: magic, u32 k, u32 n_images, then per
/// image u32 id length, UTF-8 id, u32 label (`0xFFFFFFFF` when unlabeled),
/// u32 n_features, f32 normalized[k].
pub fn histograms_to_bytes(k: usize, entries: &[StoredHistogram]) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(INDEX_MAGIC);
    w.len_u32(k)?;
    w.len_u32(entries.len())?;
    for e in entries {
        if e.normalized.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: e.normalized.len() });
        }
        w.string(&e.image_id)?;
        match e.label {
            Some(l) if l < UNLABELED as usize => w.u32(l as u32),
            Some(l) => return Err(Error::InvalidParams(format!("label index {l} too large"))),
            None => w.u32(UNLABELED),
        }
        w.len_u32(e.n_features)?;
        e.normalized.iter().for_each(|&v| w.f32(v));
    }
    Ok(w.buf)
}

pub fn histograms_from_bytes(bytes: &[u8]) -> Result<(usize, Vec<StoredHistogram>)> {
    let mut r = Reader::new("histogram index", bytes);
    r.magic(INDEX_MAGIC)?;
    let k = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let image_id = r.string()?;
        let label = match r.u32()? {
            UNLABELED => None,
            l => Some(l as usize),
        };
        let n_features = r.u32()? as usize;
        let normalized = (0..k).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        entries.push(StoredHistogram { image_id, label, n_features, normalized });
    }
    r.finish()?;
    Ok((k, entries))
}

pub fn write_histograms(path: impl AsRef<Path>, k: usize, entries: &[StoredHistogram]) -> Result<()> {
    write_atomic(path.as_ref(), &histograms_to_bytes(k, entries)?)
}

pub fn read_histograms(path: impl AsRef<Path>) -> Result<(usize, Vec<StoredHistogram>)> {
    histograms_from_bytes(&std::fs::read(path)?)
}

//! `BOVWVOC1` layout, little-endian:
//! magic, u32 k, u32 dim, f64 dim_scales[dim], f64 centroids[k * dim],
//! u64 seed, f64 final_distortion.

use std::path::Path;

use super::{TrainStats, Vocabulary};
use crate::binfmt::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};

pub const VOCAB_MAGIC: &[u8; 8] = b"BOVWVOC1";

pub fn vocabulary_to_bytes(v: &Vocabulary) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(VOCAB_MAGIC);
    w.len_u32(v.k)?;
    w.len_u32(v.dim)?;
    v.dim_scales.iter().for_each(|&s| w.f64(s));
    v.centroids.iter().flatten().for_each(|&c| w.f64(c));
    w.u64(v.train_stats.seed);
    w.f64(v.train_stats.final_distortion);
    Ok(w.buf)
}

/// Parses a vocabulary file. Stored vocabularies must have `k >= 2`.
pub fn vocabulary_from_bytes(bytes: &[u8]) -> Result<Vocabulary> {
    let mut r = Reader::new("vocabulary", bytes);
    r.magic(VOCAB_MAGIC)?;
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if k < 2 || dim == 0 {
        return Err(r.err(format!("k = {k}, dim = {dim}")));
    }
    let dim_scales = r.f64s(dim)?;
    let flat = r.f64s(k.checked_mul(dim).ok_or_else(|| r.err("size overflow"))?)?;
    let seed = r.u64()?;
    let final_distortion = r.f64()?;
    r.finish()?;
    let centroids = flat.chunks(dim).map(<[f64]>::to_vec).collect();
    let stats = TrainStats { iterations: 0, final_distortion, seed, converged: true, distortion_history: Vec::new() };
    Vocabulary::new(dim_scales, centroids, stats).map_err(|e| Error::ArtifactFormat {
        what: "vocabulary".into(),
        detail: e.to_string(),
    })
}

pub fn write_vocabulary(v: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &vocabulary_to_bytes(v)?)
}

pub fn read_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    vocabulary_from_bytes(&std::fs::read(path)?)
}

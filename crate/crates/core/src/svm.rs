//! One-vs-rest linear SVMs trained by stochastic subgradient descent.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binfmt::{write_atomic, Reader, Writer};
use crate::encode::BovwHistogram;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"BOVWSVM1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmHyper {
    /// L2 regularization strength.
    pub lambda: f64,
    pub epochs: u32,
    pub seed: u64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        SvmHyper { lambda: 1e-4, epochs: 50, seed: 42 }
    }
}

impl SvmHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParams(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParams("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// One weight vector and bias per class; scores are `w_c . x + b_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub labels: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub hyper: SvmHyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

impl LinearModel {
    pub fn new(labels: Vec<String>, weights: Vec<Vec<f64>>, biases: Vec<f64>, hyper: SvmHyper) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::SingleClass);
        }
        if weights.len() != labels.len() || biases.len() != labels.len() {
            return Err(Error::InvalidParams("one weight vector and bias per class required".into()));
        }
        let k = weights[0].len();
        if let Some(w) = weights.iter().find(|w| w.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, got: w.len() });
        }
        if weights.iter().flatten().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss);
        }
        let mut seen = HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidParams(format!("duplicate class label {dup:?}")));
        }
        Ok(LinearModel { labels, weights, biases, hyper })
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    /// Feature dimension.
    pub fn k(&self) -> usize {
        self.weights[0].len()
    }

    pub fn predict_vector<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<Prediction> {
        if x.len() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), got: x.len() });
        }
        let scores: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(x).map(|(w, &v)| w * v.into()).sum::<f64>() + b)
            .collect();
        let label = argmax(&scores);
        Ok(Prediction { label, scores })
    }
}

/// Index of the largest score; the lowest index wins ties.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Scores the normalized form of `h`.
pub fn predict(model: &LinearModel, h: &BovwHistogram) -> Result<Prediction> {
    model.predict_vector(&h.normalized)
}

/// `lambda / 2 * |w|^2 + mean_i max(0, 1 - y_i (w . x_i + b))`.
pub fn objective(lambda: f64, w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let reg = 0.5 * lambda * dot(w, w);
    let loss: f64 = xs.iter().zip(ys).map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0)).sum();
    reg + loss / xs.len() as f64
}

/// A subgradient of [`objective`] with respect to `(w, b)`. At the hinge
/// kink (margin exactly 1) the zero branch is taken.
pub fn objective_subgradient(lambda: f64, w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64]) -> (Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        if y * (dot(w, x) + b) < 1.0 {
            gw.iter_mut().zip(x).for_each(|(g, v)| *g -= y * v / n);
            gb -= y / n;
        }
    }
    (gw, gb)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub w: Vec<f64>,
    pub b: f64,
    /// Objective of the returned-so-far iterate after every epoch.
    pub epoch_objectives: Vec<f64>,
}

/// Minimizes [`objective`] for labels `ys` in {-1, +1}.
///
/// Steps are `1 / (lambda t)`; `w` is projected onto the ball of radius
/// `sqrt(2 / lambda)` and `b` onto `|b| <= R max|x| + 1`, both of which
/// contain the minimizer. The returned iterate is the average over the
/// second half of the epochs. The sample order of every epoch is a shuffle
/// drawn from `rng`.
pub fn train_binary(xs: &[Vec<f64>], ys: &[f64], hyper: &SvmHyper, rng: &mut ChaCha8Rng) -> Result<BinaryFit> {
    hyper.validate()?;
    let n = xs.len();
    if n == 0 || n != ys.len() {
        return Err(Error::InsufficientData { needed: 1, got: n.min(ys.len()) });
    }
    let dim = xs[0].len();
    if let Some(x) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
    }
    let lambda = hyper.lambda;
    let radius = (2.0 / lambda).sqrt();
    let max_norm = xs.iter().map(|x| dot(x, x).sqrt()).fold(0.0, f64::max);
    let b_bound = radius * max_norm + 1.0;

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let mut averaged = 0u64;
    let avg_start = hyper.epochs / 2;
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_objectives = Vec::with_capacity(hyper.epochs as usize);
    let mut t = 0u64;

    for epoch in 0..hyper.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = (&xs[i], ys[i]);
            let violated = y * (dot(&w, x) + b) < 1.0;
            let shrink = 1.0 - 1.0 / t as f64;
            w.iter_mut().for_each(|v| *v *= shrink);
            if violated {
                w.iter_mut().zip(x).for_each(|(v, xv)| *v += eta * y * xv);
                b += eta * y;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
            b = b.clamp(-b_bound, b_bound);
            if epoch >= avg_start {
                averaged += 1;
                let f = 1.0 / averaged as f64;
                avg_w.iter_mut().zip(&w).for_each(|(a, v)| *a += (v - *a) * f);
                avg_b += (b - avg_b) * f;
            }
        }
        let current = if averaged > 0 { objective(lambda, &avg_w, avg_b, xs, ys) } else { objective(lambda, &w, b, xs, ys) };
        if !current.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        epoch_objectives.push(current);
    }
    Ok(BinaryFit { w: avg_w, b: avg_b, epoch_objectives })
}

/// Stream id of a class's shuffle sequence, derived from its name so the
/// order of the label table does not matter.
fn class_stream(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Trains one binary problem per class on dense features.
///
/// `ys[i]` indexes `label_names`. Every class must have an example.
pub fn train_ovr_dense(xs: &[Vec<f64>], ys: &[usize], label_names: &[String], hyper: &SvmHyper) -> Result<LinearModel> {
    hyper.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::InvalidParams("one label per example required".into()));
    }
    if let Some(&bad) = ys.iter().find(|&&y| y >= label_names.len()) {
        return Err(Error::InvalidParams(format!("label index {bad} outside the label table")));
    }
    let present: HashSet<usize> = ys.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::SingleClass);
    }
    if let Some(missing) = (0..label_names.len()).find(|c| !present.contains(c)) {
        return Err(Error::MissingClass(label_names[missing].clone()));
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if xs.iter().all(|x| x.iter().all(|&v| v == 0.0)) {
        return Err(Error::DegenerateInput);
    }
    let fits = label_names
        .par_iter()
        .enumerate()
        .map(|(c, name)| {
            let targets: Vec<f64> = ys.iter().map(|&y| if y == c { 1.0 } else { -1.0 }).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
            rng.set_stream(class_stream(name));
            train_binary(xs, &targets, hyper, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let (weights, biases) = fits.into_iter().map(|f| (f.w, f.b)).unzip();
    LinearModel::new(label_names.to_vec(), weights, biases, *hyper)
}

/// Trains on the normalized form of labeled, non-degenerate histograms.
pub fn train_ovr(histograms: &[BovwHistogram], label_names: &[String], hyper: &SvmHyper) -> Result<LinearModel> {
    let mut xs = Vec::with_capacity(histograms.len());
    let mut ys = Vec::with_capacity(histograms.len());
    for h in histograms {
        if h.degenerate {
            return Err(Error::DegenerateInput);
        }
        let label = h.label.ok_or_else(|| Error::InvalidParams(format!("training image {} has no label", h.image_id)))?;
        xs.push(h.normalized.clone());
        ys.push(label);
    }
    train_ovr_dense(&xs, &ys, label_names, hyper)
}

/// `BOVWSVM1` layout, little-endian: magic, u32 n_classes, u32 k, labels
/// (u32 length + UTF-8 each), f64 biases[n_classes], f64 weights[n_classes * k],
/// f64 lambda, u32 epochs, u64 seed.
pub fn model_to_bytes(m: &LinearModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MODEL_MAGIC);
    w.len_u32(m.n_classes())?;
    w.len_u32(m.k())?;
    for l in &m.labels {
        w.string(l)?;
    }
    m.biases.iter().for_each(|&b| w.f64(b));
    m.weights.iter().flatten().for_each(|&v| w.f64(v));
    w.f64(m.hyper.lambda);
    w.u32(m.hyper.epochs);
    w.u64(m.hyper.seed);
    Ok(w.buf)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<LinearModel> {
    let mut r = Reader::new("model", bytes);
    r.magic(MODEL_MAGIC)?;
    let n = r.u32()? as usize;
    let k = r.u32()? as usize;
    if n < 2 || k == 0 {
        return Err(r.err(format!("n_classes = {n}, k = {k}")));
    }
    let labels = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let biases = r.f64s(n)?;
    let flat = r.f64s(n.checked_mul(k).ok_or_else(|| r.err("size overflow"))?)?;
    let hyper = SvmHyper { lambda: r.f64()?, epochs: r.u32()?, seed: r.u64()? };
    r.finish()?;
    let weights = flat.chunks(k).map(<[f64]>::to_vec).collect();
    LinearModel::new(labels, weights, biases, hyper)
        .map_err(|e| Error::ArtifactFormat { what: "model".into(), detail: e.to_string() })
}

pub fn write_model(m: &LinearModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &model_to_bytes(m)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    model_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn bias_dominance_and_tie_break() {
        let m = LinearModel::new(names(2), vec![vec![0.0; 3]; 2], vec![1.0, 0.0], SvmHyper::default()).unwrap();
        assert_eq!(m.predict_vector(&[0.3, 0.2, 0.5]).unwrap().label, 0);
        let tied = LinearModel::new(names(3), vec![vec![0.5; 3]; 3], vec![0.2; 3], SvmHyper::default()).unwrap();
        let p = tied.predict_vector(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.label, 0);
        assert_eq!(p.scores, vec![3.2; 3]);
        assert!(matches!(m.predict_vector(&[1.0]), Err(Error::DimensionMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn input_errors() {
        let h = SvmHyper::default();
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(train_ovr_dense(&xs, &[0, 0], &names(1), &h), Err(Error::SingleClass)));
        assert!(matches!(train_ovr_dense(&xs, &[0, 0], &names(2), &h), Err(Error::SingleClass)));
        assert!(matches!(train_ovr_dense(&xs, &[0, 1], &names(3), &h), Err(Error::MissingClass(c)) if c == "c2"));
        let zeros = vec![vec![0.0, 0.0]; 2];
        assert!(matches!(train_ovr_dense(&zeros, &[0, 1], &names(2), &h), Err(Error::DegenerateInput)));
        let bad = SvmHyper { lambda: 0.0, ..h };
        assert!(train_ovr_dense(&xs, &[0, 1], &names(2), &bad).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let m = train_ovr_dense(&xs, &[0, 1, 2], &names(3), &SvmHyper { epochs: 5, ..Default::default() }).unwrap();
        let bytes = model_to_bytes(&m).unwrap();
        assert_eq!(&bytes[..8], b"BOVWSVM1");
        assert_eq!(model_from_bytes(&bytes).unwrap(), m);
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let labels = vec!["a".to_string(), "a".to_string()];
        assert!(LinearModel::new(labels, vec![vec![0.0]; 2], vec![0.0; 2], SvmHyper::default()).is_err());
    }
}

//! Train/test splitting, Precision@k and MAP@k (the mean of Precision@k over
//! queries), and report files.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::BovwHistogram;
use crate::error::{Error, Result};
use crate::retrieval::{QueryMode, QueryOptions, RankedResult, Retriever};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.7, seed: 42 }
    }
}

/// Indices into the corpus, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Training-set size of a class of `n` images: `round(fraction * n)`, with
/// halves rounded up.
pub fn train_count(n: usize, fraction: f64) -> usize {
    // the epsilon keeps products like 0.7 * 5 = 3.4999... on the upper side
    ((fraction * n as f64 + 1e-9).round() as usize).min(n)
}

/// Shuffles each class with a seeded generator and sends the first
/// `train_count` images of it to training.
///
/// `labels[i]` is the class name of corpus item `i`. Classes are visited in
/// name order, so the result depends only on the corpus order and the seed.
pub fn split_dataset(labels: &[String], spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
        return Err(Error::Config(format!("train fraction {} outside (0, 1]", spec.train_fraction)));
    }
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split { train: Vec::new(), test: Vec::new() };
    for (class, mut members) in classes {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall { class: class.to_string(), count: members.len() });
        }
        members.shuffle(&mut rng);
        let n_train = train_count(members.len(), spec.train_fraction);
        split.train.extend_from_slice(&members[..n_train]);
        split.test.extend_from_slice(&members[n_train..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Number of results in ranks `1..=k` whose true class is `query_class`.
pub fn relevant_at_k(results: &[RankedResult], query_class: &str, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be >= 1".into()));
    }
    if results.len() < k {
        return Err(Error::InsufficientResults { needed: k, got: results.len() });
    }
    Ok(results[..k].iter().filter(|r| r.true_label.as_deref() == Some(query_class)).count())
}

pub fn precision_at_k(results: &[RankedResult], query_class: &str, k: usize) -> Result<f64> {
    Ok(relevant_at_k(results, query_class, k)? as f64 / k as f64)
}

/// Arithmetic mean of per-query Precision@k values.
pub fn map_at_k(precisions: &[f64]) -> Result<f64> {
    if precisions.is_empty() {
        return Err(Error::NoQueries);
    }
    Ok(precisions.iter().sum::<f64>() / precisions.len() as f64)
}

/// A ratio as a percentage with two decimals, halves rounded up
/// (`2/3 -> "66.67"`).
pub fn format_percent(ratio: f64) -> String {
    let hundredths = (ratio * 10_000.0 + 0.5 + 1e-7).floor();
    format!("{:.2}", hundredths / 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query_id: String,
    pub class: String,
    pub k: usize,
    pub relevant_at_k: usize,
    pub precision_at_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub k: usize,
    pub map: f64,
    /// `map` formatted by [`format_percent`].
    pub map_percent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: QueryMode,
    /// Number of queries that produced rows.
    pub n_queries: usize,
    /// Queries with no usable descriptors.
    pub skipped: Vec<String>,
    pub map: Vec<MapRow>,
    #[serde(skip)]
    pub rows: Vec<QueryRow>,
}

impl EvalReport {
    /// Builds the aggregates from per-query rows, averaging in query-id
    /// order.
    pub fn from_rows(mut rows: Vec<QueryRow>, mode: QueryMode, skipped: Vec<String>) -> Result<Self> {
        rows.sort_by(|a, b| a.query_id.cmp(&b.query_id).then(a.k.cmp(&b.k)));
        let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &rows {
            by_k.entry(r.k).or_default().push(r.precision_at_k);
        }
        if by_k.is_empty() {
            return Err(Error::NoQueries);
        }
        let map = by_k
            .into_iter()
            .map(|(k, ps)| {
                let m = map_at_k(&ps)?;
                Ok(MapRow { k, map: m, map_percent: format_percent(m) })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ids: Vec<&str> = rows.iter().map(|r| r.query_id.as_str()).collect();
        ids.dedup();
        let n_queries = ids.len();
        Ok(EvalReport { mode, n_queries, skipped, map, rows })
    }

    pub fn map_at(&self, k: usize) -> Option<f64> {
        self.map.iter().find(|m| m.k == k).map(|m| m.map)
    }

    /// Per-query rows as CSV: `query_id,class,k,relevant_at_k,precision_at_k`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(["query_id", "class", "k", "relevant_at_k", "precision_at_k"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Vec<QueryRow>> {
        csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
    }

    /// Aggregates as pretty JSON.
    pub fn write_json(&self, mut out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Reads the JSON aggregates and the CSV rows written by this report.
    pub fn read(json: impl Read, csv_rows: impl Read) -> Result<Self> {
        let mut report: EvalReport = serde_json::from_reader(json)?;
        report.rows = Self::read_csv(csv_rows)?;
        Ok(report)
    }

    /// MAP table: one line per k.
    pub fn summary(&self) -> String {
        let mut s = format!("queries: {}  skipped: {}  mode: {:?}\n", self.n_queries, self.skipped.len(), self.mode);
        s.push_str("k\tMAP@k\n");
        for m in &self.map {
            s.push_str(&format!("{}\t{}%\n", m.k, m.map_percent));
        }
        s
    }
}

/// A test image with its ground-truth class and encoded vector.
#[derive(Debug, Clone)]
pub struct EvalQuery {
    pub image_id: String,
    pub class: String,
    /// Normalized histogram in single precision.
    pub vector: Vec<f32>,
    /// No descriptors were extracted; recorded as a skipped query.
    pub degenerate: bool,
}

impl EvalQuery {
    pub fn from_histogram(h: &BovwHistogram, class: impl Into<String>) -> Self {
        EvalQuery { image_id: h.image_id.clone(), class: class.into(), vector: h.to_stored().normalized, degenerate: h.degenerate }
    }
}

/// Runs every query, leaving the query's own image out of its ranking, and
/// scores Precision@k against the true classes for each `k`.
pub fn run_evaluation(retriever: &Retriever<'_>, queries: &[EvalQuery], k_values: &[usize], mode: QueryMode) -> Result<EvalReport> {
    let k_max = *k_values.iter().max().ok_or_else(|| Error::Config("no k values given".into()))?;
    if k_values.contains(&0) {
        return Err(Error::Config("k values must be >= 1".into()));
    }
    let outcomes = queries
        .par_iter()
        .map(|q| {
            if q.degenerate {
                return Ok(None);
            }
            let opts = QueryOptions { exclude: Some(q.image_id.clone()), ..QueryOptions::new(k_max, mode) };
            let out = retriever.query_vector(&q.vector, &opts)?;
            k_values
                .iter()
                .map(|&k| {
                    let relevant = relevant_at_k(&out.results, &q.class, k)?;
                    Ok(QueryRow {
                        query_id: q.image_id.clone(),
                        class: q.class.clone(),
                        k,
                        relevant_at_k: relevant,
                        precision_at_k: relevant as f64 / k as f64,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (q, o) in queries.iter().zip(outcomes) {
        match o {
            Some(r) => rows.extend(r),
            None => skipped.push(q.image_id.clone()),
        }
    }
    skipped.sort();
    EvalReport::from_rows(rows, mode, skipped)
}

//! Ranking indexed images by histogram distance, optionally steered by the
//! classifier's predicted category.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encode::{encode_histogram, BovwHistogram, StoredHistogram};
use crate::error::{Error, Result};
use crate::imgio::GrayImage;
use crate::surf::{extract_features, DetectorParams};
use crate::svm::LinearModel;
use crate::vocab::{prune_descriptors, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    /// Images of the query's predicted class first, then the rest.
    #[default]
    Filtered,
    /// Pure distance ranking.
    Global,
}

impl FromStr for QueryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filtered" => Ok(QueryMode::Filtered),
            "global" => Ok(QueryMode::Global),
            other => Err(Error::Config(format!("unknown query mode {other:?} (expected filtered or global)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
    Cosine,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Config(format!("unknown metric {other:?} (expected euclidean or cosine)"))),
        }
    }
}

impl Metric {
    pub fn distance(self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = f64::from(x) - f64::from(y);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for (&x, &y) in a.iter().zip(b) {
                    let (x, y) = (f64::from(x), f64::from(y));
                    ab += x * y;
                    aa += x * x;
                    bb += y * y;
                }
                if aa == 0.0 || bb == 0.0 {
                    1.0
                } else {
                    (1.0 - ab / (aa.sqrt() * bb.sqrt())).max(0.0)
                }
            }
        }
    }
}

/// One indexed image.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub histogram: StoredHistogram,
    pub predicted_label: usize,
}

/// Stored histograms with their predicted classes.
///
/// Vectors are kept in single precision, exactly as in the index file, so a
/// loaded index ranks identically to a freshly built one.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    pub k: usize,
    pub class_names: Vec<String>,
    pub entries: Vec<IndexEntry>,
}

/// Indexes encoded histograms and classifies each of them.
pub fn build_index(histograms: &[BovwHistogram], model: &LinearModel) -> Result<RetrievalIndex> {
    let k = histograms.first().ok_or(Error::EmptyCorpus)?.k();
    index_stored(k, histograms.iter().map(BovwHistogram::to_stored).collect(), model)
}

/// Like [`build_index`], for histograms read back from an index file.
pub fn index_stored(k: usize, histograms: Vec<StoredHistogram>, model: &LinearModel) -> Result<RetrievalIndex> {
    if histograms.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if model.k() != k {
        return Err(Error::DimensionMismatch { expected: model.k(), got: k });
    }
    let mut ids = HashSet::new();
    let mut entries = Vec::with_capacity(histograms.len());
    for h in histograms {
        if h.normalized.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: h.normalized.len() });
        }
        if !ids.insert(h.image_id.clone()) {
            return Err(Error::InvalidParams(format!("duplicate image id {:?}", h.image_id)));
        }
        let predicted_label = model.predict_vector(&h.normalized)?.label;
        entries.push(IndexEntry { histogram: h, predicted_label });
    }
    Ok(RetrievalIndex { k, class_names: model.labels.clone(), entries })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOptions {
    pub k: usize,
    pub mode: QueryMode,
    pub metric: Metric,
    /// Image id left out of the ranking, typically the query's own.
    pub exclude: Option<String>,
}

impl QueryOptions {
    pub fn new(k: usize, mode: QueryMode) -> Self {
        QueryOptions { k, mode, metric: Metric::Euclidean, exclude: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    /// 1-based position.
    pub rank: usize,
    pub image_id: String,
    pub distance: f64,
    pub predicted_label: String,
    /// Ground-truth class of the result, when known.
    #[serde(skip)]
    pub true_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub predicted_label: usize,
    pub results: Vec<RankedResult>,
    /// Fewer than `k` images were available.
    pub truncated: bool,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.histogram.image_id == image_id)
    }

    fn label_name(&self, label: Option<usize>) -> Option<String> {
        label.and_then(|l| self.class_names.get(l).cloned())
    }

    /// Ranks the index against an encoded query whose predicted class is
    /// `predicted`.
    pub fn rank(&self, q: &[f32], predicted: usize, opts: &QueryOptions) -> Result<QueryOutcome> {
        if self.entries.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if opts.k == 0 {
            return Err(Error::InvalidParams("k must be >= 1".into()));
        }
        if q.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: q.len() });
        }
        let mut scored: Vec<(bool, f64, &IndexEntry)> = self
            .entries
            .iter()
            .filter(|e| opts.exclude.as_deref() != Some(e.histogram.image_id.as_str()))
            .map(|e| {
                let off_class = opts.mode == QueryMode::Filtered && e.predicted_label != predicted;
                (off_class, opts.metric.distance(q, &e.histogram.normalized), e)
            })
            .collect();
        scored.sort_by(|a, b| {
            a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then_with(|| a.2.histogram.image_id.cmp(&b.2.histogram.image_id))
        });
        let truncated = scored.len() < opts.k;
        let results = scored
            .into_iter()
            .take(opts.k)
            .enumerate()
            .map(|(i, (_, distance, e))| RankedResult {
                rank: i + 1,
                image_id: e.histogram.image_id.clone(),
                distance,
                predicted_label: self.class_names[e.predicted_label].clone(),
                true_label: self.label_name(e.histogram.label),
            })
            .collect();
        Ok(QueryOutcome { predicted_label: predicted, results, truncated })
    }
}

/// Everything needed to turn a query image into a ranking.
#[derive(Debug, Clone, Copy)]
pub struct Retriever<'a> {
    pub vocab: &'a Vocabulary,
    pub model: &'a LinearModel,
    pub index: &'a RetrievalIndex,
    pub detector: &'a DetectorParams,
    pub prune_fraction: f64,
}

impl Retriever<'_> {
    /// Extracts, prunes and encodes `img`, then rounds to single precision
    /// like the indexed vectors.
    pub fn encode(&self, img: &GrayImage) -> Result<BovwHistogram> {
        let descriptors = extract_features(img, self.detector)?;
        if descriptors.is_empty() {
            return Err(Error::DegenerateQuery);
        }
        let kept = prune_descriptors(&descriptors, self.prune_fraction)?;
        encode_histogram(self.vocab, &kept)
    }

    pub fn query(&self, img: &GrayImage, opts: &QueryOptions) -> Result<QueryOutcome> {
        let h = self.encode(img)?;
        self.query_histogram(&h, opts)
    }

    pub fn query_histogram(&self, h: &BovwHistogram, opts: &QueryOptions) -> Result<QueryOutcome> {
        if h.degenerate {
            return Err(Error::DegenerateQuery);
        }
        self.query_vector(&h.to_stored().normalized, opts)
    }

    /// Classifies and ranks an already encoded single-precision vector.
    pub fn query_vector(&self, q: &[f32], opts: &QueryOptions) -> Result<QueryOutcome> {
        let predicted = self.model.predict_vector(q)?.label;
        self.index.rank(q, predicted, opts)
    }
}

/// One JSON object per line: `rank`, `image_id`, `distance`, `predicted_label`.
pub fn write_json_lines(results: &[RankedResult], mut out: impl Write) -> Result<()> {
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn escape_html(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '&' => "&amp;".to_string(),
            '<' => "&lt;".to_string(),
            '>' => "&gt;".to_string(),
            '"' => "&quot;".to_string(),
            '\'' => "&#39;".to_string(),
            c => c.to_string(),
        })
        .collect()
}

/// A static HTML page showing the query and its results, linking image
/// files by path. `paths` maps image ids to file paths.
pub fn contact_sheet_html(query_path: &str, results: &[RankedResult], paths: &HashMap<String, String>) -> String {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Query results</title>\n\
         <style>body{font-family:sans-serif} figure{display:inline-block;margin:6px;text-align:center} \
         img{width:128px;image-rendering:pixelated}</style></head><body>\n",
    );
    let _ = writeln!(html, "<h1>Query</h1>\n<figure><img src=\"{0}\"><figcaption>{0}</figcaption></figure>", escape_html(query_path));
    html.push_str("<h1>Results</h1>\n");
    for r in results {
        let src = paths.get(&r.image_id).map(String::as_str).unwrap_or(r.image_id.as_str());
        let _ = writeln!(
            html,
            "<figure><img src=\"{}\"><figcaption>#{} {}<br>{} &middot; d={:.4}</figcaption></figure>",
            escape_html(src),
            r.rank,
            escape_html(&r.image_id),
            escape_html(&r.predicted_label),
            r.distance
        );
    }
    html.push_str("</body></html>\n");
    html
}

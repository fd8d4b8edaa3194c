//! Bag-of-visual-words image retrieval: SURF features, k-means visual
//! vocabularies, histogram encoding, one-vs-rest linear SVMs, classifier
//! steered ranking and Precision@k / MAP@k evaluation.

mod binfmt;
pub mod encode;
pub mod error;
pub mod eval;
pub mod imgio;
pub mod pipeline;
pub mod retrieval;
pub mod surf;
pub mod svm;
pub mod synth;
pub mod vocab;

pub use encode::{encode_corpus, encode_histogram, BovwHistogram};
pub use error::{Error, ErrorKind, Result};
pub use eval::{map_at_k, precision_at_k, EvalReport, SplitSpec};
pub use imgio::{integral_image, load_grayscale, GrayImage, IntegralImage};
pub use pipeline::{Artifacts, Manifest, PipelineConfig};
pub use retrieval::{build_index, Metric, QueryMode, QueryOptions, RankedResult, RetrievalIndex};
pub use surf::{extract_features, Descriptor, DetectorParams, InterestPoint};
pub use svm::{predict, train_ovr, LinearModel, Prediction, SvmHyper};
pub use vocab::{assign_word, kmeans, prune_strongest, FeatureBag, KMeansParams, Vocabulary};

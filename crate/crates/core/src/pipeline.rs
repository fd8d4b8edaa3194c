//! End-to-end orchestration over on-disk artifacts: build, query and
//! evaluate.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binfmt::write_atomic;
use crate::encode::{encode_corpus, histograms_from_bytes, histograms_to_bytes, BovwHistogram, StoredHistogram};
use crate::error::{Error, Result, StageExt};
use crate::eval::{run_evaluation, split_dataset, EvalQuery, EvalReport, SplitSpec};
use crate::imgio::load_grayscale;
use crate::retrieval::{index_stored, QueryMode, QueryOptions, QueryOutcome, RetrievalIndex, Retriever};
use crate::surf::{extract_features, DetectorParams};
use crate::svm::{model_from_bytes, model_to_bytes, train_ovr, LinearModel, SvmHyper};
use crate::vocab::{
    kmeans, prune_strongest, vocabulary_from_bytes, vocabulary_to_bytes, FeatureBag, ImageFeatures, Init, KMeansParams,
    Vocabulary,
};

pub const VOCABULARY_FILE: &str = "vocabulary.bin";
pub const VOCABULARY_JSON_FILE: &str = "vocabulary.json";
pub const MODEL_FILE: &str = "model.bin";
pub const INDEX_FILE: &str = "index.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
const MANIFEST_FORMAT: &str = "bovw-manifest-1";
const IMAGE_EXTENSIONS: [&str; 3] = ["pgm", "png", "pnm"];

/// Every tunable of a build, read from a flat `key = value` file.
///
/// Relative paths are resolved against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root of the directory-per-class dataset.
    pub dataset: PathBuf,
    /// Directory receiving the artifacts.
    pub output: PathBuf,
    /// Optional `image_id,class` CSV overriding directory labels.
    pub labels_csv: Option<PathBuf>,
    /// Vocabulary size.
    pub k: usize,
    pub prune_fraction: f64,
    pub octaves: usize,
    pub levels_per_octave: usize,
    pub hessian_threshold: f64,
    pub upright: bool,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub kmeans_init: Init,
    pub kmeans_restarts: usize,
    /// Single-point transfer refinement after Lloyd iterations.
    pub kmeans_refine: bool,
    pub svm_lambda: f64,
    pub svm_epochs: u32,
    pub svm_seed: u64,
    pub split_seed: u64,
    pub train_fraction: f64,
    /// Cut-offs evaluated by `evaluate`.
    pub k_values: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let det = DetectorParams::default();
        let km = KMeansParams::default();
        let svm = SvmHyper::default();
        let split = SplitSpec::default();
        PipelineConfig {
            dataset: PathBuf::from("dataset"),
            output: PathBuf::from("artifacts"),
            labels_csv: None,
            k: km.k,
            prune_fraction: 0.8,
            octaves: det.octaves,
            levels_per_octave: det.levels_per_octave,
            hessian_threshold: det.hessian_threshold,
            upright: det.upright,
            kmeans_seed: km.seed,
            kmeans_max_iter: km.max_iter,
            kmeans_tol: km.tol,
            kmeans_init: km.init,
            kmeans_restarts: km.restarts,
            kmeans_refine: km.refine,
            svm_lambda: svm.lambda,
            svm_epochs: svm.epochs,
            svm_seed: svm.seed,
            split_seed: split.seed,
            train_fraction: split.train_fraction,
            k_values: vec![3, 5, 10],
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        Self::parse(&text)
    }

    /// Sets the split, k-means and SVM seeds together.
    pub fn set_seed(&mut self, seed: u64) {
        self.split_seed = seed;
        self.kmeans_seed = seed;
        self.svm_seed = seed;
    }

    pub fn detector(&self) -> DetectorParams {
        DetectorParams {
            octaves: self.octaves,
            levels_per_octave: self.levels_per_octave,
            hessian_threshold: self.hessian_threshold,
            upright: self.upright,
        }
    }

    pub fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            seed: self.kmeans_seed,
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
            init: self.kmeans_init,
            restarts: self.kmeans_restarts,
            refine: self.kmeans_refine,
        }
    }

    pub fn svm_hyper(&self) -> SvmHyper {
        SvmHyper { lambda: self.svm_lambda, epochs: self.svm_epochs, seed: self.svm_seed }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.train_fraction, seed: self.split_seed }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 2 {
            return bad(format!("k = {} must be >= 2", self.k));
        }
        for (name, v) in [("prune_fraction", self.prune_fraction), ("train_fraction", self.train_fraction)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} must lie in (0, 1]"));
            }
        }
        if self.kmeans_max_iter == 0 || self.kmeans_restarts == 0 {
            return bad("kmeans_max_iter and kmeans_restarts must be >= 1".into());
        }
        if !(self.kmeans_tol.is_finite() && self.kmeans_tol >= 0.0) {
            return bad(format!("kmeans_tol = {} must be finite and >= 0", self.kmeans_tol));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k_values must be a non-empty list of positive integers".into());
        }
        self.detector().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.svm_hyper().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// A labeled image of the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    /// Path relative to the dataset root, `/`-separated.
    pub image_id: String,
    pub path: PathBuf,
    pub class: String,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn read_labels_csv(path: &Path) -> Result<HashMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        image_id: String,
        class: String,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Csv(e),
    })?;
    let mut labels = HashMap::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        if row.class.is_empty() {
            return Err(Error::Config(format!("empty class for {} in {}", row.image_id, path.display())));
        }
        labels.insert(row.image_id, row.class);
    }
    Ok(labels)
}

/// Lists `root/<class>/<image>` files in id order. Labels come from the
/// directory names unless `labels_csv` assigns a class to the image id.
pub fn scan_dataset(root: &Path, labels_csv: Option<&Path>) -> Result<Vec<DatasetItem>> {
    if !root.is_dir() {
        return Err(Error::FileNotFound(root.to_path_buf()));
    }
    let overrides = labels_csv.map(read_labels_csv).transpose()?.unwrap_or_default();
    let mut items = Vec::new();
    let mut dirs: Vec<PathBuf> =
        fs::read_dir(root)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>()?;
    dirs.retain(|d| d.is_dir());
    dirs.sort();
    for dir in dirs {
        let class = dir.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
            Error::Config(format!("class directory {} is not valid UTF-8", dir.display()))
        })?;
        if class.starts_with('.') {
            continue;
        }
        let mut files: Vec<PathBuf> =
            fs::read_dir(&dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>()?;
        files.retain(|f| f.is_file() && is_image(f));
        files.sort();
        for path in files {
            let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
                Error::Config(format!("file name {} is not valid UTF-8", path.display()))
            })?;
            let image_id = format!("{class}/{name}");
            let class = overrides.get(&image_id).cloned().unwrap_or_else(|| class.to_string());
            items.push(DatasetItem { image_id, path, class });
        }
    }
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    items.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub images: usize,
    /// Images per class, to make imbalance visible.
    pub class_counts: BTreeMap<String, usize>,
    /// Images from which no descriptor survived; they are indexed as all-zero
    /// histograms and excluded from vocabulary and classifier training.
    pub degenerate_images: Vec<String>,
    pub descriptors_extracted: usize,
    pub descriptors_retained: usize,
    pub vocabulary_pool: usize,
    pub kmeans_iterations: usize,
    pub kmeans_converged: bool,
    pub kmeans_final_distortion: f64,
    pub training_accuracy: f64,
}

/// Record of a build: its configuration, split, statistics and the hashes
/// of every artifact it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: PipelineConfig,
    pub class_names: Vec<String>,
    pub vocabulary_k: usize,
    pub split: SplitRecord,
    pub stats: BuildStats,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Artifacts of a finished build.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub manifest: Manifest,
    pub vocabulary: Vocabulary,
    pub model: LinearModel,
    pub index: RetrievalIndex,
}

/// Descriptors of every image, in corpus order.
fn extract_all(items: &[DatasetItem], detector: &DetectorParams) -> Result<Vec<ImageFeatures>> {
    items
        .par_iter()
        .map(|item| {
            let img = load_grayscale(&item.path)?;
            let descriptors = extract_features(&img, detector).map_err(|e| match e {
                Error::ImageTooSmall { .. } => Error::CorruptImage(format!("{}: {e}", item.image_id)),
                e => e,
            })?;
            Ok(ImageFeatures { image_id: item.image_id.clone(), label: None, descriptors })
        })
        .collect()
}

/// Runs split, extraction, pruning, clustering, encoding, training and
/// indexing, then writes the artifacts and manifest into `cfg.output`.
///
/// On failure no artifact of this build is left behind.
pub fn build(cfg: &PipelineConfig) -> Result<BuildOutput> {
    cfg.validate().stage("config")?;
    let items = scan_dataset(&cfg.dataset, cfg.labels_csv.as_deref()).stage("scan")?;
    let mut class_names: Vec<String> = items.iter().map(|i| i.class.clone()).collect();
    class_names.sort();
    class_names.dedup();
    if class_names.len() < 2 {
        return Err(Error::SingleClass).stage("scan");
    }
    let class_index: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let labels: Vec<String> = items.iter().map(|i| i.class.clone()).collect();
    let split = split_dataset(&labels, &cfg.split_spec()).stage("split")?;

    let mut features = extract_all(&items, &cfg.detector()).stage("extract")?;
    for (f, item) in features.iter_mut().zip(&items) {
        f.label = Some(class_index[item.class.as_str()]);
    }
    let descriptors_extracted = features.iter().map(|f| f.descriptors.len()).sum();
    let degenerate_images: Vec<String> =
        features.iter().filter(|f| f.descriptors.is_empty()).map(|f| f.image_id.clone()).collect();

    let usable = FeatureBag { images: features.into_iter().filter(|f| !f.descriptors.is_empty()).collect() };
    let pruned = prune_strongest(&usable, cfg.prune_fraction).stage("prune")?;
    let is_train: Vec<bool> = {
        let mut v = vec![false; items.len()];
        split.train.iter().for_each(|&i| v[i] = true);
        v
    };
    let train_ids: std::collections::HashSet<&str> =
        items.iter().zip(&is_train).filter(|(_, &t)| t).map(|(i, _)| i.image_id.as_str()).collect();
    let pool: Vec<&[f64]> = pruned
        .images
        .iter()
        .filter(|f| train_ids.contains(f.image_id.as_str()))
        .flat_map(|f| f.descriptors.iter().map(|d| &d.values[..]))
        .collect();
    let vocabulary = kmeans(&pool, &cfg.kmeans_params()).stage("vocabulary")?;

    // degenerate images are indexed too, as all-zero histograms
    let mut all = pruned.clone();
    all.images.extend(
        degenerate_images
            .iter()
            .map(|id| ImageFeatures { image_id: id.clone(), label: None, descriptors: Vec::new() }),
    );
    let mut histograms = encode_corpus(&vocabulary, &all).stage("encode")?;
    let by_id: HashMap<&str, &DatasetItem> = items.iter().map(|i| (i.image_id.as_str(), i)).collect();
    for h in histograms.iter_mut() {
        h.label = Some(class_index[by_id[h.image_id.as_str()].class.as_str()]);
    }
    let training: Vec<BovwHistogram> =
        histograms.iter().filter(|h| !h.degenerate && train_ids.contains(h.image_id.as_str())).cloned().collect();
    let model = train_ovr(&training, &class_names, &cfg.svm_hyper()).stage("train")?;
    let correct = training
        .iter()
        .map(|h| model.predict_vector(&h.normalized).map(|p| Some(p.label) == h.label))
        .collect::<Result<Vec<_>>>()
        .stage("train")?
        .into_iter()
        .filter(|&c| c)
        .count();
    let stored: Vec<StoredHistogram> = histograms.iter().map(BovwHistogram::to_stored).collect();
    let index = index_stored(vocabulary.k, stored.clone(), &model).stage("index")?;

    let mut class_counts = BTreeMap::new();
    for item in &items {
        *class_counts.entry(item.class.clone()).or_insert(0) += 1;
    }
    let ids = |idx: &[usize]| idx.iter().map(|&i| items[i].image_id.clone()).collect::<Vec<_>>();
    let stats = BuildStats {
        images: items.len(),
        class_counts,
        degenerate_images,
        descriptors_extracted,
        descriptors_retained: pruned.total_descriptors(),
        vocabulary_pool: pool.len(),
        kmeans_iterations: vocabulary.train_stats.iterations,
        kmeans_converged: vocabulary.train_stats.converged,
        kmeans_final_distortion: vocabulary.train_stats.final_distortion,
        training_accuracy: correct as f64 / training.len() as f64,
    };

    let files: Vec<(&str, Vec<u8>)> = vec![
        (VOCABULARY_FILE, vocabulary_to_bytes(&vocabulary)?),
        (VOCABULARY_JSON_FILE, serde_json::to_vec_pretty(&vocabulary)?),
        (MODEL_FILE, model_to_bytes(&model)?),
        (INDEX_FILE, histograms_to_bytes(vocabulary.k, &stored)?),
    ];
    let artifacts = files
        .iter()
        .map(|(name, bytes)| {
            let record = ArtifactRecord { file: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 };
            (name.trim_end_matches(".bin").replace('.', "_"), record)
        })
        .collect();
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        config: cfg.clone(),
        class_names,
        vocabulary_k: vocabulary.k,
        split: SplitRecord { train: ids(&split.train), test: ids(&split.test) },
        stats,
        artifacts,
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    manifest_bytes.push(b'\n');
    write_all_or_nothing(&cfg.output, files.into_iter().chain([(MANIFEST_FILE, manifest_bytes)])).stage("write")?;
    Ok(BuildOutput { manifest, vocabulary, model, index })
}

/// Writes every file atomically; if one fails, the ones already written are
/// removed again.
fn write_all_or_nothing<'a>(dir: &Path, files: impl IntoIterator<Item = (&'a str, Vec<u8>)>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = write_atomic(&path, &bytes) {
            for p in written {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(())
}

/// Artifacts loaded from a build directory after hash verification.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub vocabulary: Vocabulary,
    pub model: LinearModel,
    pub index: RetrievalIndex,
}

fn read_verified(dir: &Path, record: &ArtifactRecord) -> Result<Vec<u8>> {
    let path = dir.join(&record.file);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ArtifactMismatch(format!("{} is missing", path.display())),
        _ => Error::Io(e),
    })?;
    let actual = sha256_hex(&bytes);
    if actual != record.sha256 {
        return Err(Error::ArtifactMismatch(format!(
            "{}: sha256 {} does not match the manifest's {}",
            record.file, actual, record.sha256
        )));
    }
    Ok(bytes)
}

impl Artifacts {
    /// Loads and cross-checks the artifacts listed in `dir/manifest.json`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read(&manifest_path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::ArtifactMismatch(format!("{} is missing", manifest_path.display())),
            _ => Error::Io(e),
        })?;
        let manifest: Manifest = serde_json::from_slice(&text)
            .map_err(|e| Error::ArtifactFormat { what: "manifest".into(), detail: e.to_string() })?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::ArtifactMismatch(format!("unknown manifest format {:?}", manifest.format)));
        }
        let record = |key: &str| {
            manifest.artifacts.get(key).ok_or_else(|| Error::ArtifactMismatch(format!("manifest lists no {key} artifact")))
        };
        let vocabulary = vocabulary_from_bytes(&read_verified(&dir, record("vocabulary")?)?)?;
        let model = model_from_bytes(&read_verified(&dir, record("model")?)?)?;
        let (k, stored) = histograms_from_bytes(&read_verified(&dir, record("index")?)?)?;
        if vocabulary.k != manifest.vocabulary_k || model.k() != vocabulary.k || k != vocabulary.k {
            return Err(Error::ArtifactMismatch(format!(
                "vocabulary k = {}, manifest k = {}, model k = {}, index k = {k}",
                vocabulary.k,
                manifest.vocabulary_k,
                model.k()
            )));
        }
        if model.labels != manifest.class_names {
            return Err(Error::ArtifactMismatch("model classes differ from the manifest".into()));
        }
        let index = index_stored(k, stored, &model)?;
        Ok(Artifacts { dir, manifest, vocabulary, model, index })
    }

    pub fn detector(&self) -> DetectorParams {
        self.manifest.config.detector()
    }

    /// Runs `f` with a retriever over these artifacts.
    pub fn with_retriever<T>(&self, f: impl FnOnce(&Retriever<'_>) -> T) -> T {
        let detector = self.detector();
        let r = Retriever {
            vocab: &self.vocabulary,
            model: &self.model,
            index: &self.index,
            detector: &detector,
            prune_fraction: self.manifest.config.prune_fraction,
        };
        f(&r)
    }

    /// Image id of `path` if it lies inside the dataset this index was
    /// built from.
    pub fn image_id_of(&self, path: &Path) -> Option<String> {
        let root = fs::canonicalize(&self.manifest.config.dataset).ok()?;
        let full = fs::canonicalize(path).ok()?;
        let rel = full.strip_prefix(root).ok()?;
        let id = rel.components().map(|c| c.as_os_str().to_str()).collect::<Option<Vec<_>>>()?.join("/");
        self.index.get(&id).map(|_| id)
    }

    /// Ranks the index against the image at `path`.
    pub fn query(&self, path: &Path, opts: &QueryOptions) -> Result<QueryOutcome> {
        let img = load_grayscale(path).stage("load")?;
        self.with_retriever(|r| r.query(&img, opts)).stage("query")
    }

    /// Queries with every test image of the recorded split, leaving each
    /// query out of its own ranking.
    pub fn evaluate(&self, k_values: &[usize], mode: QueryMode) -> Result<EvalReport> {
        let names = &self.manifest.class_names;
        let queries = self
            .manifest
            .split
            .test
            .iter()
            .map(|id| {
                let entry = self
                    .index
                    .get(id)
                    .ok_or_else(|| Error::ArtifactMismatch(format!("test image {id} is not indexed")))?;
                let class = entry
                    .histogram
                    .label
                    .and_then(|l| names.get(l))
                    .ok_or_else(|| Error::ArtifactMismatch(format!("test image {id} has no class")))?;
                Ok(EvalQuery {
                    image_id: id.clone(),
                    class: class.clone(),
                    vector: entry.histogram.normalized.clone(),
                    degenerate: entry.histogram.n_features == 0,
                })
            })
            .collect::<Result<Vec<_>>>()
            .stage("evaluate")?;
        if queries.is_empty() {
            return Err(Error::NoQueries).stage("evaluate");
        }
        let available = self.index.len() - 1;
        if let Some(&k) = k_values.iter().find(|&&k| k > available) {
            return Err(Error::InsufficientResults { needed: k, got: available }).stage("evaluate");
        }
        self.with_retriever(|r| run_evaluation(r, &queries, k_values, mode)).stage("evaluate")
    }
}

/// Writes `report.csv` and `report.json` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    let mut csv_bytes = Vec::new();
    report.write_csv(&mut csv_bytes)?;
    let mut json = Vec::new();
    report.write_json(&mut json)?;
    write_all_or_nothing(dir, [(REPORT_CSV_FILE, csv_bytes), (REPORT_JSON_FILE, json)])
}

/// Caps the global thread pool at `BOVW_THREADS` when that variable holds a
/// positive integer. Must run before any parallel work.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var("BOVW_THREADS") else { return Ok(None) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("BOVW_THREADS = {raw:?} is not a positive integer")))?;
    // a pool that already exists (e.g. in tests) is left as it is
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

//! `bovw`: build, query and evaluate bag-of-visual-words retrieval indexes.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bovw_core::pipeline::{self, Artifacts, PipelineConfig};
use bovw_core::surf::dump::write_dump;
use bovw_core::synth::{write_corpus, ClassSpec, GeneratorKind, SyntheticCorpusSpec};
use bovw_core::{extract_features, load_grayscale, DetectorParams, Error, ErrorKind, Metric, QueryMode, QueryOptions};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "bovw", version, about = "Bag-of-visual-words image retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic directory-per-class corpus of PGM images.
    GenCorpus(GenCorpusArgs),
    /// Extract features, cluster, encode, train and index a dataset.
    Build(BuildArgs),
    /// Rank the indexed images against a query image (JSON lines on stdout).
    Query(QueryArgs),
    /// Run every test image of the recorded split as a query and report MAP@k.
    Evaluate(EvaluateArgs),
    /// Print the SURF descriptors of one image, one point per line.
    DumpDescriptors(DumpArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Corpus root; receives <class>/<nnnn>.pgm.
    #[arg(long)]
    output: PathBuf,
    /// Number of classes, cycling through the generator families.
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Explicit generator families, e.g. `blob-grid,ring` (overrides --classes).
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<String>,
    #[arg(long, default_value_t = 20)]
    images_per_class: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Standard deviation of the additive noise on [0, 1] intensities.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct BuildArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root (overrides the config).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Artifact directory (overrides the config).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Vocabulary size (overrides the config).
    #[arg(long)]
    k: Option<usize>,
    /// Seed for the split, k-means and SVM (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ArtifactArgs {
    /// Artifact directory written by `build`.
    #[arg(long, conflicts_with = "config")]
    artifacts: Option<PathBuf>,
    /// Use the artifact directory named by this build configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ArtifactArgs {
    fn dir(&self) -> Result<PathBuf, Error> {
        match (&self.artifacts, &self.config) {
            (Some(dir), _) => Ok(dir.clone()),
            (None, Some(cfg)) => Ok(PipelineConfig::load(cfg)?.output),
            (None, None) => Err(Error::Config("pass --artifacts <dir> or --config <file>".into())),
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    artifacts: ArtifactArgs,
    /// Query image (PGM or PNG).
    image: PathBuf,
    /// Number of results.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "filtered")]
    mode: QueryMode,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    /// Leave the query out of the ranking when it is an indexed image.
    #[arg(long)]
    exclude_self: bool,
    /// Write the results as JSON lines to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write a static HTML contact sheet.
    #[arg(long)]
    html: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    artifacts: ArtifactArgs,
    /// Cut-offs, e.g. `3,5,10` (default: the build configuration's).
    #[arg(long = "k-values", value_delimiter = ',')]
    k_values: Vec<usize>,
    #[arg(long, default_value = "filtered")]
    mode: QueryMode,
    /// Directory for report.csv and report.json (default: the artifact directory).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    image: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Detector threshold on the area-normalized Hessian determinant.
    #[arg(long, default_value_t = DetectorParams::default().hessian_threshold)]
    threshold: f64,
    /// Assign dominant orientations instead of describing upright.
    #[arg(long)]
    rotated: bool,
}

fn warn(message: &str) {
    eprintln!("{}", json!({ "warning": message }));
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn gen_corpus(args: GenCorpusArgs) -> Result<(), Error> {
    let mut spec = SyntheticCorpusSpec::standard(args.classes, args.images_per_class, args.size, args.seed);
    if !args.kinds.is_empty() {
        spec.classes = args
            .kinds
            .iter()
            .map(|k| {
                let kind: GeneratorKind = k.parse()?;
                Ok(ClassSpec { name: kind.name().to_string(), kind, variant: 0 })
            })
            .collect::<Result<_, Error>>()?;
    }
    spec.noise = args.noise;
    let paths = write_corpus(&spec, &args.output)?;
    println!("{}", json!({ "root": args.output, "classes": spec.classes.len(), "images": paths.len() }));
    Ok(())
}

fn build(args: BuildArgs) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None if args.dataset.is_some() => PipelineConfig::default(),
        None => return Err(Error::Config("pass --config <file> or --dataset <dir>".into())),
    };
    if let Some(d) = args.dataset {
        cfg.dataset = d;
    }
    if let Some(o) = args.output {
        cfg.output = o;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(s) = args.seed {
        cfg.set_seed(s);
    }
    let out = pipeline::build(&cfg)?;
    let s = &out.manifest.stats;
    println!(
        "{}",
        json!({
            "output": cfg.output,
            "images": s.images,
            "classes": out.manifest.class_names.len(),
            "k": out.vocabulary.k,
            "train": out.manifest.split.train.len(),
            "test": out.manifest.split.test.len(),
            "degenerate_images": s.degenerate_images.len(),
            "training_accuracy": s.training_accuracy,
        })
    );
    Ok(())
}

fn query(args: QueryArgs) -> Result<(), Error> {
    let artifacts = Artifacts::load(args.artifacts.dir()?)?;
    let mut opts = QueryOptions::new(args.k, args.mode);
    opts.metric = args.metric;
    if args.exclude_self {
        opts.exclude = artifacts.image_id_of(&args.image);
    }
    let outcome = artifacts.query(&args.image, &opts)?;
    if outcome.truncated {
        warn(&format!("only {} images available; results truncated from k = {}", outcome.results.len(), args.k));
    }
    let mut out = output_writer(args.output.as_deref())?;
    bovw_core::retrieval::write_json_lines(&outcome.results, &mut out)?;
    out.flush()?;
    if let Some(html) = args.html {
        let root = &artifacts.manifest.config.dataset;
        let paths: HashMap<String, String> = outcome
            .results
            .iter()
            .map(|r| (r.image_id.clone(), root.join(&r.image_id).display().to_string()))
            .collect();
        let page = bovw_core::retrieval::contact_sheet_html(&args.image.display().to_string(), &outcome.results, &paths);
        fs::write(html, page)?;
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let dir = args.artifacts.dir()?;
    let artifacts = Artifacts::load(&dir)?;
    let k_values = if args.k_values.is_empty() { artifacts.manifest.config.k_values.clone() } else { args.k_values };
    let report = artifacts.evaluate(&k_values, args.mode)?;
    if !report.skipped.is_empty() {
        warn(&format!("{} queries had no descriptors and were skipped", report.skipped.len()));
    }
    pipeline::write_report(&report, args.output.as_deref().unwrap_or(&dir))?;
    print!("{}", report.summary());
    Ok(())
}

fn dump_descriptors(args: DumpArgs) -> Result<(), Error> {
    let img = load_grayscale(&args.image)?;
    let params = DetectorParams { hessian_threshold: args.threshold, upright: !args.rotated, ..Default::default() };
    let descriptors = extract_features(&img, &params)?;
    let mut out = output_writer(args.output.as_deref())?;
    write_dump(&mut out, &descriptors)?;
    out.flush()?;
    Ok(())
}

/// Exit code and machine-readable name of an error class.
fn classify(kind: ErrorKind) -> (u8, &'static str) {
    match kind {
        ErrorKind::Usage => (2, "usage"),
        ErrorKind::Data => (3, "data"),
        ErrorKind::ArtifactMismatch => (4, "artifact_mismatch"),
        ErrorKind::DegenerateQuery => (5, "degenerate_query"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "Usage", "kind": "usage", "stage": null, "message": e.to_string().trim() }));
            return ExitCode::from(2);
        }
    };
    let result = pipeline::configure_threads().and_then(|_| match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Evaluate(a) => evaluate(a),
        Command::DumpDescriptors(a) => dump_descriptors(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(e.kind());
            eprintln!(
                "{}",
                json!({
                    "error": e.code(),
                    "kind": kind,
                    "stage": e.stage(),
                    "message": e.to_string(),
                })
            );
            ExitCode::from(code)
        }
    }
}

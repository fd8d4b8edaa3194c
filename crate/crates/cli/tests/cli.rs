use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use sha2::{Digest, Sha256};

const CLASSES: usize = 4;
const PER_CLASS: usize = 10;

fn bovw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bovw"))
}

fn run(args: &[&str]) -> Output {
    bovw().args(args).output().expect("spawn bovw")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.contains("\"error\"")).unwrap_or_else(|| panic!("no error line in {stderr}"));
    serde_json::from_str(line).unwrap()
}

fn json_lines(bytes: &[u8]) -> Vec<Value> {
    String::from_utf8_lossy(bytes).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn gen_corpus(root: &Path) {
    let out = run(&[
        "gen-corpus",
        "--output",
        s(root),
        "--classes",
        &CLASSES.to_string(),
        "--images-per-class",
        &PER_CLASS.to_string(),
        "--size",
        "128",
        "--seed",
        "7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn build(dataset: &Path, output: &Path) {
    let out = run(&["build", "--dataset", s(dataset), "--output", s(output), "--k", "16", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// One corpus and one build shared by the read-only tests.
struct Fixture {
    dataset: PathBuf,
    artifacts: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("bovw-cli-{}", std::process::id()));
        let _ = fs::remove_dir_all(&root);
        let dataset = root.join("data");
        let artifacts = root.join("artifacts");
        gen_corpus(&dataset);
        build(&dataset, &artifacts);
        Fixture { dataset, artifacts }
    })
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for class in fs::read_dir(root).unwrap() {
        let class = class.unwrap().path();
        for f in fs::read_dir(&class).unwrap() {
            out.push(f.unwrap().path());
        }
    }
    out.sort();
    out
}

fn sha256_file(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn gen_corpus_writes_expected_layout_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_corpus(&a);
    gen_corpus(&b);
    let fa = files_under(&a);
    let fb = files_under(&b);
    assert_eq!(fa.len(), CLASSES * PER_CLASS);
    assert_eq!(fs::read_dir(&a).unwrap().count(), CLASSES);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn build_writes_artifacts_matching_manifest_digests() {
    let fx = fixture();
    let manifest: Value = serde_json::from_slice(&fs::read(fx.artifacts.join("manifest.json")).unwrap()).unwrap();
    let artifacts = manifest["artifacts"].as_object().unwrap();
    assert!(artifacts.len() >= 3);
    for record in artifacts.values() {
        let path = fx.artifacts.join(record["file"].as_str().unwrap());
        assert_eq!(sha256_file(&path), record["sha256"].as_str().unwrap(), "{}", path.display());
        assert_eq!(fs::metadata(&path).unwrap().len(), record["bytes"].as_u64().unwrap());
    }
    assert_eq!(manifest["vocabulary_k"], 16);
    assert_eq!(manifest["class_names"].as_array().unwrap().len(), CLASSES);
    let n_split = manifest["split"]["train"].as_array().unwrap().len() + manifest["split"]["test"].as_array().unwrap().len();
    assert_eq!(n_split, CLASSES * PER_CLASS);
}

#[test]
fn rebuild_is_bitwise_identical() {
    let fx = fixture();
    let tmp = tempfile::tempdir().unwrap();
    build(&fx.dataset, tmp.path());
    for name in ["vocabulary.bin", "model.bin", "index.bin", "manifest.json"] {
        let a = fs::read(fx.artifacts.join(name)).unwrap();
        let b = fs::read(tmp.path().join(name)).unwrap();
        if name == "manifest.json" {
            // the output path differs between the two builds
            let mut ja: Value = serde_json::from_slice(&a).unwrap();
            let mut jb: Value = serde_json::from_slice(&b).unwrap();
            ja["config"]["output"] = Value::Null;
            jb["config"]["output"] = Value::Null;
            assert_eq!(ja, jb);
        } else {
            assert_eq!(a, b, "{name}");
        }
    }
}

#[test]
fn single_thread_build_matches_parallel_build() {
    let fx = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let out = bovw()
        .env("BOVW_THREADS", "1")
        .args(["build", "--dataset", s(&fx.dataset), "--output", s(tmp.path()), "--k", "16", "--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["vocabulary.bin", "model.bin", "index.bin"] {
        assert_eq!(fs::read(fx.artifacts.join(name)).unwrap(), fs::read(tmp.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn missing_dataset_reports_scan_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["build", "--dataset", s(&tmp.path().join("nope")), "--output", s(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["kind"], "data");
    assert_eq!(err["stage"], "scan");
    assert!(!tmp.path().join("out").join("manifest.json").exists());
}

#[test]
fn usage_errors_exit_with_code_2() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["kind"], "usage");
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["build", "--dataset", s(tmp.path()), "--output", s(&tmp.path().join("o")), "--k", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn query_emits_ranked_json_lines_with_self_first() {
    let fx = fixture();
    let image = fx.dataset.join("ring").join("0003.pgm");
    let out = run(&["query", "--artifacts", s(&fx.artifacts), s(&image), "--k", "5", "--mode", "global"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json_lines(&out.stdout);
    assert_eq!(rows.len(), 5);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r["rank"].as_u64().unwrap(), i as u64 + 1);
        assert!(r["image_id"].is_string());
        assert!(r["predicted_label"].is_string());
        assert!(r["distance"].as_f64().unwrap() >= 0.0);
    }
    for pair in rows.windows(2) {
        assert!(pair[0]["distance"].as_f64().unwrap() <= pair[1]["distance"].as_f64().unwrap());
    }
    // the query is indexed, so it is at distance zero; identical histograms may tie with it
    assert_eq!(rows[0]["distance"].as_f64().unwrap(), 0.0);
    let self_row = rows.iter().find(|r| r["image_id"] == "ring/0003.pgm").expect("self in results");
    assert_eq!(self_row["distance"].as_f64().unwrap(), 0.0);

    let out = run(&["query", "--artifacts", s(&fx.artifacts), s(&image), "--k", "5", "--mode", "global", "--exclude-self"]);
    assert!(out.status.success());
    let rows = json_lines(&out.stdout);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["image_id"] != "ring/0003.pgm"));
}

#[test]
fn filtered_query_lists_predicted_class_first() {
    let fx = fixture();
    let image = fx.dataset.join("stripe").join("0001.pgm");
    let out = run(&["query", "--artifacts", s(&fx.artifacts), s(&image), "--k", "15"]);
    assert!(out.status.success());
    let rows = json_lines(&out.stdout);
    assert_eq!(rows.len(), 15);
    let first = rows[0]["predicted_label"].clone();
    let n_first = rows.iter().take_while(|r| r["predicted_label"] == first).count();
    assert!(rows[n_first..].iter().all(|r| r["predicted_label"] != first));
}

#[test]
fn oversized_k_truncates_with_warning() {
    let fx = fixture();
    let image = fx.dataset.join("blob-grid").join("0000.pgm");
    let out = run(&["query", "--artifacts", s(&fx.artifacts), s(&image), "--k", "1000", "--mode", "global"]);
    assert!(out.status.success());
    assert_eq!(json_lines(&out.stdout).len(), CLASSES * PER_CLASS);
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"warning\""));
}

#[test]
fn featureless_query_exits_with_code_5() {
    let fx = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let flat = tmp.path().join("flat.pgm");
    let mut bytes = b"P5\n128 128\n255\n".to_vec();
    bytes.extend(std::iter::repeat_n(128u8, 128 * 128));
    fs::write(&flat, bytes).unwrap();
    let out = run(&["query", "--artifacts", s(&fx.artifacts), s(&flat)]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_json(&out)["kind"], "degenerate_query");
}

#[test]
fn tampered_artifact_exits_with_code_4() {
    let fx = fixture();
    let tmp = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(&fx.artifacts).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
    }
    let model = tmp.path().join("model.bin");
    let mut bytes = fs::read(&model).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    fs::write(&model, bytes).unwrap();
    let image = fx.dataset.join("ring").join("0000.pgm");
    let out = run(&["query", "--artifacts", s(tmp.path()), s(&image)]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["kind"], "artifact_mismatch");
}

#[test]
fn evaluate_reports_one_map_row_per_cutoff_and_is_reproducible() {
    let fx = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    for dir in [&a, &b] {
        let out = run(&["evaluate", "--artifacts", s(&fx.artifacts), "--k-values", "1,3,5", "--output", s(dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let report: Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    let map = report["map"].as_array().unwrap();
    assert_eq!(map.len(), 3);
    for row in map {
        let v = row["map"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    let csv_a = fs::read(a.join("report.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("report.csv")).unwrap());
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().next().unwrap(), "query_id,class,k,relevant_at_k,precision_at_k");
    let n_queries = report["n_queries"].as_u64().unwrap() as usize;
    assert_eq!(text.lines().count(), 1 + 3 * n_queries);
}

#[test]
fn dump_descriptors_prints_one_line_per_point() {
    let fx = fixture();
    let image = fx.dataset.join("blob-grid").join("0000.pgm");
    let out = run(&["dump-descriptors", s(&image)]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 9, "expected at least one point per blob");
}

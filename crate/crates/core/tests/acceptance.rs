//! Acceptance harness: one PASS/FAIL line per criterion, each with its
//! measured value and runtime budget. Exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bovw_core::encode::StoredHistogram;
use bovw_core::eval::{format_percent, map_at_k, precision_at_k};
use bovw_core::imgio::GrayImage;
use bovw_core::pipeline::{build, write_report, Artifacts, PipelineConfig};
use bovw_core::retrieval::index_stored;
use bovw_core::surf::detect_interest_points;
use bovw_core::svm::{train_binary, train_ovr_dense, LinearModel, SvmHyper};
use bovw_core::synth::{write_corpus, SyntheticCorpusSpec};
use bovw_core::vocab::{kmeans, KMeansParams, STD_FLOOR};
use bovw_core::{integral_image, DetectorParams, InterestPoint, QueryMode, QueryOptions, RankedResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ranking(k: usize, relevant: usize) -> Vec<RankedResult> {
    (0..k)
        .map(|i| RankedResult {
            rank: i + 1,
            image_id: format!("r{i}"),
            distance: i as f64,
            predicted_label: "x".into(),
            true_label: Some(if i < relevant { "x".into() } else { "y".into() }),
        })
        .collect()
}

fn metric_tables() -> Outcome {
    let cases: [(usize, [usize; 3], [&str; 3], &str); 3] = [
        (3, [2, 3, 3], ["66.67", "100.00", "100.00"], "88.89"),
        (5, [3, 4, 4], ["60.00", "80.00", "80.00"], "73.33"),
        (10, [8, 5, 8], ["80.00", "50.00", "80.00"], "70.00"),
    ];
    let mut shown = Vec::new();
    for (k, counts, per_query, map) in cases {
        let ps: Vec<f64> = counts.iter().map(|&c| precision_at_k(&ranking(k, c), "x", k).unwrap()).collect();
        let got: Vec<String> = ps.iter().map(|&p| format_percent(p)).collect();
        if got != per_query {
            return Err(format!("k={k}: precision {got:?} != {per_query:?}"));
        }
        let m = format_percent(map_at_k(&ps).map_err(|e| e.to_string())?);
        if m != map {
            return Err(format!("k={k}: MAP {m} != {map}"));
        }
        shown.push(format!("MAP@{k}={m}%"));
    }
    Ok(shown.join(" "))
}

fn integral_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (w, h) = (rng.random_range(16..=128), rng.random_range(16..=128));
        let img = GrayImage::from_fn(w, h, |_, _| rng.random::<f64>()).unwrap();
        let ii = integral_image(&img);
        for _ in 0..1000 {
            let x0 = rng.random_range(0..w as i64);
            let y0 = rng.random_range(0..h as i64);
            let x1 = rng.random_range(x0..w as i64);
            let y1 = rng.random_range(y0..h as i64);
            let naive = common::naive_box_sum(img.pixels(), w, h, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
            let got = ii.box_sum(x0, y0, x1, y1).map_err(|e| e.to_string())?;
            worst = worst.max((got - naive).abs() / naive.max(1.0));
        }
    }
    check(worst <= 1e-12, format!("20 images x 1000 rectangles, worst relative error {worst:.2e} (<= 1e-12)"))
}

fn kmeans_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for instance in 0..50u64 {
        let n = rng.random_range(3..=8);
        let dim = rng.random_range(1..=4);
        let k = rng.random_range(1..=3usize.min(n));
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let optimum = common::exhaustive_kmeans_optimum(&pts, k, &common::two_pass_scales(&pts, STD_FLOOR));
        let base = KMeansParams { k, seed: instance * 100, ..Default::default() };
        let best = kmeans(&pts, &KMeansParams { restarts: 10, ..base }).map_err(|e| e.to_string())?;
        worst = worst.max((best.train_stats.final_distortion - optimum).abs());
        // every individual restart must descend monotonically
        for r in 0..10 {
            let run = kmeans(&pts, &KMeansParams { seed: base.seed + r, ..base }).map_err(|e| e.to_string())?;
            if run.train_stats.distortion_history.windows(2).any(|w| w[1] > w[0] + 1e-12) {
                return Err(format!("instance {instance} restart {r}: distortion rose"));
            }
        }
    }
    check(worst <= 1e-9, format!("50 instances, worst gap to exhaustive optimum {worst:.2e} (<= 1e-9); all runs monotone"))
}

fn nearest(points: &[InterestPoint], x: f64, y: f64) -> Option<&InterestPoint> {
    points.iter().min_by(|a, b| (a.x - x).hypot(a.y - y).total_cmp(&(b.x - x).hypot(b.y - y)))
}

fn surf_localization() -> Outcome {
    let img = common::gaussian_blobs(64, 64, &[(32.0, 32.0, 4.0)]);
    let big = common::upscale2(&img);
    let params = DetectorParams::default();
    let small_pts = detect_interest_points(&integral_image(&img), &params).map_err(|e| e.to_string())?;
    let big_pts = detect_interest_points(&integral_image(&big), &params).map_err(|e| e.to_string())?;
    let p = nearest(&small_pts, 32.0, 32.0).ok_or("no point in the original image")?;
    let q = nearest(&big_pts, 64.5, 64.5).ok_or("no point in the upscaled image")?;
    let offset = (p.x - 32.0).hypot(p.y - 32.0);
    let ratio = q.scale / p.scale;
    check(
        offset <= 2.0 && (1.6..=2.4).contains(&ratio),
        format!("centre offset {offset:.3} px (<= 2), scale ratio {ratio:.3} (in [1.6, 2.4])"),
    )
}

fn svm_oracle() -> Outcome {
    let xs = [-2.0, -1.0, 1.0, 2.0];
    let ys = [1.0, 1.0, -1.0, -1.0];
    let lambda = 0.1;
    let oracle = common::grid_search_1d(lambda, &xs, &ys);
    let features: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let hyper = SvmHyper { lambda, epochs: 500, seed: 42 };
    let fit = train_binary(&features, &ys, &hyper, &mut ChaCha8Rng::seed_from_u64(42)).map_err(|e| e.to_string())?;
    let objective = common::hinge_objective(lambda, &fit.w, fit.b, &features, &ys);
    let gap = objective / oracle - 1.0;

    let xs2 = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![5.0, 5.0], vec![5.0, 6.0], vec![6.0, 5.0]];
    let ys2 = [0, 0, 0, 1, 1, 1];
    let names = vec!["a".to_string(), "b".to_string()];
    let m = train_ovr_dense(&xs2, &ys2, &names, &SvmHyper { lambda: 0.01, epochs: 200, seed: 42 })
        .map_err(|e| e.to_string())?;
    let correct = xs2.iter().zip(&ys2).filter(|(x, &y)| m.predict_vector(x).map(|p| p.label == y).unwrap_or(false)).count();
    check(
        gap <= 0.02 && correct == xs2.len(),
        format!("1-d objective {objective:.5} vs grid {oracle:.5} (gap {:.2}% <= 2%); 2-d accuracy {correct}/{}", gap * 100.0, xs2.len()),
    )
}

fn ranking_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for corpus_no in 0..200 {
        let n = rng.random_range(1..=100);
        let k = rng.random_range(2..=16);
        let names = (0..3).map(|c| format!("c{c}")).collect();
        let weights = (0..3).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let model = LinearModel::new(names, weights, vec![0.0; 3], SvmHyper::default()).map_err(|e| e.to_string())?;
        let histogram = |rng: &mut ChaCha8Rng| -> Vec<f32> {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(3)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| (v / total) as f32).collect()
        };
        let corpus: Vec<StoredHistogram> = (0..n)
            .map(|i| StoredHistogram {
                image_id: format!("img{:04}", (i * 7919) % 10_007),
                label: Some(i % 3),
                n_features: 10,
                normalized: histogram(&mut rng),
            })
            .collect();
        let oracle_corpus: Vec<(String, Vec<f64>)> = corpus
            .iter()
            .map(|h| (h.image_id.clone(), h.normalized.iter().map(|&v| f64::from(v)).collect()))
            .collect();
        let index = index_stored(k, corpus, &model).map_err(|e| e.to_string())?;
        let q = histogram(&mut rng);
        let got = index.rank(&q, 0, &QueryOptions::new(n, QueryMode::Global)).map_err(|e| e.to_string())?;
        let want = common::exhaustive_ranking(&oracle_corpus, &q.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
        let same = got.results.len() == want.len()
            && got.results.iter().zip(&want).all(|(r, (id, d))| &r.image_id == id && (r.distance - d).abs() <= 1e-12);
        if !same {
            return Err(format!("corpus {corpus_no} (n = {n}) ranked differently from the exhaustive sort"));
        }
    }
    Ok("200 corpora of 1..=100 histograms match the exhaustive sort".into())
}

fn desk_config(data: &Path, out: &Path, k: usize) -> PipelineConfig {
    PipelineConfig { dataset: data.into(), output: out.into(), k, ..Default::default() }
}

fn end_to_end(root: &Path) -> Outcome {
    let data = root.join("e2e-data");
    let out = root.join("e2e-out");
    write_corpus(&SyntheticCorpusSpec::standard(4, 20, 128, 7), &data).map_err(|e| e.to_string())?;
    build(&desk_config(&data, &out, 32)).map_err(|e| e.to_string())?;
    let report = Artifacts::load(&out)
        .and_then(|a| a.evaluate(&[3, 5, 10], QueryMode::Filtered))
        .map_err(|e| e.to_string())?;
    let m3 = report.map_at(3).ok_or("no MAP@3")?;
    let m10 = report.map_at(10).ok_or("no MAP@10")?;
    check(
        m3 >= 0.85 && m10 >= 0.60,
        format!("{} test queries: MAP@3 = {m3:.4} (>= 0.85), MAP@10 = {m10:.4} (>= 0.60)", report.n_queries),
    )
}

fn snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.map_err(|e| e.to_string())?.path();
            Ok((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).map_err(|e| e.to_string())?))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism(root: &Path) -> Outcome {
    let data = root.join("det-data");
    let out = root.join("det-out");
    write_corpus(&SyntheticCorpusSpec::standard(4, 10, 128, 7), &data).map_err(|e| e.to_string())?;
    let cfg = desk_config(&data, &out, 32);
    let mut runs = Vec::new();
    for _ in 0..2 {
        build(&cfg).map_err(|e| e.to_string())?;
        let report = Artifacts::load(&out).and_then(|a| a.evaluate(&cfg.k_values, QueryMode::Filtered)).map_err(|e| e.to_string())?;
        write_report(&report, &out).map_err(|e| e.to_string())?;
        runs.push(snapshot(&out)?);
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    check(runs[0] == runs[1], format!("{} files compared byte for byte: {}", names.len(), names.join(", ")))
}

fn many_classes(root: &Path) -> Outcome {
    let data = root.join("47-data");
    let out = root.join("47-out");
    write_corpus(&SyntheticCorpusSpec::standard(47, 10, 128, 7), &data).map_err(|e| e.to_string())?;
    let built = build(&desk_config(&data, &out, 64)).map_err(|e| e.to_string())?;
    let report = Artifacts::load(&out).and_then(|a| a.evaluate(&[3, 5, 10], QueryMode::Filtered)).map_err(|e| e.to_string())?;
    write_report(&report, &out).map_err(|e| e.to_string())?;
    let csv = fs::read_to_string(out.join("report.csv")).map_err(|e| e.to_string())?;
    let header_ok = csv.lines().next() == Some("query_id,class,k,relevant_at_k,precision_at_k");
    let rows_ok = csv.lines().count() == 1 + 3 * report.n_queries;
    let ks: Vec<usize> = report.map.iter().map(|m| m.k).collect();
    let table = report.map.iter().map(|m| format!("MAP@{}={}%", m.k, m.map_percent)).collect::<Vec<_>>().join(" ");
    check(
        built.manifest.class_names.len() == 47 && header_ok && rows_ok && ks == [3, 5, 10] && out.join("report.json").exists(),
        format!("47 classes, {} test queries, per-query and MAP tables written; {table} (not gated)", report.n_queries),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let root = scratch.path();
    let criteria: Vec<Criterion<'_>> = vec![
        ("metric arithmetic reproduces the worked tables", Duration::from_secs(1), Box::new(metric_tables)),
        ("integral image matches naive summation", Duration::from_secs(5), Box::new(integral_oracle)),
        ("k-means reaches the enumerated optimum", Duration::from_secs(30), Box::new(kmeans_optimality)),
        ("SURF localizes a blob and tracks scale", Duration::from_secs(10), Box::new(surf_localization)),
        ("SVM matches grid search and fits separable data", Duration::from_secs(10), Box::new(svm_oracle)),
        ("global ranking equals exhaustive sort", Duration::from_secs(30), Box::new(ranking_oracle)),
        ("end-to-end synthetic retrieval", Duration::from_secs(120), Box::new(|| end_to_end(root))),
        ("build and evaluate are bitwise deterministic", Duration::from_secs(120), Box::new(|| determinism(root))),
        ("47-class corpus produces both report tables", Duration::from_secs(300), Box::new(|| many_classes(root))),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (status, detail) = match (&outcome, elapsed <= *budget) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the time budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "{status} criterion {}: {name} -- {detail} [{:.2}s / {}s]",
            i + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

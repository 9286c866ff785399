//! End-to-end tests of the binary: stage orchestration, exit codes, and the
//! config/flag precedence, all against the bundled mini fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../mealswap/fixtures/mini")
        .join(name)
}

fn mealswap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mealswap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stage_args<'a>(stage: &'a str, out_dir: &'a str) -> Vec<&'a str> {
    vec![
        stage,
        "--config",
        // leak: tests only; keeps the &str-based helper simple
        Box::leak(fixture("run.json").to_string_lossy().into_owned().into_boxed_str()),
        "--taxonomy",
        Box::leak(fixture("taxonomy.tsv").to_string_lossy().into_owned().into_boxed_str()),
        "--meals",
        Box::leak(fixture("meals.jsonl").to_string_lossy().into_owned().into_boxed_str()),
        "--judgements",
        Box::leak(fixture("judgements.csv").to_string_lossy().into_owned().into_boxed_str()),
        "--out-dir",
        out_dir,
    ]
}

#[test]
fn full_pipeline_runs_stage_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for stage in ["ingest", "build-matrix", "svd", "rank-all", "evaluate", "heatmap"] {
        let result = mealswap(&stage_args(stage, out));
        assert!(
            result.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&result.stderr)
        );
        let stdout = String::from_utf8_lossy(&result.stdout);
        assert!(stdout.contains(stage), "no summary line: {stdout}");
    }
    for artifact in [
        "meals.processed.jsonl",
        "ingest_stats.json",
        "row_vocab.tsv",
        "col_vocab.tsv",
        "matrix.ppmi",
        "model.svd",
        "rankings.tsv",
        "metrics.tsv",
        "heatmap.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join(artifact).is_file(), "missing {artifact}");
    }
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    for stage in ["ingest", "build-matrix", "svd", "rank-all", "evaluate", "heatmap"] {
        assert!(manifest.contains(&format!("\"{stage}\"")), "manifest lacks {stage}");
    }

    // query against the built artifacts prints rank, key, score per line
    let mut args = stage_args("query", out);
    args.push("meats:poultry:chicken");
    args.push("--method");
    args.push("PPMI");
    args.push("-k");
    args.push("3");
    let result = mealswap(&args);
    assert!(
        result.status.success(),
        "query failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let stdout = String::from_utf8_lossy(&result.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("1\t"));
    assert_eq!(lines[0].split('\t').count(), 3);

    // an unknown key is a validation failure with suggestions
    let mut args = stage_args("query", out);
    args.push("meats:poultry:chickn");
    let result = mealswap(&args);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("chicken"), "no suggestion in: {stderr}");
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let taxonomy = fixture("taxonomy.tsv");
    let result = mealswap(&[
        "ingest",
        "--taxonomy",
        taxonomy.to_str().unwrap(),
        "--meals",
        "/no/such/meals.jsonl",
        "--out-dir",
        out,
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn missing_prerequisite_stage_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = mealswap(&stage_args("evaluate", out));
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("rank-all"), "should name the stage: {stderr}");
}

#[test]
fn invalid_config_lists_every_problem_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = stage_args("ingest", out);
    args.extend(["--svd-k", "0", "--min-row-count", "0"]);
    let result = mealswap(&args);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("svd_k"), "{stderr}");
    assert!(stderr.contains("min_row_count"), "{stderr}");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let result = mealswap(&["no-such-subcommand"]);
    assert_eq!(result.status.code(), Some(1));
    let result = mealswap(&["--help"]);
    assert_eq!(result.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&result.stdout);
    for subcommand in [
        "ingest", "build-matrix", "svd", "query", "rank-all", "evaluate", "heatmap", "synth",
        "stats",
    ] {
        assert!(stdout.contains(subcommand), "help lacks {subcommand}");
    }
}

#[test]
fn synth_writes_corpus_taxonomy_and_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = mealswap(&[
        "synth",
        "--out-dir",
        out,
        "--n-clusters",
        "4",
        "--foods-per-cluster",
        "3",
        "--n-meals",
        "50",
        "--min-meal-size",
        "2",
        "--max-meal-size",
        "3",
        "--seed",
        "1",
    ]);
    assert!(
        result.status.success(),
        "synth failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in ["meals.jsonl", "taxonomy.tsv", "clusters.tsv"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let clusters = std::fs::read_to_string(dir.path().join("clusters.tsv")).unwrap();
    assert_eq!(clusters.lines().count(), 12);

    // infeasible parameters are validation errors
    let result = mealswap(&[
        "synth", "--out-dir", out, "--n-clusters", "2", "--max-meal-size", "5",
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn stats_reports_corpus_shape() {
    let taxonomy = fixture("taxonomy.tsv");
    let meals = fixture("meals.jsonl");
    let result = mealswap(&[
        "stats",
        "--taxonomy",
        taxonomy.to_str().unwrap(),
        "--meals",
        meals.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stats failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("meals\t250"), "{stdout}");
    assert!(stdout.contains("entries\t803"), "{stdout}");
    assert!(stdout.contains("entries_discarded\t98"), "{stdout}");
}

//! End-to-end tests driving the compiled binary against a small generated
//! corpus in MovieLens file shape.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blockrec::synth::{generate, write_movielens, SynthParams};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blockrec"))
}

/// 50 users over 4 communities, 120 items — big enough to fit, small enough
/// that a full fit finishes in seconds.
fn mini_params() -> SynthParams {
    SynthParams {
        community_sizes: vec![15, 13, 12, 10],
        n_items: 120,
        median_activity: 24.0,
        activity_spread: 0.12,
        min_activity: 15,
        max_activity: 35,
        ..SynthParams::default()
    }
}

fn write_mini_corpus(dir: &Path) {
    let data = generate(&mini_params()).expect("mini corpus generates");
    write_movielens(&data, dir).expect("mini corpus writes");
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fit_args(data: &Path, out: &Path) -> Vec<String> {
    [
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--k-range",
        "2..5",
        "--restarts",
        "6",
        "--lsa-dim",
        "40",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn fit_writes_a_manifest_and_refits_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    std::fs::create_dir(&data_dir).unwrap();
    write_mini_corpus(&data_dir);

    let model_a = tmp.path().join("model_a");
    let out = run(bin().args(fit_args(&data_dir, &model_a)));
    assert!(out.status.success(), "fit failed: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("chose K="));

    let manifest_a = std::fs::read(model_a.join("manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_slice(&manifest_a).unwrap();
    let chosen = parsed["chosen_k"].as_u64().unwrap();
    assert!((2..=5).contains(&chosen), "chosen K {chosen} outside the range");
    assert_eq!(parsed["users"].as_u64(), Some(50));
    assert_eq!(parsed["items"].as_u64(), Some(120));

    let model_b = tmp.path().join("model_b");
    let out = run(bin().args(fit_args(&data_dir, &model_b)));
    assert!(out.status.success(), "refit failed: {}", stderr_of(&out));
    let manifest_b = std::fs::read(model_b.join("manifest.json")).unwrap();
    assert_eq!(manifest_a, manifest_b, "refit changed the manifest");
}

#[test]
fn recommend_skips_training_items_and_ranks_by_score() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    std::fs::create_dir(&data_dir).unwrap();
    write_mini_corpus(&data_dir);
    let model = tmp.path().join("model");
    let out = run(bin().args(fit_args(&data_dir, &model)));
    assert!(out.status.success(), "fit failed: {}", stderr_of(&out));

    let out = run(bin().args([
        "recommend",
        "--model",
        model.to_str().unwrap(),
        "--user",
        "1",
        "--n",
        "5",
    ]));
    assert!(out.status.success(), "recommend failed: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rank,item_id,score,route"));

    let trained: HashSet<u32> = std::fs::read_to_string(data_dir.join("u.data"))
        .unwrap()
        .lines()
        .filter_map(|l| {
            let mut f = l.split('\t');
            let user: u32 = f.next()?.parse().ok()?;
            let item: u32 = f.next()?.parse().ok()?;
            (user == 1).then_some(item)
        })
        .collect();
    assert!(!trained.is_empty(), "user 1 should have training history");

    let mut last_score = f64::INFINITY;
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4, "bad row {line:?}");
        let item: u32 = fields[1].parse().unwrap();
        let score: f64 = fields[2].parse().unwrap();
        assert!(
            !trained.contains(&item),
            "recommended item {item} is in user 1's training history"
        );
        assert!(score <= last_score, "rows are not score-ranked");
        last_score = score;
        rows += 1;
    }
    assert_eq!(rows, 5);
}

#[test]
fn recommend_serves_a_new_user_and_warns_past_the_retrain_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    std::fs::create_dir(&data_dir).unwrap();
    write_mini_corpus(&data_dir);
    let model = tmp.path().join("model");
    let mut args = fit_args(&data_dir, &model);
    args.extend(["--retrain-threshold".to_string(), "1".to_string()]);
    let out = run(bin().args(args));
    assert!(out.status.success(), "fit failed: {}", stderr_of(&out));

    let recommend = |n: &str| {
        run(bin().args([
            "recommend",
            "--model",
            model.to_str().unwrap(),
            "--new-user",
            "30,male,engineer",
            "--n",
            n,
        ]))
    };
    let out = recommend("4");
    assert!(out.status.success(), "new-user failed: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert_eq!(text.lines().skip(1).count(), 4);
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",new_user"), "expected cold-start route: {line:?}");
    }
    assert!(
        stderr_of(&out).contains("new users since the last fit"),
        "expected a retrain warning at threshold 1, got: {}",
        stderr_of(&out)
    );
}

#[test]
fn recommend_rejects_zero_length_lists_and_malformed_specs() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    std::fs::create_dir(&data_dir).unwrap();
    write_mini_corpus(&data_dir);
    let model = tmp.path().join("model");
    let out = run(bin().args(fit_args(&data_dir, &model)));
    assert!(out.status.success(), "fit failed: {}", stderr_of(&out));

    let out = run(bin().args([
        "recommend",
        "--model",
        model.to_str().unwrap(),
        "--user",
        "1",
        "--n",
        "0",
    ]));
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));

    let out = run(bin().args([
        "recommend",
        "--model",
        model.to_str().unwrap(),
        "--new-user",
        "30,male", // missing occupation
    ]));
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));

    let out = run(bin().args(["recommend", "--model", model.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
}

#[test]
fn fit_rejects_an_empty_k_range() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    std::fs::create_dir(&data_dir).unwrap();
    write_mini_corpus(&data_dir);
    let model = tmp.path().join("model");
    let mut args = fit_args(&data_dir, &model);
    let at = args.iter().position(|a| a == "2..5").unwrap();
    args[at] = "5..3".to_string();
    let out = run(bin().args(args));
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
}

#[test]
fn a_missing_ratings_file_exits_with_the_io_code_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("nothing_here");
    std::fs::create_dir(&data_dir).unwrap();
    let model = tmp.path().join("model");
    let out = run(bin().args(fit_args(&data_dir, &model)));
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("u.data"),
        "message should name the missing file: {}",
        stderr_of(&out)
    );
}

#[test]
fn evaluate_writes_a_report_for_a_single_split() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    std::fs::create_dir(&data_dir).unwrap();
    write_mini_corpus(&data_dir);
    let report = tmp.path().join("report.csv");

    let started = std::time::Instant::now();
    let out = run(bin().args([
        "evaluate",
        "--data",
        data_dir.to_str().unwrap(),
        "--p-star",
        "0.8",
        "--restarts",
        "6",
        "--lsa-dim",
        "40",
        "--report",
        report.to_str().unwrap(),
    ]));
    assert!(out.status.success(), "evaluate failed: {}", stderr_of(&out));
    assert!(
        started.elapsed().as_secs() < 10,
        "mini evaluation took {:?}",
        started.elapsed()
    );

    let text = std::fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("section,p_star_or_lstar,metric,ours,traditional,improvement_pct")
    );
    let body: Vec<&str> = lines.collect();
    assert!(
        body.iter().any(|l| l.starts_with("error,0.8,mae,")),
        "missing the single-split MAE row"
    );
    assert!(
        body.iter().all(|l| !l.starts_with("error,0.5,")),
        "--p-star should suppress the rest of the sweep"
    );
}

#[test]
fn improve_ratings_moves_blends_toward_the_comment_class() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/comments");
    let out_file = tmp.path().join("corrected.csv");
    let out = run(bin().args([
        "improve-ratings",
        "--ratings",
        fixtures.join("ratings.tsv").to_str().unwrap(),
        "--labeled",
        fixtures.join("labeled.csv").to_str().unwrap(),
        "--comments",
        fixtures.join("comments.csv").to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
    ]));
    assert!(out.status.success(), "improve-ratings failed: {}", stderr_of(&out));

    let text = std::fs::read_to_string(&out_file).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("user_id,item_id,initial_rating,appended_rating,final_rating")
    );
    let mut lowered = 0;
    let mut raised = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let initial: f64 = f[2].parse().unwrap();
        let appended: f64 = f[3].parse().unwrap();
        let final_r: f64 = f[4].parse().unwrap();
        // Equal-weight blend: the final rating must sit between the parts.
        assert!(
            (final_r - 0.5 * (initial + appended)).abs() < 1e-9,
            "blend mismatch in {line:?}"
        );
        if appended < initial {
            assert!(final_r < initial, "no downward correction in {line:?}");
            lowered += 1;
        }
        if appended > initial {
            assert!(final_r > initial, "no upward correction in {line:?}");
            raised += 1;
        }
    }
    assert!(lowered >= 2 && raised >= 2, "fixture should correct both ways");
}

//! End-to-end tests of the `uibrec` binary: exit codes, artifact layout,
//! diagnostics, and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use uibrec_core::dataset::{EvalCandidates, HoldoutRole};
use uibrec_core::losses::LossSpec;
use uibrec_core::matrix::Matrix;
use uibrec_core::scorers::{ModelKind, ModelSpec, ModelState};
use uibrec_core::training::TrainConfig;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uibrec"));
    // keep tests hermetic even if the environment sets a default out root
    cmd.env_remove("UIBREC_OUT");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Prepare the small built-in dataset under `root` and return the prepared dir.
fn prepare_ml1m_desk(root: &Path) -> PathBuf {
    let out = run(&[
        "prepare",
        "--synth",
        "ml1m-desk",
        "--out-root",
        root.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "prepare failed: {}", stderr(&out));
    root.join("prepared").join("ml1m-desk")
}

fn write_config(dir: &Path, prepared: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "preset = \"bpr+uib@ml1m\"\n\n\
         [dataset]\nsynth = \"ml1m-desk\"\nprepared = {prepared:?}\n\n\
         {extra}\n\
         [output]\ndir = {out:?}\n",
        prepared = prepared.to_str().unwrap(),
        out = dir.join("out").to_str().unwrap(),
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_names_every_subcommand() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for sub in ["prepare", "train", "eval", "analyze", "grid"] {
        assert!(text.contains(sub), "--help missing {sub}:\n{text}");
    }
}

#[test]
fn prepare_prints_stats_and_refuses_rerun_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let out = run(&["prepare", "--synth", "ml1m-desk", "--out-root", root.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("480"), "user count missing:\n{text}");
    assert!(text.contains("320"), "item count missing:\n{text}");
    assert!(text.contains(','), "large counts are comma-formatted:\n{text}");
    assert!(text.contains("density"), "density line missing:\n{text}");
    let prepared = root.join("prepared").join("ml1m-desk");
    for file in ["train.txt", "valid.txt", "test.txt", "candidates.txt", "prepare.json"] {
        assert!(prepared.join(file).exists(), "{file} not written");
    }

    let again = run(&["prepare", "--synth", "ml1m-desk", "--out-root", root.to_str().unwrap()]);
    assert_eq!(code(&again), 2, "rerun must refuse without --force");
    assert!(stderr(&again).contains("--force"));

    let forced = run(&[
        "prepare",
        "--synth",
        "ml1m-desk",
        "--out-root",
        root.to_str().unwrap(),
        "--force",
    ]);
    assert_eq!(code(&forced), 0, "{}", stderr(&forced));
}

#[test]
fn corrupt_split_file_fails_with_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let prepared = prepare_ml1m_desk(tmp.path());
    let config = write_config(tmp.path(), &prepared, "[train]\nmax_epochs = 1\n");

    let train_txt = prepared.join("train.txt");
    let mut lines: Vec<String> =
        std::fs::read_to_string(&train_txt).unwrap().lines().map(String::from).collect();
    lines[4] = "7 notanitem".to_string();
    std::fs::write(&train_txt, lines.join("\n") + "\n").unwrap();

    let out = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("train.txt:5"), "diagnostic names file and line: {err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "preset = \"bpr@ml1m\"\n[train]\nepocs = 5\n").unwrap();
    let out = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epocs"), "message names the bad key: {}", stderr(&out));
}

#[test]
fn eval_of_missing_checkpoint_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let prepared = prepare_ml1m_desk(tmp.path());
    let out = run(&[
        "eval",
        "--data",
        prepared.to_str().unwrap(),
        "--checkpoint",
        tmp.path().join("nope.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nope.json"));
}

/// A hand-built checkpoint whose score is 1 exactly on each user's test
/// positive and 0 elsewhere must score perfectly on every metric.
#[test]
fn perfect_oracle_checkpoint_scores_all_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let prepared = prepare_ml1m_desk(tmp.path());
    let candidates = EvalCandidates::load_from(&prepared.join("candidates.txt")).unwrap();

    let (users, items) = (480, 320);
    let mut p = Matrix::zeros(users, items);
    for entry in candidates.entries(HoldoutRole::Test) {
        p.row_mut(entry.user as usize)[entry.positive as usize] = 1.0;
    }
    let mut q = Matrix::zeros(items, items);
    for i in 0..items {
        q.row_mut(i)[i] = 1.0;
    }
    let state = ModelState {
        kind: ModelKind::Mf,
        d: items,
        k_layers: 0,
        seed: 0,
        p,
        q,
        w: vec![0.0; items],
        boundary_active: false,
        mlp: None,
        margins: None,
        graph: None,
    };
    let spec = ModelSpec { kind: ModelKind::Mf, d: items, k_layers: 0 };
    let config = TrainConfig::new(spec, LossSpec::PairwiseLnsig);
    let checkpoint = serde_json::json!({
        "format": "uibrec-checkpoint v1",
        "config": config,
        "best_epoch": 0,
        "state": state,
    });
    let ckpt_path = tmp.path().join("oracle.json");
    std::fs::write(&ckpt_path, serde_json::to_string(&checkpoint).unwrap()).unwrap();

    let out = run(&[
        "eval",
        "--data",
        prepared.to_str().unwrap(),
        "--checkpoint",
        ckpt_path.to_str().unwrap(),
        "--role",
        "test",
        "--ks",
        "1,5,10",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,hit,ndcg,mrr"));
    for (line, k) in lines.zip([1, 5, 10]) {
        assert_eq!(line, format!("{k},1,1,1"), "metrics at k={k} must all be 1.0");
    }
}

#[test]
fn checkpoint_with_wrong_format_tag_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let prepared = prepare_ml1m_desk(tmp.path());
    let ckpt = tmp.path().join("bad.json");
    std::fs::write(&ckpt, "{\"format\": \"something else\"}").unwrap();
    let out = run(&[
        "eval",
        "--data",
        prepared.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_writes_artifacts_honors_flag_overrides_and_refuses_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let prepared = prepare_ml1m_desk(tmp.path());
    let config = write_config(tmp.path(), &prepared, "[train]\nmax_epochs = 5\n");

    // the flag must beat the file's max_epochs = 5
    let out = run(&["train", "--config", config.to_str().unwrap(), "--max-epochs", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out_dir = tmp.path().join("out");
    let runs: Vec<_> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.join("manifest.json").exists())
        .collect();
    assert_eq!(runs.len(), 1, "exactly one run directory");
    let run_dir = &runs[0];
    assert!(run_dir.file_name().unwrap().to_str().unwrap().ends_with("-s0"));
    for file in ["manifest.json", "history.jsonl", "checkpoint.json", "metrics-test.csv", "metrics-valid.csv"]
    {
        assert!(run_dir.join(file).exists(), "{file} not written");
    }
    let history = std::fs::read_to_string(run_dir.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 1, "--max-epochs 1 bounds the history");

    let again = run(&["train", "--config", config.to_str().unwrap(), "--max-epochs", "1"]);
    assert_eq!(code(&again), 2, "rerun must refuse without --force");
    assert!(stderr(&again).contains("--force"));
}

#[test]
fn divergent_training_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let prepared = prepare_ml1m_desk(tmp.path());
    let config = write_config(tmp.path(), &prepared, "[train]\nmax_epochs = 2\n");
    let out = run(&["train", "--config", config.to_str().unwrap(), "--eta", "1e200"]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn eval_over_a_runs_dir_aggregates_mean_and_std() {
    let tmp = tempfile::tempdir().unwrap();
    let prepared = prepare_ml1m_desk(tmp.path());
    let config = write_config(tmp.path(), &prepared, "[train]\nmax_epochs = 2\n");
    let out =
        run(&["train", "--config", config.to_str().unwrap(), "--repeats", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let eval = run(&[
        "eval",
        "--data",
        prepared.to_str().unwrap(),
        "--runs-dir",
        tmp.path().join("out").to_str().unwrap(),
        "--ks",
        "10",
    ]);
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    let text = stdout(&eval);
    assert!(
        text.starts_with("k,hit_mean,hit_std,ndcg_mean,ndcg_std,mrr_mean,mrr_std,runs"),
        "aggregate header expected:\n{text}"
    );
    let row = text.lines().nth(1).expect("one data row");
    assert!(row.ends_with(",2"), "runs column counts both seeds: {row}");
}

#[test]
fn analyze_efficiency_reads_history_and_emits_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let prepared = prepare_ml1m_desk(tmp.path());
    let config = write_config(tmp.path(), &prepared, "[train]\nmax_epochs = 2\n");
    assert_eq!(code(&run(&["train", "--config", config.to_str().unwrap()])), 0);
    let out_dir = tmp.path().join("out");
    let run_dir = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.join("history.jsonl").exists())
        .expect("run dir");

    let out = run(&["analyze", "efficiency", "--run", run_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("epoch,loss_total,loss_pos,loss_neg,corrupted_rate,"));
    assert_eq!(text.lines().count(), 3, "header + 2 epochs:\n{text}");
}

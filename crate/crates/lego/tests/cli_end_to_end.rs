//! End-to-end runs of the `lego` binary: the command surface, exit codes,
//! and the cached / uncached evaluation agreement at the CLI level.

use std::path::{Path, PathBuf};
use std::process::Output;

fn lego_bin() -> &'static str {
    env!("CARGO_BIN_EXE_lego")
}

fn run_lego(args: &[&str], cwd: &Path) -> Output {
    std::process::Command::new(lego_bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("failed to spawn lego")
}

fn write_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("exp.yaml");
    std::fs::write(
        &cfg,
        r#"
dataset:
  name: tiny
  path: data/tiny
  max_history: 8
  source:
    kind: synthetic
    n_topics: 4
    n_items: 80
    n_users: 40
    vocab_per_topic: 10
    title_len: 6
    history_len_min: 1
    history_len_max: 8
    n_impressions: 400
    candidates_per_impression: 4
    noise: 0.1
    seed: 3
model:
  name: NRMS
  embed_dim: 16
  hidden_dim: 16
  n_heads: 2
train:
  batch_size: 32
  max_epochs: 1
  seed: 3
eval:
  batch_size: 64
  split: dev
output_dir: runs
"#,
    )
    .unwrap();
    cfg
}

fn stdout_lines(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn metric_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| {
            !l.starts_with("timing.") && !l.starts_with("used_cache") && !l.starts_with("artifacts")
        })
        .map(|s| s.to_string())
        .collect()
}

#[test]
fn prepare_train_evaluate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());

    let out = run_lego(&["prepare", "--config", "exp.yaml"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("data/tiny/items.header").exists());

    let out = run_lego(&["train", "--config", "exp.yaml"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout_lines(&out);
    assert!(text.contains("best_dev_auc"), "{text}");
    assert!(text.contains("checkpoint"), "{text}");

    // checkpoint restores into the same architecture, refuses another
    let ckpt_line = stdout_lines(&out)
        .lines()
        .find(|l| l.starts_with("checkpoint:"))
        .unwrap()
        .trim_start_matches("checkpoint:")
        .trim()
        .to_string();
    let out = run_lego(
        &["evaluate", "--config", "exp.yaml", "--checkpoint", &ckpt_line],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run_lego(
        &[
            "evaluate",
            "--config",
            "exp.yaml",
            "--set",
            "model.name=NAML",
            "--checkpoint",
            &ckpt_line,
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "digest mismatch must refuse load");

    // cached and uncached evaluation agree line for line
    let cached = run_lego(&["evaluate", "--config", "exp.yaml"], dir.path());
    assert!(cached.status.success());
    let uncached = run_lego(
        &["evaluate", "--config", "exp.yaml", "--no-cache"],
        dir.path(),
    );
    assert!(uncached.status.success());
    assert_eq!(
        metric_lines(&stdout_lines(&cached)),
        metric_lines(&stdout_lines(&uncached))
    );
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.yaml");
    std::fs::write(
        &cfg,
        "dataset:\n  name: x\n  path: data/x\n  wrong_key: 1\nmodel:\n  name: NRMS\n",
    )
    .unwrap();
    let out = run_lego(&["evaluate", "--config", "bad.yaml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wrong_key"));
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    // no prepare: the dataset directory does not exist
    let out = run_lego(&["evaluate", "--config", "exp.yaml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset not found"));
}

#[test]
fn split_mode_flags_map_to_freeze() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    run_lego(&["prepare", "--config", "exp.yaml"], dir.path());

    // split mode demands a layered content operator
    let out = run_lego(
        &[
            "train", "--config", "exp.yaml", "--mode", "split", "--layer", "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "NRMS has no freezable layers");

    let out = run_lego(
        &[
            "train",
            "--config",
            "exp.yaml",
            "--set",
            "model.name=PLMNR_lite",
            "--mode",
            "split",
            "--layer",
            "1",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn override_precedence_changes_digest_dir() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    run_lego(&["prepare", "--config", "exp.yaml"], dir.path());
    let a = run_lego(&["train", "--config", "exp.yaml"], dir.path());
    let b = run_lego(
        &["train", "--config", "exp.yaml", "--set", "train.lr=0.002"],
        dir.path(),
    );
    let dir_of = |out: &Output| {
        stdout_lines(out)
            .lines()
            .find(|l| l.starts_with("artifacts:"))
            .unwrap()
            .to_string()
    };
    assert_ne!(dir_of(&a), dir_of(&b), "override should change the digest");
}

#[test]
fn mind_tsv_prepare_works() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("news.tsv"),
        "N1\tsports\tnfl\tBest plays of the week\tA roundup of plays\n\
N2\tnews\tworld\tMarkets rally again\tStocks rose sharply\n\
N3\tsports\tsoccer\tCup final preview\tWho lifts the trophy\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("train.tsv"),
        "1\tU1\t11/11/2019 1:00:00 PM\tN2\tN1-1 N2-0\n2\tU2\t11/11/2019 2:00:00 PM\tN1 N3\tN2-0 N3-1\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("dev.tsv"),
        "1\tU1\t11/12/2019 1:00:00 PM\tN2\tN3-1 N2-0\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("mind.yaml"),
        r#"
dataset:
  name: mind-tiny
  path: data/mind-tiny
  max_history: 10
  source:
    kind: mind
    news_path: news.tsv
    train_behaviors: train.tsv
    dev_behaviors: dev.tsv
model:
  name: NRMS
  embed_dim: 16
  hidden_dim: 16
  n_heads: 2
output_dir: runs
"#,
    )
    .unwrap();
    let out = run_lego(&["prepare", "--config", "mind.yaml"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout_lines(&out);
    assert!(text.contains("rows.train: 4"), "{text}");
    assert!(text.contains("rows.dev: 2"), "{text}");
}

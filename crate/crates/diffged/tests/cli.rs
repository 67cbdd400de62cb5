//! End-to-end CLI checks: every subcommand driven through the real binary,
//! with file formats validated by re-loading what the commands wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffged::dataset;
use diffged::edit_path;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diffged"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed with status {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn path_str(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn gen_dataset(ws: &Workspace, name: &str, bases: usize, per: usize, seed: u64) {
    let out = run(&[
        "gen-synthetic",
        "--random-bases",
        &bases.to_string(),
        "--nodes-min",
        "5",
        "--nodes-max",
        "7",
        "--label-count",
        "2",
        "--per-graph",
        &per.to_string(),
        "--seed",
        &seed.to_string(),
        "--delta-min",
        "1",
        "--delta-max",
        "2",
        "--output",
        &ws.path_str(name),
    ]);
    assert_success(&out, "gen-synthetic");
}

fn train_tiny(ws: &Workspace, data: &str, out_dir: &str) {
    let config = r#"{
        "epochs": 2,
        "batch_size": 8,
        "learning_rate": 0.001,
        "weight_decay": 0.0005,
        "t_steps": 20,
        "beta_start": 0.001,
        "beta_end": 0.05,
        "seed": 3,
        "layer_dims": [8, 6],
        "val_k": 2,
        "val_s": 2
    }"#;
    fs::write(ws.path("train_config.json"), config).unwrap();
    let out = run(&[
        "train",
        "--config",
        &ws.path_str("train_config.json"),
        "--data",
        &ws.path_str(data),
        "--out",
        &ws.path_str(out_dir),
        "--json",
    ]);
    assert_success(&out, "train");
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .expect("non-empty dataset")
        .to_string()
}

#[test]
fn gen_synthetic_writes_a_valid_deterministic_dataset() {
    let ws = Workspace::new();
    gen_dataset(&ws, "corpus.jsonl", 6, 3, 11);
    let (pairs, _vocab) = dataset::load_dataset(ws.path("corpus.jsonl")).unwrap();
    assert_eq!(pairs.len(), 18);
    for pair in &pairs {
        assert!(pair.g.node_count() <= pair.g_prime.node_count());
        let mapping = pair.ground_truth_mapping.as_ref().expect("synthetic pairs are annotated");
        let cost = edit_path::edit_cost(pair, mapping).unwrap();
        assert_eq!(Some(cost), pair.ground_truth_ged);
    }

    gen_dataset(&ws, "corpus2.jsonl", 6, 3, 11);
    assert_eq!(
        fs::read(ws.path("corpus.jsonl")).unwrap(),
        fs::read(ws.path("corpus2.jsonl")).unwrap(),
        "same seed must reproduce identical files"
    );
}

#[test]
fn gen_synthetic_accepts_base_graph_files() {
    let ws = Workspace::new();
    let bases = concat!(
        r#"{"n": 4, "edges": [[0,1],[1,2],[2,3]], "labels": ["C","N","C","O"]}"#,
        "\n",
        r#"{"n": 5, "edges": [[0,1],[1,2],[2,3],[3,4],[0,4]], "labels": ["C","C","C","C","C"]}"#,
        "\n",
    );
    fs::write(ws.path("bases.jsonl"), bases).unwrap();
    let out = run(&[
        "gen-synthetic",
        "--input",
        &ws.path_str("bases.jsonl"),
        "--per-graph",
        "2",
        "--seed",
        "6",
        "--delta-min",
        "1",
        "--delta-max",
        "2",
        "--verify-oracle",
        "--output",
        &ws.path_str("pairs.jsonl"),
    ]);
    assert_success(&out, "gen-synthetic --input");
    let (pairs, vocab) = dataset::load_dataset(ws.path("pairs.jsonl")).unwrap();
    assert_eq!(pairs.len(), 4);
    assert!(vocab.id_of("O").is_some());
    for pair in &pairs {
        let exact = diffged::oracle::exact_ged_bruteforce(pair, 2).unwrap();
        assert_eq!(Some(exact.ged), pair.ground_truth_ged, "verified corpus must be exact");
    }
}

#[test]
fn oracle_subcommand_emits_json_per_pair() {
    let ws = Workspace::new();
    gen_dataset(&ws, "corpus.jsonl", 3, 2, 5);
    let out = run(&["oracle", "--input", &ws.path_str("corpus.jsonl"), "--max-nodes", "8"]);
    assert_success(&out, "oracle");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 6);
    let (pairs, _) = dataset::load_dataset(ws.path("corpus.jsonl")).unwrap();
    for (i, line) in lines.iter().enumerate() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["index"], i);
        assert_eq!(record["optimal"], true);
        // synthetic deltas upper-bound the exact distance
        let ged = record["ged"].as_u64().unwrap() as u32;
        assert!(ged <= pairs[i].ground_truth_ged.unwrap());
        assert!(!record["mappings"].as_array().unwrap().is_empty());
    }
}

#[test]
fn train_solve_evaluate_ablate_round_trip() {
    let ws = Workspace::new();
    gen_dataset(&ws, "corpus.jsonl", 8, 3, 7);
    train_tiny(&ws, "corpus.jsonl", "model");
    assert!(ws.path("model/checkpoint.json").exists());
    let curve = fs::read_to_string(ws.path("model/loss_curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,train_bce,val_accuracy"));
    assert_eq!(curve.lines().count(), 3, "header + 2 epochs");

    // solve one pair with the trained checkpoint
    fs::write(ws.path("pair.json"), first_line(&ws.path("corpus.jsonl"))).unwrap();
    let out = run(&[
        "solve",
        "--pair",
        &ws.path_str("pair.json"),
        "--ckpt",
        &ws.path_str("model/checkpoint.json"),
        "--k",
        "4",
        "--s",
        "3",
        "--seed",
        "9",
        "--emit-path",
        "--json",
    ]);
    assert_success(&out, "solve");
    let solved: serde_json::Value = serde_json::from_str(
        String::from_utf8_lossy(&out.stdout).lines().last().unwrap(),
    )
    .unwrap();
    let predicted = solved["predicted_ged"].as_u64().unwrap();
    assert_eq!(solved["per_chain_costs"].as_array().unwrap().len(), 4);
    let script_cost = solved["edit_path"]["cost"].as_u64().unwrap();
    assert_eq!(predicted, script_cost);
    assert_eq!(
        solved["edit_path"]["ops"].as_array().unwrap().len() as u64,
        script_cost,
        "unit-cost script length equals its cost"
    );

    // deterministic: same seed, same output
    let out2 = run(&[
        "solve",
        "--pair",
        &ws.path_str("pair.json"),
        "--ckpt",
        &ws.path_str("model/checkpoint.json"),
        "--k",
        "4",
        "--s",
        "3",
        "--seed",
        "9",
        "--emit-path",
        "--json",
    ]);
    let strip_time = |raw: &Output| {
        let text = String::from_utf8_lossy(&raw.stdout).to_string();
        let mut v: serde_json::Value =
            serde_json::from_str(text.lines().last().unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("time_s");
        v
    };
    assert_eq!(strip_time(&out), strip_time(&out2));

    // evaluate with machine-readable output
    let out = run(&[
        "evaluate",
        "--data",
        &ws.path_str("corpus.jsonl"),
        "--ckpt",
        &ws.path_str("model/checkpoint.json"),
        "--k",
        "2",
        "--s",
        "2",
        "--json",
    ]);
    assert_success(&out, "evaluate");
    let report: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stdout).lines().last().unwrap())
            .unwrap();
    for field in ["mae", "accuracy", "rho", "tau", "p10", "p20", "time_s"] {
        assert!(report.get(field).is_some(), "missing field {field}");
    }
    assert!(report["accuracy"].as_f64().unwrap() >= 0.0);
    assert!(report["rho"].as_f64().is_some(), "per-base groups of 3 partners exist");

    // ablation sweep CSV
    let out = run(&[
        "ablate",
        "--data",
        &ws.path_str("corpus.jsonl"),
        "--ckpt",
        &ws.path_str("model/checkpoint.json"),
        "--sweep",
        "k",
        "--values",
        "1,2",
        "--s",
        "2",
        "--out",
        &ws.path_str("sweep.csv"),
    ]);
    assert_success(&out, "ablate");
    let csv = fs::read_to_string(ws.path("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,value,accuracy,mae,time_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("k,1,"));
    assert!(lines[2].starts_with("k,2,"));
}

#[test]
fn unknown_flags_produce_usage_and_nonzero_exit() {
    let out = run(&["solve", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr was: {stderr}");

    let out = run(&["definitely-not-a-subcommand"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let ws = Workspace::new();
    let out = run(&["oracle", "--input", &ws.path_str("missing.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn solve_rejects_corrupt_checkpoints() {
    let ws = Workspace::new();
    gen_dataset(&ws, "corpus.jsonl", 2, 1, 3);
    fs::write(ws.path("pair.json"), first_line(&ws.path("corpus.jsonl"))).unwrap();
    fs::write(ws.path("bad.ckpt"), "{\"version\": 9}").unwrap();
    let out = run(&[
        "solve",
        "--pair",
        &ws.path_str("pair.json"),
        "--ckpt",
        &ws.path_str("bad.ckpt"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

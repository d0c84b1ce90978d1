use std::path::Path;
use std::process::{Command, Output};

use fedlearn_cli::run::{Manifest, Metrics};
use fedlearn_core::data::{gen_blobs, vertical_split, write_split, LabelKind};
use fedlearn_core::forest::TreeNode;
use fedlearn_core::he::{read_keypair, read_public_key, PUBLIC_KEY_FILE, SECRET_KEY_FILE};

fn fedlearn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedlearn"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Three-party split of a blob dataset plus a loopback config, written into `dir`.
fn setup(dir: &Path, n: usize, kind: LabelKind, algorithm: &str) {
    let data = gen_blobs(n, 6, 4.0, 11, kind).unwrap();
    write_split(&vertical_split(&data, 3, 11).unwrap(), dir, "blobs").unwrap();
    let config = serde_json::json!({
        "parties": [
            {"name": "a", "endpoint": "127.0.0.1:1", "data_path": "blobs.party1.csv", "is_active": true, "label_path": "blobs.labels.csv"},
            {"name": "b", "endpoint": "127.0.0.1:1", "data_path": "blobs.party2.csv"},
            {"name": "c", "endpoint": "127.0.0.1:1", "data_path": "blobs.party3.csv"}
        ],
        "algorithm": algorithm,
        "kernel": {"D": 64, "t_max": 20},
        "forest": {"n_trees": 3, "max_depth": 3, "key_bits": 64, "allow_insecure_keys": true},
        "transport": "loopback"
    });
    std::fs::write(dir.join("run.json"), config.to_string()).unwrap();
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn keygen_guards_insecure_sizes_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let refused = fedlearn(dir.path(), &["keygen", "--bits", "64", "--out", "k64"]);
    assert!(!refused.status.success());
    assert!(stderr(&refused).contains("insecure"));
    assert!(!dir.path().join("k64").exists());
    ok(fedlearn(dir.path(), &["keygen", "--bits", "64", "--allow-insecure", "--out", "k64"]));
    ok(fedlearn(dir.path(), &["keygen", "--bits", "1024", "--seed", "3", "--out", "k"]));
    let kp = read_keypair(&dir.path().join("k").join(SECRET_KEY_FILE)).unwrap();
    let pk = read_public_key(&dir.path().join("k").join(PUBLIC_KEY_FILE)).unwrap();
    assert_eq!(&pk, kp.public());
    assert_eq!(pk.bits(), 1024);
}

#[test]
fn gen_data_and_split_produce_aligned_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(fedlearn(dir.path(), &["gen-data", "--n", "20", "--d", "5", "--out", "d.csv"]));
    ok(fedlearn(dir.path(), &["split", "--input", "d.csv", "--parties", "2", "--out-dir", "parts"]));
    let p1 = read_csv(&dir.path().join("parts/d.party1.csv"));
    let p2 = read_csv(&dir.path().join("parts/d.party2.csv"));
    let labels = read_csv(&dir.path().join("parts/d.labels.csv"));
    assert_eq!(labels[0], ["id", "label"]);
    assert_eq!(p1[0].len() + p2[0].len(), 5 + 2);
    let ids = |t: &[Vec<String>]| t.iter().map(|r| r[0].clone()).collect::<Vec<_>>();
    assert_eq!(ids(&p1), ids(&p2));
    assert_eq!(ids(&p1)[1..], ids(&labels)[1..]);
}

#[test]
fn kernel_simulate_is_deterministic_and_predict_agrees_with_metrics() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 200, LabelKind::PlusMinusOne, "kernel");
    ok(fedlearn(dir.path(), &["simulate", "--config", "run.json"]));
    let first = Metrics::read(&dir.path().join("out/metrics.json")).unwrap();
    ok(fedlearn(dir.path(), &["simulate", "--config", "run.json", "--set", "output_dir=again"]));
    let second = Metrics::read(&dir.path().join("again/metrics.json")).unwrap();
    assert_eq!(first.transcript_hash, second.transcript_hash);
    assert_eq!(first.iterations, Some(20));
    assert!(first.wall_ms.contains_key("KERNEL_UPDATE"));

    ok(fedlearn(dir.path(), &["predict", "--config", "run.json", "--out", "pred.csv"]));
    let rows = read_csv(&dir.path().join("pred.csv"));
    assert_eq!(rows[0], ["id", "score", "label"]);
    let labels = read_csv(&dir.path().join("blobs.labels.csv"));
    let hits = rows[1..]
        .iter()
        .zip(&labels[1..])
        .filter(|(p, y)| {
            assert_eq!(p[0], y[0]);
            p[2].parse::<f64>().unwrap() == y[1].parse::<f64>().unwrap()
        })
        .count();
    assert_eq!(hits as f64 / (rows.len() - 1) as f64, first.train_accuracy);

    let other = fedlearn(dir.path(), &["simulate", "--config", "run.json", "--set", "kernel.seed=9", "--set", "output_dir=seed9"]);
    let third = Metrics::read(&dir.path().join("seed9/metrics.json")).unwrap();
    assert!(ok(other).status.success());
    assert_ne!(first.transcript_hash, third.transcript_hash);
}

#[test]
fn empty_id_list_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 40, LabelKind::PlusMinusOne, "kernel");
    ok(fedlearn(dir.path(), &["simulate", "--config", "run.json"]));
    std::fs::write(dir.path().join("none.csv"), "id\n").unwrap();
    ok(fedlearn(dir.path(), &["predict", "--config", "run.json", "--ids", "none.csv", "--out", "p.csv"]));
    assert_eq!(std::fs::read_to_string(dir.path().join("p.csv")).unwrap(), "id,score,label\n");
}

#[test]
fn forest_scores_are_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 100, LabelKind::ZeroOne, "forest");
    let out = ok(fedlearn(dir.path(), &["simulate", "--config", "run.json"]));
    let metrics: Metrics = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics.nodes.unwrap() >= 3);
    ok(fedlearn(dir.path(), &["predict", "--config", "run.json", "--out", "p.csv"]));
    let rows = read_csv(&dir.path().join("p.csv"));
    assert_eq!(rows.len(), 101);
    for r in &rows[1..] {
        let s: f64 = r[1].parse().unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert_eq!(r[2], if s >= 0.5 { "1" } else { "0" });
    }
}

#[test]
fn depth_zero_forest_is_one_leaf() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 60, LabelKind::ZeroOne, "forest");
    ok(fedlearn(
        dir.path(),
        &["simulate", "--config", "run.json", "--set", "forest.n_trees=1", "--set", "forest.max_depth=0"],
    ));
    let Manifest::Forest(model) = Manifest::read(&dir.path().join("out/model.json")).unwrap() else {
        panic!("expected a forest manifest");
    };
    assert_eq!(model.trees.len(), 1);
    assert!(matches!(model.trees[0].nodes[..], [TreeNode::Leaf { .. }]));
}

#[test]
fn invalid_config_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 40, LabelKind::PlusMinusOne, "kernel");
    for (args, needle) in [
        (&["--set", "kernel.lambda=-1"][..], "kernel.lambda"),
        (&["--set", "kernel.typo=1"][..], "typo"),
        (&["--set", "parties.2.data_path=gone.csv"][..], "parties[2].data_path"),
    ] {
        let mut all = vec!["simulate", "--config", "run.json"];
        all.extend_from_slice(args);
        let out = fedlearn(dir.path(), &all);
        assert!(!out.status.success());
        assert!(stderr(&out).contains(needle), "{}", stderr(&out));
        assert!(!dir.path().join("out").exists());
    }
}

#[test]
fn predict_refuses_a_model_of_another_kind() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 40, LabelKind::ZeroOne, "kernel");
    ok(fedlearn(dir.path(), &["simulate", "--config", "run.json"]));
    let out = fedlearn(dir.path(), &["predict", "--config", "run.json", "--set", "algorithm=forest", "--out", "p.csv"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("model"));
}

#[test]
fn coordinator_names_an_absent_party() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 40, LabelKind::PlusMinusOne, "kernel");
    // Nothing listens on port 1.
    let out = fedlearn(
        dir.path(),
        &["coordinator", "--config", "run.json", "--set", "transport=tcp", "--wait-secs", "1"],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("\"a\""), "{}", stderr(&out));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn roboss(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roboss"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Two well separated 2-D blobs, `n` rows, labels alternating from +1.
fn write_blobs(dir: &Path, name: &str, n: usize) -> PathBuf {
    let mut text = String::new();
    for i in 0..n {
        let y: f64 = if i % 2 == 0 { 1.0 } else { -1.0 };
        let jitter = (i as f64 * 0.37).sin() * 0.4;
        let (a, b) = (2.0 * y + jitter, 2.0 * y - 0.5 * jitter);
        text.push_str(&format!("{a},{b},{y}\n"));
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path(), "d.csv", 20);
    let o = roboss(&["train", "--data", "d.csv", "--out", "m.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("train_accuracy=100"), "{}", stdout(&o));
    assert!(dir.path().join("m.json.manifest.json").exists());

    let o = roboss(&["predict", "--model", "m.json", "--data", "d.csv", "--out", "p.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("p.csv"));
    assert_eq!(rows.len(), 20);
    for (i, row) in rows.iter().enumerate() {
        let label = row.rsplit(',').next().unwrap();
        assert_eq!(label, if i % 2 == 0 { "1" } else { "-1" });
    }
}

#[test]
fn train_errors_have_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path(), "d.csv", 20);
    let o = roboss(&["train", "--data", "missing.csv", "--out", "m.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing.csv"));

    let o = roboss(&["train", "--data", "d.csv", "--out", "m.json", "--batch-size", "50"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batch_size"));

    let o = roboss(&["train", "--data", "d.csv", "--out", "m.json", "--c", "-1"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = roboss(&["train", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_checks_dimension_and_ties() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path(), "d.csv", 12);
    fs::write(dir.path().join("wide.csv"), "1,2,3,1\n").unwrap();
    assert_eq!(roboss(&["train", "--data", "d.csv", "--out", "m.json"], dir.path()).status.code(), Some(0));

    let o = roboss(&["predict", "--model", "m.json", "--data", "wide.csv", "--out", "p.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let mut doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    let zeros: Vec<Value> = vec![Value::from(0.0); 12];
    doc["model"]["beta"] = Value::from(zeros);
    fs::write(dir.path().join("zero.json"), serde_json::to_string(&doc).unwrap()).unwrap();
    let o = roboss(&["predict", "--model", "zero.json", "--data", "d.csv", "--out", "z.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(data_rows(&dir.path().join("z.csv")).iter().all(|r| r.ends_with(",1")));
}

#[test]
fn grid_rows_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path(), "d.csv", 20);
    let o = roboss(
        &["grid", "--data", "d.csv", "--out", "one.csv", "--no-timing", "--c-grid", "1", "--sigma-grid", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&dir.path().join("one.csv")).len(), 1);

    let args = ["grid", "--data", "d.csv", "--out", "full.csv", "--models", "hinge,pinball", "--full-grid", "--no-timing", "--folds", "4"];
    assert_eq!(roboss(&args, dir.path()).status.code(), Some(0));
    let first = fs::read(dir.path().join("full.csv")).unwrap();
    assert_eq!(roboss(&args, dir.path()).status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("full.csv")).unwrap(), first);
    let rows = data_rows(&dir.path().join("full.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("Hinge-SVM (NAG)") && rows[1].contains("Pinball-SVM (NAG)"));
}

#[test]
fn corrupt_and_restore() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path(), "d.csv", 20);
    let o = roboss(&["corrupt", "--data", "d.csv", "--out", "o.csv", "--rate", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let record: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o.csv.record.json")).unwrap()).unwrap();
    assert_eq!(record["touched_indices"].as_array().unwrap().len(), 2);

    let o = roboss(
        &["corrupt", "--data", "d.csv", "--out", "n.csv", "--mode", "label-noise", "--rate", "0.2", "--seed", "4"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let o = roboss(&["corrupt", "--data", "n.csv", "--invert", "n.csv.record.json", "--out", "back.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("back.csv")).unwrap(), fs::read(dir.path().join("d.csv")).unwrap());

    let o = roboss(&["corrupt", "--data", "d.csv", "--out", "x.csv", "--rate", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_from_ranks_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let o = roboss(
        &["stats", "--mean-ranks", "3.35,2.96,3.96,4.45,4.12,2.16", "--datasets", "79", "--out", "s.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let row = data_rows(&dir.path().join("s.csv")).remove(0);
    let cols: Vec<f64> = row.split(',').skip(2).take(2).map(|v| v.parse().unwrap()).collect();
    assert!((cols[0] - 81.44).abs() < 0.05 && (cols[1] - 20.26).abs() < 0.01, "{row}");

    let mut csv = String::from("dataset,model,mean_acc\n");
    for d in 0..5 {
        for m in ["a", "b", "c"] {
            csv.push_str(&format!("d{d},{m},90\n"));
        }
    }
    fs::write(dir.path().join("r.csv"), csv).unwrap();
    let o = roboss(&["stats", "--results", "r.csv", "--out", "u.csv", "--critical-f", "3.0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let row = data_rows(&dir.path().join("u.csv")).remove(0);
    assert_eq!(row.split(',').nth(2), Some("0"));
}

#[test]
fn plot_data_emitters() {
    let dir = tempfile::tempdir().unwrap();
    let o = roboss(
        &["loss-curve", "--a", "5", "--lambda", "1.5", "--from", "-2", "--to", "3", "--step", "0.01", "--out", "lc.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("lc.csv"));
    assert_eq!(rows.len(), 501);
    let max = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(max <= 1.5);

    let o = roboss(&["calibration", "--p", "0.7", "--out", "cal.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let risks: Vec<(f64, f64)> = data_rows(&dir.path().join("cal.csv"))
        .iter()
        .map(|r| {
            let (f, v) = r.split_once(',').unwrap();
            (f.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    let argmin = risks.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!(argmin.0 > 0.0 && argmin.0 < 3.0);

    write_blobs(dir.path(), "d.csv", 20);
    let o = roboss(
        &["sweep", "--data", "d.csv", "--a-grid", "1,2", "--lambda-grid", "0.5,1", "--out", "sw.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&dir.path().join("sw.csv")).len(), 4);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path(), "d.csv", 20);
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"data": "d.csv", "out": "m.json", "c": 2.5, "sigma": 0.7, "seed": 9}"#,
    )
    .unwrap();
    let o = roboss(&["train", "--config", "cfg.json", "--sigma", "0.9"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("m.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["c"], 2.5);
    assert_eq!(manifest["config"]["sigma"], 0.9);
    assert_eq!(manifest["seed"], 9);

    let o = roboss(&["predict", "--config", "m.json.manifest.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

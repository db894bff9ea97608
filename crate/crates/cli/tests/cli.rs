use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ml-locality"))
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_parameter_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["grad-check", "--out"])
        .arg(dir.path())
        .args(["--set", "no_such_key=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("no_such_key"));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nn_points = 12\nseed = 3\nformat = json\n").unwrap();
    let out = bin()
        .arg("data-gen")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .args(["--seed", "4", "-s", "n_features=3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("data-gen.json")).unwrap()).unwrap();
    assert_eq!(doc["schema"], "ml-locality/data-gen/v1");
    assert_eq!(doc["config"]["seeds"], serde_json::json!([4]));
    assert_eq!(doc["config"]["params"]["n_points"], "12");
    assert_eq!(doc["data"]["n_features"], 3);
    assert!(dir.path().join("data-gen.meta.json").exists());
}

#[test]
fn generated_csv_feeds_a_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["data-gen", "-s", "n_points=120", "-s", "n_features=3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let data = dir.path().join("data-gen.csv");
    let out = bin()
        .args(["cv-bench", "--repeat", "1", "--config"])
        .arg({
            let cfg = dir.path().join("cv.cfg");
            std::fs::write(&cfg, format!("dataset = {}\nk = 4\n", data.display())).unwrap();
            cfg
        })
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("cv-bench.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "seed,mode,k,epochs,mean_accuracy,point_loads,load_ratio");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].contains(",naive,4,") && rows[2].contains(",streamed,4,"));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn boolnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boolnet"))
        .args(args)
        .env("BOOLNET_THREADS", "1")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const XOR_CONFIG: &str = r#"{
    "seed": 1,
    "model": {"layers": [{"width": 8, "window": 0}]},
    "data": {"task": "xor2"},
    "optimizer": {"head_lr": 0.5},
    "train": {"batch_size": 1, "iterations": 200}
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_writes_outputs_and_eval_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), XOR_CONFIG);
    let out = dir.path().join("out");
    let o = boolnet(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "report.json", "model.blnb", "config.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("epoch,"));

    let data = dir.path().join("xor");
    let g = boolnet(&["gendata", "--task", "xor2", "--out", data.to_str().unwrap()]);
    assert!(g.status.success());
    let ckpt = out.join("model.blnb");
    let e = boolnet(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&e)).unwrap();
    assert_eq!(v["samples"], 4);
    assert!(v["accuracy"].as_f64().unwrap() >= 0.0);
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), XOR_CONFIG);
    let a = boolnet(&["train", "--config", &cfg, "--print-config"]);
    assert!(a.status.success());
    let printed = stdout(&a);
    let cfg2 = write_config(dir.path(), &printed);
    let b = boolnet(&["train", "--config", &cfg2, "--print-config"]);
    assert_eq!(stdout(&b), printed);
    let v: serde_json::Value = serde_json::from_str(&printed).unwrap();
    assert_eq!(v["optimizer"]["eta"], 2.0);
    assert_eq!(v["model"]["layers"][0]["tau"], 2);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &XOR_CONFIG.replace("\"seed\": 1,", "\"seed\": 1, \"bogus\": true,"));
    assert_eq!(boolnet(&["train", "--config", &bad, "--out", "x"]).status.code(), Some(1));

    let missing = XOR_CONFIG.replace(
        r#"{"task": "xor2"}"#,
        r#"{"task": "idx", "train_images": "nope", "train_labels": "nope", "test_images": "nope", "test_labels": "nope"}"#,
    );
    let missing = write_config(dir.path(), &missing);
    let o = boolnet(&["train", "--config", &missing, "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));

    let no_out = write_config(dir.path(), XOR_CONFIG);
    assert_eq!(boolnet(&["train", "--config", &no_out]).status.code(), Some(1));
    assert_eq!(boolnet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(boolnet(&["train"]).status.code(), Some(1));
}

#[test]
fn eval_shape_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), XOR_CONFIG);
    let out = dir.path().join("out");
    assert!(boolnet(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let data = dir.path().join("p4");
    assert!(boolnet(&["gendata", "--task", "parity4", "--out", data.to_str().unwrap()]).status.success());
    let ckpt = out.join("model.blnb");
    let o = boolnet(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn corrupt_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("bad.blnb");
    fs::write(&ckpt, b"BLNB\x01\x00\0\0\0\0garbage").unwrap();
    let data = dir.path().join("xor");
    assert!(boolnet(&["gendata", "--task", "xor2", "--out", data.to_str().unwrap()]).status.success());
    let o = boolnet(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_run_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &XOR_CONFIG.replace("0.5", "1e308"));
    let o = boolnet(&["train", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}

#[test]
fn gendata_parity4_writes_sixteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = boolnet(&["gendata", "--task", "parity4", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["train_rows"], 16);
    let d = boolnet::data::load_idx(
        &dir.path().join("train-images.idx"),
        &dir.path().join("train-labels.idx"),
        127,
    )
    .unwrap();
    assert_eq!((d.len(), d.features(), d.classes), (16, 4, 2));
}

#[test]
fn selfcheck_passes_and_lists_rules() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("check.json");
    let o = boolnet(&["selfcheck", "--json", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    let rules = v["rules"].as_array().unwrap();
    assert!(rules.len() >= 7);
    assert!(rules.iter().all(|r| r["counterexample_count"] == 0));
}

#[test]
fn selfcheck_detects_injected_fault() {
    let o = boolnet(&["selfcheck", "--inject-xnor-fault"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("prop2_3"));
}

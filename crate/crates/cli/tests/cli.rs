use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_defect-fpp"));
    c.env_remove("DEFECT_FPP_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn dist(dump: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["dist", "--dump", dump.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn dist_query_examples() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "x0,x1\n").unwrap();
    let v = dist(&empty, &["--from", "0,0", "--to", "3,4"]);
    assert_eq!(v["value"], 5.0);
    assert_eq!(v["exact"], true);

    let one = dir.path().join("one.csv");
    std::fs::write(&one, "x0,x1\n5,0\n").unwrap();
    let v = dist(&one, &["--from", "0,0", "--to", "10,0"]);
    assert!((v["value"].as_f64().unwrap() - 8.0).abs() < 1e-12);
    let path = v["geodesic"].as_array().unwrap();
    assert_eq!(path.first().unwrap(), &serde_json::json!([0.0, 0.0]));
    assert_eq!(path.last().unwrap(), &serde_json::json!([10.0, 0.0]));

    let k8 = dist(&one, &["--from", "0,0.5", "--to", "10,-0.3", "--xi", "0.5", "--K", "8"])["value"].as_f64().unwrap();
    let k16 = dist(&one, &["--from", "0,0.5", "--to", "10,-0.3", "--xi", "0.5", "--K", "16"])["value"].as_f64().unwrap();
    assert!(k16 <= k8);
}

#[test]
fn sample_dump_round_trips_through_dist() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("d.csv");
    let out = run(&["sample-dump", "--u", "0.2", "--box", "0:20,0:20", "--seed", "3", "--out", dump.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.starts_with("x0,x1\n"));
    let again = run(&["sample-dump", "--u", "0.2", "--box", "0:20,0:20", "--seed", "3"]);
    assert_eq!(again.stdout, text.as_bytes());
    let v = dist(&dump, &["--from", "0,10", "--to", "20,10"]);
    assert!(v["value"].as_f64().unwrap() <= 20.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["run", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind":"volume","d":2,"u":0.9,"side":10,"replicas":2}"#).unwrap();
    let out = run(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("subcritical"));
    assert_eq!(run(&["run"]).status.code(), Some(2));

    let table = dir.path().join("t.json");
    std::fs::write(&table, r#"{"d":2,"xi":0.0,"entries":[{"u":0.1,"eta":0.5,"stderr":0.01}],"R":100,"replicas":5}"#).unwrap();
    assert_eq!(run(&["eta-table", "validate", table.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn run_writes_manifest_and_honours_seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    std::fs::write(&cfg, r#"{"schema":1,"seed":5,"kind":"volume","d":2,"u":0.1,"side":10,"probes":1000,"replicas":3}"#)
        .unwrap();
    let out_dir = dir.path().join("a");
    let out = run(&["--json", "run", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let manifest: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["seed"], 5);
    let on_disk: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest, on_disk);
    let cfg_hash = hex::encode(Sha256::digest(std::fs::read(&cfg).unwrap()));
    assert_eq!(manifest["config_sha256"], cfg_hash.as_str());
    for o in manifest["outputs"].as_array().unwrap() {
        let bytes = std::fs::read(out_dir.join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"], hex::encode(Sha256::digest(&bytes)).as_str());
    }
    assert!(!out_dir.join("volume.csv.partial").exists());

    let env_dir = dir.path().join("b");
    let out = bin()
        .args(["--json", "run", cfg.to_str().unwrap(), "--out-dir", env_dir.to_str().unwrap()])
        .env("DEFECT_FPP_SEED", "9")
        .output()
        .unwrap();
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["seed"], 9);
    let flag_dir = dir.path().join("c");
    let out = bin()
        .args(["--json", "run", cfg.to_str().unwrap(), "--seed", "13", "--out-dir", flag_dir.to_str().unwrap()])
        .env("DEFECT_FPP_SEED", "9")
        .output()
        .unwrap();
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["seed"], 13);
    assert_ne!(std::fs::read(env_dir.join("volume.csv")).unwrap(), std::fs::read(flag_dir.join("volume.csv")).unwrap());
}

#[test]
fn eta_tables_merge_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, r#"{"d":2,"xi":0.0,"entries":[{"u":0.0,"eta":1.0,"stderr":0.0},{"u":0.1,"eta":0.3,"stderr":0.02}],"R":200,"replicas":10}"#).unwrap();
    std::fs::write(&b, r#"{"d":2,"xi":0.0,"entries":[{"u":0.0,"eta":1.0,"stderr":0.0},{"u":0.1,"eta":0.28,"stderr":0.02},{"u":0.2,"eta":0.08,"stderr":0.01}],"R":200,"replicas":10}"#).unwrap();
    let out = run(&["eta-table", "merge", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(out.status.success());
    let t: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(t["replicas"], 20);
    let e = t["entries"].as_array().unwrap();
    assert_eq!(e.len(), 3);
    assert!((e[1]["eta"].as_f64().unwrap() - 0.29).abs() < 1e-12);
    let ok = run(&["--json", "eta-table", "validate", a.to_str().unwrap()]);
    assert_eq!(serde_json::from_slice::<Value>(&ok.stdout).unwrap()["valid"], true);
}

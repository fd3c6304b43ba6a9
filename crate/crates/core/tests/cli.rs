use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn supplyflex(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_supplyflex")).args(args).output().unwrap();
    out.status.code().unwrap()
}

fn run_in(dir: &Path, cmd: &str, config: Option<&Path>, out: &str) -> i32 {
    let out = dir.join(out);
    let mut args = vec![cmd, "--out", out.to_str().unwrap(), "--workers", "2"];
    if let Some(c) = config {
        args.extend(["--config", c.to_str().unwrap()]);
    }
    supplyflex(&args)
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn input_config(dir: &Path, from: &str) -> std::path::PathBuf {
    let d = dir.join(from);
    write_config(
        dir,
        &format!("{from}.toml"),
        &format!(
            "[input]\ntransactions = {:?}\ncatalog = {:?}\nrules = {:?}\n",
            d.join("transactions.csv"),
            d.join("catalog.csv"),
            d.join("rules.csv")
        ),
    )
}

#[test]
fn ingest_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(run_in(dir, "synth", None, "synth"), 0);
    assert_eq!(run_in(dir, "ingest", Some(&input_config(dir, "synth")), "once"), 0);
    assert_eq!(run_in(dir, "ingest", Some(&input_config(dir, "once")), "twice"), 0);
    for f in ["transactions.csv", "catalog.csv", "rules.csv"] {
        let a = fs::read(dir.join("once").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.join("twice").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(dir.join("synth").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let missing = dir.join("nope.toml");
    assert_eq!(run_in(dir, "fit", Some(&missing), "a"), 3);
    let unknown = write_config(dir, "bad.toml", "[fit]\nstep = 3\n");
    assert_eq!(run_in(dir, "fit", Some(&unknown), "b"), 1);

    fs::create_dir_all(dir.join("raw")).unwrap();
    fs::write(dir.join("raw/catalog.csv"), "entity_id,role\nM,manufacturer\nD,distributor\nF,final-buyer\n").unwrap();
    fs::write(
        dir.join("raw/transactions.csv"),
        "date,seller_id,buyer_id,product_code,quantity\n2013-01-02,M,D,P,4\n2013-01-03,D,F,P,-1\n",
    )
    .unwrap();
    fs::write(dir.join("raw/rules.csv"), "product_code,ingredient,form,strength\n").unwrap();
    assert_eq!(run_in(dir, "ingest", Some(&input_config(dir, "raw")), "c"), 1);
    let report = fs::read_to_string(dir.join("c/validation.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["accepted"], 1);
    assert_eq!(report["errors"][0]["line"], 3);
    assert!(dir.join("c/manifest.json").exists());
}

#[test]
fn stress_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "s.toml", "[stress.sim]\nhorizon = 60\n");
    assert_eq!(run_in(dir, "stress", Some(&cfg), "a"), 0);
    assert_eq!(run_in(dir, "stress", Some(&cfg), "b"), 0);
    for f in ["run.csv", "frontier.csv", "windows.csv", "audit.json", "init_report.json"] {
        assert_eq!(fs::read(dir.join("a").join(f)).unwrap(), fs::read(dir.join("b").join(f)).unwrap(), "{f}");
    }
    let manifest = |d: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(dir.join(d).join("manifest.json")).unwrap()).unwrap()
    };
    assert_eq!(manifest("a")["config_digest"], manifest("b")["config_digest"]);
    assert_eq!(manifest("a")["command"], "stress");
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = dir.join("s");
    assert_eq!(supplyflex(&["synth", "--out", out.to_str().unwrap(), "--seed", "41"]), 0);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 41);
    let spec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("synth.json")).unwrap()).unwrap();
    assert_eq!(spec["seed"], 41);
}

#[test]
fn toy_alternative_order_edge() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::create_dir_all(dir.join("toy")).unwrap();
    fs::write(
        dir.join("toy/catalog.csv"),
        "entity_id,role\nM1,manufacturer\nM2,manufacturer\nA,distributor\nC,distributor\nD,distributor\nE,distributor\nF,final-buyer\n",
    )
    .unwrap();
    fs::write(
        dir.join("toy/transactions.csv"),
        "date,seller_id,buyer_id,product_code,quantity\n\
         2013-01-01,M1,A,P,1\n2013-01-02,A,D,P,1\n2013-01-03,D,E,P,1\n2013-01-04,E,F,P,1\n\
         2013-01-05,M2,C,P,1\n2013-01-06,C,D,P,1\n2013-01-07,D,F,P,1\n",
    )
    .unwrap();
    fs::write(dir.join("toy/rules.csv"), "product_code,ingredient,form,strength\n").unwrap();
    assert_eq!(run_in(dir, "export-graph", Some(&input_config(dir, "toy")), "g"), 0);
    let edges = fs::read_to_string(dir.join("g/order_edges.csv")).unwrap();
    assert!(edges.lines().any(|l| l == "E|D,D|A,1,observed"), "{edges}");
    assert!(edges.lines().any(|l| l == "E|D,D|C,0.5,alternative"), "{edges}");
    assert!(!edges.lines().any(|l| l.starts_with("E|D,D|C") && l.ends_with("observed")));
    let graph = fs::read_to_string(dir.join("g/second_order_graph.csv")).unwrap();
    assert!(graph.lines().any(|l| l == "C|D,D|E,0.5,alternative"), "{graph}");
}

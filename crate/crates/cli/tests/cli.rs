use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthpop"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A fitted small-preset workspace shared by the tests.
fn workspace() -> &'static (tempfile::TempDir, PathBuf) {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        ok(&["faux-gen", "--preset", "paperlike-small", "--n", "6000", "--seed", "3", "--out", s(&data)]);
        ok(&["fit", "--config", s(&data.join("run.json"))]);
        let pack = data.join("fit").join("model.synthpack.json");
        assert!(pack.exists());
        (dir, pack)
    })
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn fit_writes_pack_strata_and_log() {
    let (_, pack) = workspace();
    let fit_dir = pack.parent().unwrap();
    let log = read_json(&fit_dir.join("fit_log.json"));
    assert_eq!(log["audit"]["passed"], Value::Bool(true));
    assert_eq!(log["records"], 6000);
    assert!(log["strata"].as_array().unwrap().len() >= 6);
    let csv = fs::read_to_string(fit_dir.join("seed_strata.csv")).unwrap();
    assert!(csv.starts_with("age,gender,region,urbanity,count,flag\n"));
    let out = ok(&["audit", "--pack", s(pack)]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], Value::Bool(true));
}

#[test]
fn generation_is_reproducible_and_thread_independent() {
    let (dir, pack) = workspace();
    let a = dir.path().join("gen_a");
    let b = dir.path().join("gen_b");
    ok(&["--threads", "1", "generate", "--pack", s(pack), "--seed", "42", "--out", s(&a)]);
    ok(&["--threads", "4", "generate", "--pack", s(pack), "--seed", "42", "--out", s(&b)]);
    let pa = fs::read(a.join("population.csv")).unwrap();
    assert_eq!(pa, fs::read(b.join("population.csv")).unwrap());
    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["master_seed"], 42);
    assert_eq!(manifest["counts"]["records_in"], 6000);
    let c = dir.path().join("gen_c");
    ok(&["generate", "--pack", s(pack), "--seed", "43", "--out", s(&c)]);
    assert_ne!(pa, fs::read(c.join("population.csv")).unwrap());
}

#[test]
fn parameter_draws_write_one_population_each() {
    let (dir, pack) = workspace();
    let out = dir.path().join("draws");
    ok(&["generate", "--pack", s(pack), "--seed", "5", "--out", s(&out), "--param-draws", "3"]);
    let mut files: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        [
            "manifest_1.json",
            "manifest_2.json",
            "manifest_3.json",
            "population_1.csv",
            "population_2.csv",
            "population_3.csv"
        ]
    );
    let m1 = read_json(&out.join("manifest_1.json"));
    let m2 = read_json(&out.join("manifest_2.json"));
    assert_ne!(m1["master_seed"], m2["master_seed"]);
    assert!(m1["parameter_draw"]["equations"].as_u64().unwrap() > 0);
    assert_ne!(
        fs::read(out.join("population_1.csv")).unwrap(),
        fs::read(out.join("population_2.csv")).unwrap()
    );
}

#[test]
fn calibration_is_recorded_in_the_manifest() {
    let (dir, pack) = workspace();
    let out = dir.path().join("cal");
    ok(&[
        "generate",
        "--pack",
        s(pack),
        "--seed",
        "5",
        "--out",
        s(&out),
        "--calibrate",
        "household_type=0.05",
    ]);
    let m = read_json(&out.join("manifest.json"));
    let c = &m["calibrations"][0];
    assert_eq!(c["variable"], "household_type");
    assert!((c["achieved"].as_f64().unwrap() - 0.05).abs() < 1e-4);

    let adjusted = dir.path().join("adjusted.synthpack.json");
    let stdout = ok(&["calibrate", "--pack", s(pack), "--seed", "5", "household_type=0.05", "--out", s(&adjusted)]).stdout;
    let adj: Value = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(adj[0]["multiplier"], c["multiplier"]);
    ok(&["audit", "--pack", s(&adjusted)]);
}

#[test]
fn evaluate_writes_the_report() {
    let (dir, pack) = workspace();
    let gen = dir.path().join("eval_gen");
    ok(&["generate", "--pack", s(pack), "--seed", "8", "--out", s(&gen)]);
    let report = dir.path().join("report");
    let source = pack.parent().unwrap().parent().unwrap().join("population.csv");
    let out = ok(&[
        "evaluate",
        "--source",
        s(&source),
        "--synthetic",
        s(&gen.join("population.csv")),
        "--pack",
        s(pack),
        "--out",
        s(&report),
        "--target",
        "income_pct",
        "--target",
        "household_type=institutional",
        "--strata",
        "age,gender",
    ]);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["stratified"].as_array().unwrap().len(), 2);
    for f in ["frequencies.csv", "moments.csv", "plot_data.csv", "summary.json"] {
        assert!(report.join(f).exists(), "{f}");
    }
}

#[test]
fn environment_overrides_paths() {
    let (dir, pack) = workspace();
    let out = dir.path().join("env_out");
    let status = bin()
        .args(["generate", "--seed", "1"])
        .env("SYNTHPOP_PACK", pack)
        .env("SYNTHPOP_OUTPUT_DIR", &out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("population.csv").exists());
}

#[test]
fn exit_codes() {
    let (dir, pack) = workspace();
    assert_eq!(code(&run(&["audit", "--pack", "/nonexistent.json"])), 2);
    assert_eq!(code(&run(&["generate", "--pack", s(pack), "--out", s(&dir.path().join("x"))])), 2);
    assert_eq!(code(&run(&["faux-gen", "--preset", "nope", "--out", s(&dir.path().join("y"))])), 2);

    let mut doc: Value = read_json(pack);
    doc["records"] = serde_json::json!([{"age": 40, "income_pct": 55}]);
    let bad = dir.path().join("bad.synthpack.json");
    fs::write(&bad, serde_json::to_vec(&doc).unwrap()).unwrap();
    assert_eq!(code(&run(&["audit", "--pack", s(&bad)])), 4);
    let gen = dir.path().join("bad_gen");
    assert_eq!(code(&run(&["generate", "--pack", s(&bad), "--seed", "1", "--out", s(&gen)])), 4);
    assert!(!gen.join("population.csv").exists());
    ok(&["generate", "--pack", s(&bad), "--seed", "1", "--out", s(&gen), "--force"]);

    let unreachable = run(&["calibrate", "--pack", s(pack), "--seed", "1", "household_type=0.999999999", "--out", s(&dir.path().join("c.json"))]);
    assert_eq!(code(&unreachable), 3);

    let data = pack.parent().unwrap().parent().unwrap();
    let strict = dir.path().join("strict");
    let fail = run(&[
        "fit",
        "--config",
        s(&data.join("run.json")),
        "--policy",
        "fail",
        "--out",
        s(&strict),
    ]);
    assert_eq!(code(&fail), 4, "{}", String::from_utf8_lossy(&fail.stderr));
    assert!(!strict.join("model.synthpack.json").exists());
}

#[test]
fn default_chain_dump_round_trips() {
    let out = ok(&["dump-default-chain"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 16);
}

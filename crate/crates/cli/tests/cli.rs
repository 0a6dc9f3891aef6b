use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn roughavg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughavg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn small_study(dir: &Path) -> String {
    let path = dir.join("study.toml");
    fs::write(
        &path,
        "seed = 5\n[study]\nepsilons = [0.5, 0.1]\nbeta = 0.4\nm_mc = 8\n[study.model]\nname = \"ou_sine\"\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn selftest_passes() {
    let o = roughavg(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn serialized_fbm_lift_passes_chen_scan() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lift");
    let o = roughavg(&[
        "lift",
        "--kind",
        "fbm",
        "--hurst",
        "0.4",
        "--n",
        "1024",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let hash = String::from_utf8_lossy(&o.stdout).trim().to_string();
    assert_eq!(hash.len(), 64);
    for file in ["lift.bin", "lift.csv"] {
        let o = roughavg(&["selftest", "--lift", out.join(file).to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        assert!(String::from_utf8_lossy(&o.stdout).contains("PASS chen (input lift)"));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["lift_hashes"][0], hash.as_str());
    assert_eq!(manifest["config"]["lift"]["hurst"], 0.4);
}

#[test]
fn study_is_byte_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_study(dir.path());
    let mut csvs = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        let o = roughavg(&[
            "study",
            "--config",
            &cfg,
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(fs::read(out.join("study.csv")).unwrap());
        assert!(out.join("plot.csv").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert!(text.starts_with("epsilon,mean,stderr,n\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_study(dir.path());
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = roughavg(&[
            "study",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        fs::read(out.join("study.csv")).unwrap()
    };
    assert_ne!(run("5", "x"), run("6", "y"));
    let plain = dir.path().join("plain");
    roughavg(&["study", "--config", &cfg, "--out", plain.to_str().unwrap()]);
    assert_eq!(run("5", "z"), fs::read(plain.join("study.csv")).unwrap());
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("avg");
    let o = roughavg(&["average", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fbar.json")).unwrap()).unwrap();
    let xs = v["x"].as_array().unwrap();
    let fbar = v["fbar"].as_array().unwrap();
    assert_eq!(xs.len(), 61);
    assert_eq!(fbar[30].as_f64().unwrap(), 0.0);
    let at_one = fbar[40].as_f64().unwrap();
    assert!((at_one - (-0.25f64).exp() * 1f64.sin()).abs() < 1e-12);
}

#[test]
fn slowfast_reports_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sf");
    let o = roughavg(&["slowfast", "--epsilon", "0.2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["diagnostics"]["epsilon"], 0.2);
    assert!(manifest["diagnostics"]["fast_sde_gap"].as_f64().unwrap() < 1.0);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x0,y0\n"));
    assert_eq!(csv.lines().count(), 1 + 101);
}

#[test]
fn print_config_round_trips() {
    let o = roughavg(&["--print-config", "study"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("resolved.toml");
    fs::write(&path, &text).unwrap();
    let again = roughavg(&["--print-config", "--config", path.to_str().unwrap(), "study"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[lift]\nbogus = 3\n").unwrap();
    assert_eq!(code(&roughavg(&["lift", "--config", path.to_str().unwrap()])), 1);
    assert_eq!(code(&roughavg(&["lift", "--config", "/nonexistent/file.toml"])), 1);
    assert_eq!(code(&roughavg(&["frobnicate"])), 1);
    let out = dir.path().join("o");
    assert_eq!(
        code(&roughavg(&["lift", "--kind", "fbm", "--out", out.to_str().unwrap()])),
        1
    );
}

#[test]
fn explosion_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blowup.toml");
    fs::write(&path, "[solve]\ndrift = [1000.0]\n").unwrap();
    let out = dir.path().join("o");
    let o = roughavg(&[
        "solve",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

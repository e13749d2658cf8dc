use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const PLAN: &str = r#"{
  "capture": {
    "n_groups": 3, "signals_per_group": 3, "duration_s": 30.0, "rate_hz": 10.0,
    "intra_group_rho": 0.9, "noise_sigma": 1.0, "seed": 11
  },
  "benign_count": 4,
  "attacks": [
    { "label": "correlated", "count": 2, "kind": "correlated_break",
      "target_signals": ["ID_100_sig_0", "ID_100_sig_1", "ID_100_sig_2"] }
  ]
}"#;

fn dendroscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dendroscan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn synthesize(dir: &Path) -> PathBuf {
    let plan = dir.join("plan.json");
    fs::write(&plan, PLAN).unwrap();
    let data = dir.join("data");
    let out = dendroscan(&["synth", "--spec", plan.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("wrote 6 captures"));
    data
}

#[test]
fn synth_then_analyze_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthesize(dir.path());
    let out_dir = dir.path().join("out");
    let out = dendroscan(&[
        "analyze",
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--linkage",
        "ward,average",
        "--r",
        "-5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("correlated"), "{stdout}");
    assert!(stdout.contains("ward detected"), "{stdout}");
    let tests = fs::read_to_string(out_dir.join("tests.jsonl")).unwrap();
    assert_eq!(tests.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(tests.lines().next().unwrap()).unwrap();
    for key in ["attack_kind", "linkage", "r", "alpha", "n_benign_pairs", "n_attack_pairs", "u", "p_value", "method", "significant"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(first["n_benign_pairs"], 6);
    assert_eq!(first["n_attack_pairs"], 8);
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("density").join("ward_benign.csv").exists());
}

#[test]
fn analyze_from_globs_and_directories() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthesize(dir.path());
    let benign_dir = dir.path().join("benign");
    fs::create_dir(&benign_dir).unwrap();
    for i in 0..4 {
        let name = format!("benign_{i:02}.csv");
        fs::copy(data.join(&name), benign_dir.join(&name)).unwrap();
    }
    let out_dir = dir.path().join("out");
    let attack = format!("correlated={}", data.join("attack_correlated_*.csv").display());
    let out = dendroscan(&[
        "analyze",
        "--benign",
        benign_dir.to_str().unwrap(),
        "--attack",
        &attack,
        "--linkage",
        "ward",
        "--dump-dendrograms",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["captures"].as_array().unwrap().len(), 6);
    assert!(out_dir.join("dendrograms").join("benign_00_ward.json").exists());
}

#[test]
fn one_benign_capture_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthesize(dir.path());
    let out = dendroscan(&[
        "analyze",
        "--benign",
        data.join("benign_00.csv").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("benign"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unmatched_glob_and_bad_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing_*.csv");
    let out = dendroscan(&["analyze", "--benign", missing.to_str().unwrap(), "--out", "unused"]);
    assert_eq!(out.status.code(), Some(2));

    let out = dendroscan(&["analyze", "--benign", "x", "--linkage", "centroid", "--out", "unused"]);
    assert_eq!(out.status.code(), Some(2));

    let data = synthesize(dir.path());
    let out = dendroscan(&[
        "analyze",
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--alpha",
        "1.5",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
}

#[test]
fn malformed_capture_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthesize(dir.path());
    fs::write(data.join("benign_01.csv"), "time,a,b\n0.0,1.0,2.0\n0.1,oops,3.0\n").unwrap();
    let out = dendroscan(&[
        "analyze",
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    let stderr = text(&out.stderr);
    assert!(stderr.contains("benign_01.csv") && stderr.contains("line 3"), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn simtest_of_a_capture_with_itself_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthesize(dir.path());
    let a = data.join("benign_00.csv");
    let b = data.join("benign_01.csv");
    let out = dendroscan(&["simtest", "--a", a.to_str().unwrap(), "--b", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let record: serde_json::Value = serde_json::from_str(text(&out.stdout).trim()).unwrap();
    assert_eq!(record["similarity"], 1.0);
    assert_eq!(record["aligned_elements"], 9);

    let out = dendroscan(&[
        "simtest",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
        "--linkage",
        "single,ward",
        "--r=5",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let lines: Vec<String> = text(&out.stdout).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    for line in lines {
        let v: f64 = serde_json::from_str::<serde_json::Value>(&line).unwrap()["similarity"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn goldens_verify_and_regen() {
    let committed = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/v1");
    let out = dendroscan(&["goldens", "verify", "--dir", committed.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stdout));
    assert!(!text(&out.stdout).contains("FAIL"));

    let dir = tempfile::tempdir().unwrap();
    let out = dendroscan(&["goldens", "verify", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stdout).contains("FAIL fig2_similarity"));

    let out = dendroscan(&["goldens", "regen", "--dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let out = dendroscan(&["goldens", "verify", "--dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stdout));
}

#[test]
fn documented_plan_synthesizes() {
    let plan = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/synthetic_plan.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dendroscan(&["synth", "--spec", plan.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("wrote 18 captures"));
}

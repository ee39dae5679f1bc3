use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn relunits(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relunits"))
        .args(args)
        .env_remove("RELUNITS_PRECISION_BITS")
        .env_remove("RELUNITS_THREADS")
        .output()
        .expect("spawn relunits")
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut a = vec!["--format", "json", "--quiet"];
    a.extend_from_slice(args);
    let out = relunits(&a);
    let v = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)));
    (out.status.code().unwrap(), v)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_units_reports_norm_and_trace() {
    let o = relunits(&["verify-units", "--n", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("N u_4 = 1 (exact)"), "{s}");
    assert!(s.contains("Tr u_4^2 = 784"), "{s}");
}

#[test]
fn bound_ln_prints_l6() {
    let o = relunits(&["bound-ln", "--n", "6"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("L_6 = 291.4"));
}

#[test]
fn selftest_passes() {
    let o = relunits(&["selftest"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("[FAIL]"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(relunits(&[]).status.code(), Some(2));
    assert_eq!(relunits(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(relunits(&["bound-ln"]).status.code(), Some(2));
    assert_eq!(relunits(&["minmax-bound", "--n", "4"]).status.code(), Some(2));
    assert_eq!(relunits(&["--threads", "0", "selftest"]).status.code(), Some(2));
    assert_eq!(relunits(&["--help"]).status.code(), Some(0));
}

#[test]
fn env_overrides_precision() {
    let o = Command::new(env!("CARGO_BIN_EXE_relunits"))
        .args(["--format", "json", "bound-ln", "--n", "3"])
        .env("RELUNITS_PRECISION_BITS", "80")
        .env("RELUNITS_THREADS", "1")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["precision_bits"], 80);
    let ok = Command::new(env!("CARGO_BIN_EXE_relunits"))
        .args(["bound-ln", "--n", "3"])
        .env("RELUNITS_PRECISION_BITS", "16")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(2));
}

#[test]
fn json_reports_are_deterministic() {
    let args = ["indivisibility", "--n", "5", "--l", "97", "--seed", "3"];
    let (c1, a) = json(&args);
    let (c2, b) = json(&["--threads", "1", "indivisibility", "--n", "5", "--l", "97", "--seed", "3"]);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, b);
    assert_eq!(a["report"]["per_factor"].as_array().unwrap().len(), 16);
}

#[test]
fn verify_conjecture_json_mirrors_report() {
    let (code, v) = json(&["verify-conjecture", "--n", "4"]);
    assert_eq!(code, 0);
    let r = &v["report"];
    assert_eq!(r["min_trace"], "784");
    assert_eq!(r["vector_count"], 144);
    assert!(r["l_bound"]["abs_err"].as_f64().unwrap() < 1e-20);
}

#[test]
fn golden_mode_accepts_match_and_rejects_drift() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("golden.json");
    let o = relunits(&["--format", "json", "--precision-bits", "128", "bound-ln", "--n", "5"]);
    std::fs::write(&path, &o.stdout).unwrap();
    let p = path.to_str().unwrap();
    // higher precision shrinks the radius, the midpoint stays inside the golden one
    let o = relunits(&["--golden", p, "--precision-bits", "128", "bound-ln", "--n", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("match"));

    let mut v: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    v["report"]["l_bound"]["value"] = Value::String("111.01".into());
    std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    let o = relunits(&["--golden", p, "--precision-bits", "128", "bound-ln", "--n", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("$.report.l_bound"), "{}", stdout(&o));

    let o = relunits(&["--golden", "/nonexistent/golden.json", "bound-ln", "--n", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lift_file_pins_factors() {
    let lifts = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/n5_l97_lifts.txt");
    let (code, v) = json(&["indivisibility", "--n", "5", "--l", "97", "--strategy", "scalar", "--c-max", "4", "--lift-file", lifts.to_str().unwrap()]);
    assert_eq!(code, 0);
    let per = v["report"]["per_factor"].as_array().unwrap();
    let from_file: Vec<u64> = per.iter().filter(|o| o["strategy"] == "lift-file").map(|o| o["index"].as_u64().unwrap()).collect();
    assert_eq!(from_file, [2, 3, 7, 10, 12, 15, 16]);
    assert!(per.iter().all(|o| o["succeeded"] == true));
}

#[test]
fn scalar_only_search_fails_at_97() {
    let (code, v) = json(&["indivisibility", "--n", "5", "--l", "97", "--strategy", "scalar", "--c-max", "4"]);
    assert_eq!(code, 1);
    assert_eq!(v["report"]["all_succeeded"], false);
}

#[test]
fn scan_resumes_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("scan.txt");
    let ck = ck.to_str().unwrap();
    let args = ["scan", "--n", "7", "--l-min", "1000000000", "--count", "3", "--residue", "65", "--modulus", "128", "--checkpoint", ck];
    let (code, first) = json(&args);
    assert_eq!(code, 0);
    let lines = std::fs::read_to_string(ck).unwrap();
    assert_eq!(lines.lines().count(), 3);
    assert!(lines.starts_with("l 1000000321 ok"), "{lines}");
    let (code, second) = json(&args);
    assert_eq!(code, 0);
    assert_eq!(first, second);
    assert_eq!(std::fs::read_to_string(ck).unwrap(), lines);
}

#[test]
fn verify_conjecture_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("vc.txt");
    let ck = ck.to_str().unwrap();
    let (c1, a) = json(&["verify-conjecture", "--n", "5", "--checkpoint", ck]);
    let (c2, b) = json(&["verify-conjecture", "--n", "5", "--checkpoint", ck]);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, b);
    assert!(std::fs::read_to_string(ck).unwrap().starts_with("verify-conjecture n=5"));
}

#[test]
fn brute_force_n3_single_orbit() {
    let (code, v) = json(&["brute-force", "--n", "3"]);
    assert_eq!(code, 0);
    assert_eq!(v["report"]["min"], "264");
    assert_eq!(v["report"]["orbits"].as_array().unwrap().len(), 1);
}

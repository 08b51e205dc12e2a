use std::fs;
use std::process::{Command, Output};

fn mwt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwt")).args(args).output().unwrap()
}

#[test]
fn list_shows_builtins() {
    let out = mwt(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["stable-full", "unstable-partial", "unstable-atr", "finer-grid-gauss"] {
        assert!(text.lines().any(|l| l == name), "{name} missing");
    }
}

#[test]
fn gn_curve_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = mwt(&["gn-curve", "--gamma", "1", "-n", "100", "--samples", "64", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("gn_100.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
    assert_eq!(mwt(&["gn-curve", "--gamma", "-1"]).status.code(), Some(2));
}

#[test]
fn reconstruct_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = mwt(&[
        "--threads",
        "1",
        "--out",
        d,
        "reconstruct",
        "-c",
        "unstable-partial",
        "--nx",
        "21",
        "--steps",
        "3",
        "--gammas",
        "0.05",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "sweep.csv", "landweber_g0.05.csv", "landweber_g0.05.pgm", "phantom.pgm"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let touching =
        mwt(&["--out", d, "reconstruct", "-c", "unstable-partial", "--nx", "21", "--steps", "2", "--method", "atr"]);
    assert_eq!(touching.status.code(), Some(2));
    let atr =
        mwt(&["--out", d, "reconstruct", "-c", "unstable-partial", "--nx", "41", "--steps", "2", "--method", "atr"]);
    assert!(atr.status.success(), "{}", String::from_utf8_lossy(&atr.stderr));
    assert!(dir.path().join("atr.csv").exists());
}

#[test]
fn phantom_and_forward() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(mwt(&["--out", d, "phantom", "--nx", "21"]).status.success());
    assert!(dir.path().join("phantom.pgm").exists() && dir.path().join("speed.pgm").exists());
    assert!(mwt(&["--out", d, "forward", "--nx", "21", "--t-final", "0.5"]).status.success());
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.lines().count() > 2);
}

#[test]
fn spectrum_on_tiny_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = mwt(&["--out", d, "spectrum", "-c", "unstable-partial", "--nx", "13", "--wave-adjoint"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("spectrum.json")).unwrap()).unwrap();
    assert!(summary["dimension"].as_u64().unwrap() > 0);
    assert!(dir.path().join("eigenvector_0.pgm").exists());
    assert!(dir.path().join("power_spectrum.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"id\": 3}").unwrap();
    assert_eq!(mwt(&["run", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mwt(&["run", "/no/such/file.json"]).status.code(), Some(4));
    assert_eq!(mwt(&["--out", d, "sweep-gamma", "--nx", "21", "--gammas", ""]).status.code(), Some(2));
    let all_bad = mwt(&["--out", d, "sweep-gamma", "--nx", "21", "--steps", "60", "--gammas", "40,50"]);
    assert_eq!(all_bad.status.code(), Some(3));
    assert!(fs::read_to_string(dir.path().join("sweep.csv")).unwrap().contains("diverged"));
    let some_bad = mwt(&["--out", d, "sweep-gamma", "--nx", "21", "--steps", "60", "--gammas", "0.05,50"]);
    assert_eq!(some_bad.status.code(), Some(0));
}

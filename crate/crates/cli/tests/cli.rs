use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn spnf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spnf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn spnf")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn files_under(dir: &Path) -> BTreeSet<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeSet<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(dir, dir, &mut out);
    out
}

/// Checks every manifest hash and that each artifact belongs to exactly one manifest.
fn check_manifests(out: &Path) -> Vec<Value> {
    let mut claimed = BTreeSet::new();
    let mut manifests = Vec::new();
    let mut names = BTreeSet::new();
    for f in files_under(out) {
        let name = f.to_string_lossy().to_string();
        if name.starts_with("run-") && name.ends_with(".json") {
            names.insert(f.clone());
            let man = read_json(&out.join(&f));
            for o in man["outputs"].as_array().unwrap() {
                let rel = o["path"].as_str().unwrap();
                let bytes = fs::read(out.join(rel)).unwrap();
                assert_eq!(
                    format!("{:x}", Sha256::digest(&bytes)),
                    o["sha256"].as_str().unwrap(),
                    "{rel}"
                );
                assert!(claimed.insert(PathBuf::from(rel)), "{rel} claimed twice");
            }
            manifests.push(man);
        }
    }
    let rest: BTreeSet<_> = files_under(out).difference(&names).cloned().collect();
    assert_eq!(rest, claimed, "artifacts not reachable from a manifest");
    manifests
}

#[test]
fn nf_writes_hamiltonians_and_manifest() {
    let dir = TempDir::new().unwrap();
    let o = spnf(dir.path(), &["nf", "--M", "3", "--r", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let man = &check_manifests(dir.path())[0];
    assert_eq!(man["subcommand"], "nf");
    assert_eq!(man["config"]["M"], 3);
    for f in [
        "nf/resonant/K4.jsonl",
        "nf/resonant/K6.jsonl",
        "nf/rational/L6.jsonl",
        "nf/rational/stats.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let first = fs::read_to_string(dir.path().join("nf/resonant/K4.jsonl")).unwrap();
    let line: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(line.is_object());
}

#[test]
fn nf_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&spnf(d.path(), &["nf", "--M", "3", "--r", "3", "--seed", "5"])), 0);
    }
    let fa = files_under(a.path());
    assert_eq!(fa, files_under(b.path()));
    for f in fa.iter().filter(|f| !f.starts_with("run-nf.json")) {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

#[test]
fn nf_check_passes() {
    let dir = TempDir::new().unwrap();
    let o = spnf(dir.path(), &["nf", "--M", "4", "--r", "4", "--check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports = read_json(&dir.path().join("nf/check.json"));
    for r in reports.as_array().unwrap() {
        assert!(r["violations"].as_array().unwrap().is_empty(), "{r}");
    }
    check_manifests(dir.path());
}

#[test]
fn simulate_csv_schema() {
    let dir = TempDir::new().unwrap();
    let o = spnf(dir.path(), &["simulate", "--eps", "0.1", "--M", "8", "--T", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("simulate/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,norm_sigma,energy,mass,momentum,action_distance"
    );
    let mut last_t = -1.0;
    let mut rows = 0;
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 6);
        assert!(v[0] > last_t);
        last_t = v[0];
        rows += 1;
    }
    assert!((last_t - 100.0).abs() < 1e-9);
    assert!(rows > 100);
    let v = read_json(&dir.path().join("simulate/verdicts.json"));
    assert_eq!(v["norm_ok"], true);
    check_manifests(dir.path());
}

#[test]
fn simulate_reads_initial_state_and_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# short run\nM = 4\nT = 1\ndt = 0.01\neps = 0.05\nseed = 3\n").unwrap();
    let a = dir.path().join("a");
    let o = Command::new(env!("CARGO_BIN_EXE_spnf"))
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--M",
            "6",
            "--out",
            a.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let man = read_json(&a.join("run-simulate.json"));
    assert_eq!(man["config"]["M"], 6);
    assert_eq!(man["config"]["T"], 1.0);
    assert_eq!(man["seed"], 3);

    let init = a.join("simulate/initial.csv");
    let b = dir.path().join("b");
    let o = Command::new(env!("CARGO_BIN_EXE_spnf"))
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--M",
            "6",
            "--seed",
            "99",
        ])
        .args(["--init", init.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(a.join("simulate/trajectory.csv")).unwrap(),
        fs::read(b.join("simulate/trajectory.csv")).unwrap()
    );
}

#[test]
fn verify_mu3_has_no_violations() {
    let dir = TempDir::new().unwrap();
    let o = spnf(dir.path(), &["verify", "--lemma", "mu3", "--mmax", "3", "--Mmax", "15"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports = read_json(&dir.path().join("verify/mu3.json"));
    let r = &reports.as_array().unwrap()[0];
    assert!(r["violations"].as_array().unwrap().is_empty());
    assert!(r["checked"].as_u64().unwrap() > 0);
}

#[test]
fn verify_certifications_pass() {
    let dir = TempDir::new().unwrap();
    for lemma in ["scalar", "expdecay", "mod-freq", "bounds"] {
        let o = spnf(dir.path(), &["verify", "--lemma", lemma, "--trials", "50"]);
        assert_eq!(code(&o), 0, "{lemma}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn sample_measure_auto_delta() {
    let dir = TempDir::new().unwrap();
    let o = spnf(dir.path(), &["sample", "--mode", "measure", "--delta", "auto"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("sample/measure.json"));
    assert!(v["report"]["fraction"].as_f64().unwrap() >= 0.9);
    assert_eq!(v["delta_auto"], true);
}

#[test]
fn sample_is_independent_of_thread_count() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = ["sample", "--mode", "proba", "--n-samples", "700", "--seed", "4"];
    assert_eq!(code(&spnf(a.path(), &[&["--threads", "1"], &args[..]].concat())), 0);
    assert_eq!(code(&spnf(b.path(), &[&["--threads", "3"], &args[..]].concat())), 0);
    let f = "sample/proba.json";
    assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
}

#[test]
fn plot_emits_script() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        code(&spnf(dir.path(), &["simulate", "--M", "4", "--T", "1", "--dt", "0.01"])),
        0
    );
    let csv = dir.path().join("simulate/trajectory.csv");
    let o = spnf(dir.path(), &["plot", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let script = fs::read_to_string(dir.path().join("plot/plot.py")).unwrap();
    assert!(script.contains("trajectory.csv"));
    assert!(script.contains("action_distance"));
    check_manifests(dir.path());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "colour = blue\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spnf"))
        .args(["--config", bad.to_str().unwrap(), "simulate"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&spnf(dir.path(), &["simulate", "--eps", "0"])), 2);
    assert_eq!(code(&spnf(dir.path(), &["simulate", "--dt=-1"])), 2);
    assert_eq!(
        code(&spnf(
            dir.path(),
            &["sample", "--mode", "measure", "--M", "3", "--L", "5"]
        )),
        2
    );
    let o = spnf(dir.path(), &["nf", "--M", "4", "--r", "4", "--budget-terms", "10"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget_terms"));
    // A grossly resonant γ leaves no sample in the set.
    assert_eq!(
        code(&spnf(
            dir.path(),
            &["sample", "--mode", "proba", "--gamma", "1", "--n-samples", "100"]
        )),
        1
    );
}

#[test]
fn invalid_config_allocates_nothing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("never");
    let o = Command::new(env!("CARGO_BIN_EXE_spnf"))
        .args(["nf", "--r", "1", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

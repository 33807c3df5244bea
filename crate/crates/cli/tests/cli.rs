//! End-to-end runs of the `ergolab` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ergolab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergolab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("report exists")).expect("valid JSON")
}

#[test]
fn density_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(dir.path(), &["density", "--map", "doubling", "--cells", "256"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["density.csv", "density.dat", "density.json", "density.meta.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let d = json(&dir.path().join("density.json"));
    assert_eq!(d["method"], "closed_form");
    let csv = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#') && *l != "node,value").count(), 256);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["density", "--map", "tent"],
        &["density", "--map", "lsv:0"],
        &["clt", "--map", "doubling", "--obs", "cos1"],
        &["decay", "--map", "doubling", "--obs", "cos(2*pi*"],
        &["density"],
    ];
    for args in cases {
        let out = ergolab(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# doubling run\nmap = doubling\nobs = cos1\nn-max = 40\ncells = 512\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let out = ergolab(dir.path(), &["decay", "--config", cfg, "--cells", "256"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);

    std::fs::write(dir.path().join("bad.conf"), "map = doubling\nspeed = 3\n").unwrap();
    let bad = dir.path().join("bad.conf");
    let out = ergolab(dir.path(), &["density", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_routes_a_coboundary_to_the_degenerate_limit() {
    // `S_n` stays within 2 in absolute value, so `n` must exceed 1600 for the
    // degenerate quantile test to resolve.
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(
        dir.path(),
        &[
            "verify", "--map", "doubling", "--obs", "coboundary:cos1", "--cells", "1024", "--n", "4096",
            "--samples", "2000", "--seed", "1",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("verify.json"));
    assert_eq!(r["sigma"]["value"], 0.0);
    let tests = r["tests"].as_array().unwrap();
    assert_eq!(tests.len(), 1);
    assert_eq!(tests[0]["name"], "clt_degenerate");
    assert_eq!(r["gordin"]["coboundary"]["verdict"], "coboundary");
}

#[test]
fn limit_commands_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--map", "doubling", "--obs", "cos1", "--n", "256", "--samples", "2000", "--seed", "9"];
    for cmd in ["sigma", "clt", "fclt"] {
        let mut args = vec![cmd];
        args.extend(common);
        let out = ergolab(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let clt = json(&dir.path().join("clt.json"));
    let fclt = json(&dir.path().join("fclt.json"));
    // Same seed, same ensemble: the terminal test repeats the CLT statistic.
    let terminal = fclt["tests"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["name"] == "fclt_terminal")
        .unwrap();
    assert_eq!(terminal["statistic"], clt["tests"][0]["statistic"]);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("birkhoff.csv")).unwrap().lines().count(),
        2001
    );

    let out = ergolab(dir.path(), &["report"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    for name in ["clt.json", "fclt.json", "sigma.json", "fclt_sup"] {
        assert!(text.contains(name), "{name} missing from report");
    }
}

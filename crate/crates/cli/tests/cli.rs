use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn cojump(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cojump"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The single machine-parsable stderr line and its exit code.
fn failure(out: &Output) -> (i32, String) {
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("error code="), "stderr: {err}");
    (out.status.code().unwrap(), err)
}

#[test]
fn simulate_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let cfg = fixture("model.toml");
    for out in [&a, &b] {
        let o = cojump(&[
            "simulate",
            "--config",
            s(&cfg),
            "--seed",
            "7",
            "--output",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    assert!(String::from_utf8_lossy(&ta)
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("time,x1,x2,d1,d2,j1a,j1b,j2a,j2b"));

    let manifest = std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"][0], s(&a));
    assert_eq!(m["config"]["simulation"]["n"], 1024);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_flag_overrides_reach_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let inc = dir.path().join("inc.csv");
    let o = cojump(&[
        "simulate",
        "--config",
        s(&fixture("model.toml")),
        "--n",
        "64",
        "--gamma",
        "1",
        "--alpha1",
        "0.3",
        "--alpha2",
        "0.9",
        "--output",
        s(&out),
        "--increments",
        s(&inc),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("p.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["config"]["model"]["copula"]["gamma"], 1.0);
    assert_eq!(m["config"]["model"]["ia1"]["alpha"], 0.3);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
    let text = std::fs::read_to_string(&inc).unwrap();
    assert!(text.starts_with("h=1.5625000000000000e-2\ndx1,dx2\n"));
    assert_eq!(text.lines().count(), 66);
}

#[test]
fn estimate_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dir.path().join("paths.csv");
    let o = cojump(&[
        "simulate",
        "--config",
        s(&fixture("model.toml")),
        "--output",
        s(&paths),
    ]);
    assert!(o.status.success());
    let args = [
        "estimate",
        "--input",
        s(&paths),
        "--beta",
        "0.9",
        "--coeff",
        "1",
    ];
    let (r1, r2) = (cojump(&args), cojump(&args));
    assert!(
        r1.status.success(),
        "{}",
        String::from_utf8_lossy(&r1.stderr)
    );
    assert_eq!(r1.stdout, r2.stdout);
    let report: serde_json::Value = serde_json::from_slice(&r1.stdout).unwrap();
    for key in ["realized_cov", "v11", "v22", "w", "cojump_sum", "nb"] {
        assert!(report[key].is_number(), "{key} missing");
    }
    // truth comes from the simulated file
    assert!(report["truth"].as_f64().unwrap() > 0.0);

    let csv_out = dir.path().join("report.csv");
    let o = cojump(&[
        "estimate",
        "-i",
        s(&paths),
        "--format",
        "csv",
        "--output",
        s(&csv_out),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv_out).unwrap();
    assert!(text.starts_with("name,index,value\n"));
    assert!(text.contains("\nv11,,"));
    assert!(dir.path().join("report.csv.manifest.json").exists());
}

#[test]
fn estimate_with_explicit_threshold_on_increments() {
    let dir = tempfile::tempdir().unwrap();
    let inc = dir.path().join("inc.csv");
    std::fs::write(
        &inc,
        "h=0.25\ndx1,dx2\n0.1,0.2\n-0.3,0.1\n2.0,3.0\n0.2,-0.1\n",
    )
    .unwrap();
    let o = cojump(&[
        "estimate",
        "--input",
        s(&inc),
        "--threshold",
        "1.0",
        "--truth",
        "0.0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // 0.02 - 0.03 - 0.02 kept, the (2, 3) interval cut
    assert!((r["v11"].as_f64().unwrap() + 0.03).abs() < 1e-15);
    assert!((r["cojump_sum"].as_f64().unwrap() - 6.0).abs() < 1e-14);
    assert_eq!(r["cojump_intervals"][0]["index"], 3);
}

#[test]
fn experiment_reports_ks_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("norm");
    let o = cojump(&[
        "experiment",
        "--plan",
        s(&fixture("normality.toml")),
        "--output",
        s(&stem),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("experiment: normality"));
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("PASS ks_n1024") || l.starts_with("FAIL ks_n1024")),
        "{stdout}"
    );
    let table = std::fs::read_to_string(dir.path().join("norm.csv")).unwrap();
    assert!(table.lines().next().unwrap().contains("ks_distance"));
    for ext in ["json", "txt", "manifest.json"] {
        assert!(dir.path().join(format!("norm.{ext}")).exists(), "{ext}");
    }
}

#[test]
fn strict_experiment_exits_six_on_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    let text =
        std::fs::read_to_string(fixture("normality.toml")).unwrap() + "\n[bands]\nks_max = 1e-9\n";
    std::fs::write(
        &plan,
        text.replace("replications = 200", "replications = 20"),
    )
    .unwrap();
    let o = cojump(&["experiment", "--plan", s(&plan), "--strict"]);
    let (code, err) = failure(&o);
    assert_eq!(code, 6);
    assert!(err.contains("kind=checks"));
}

#[test]
fn ingest_aligns_on_the_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("inc.csv");
    let o = cojump(&[
        "ingest",
        "--a",
        s(&fixture("ticks_a.csv")),
        "--b",
        s(&fixture("ticks_b.csv")),
        "--n",
        "3",
        "--output",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    // overlap [0.5, 3.5] on 3 steps: grid 0.5, 1.5, 2.5, 3.5
    assert_eq!(lines.next(), Some("h=1.0000000000000000e0"));
    assert_eq!(lines.next(), Some("dx1,dx2"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    let ln = f64::ln;
    let want = [
        (ln(100.5) - ln(101.0), ln(50.5) - ln(50.0)),
        (ln(102.0) - ln(100.5), ln(49.0) - ln(50.5)),
        (ln(101.0) - ln(102.0), ln(50.0) - ln(49.0)),
    ];
    assert_eq!(rows, want);
    assert!(dir.path().join("inc.csv.manifest.json").exists());
}

#[test]
fn errors_map_to_documented_exit_codes() {
    let (code, err) = failure(&cojump(&["simulate", "--bogus"]));
    assert_eq!(code, 2);
    assert!(err.contains("kind=usage"));

    let (code, _) = failure(&cojump(&["simulate", "--config", "/nonexistent/m.toml"]));
    assert_eq!(code, 3);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nhorizon = \"one\"\n").unwrap();
    let (code, _) = failure(&cojump(&["simulate", "--config", s(&bad)]));
    assert_eq!(code, 3);

    let (code, err) = failure(&cojump(&[
        "simulate",
        "--config",
        s(&fixture("model.toml")),
        "--gamma",
        "1.5",
    ]));
    assert_eq!(code, 4, "{err}");

    let inc = dir.path().join("inc.csv");
    std::fs::write(&inc, "h=0.5\ndx1,dx2\n1,2\n3,4\n").unwrap();
    let (code, _) = failure(&cojump(&["estimate", "--input", s(&inc), "--beta", "1.5"]));
    assert_eq!(code, 4);

    let (code, _) = failure(&cojump(&[
        "estimate",
        "--input",
        s(&inc),
        "--output",
        s(&dir.path().join("missing/dir/r.json")),
    ]));
    assert_eq!(code, 5);
}

#[test]
fn help_documents_exit_codes() {
    let o = cojump(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Exit codes"));
    for sub in ["simulate", "estimate", "experiment", "ingest"] {
        assert!(text.contains(sub));
    }
}

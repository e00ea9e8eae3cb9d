use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comono-rdd"))
        .current_dir(dir)
        .env_remove("COMONO_RDD_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let head = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (head, rows)
}

fn simulate(dir: &Path, dgp: &str) {
    ok(
        dir,
        &[
            "simulate", "--dgp", dgp, "--n", "4000", "--seed", "3", "--out", "data.csv",
        ],
    );
}

#[test]
fn estimate_q_writes_curve_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, "linear");
    assert!(dir.join("data.truth.json").exists());
    ok(
        dir,
        &["estimate-q", "--in", "data.csv", "--grid-size", "25", "--out", "q0.csv"],
    );
    let (head, rows) = csv_rows(&dir.join("q0.csv"));
    assert_eq!(head, ["y", "qhat", "lower", "upper"]);
    assert!(rows.len() >= 20 && rows.len() <= 25);
    // q0(y) = 0.5 y on this design
    for r in &rows {
        let y: f64 = r[0].parse().unwrap();
        let q: f64 = r[1].parse().unwrap();
        assert!((q - 0.5 * y).abs() < 0.1, "{y} -> {q}");
        assert!(r[2].is_empty() && r[3].is_empty());
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("q0.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"]["subcommand"], "estimate-q");
    assert!(manifest["resolved"]["h"].as_f64().unwrap() > 0.0);
    assert!(manifest["resolved"]["b"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["counts"]["n"], 4000);
    assert_eq!(manifest["inputs"][0]["path"], "data.csv");
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn bootstrap_bands_bracket_the_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, "linear");
    ok(
        dir,
        &[
            "bootstrap",
            "--in",
            "data.csv",
            "--bootstrap-draws",
            "20",
            "--grid-size",
            "15",
            "--out",
            "q0.csv",
        ],
    );
    let (_, rows) = csv_rows(&dir.join("q0.csv"));
    for r in rows {
        let v: Vec<f64> = r.iter().map(|c| c.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[1] <= v[3]);
    }
}

#[test]
fn cate_policy_sweep_and_diagnose_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, "expository");
    fs::write(dir.join("points.csv"), "x1,x2\n0.2,0.6\n0.9,0.9\n").unwrap();
    ok(
        dir,
        &[
            "cate",
            "--in",
            "data.csv",
            "--points",
            "points.csv",
            "--out",
            "cate.csv",
        ],
    );
    let (head, rows) = csv_rows(&dir.join("cate.csv"));
    assert_eq!(head, ["x1", "x2", "d", "own", "tau", "s", "ey1", "ey0"]);
    assert_eq!(rows.len(), 2);
    // group falls back to the nearest sample unit: (0.2, 0.6) is treated
    assert_eq!(rows[0][2], "1");
    assert_eq!(rows[1][2], "0");

    ok(
        dir,
        &["policy", "--in", "data.csv", "--rule", "factual", "--out", "policy.csv"],
    );
    let (head, rows) = csv_rows(&dir.join("policy.csv"));
    assert_eq!(head[..3], ["rule", "theta", "theta_lower"]);
    assert_eq!(rows[0][1], "0");
    assert_eq!(rows[0][4], "0");

    ok(
        dir,
        &[
            "policy-sweep",
            "--in",
            "data.csv",
            "--axis",
            "x2",
            "--cutoffs",
            "-0.1:1:5",
            "--out",
            "sweep.csv",
        ],
    );
    let (_, rows) = csv_rows(&dir.join("sweep.csv"));
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][1], "0", "a cutoff below the data changes nothing");

    ok(dir, &["diagnose", "--in", "data.csv", "--out", "diag.json"]);
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("diag.json")).unwrap()).unwrap();
    assert!(diag["statistic"].is_number());
    assert!(diag["n_pairs"].as_u64().unwrap() >= 1);
}

#[test]
fn stratified_curves_are_written_per_stratum() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "simulate",
            "--dgp",
            "stratified",
            "--n",
            "8000",
            "--seed",
            "2",
            "--out",
            "data.csv",
        ],
    );
    ok(
        dir,
        &[
            "estimate-q",
            "--in",
            "data.csv",
            "--strata-cols",
            "x3",
            "--grid-size",
            "10",
            "--b",
            "0.3",
            "--out",
            "q.csv",
        ],
    );
    let (head, rows) = csv_rows(&dir.join("q.csv"));
    assert_eq!(head, ["x3", "y", "qhat", "lower", "upper"]);
    assert!(rows.iter().any(|r| r[0] == "0") && rows.iter().any(|r| r[0] == "1"));
}

#[test]
fn replay_reproduces_and_checks_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, "linear");
    ok(
        dir,
        &[
            "--threads",
            "1",
            "policy",
            "--in",
            "data.csv",
            "--rule",
            "all",
            "--bootstrap-draws",
            "10",
            "--out",
            "p.csv",
        ],
    );
    let out = ok(
        dir,
        &[
            "--threads",
            "2",
            "replay",
            "--manifest",
            "p.csv.manifest.json",
            "--redirect-dir",
            "again",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("identical"));
    assert_eq!(
        fs::read(dir.join("p.csv")).unwrap(),
        fs::read(dir.join("again/p.csv")).unwrap()
    );

    // a tampered recorded digest is reported as a mismatch
    let text = fs::read_to_string(dir.join("p.csv.manifest.json")).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
    m["outputs"][0]["sha256"] = "0".repeat(64).into();
    fs::write(dir.join("bad.manifest.json"), serde_json::to_string(&m).unwrap()).unwrap();
    let out = cli(
        dir,
        &["replay", "--manifest", "bad.manifest.json", "--redirect-dir", "third"],
    );
    assert_eq!(code(&out), 1);

    // a changed input is refused before anything runs
    let mut data = fs::read_to_string(dir.join("data.csv")).unwrap();
    data.push_str("1,1,0.1,0.1\n");
    fs::write(dir.join("data.csv"), data).unwrap();
    let out = cli(
        dir,
        &[
            "replay",
            "--manifest",
            "p.csv.manifest.json",
            "--redirect-dir",
            "fourth",
        ],
    );
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn exit_codes_follow_error_families() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, "linear");

    let out = cli(
        dir,
        &["estimate-q", "--in", "data.csv", "--y-col", "outcome", "--out", "q.csv"],
    );
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("MissingColumn"));

    let out = cli(dir, &["estimate-q", "--in", "missing.csv", "--out", "q.csv"]);
    assert_eq!(code(&out), 3);

    fs::write(dir.join("bad.csv"), "y,d,x1,x2\n1,2,0.1,0.2\n0.5,0,0.7,0.1\n").unwrap();
    let out = cli(dir, &["estimate-q", "--in", "bad.csv", "--out", "q.csv"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("NonBinaryTreatment"));

    let out = cli(
        dir,
        &["estimate-q", "--in", "data.csv", "--no-such-flag", "--out", "q.csv"],
    );
    assert_eq!(code(&out), 2);

    let out = cli(
        dir,
        &["bootstrap", "--in", "data.csv", "--level", "1.5", "--out", "q.csv"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("InvalidArgument"));

    let out = cli(
        dir,
        &["policy", "--in", "data.csv", "--rule", "x9 <= 1", "--out", "p.csv"],
    );
    assert_eq!(code(&out), 2);

    // a radius so small that no unit is near the frontier
    let out = cli(
        dir,
        &["estimate-q", "--in", "data.csv", "--epsilon", "1e-9", "--out", "q.csv"],
    );
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("NoFrontierUnits"));
}

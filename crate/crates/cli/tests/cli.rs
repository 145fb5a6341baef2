use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/reference.json")
}

fn pf(args: &[&str]) -> Output {
    pf_env(args, &[])
}

fn pf_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pf"));
    cmd.args(args).env_remove("PF_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("pf runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_dist(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_owned)
        .collect()
}

#[test]
fn solve_writes_a_valid_encoder() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("solve.json");
    let r = pf(&[
        "solve",
        "--dist",
        reference().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--q",
        "2",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let enc = v["encoder"].as_array().unwrap();
    assert_eq!(enc.len(), 3);
    for x in 0..3 {
        let s: f64 = enc.iter().map(|row| row[x].as_f64().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
    assert_eq!(v["converged"], true);
    let trace = v["loss_trace"].as_array().unwrap();
    assert_eq!(trace.len(), v["iterations"].as_u64().unwrap() as usize + 1);
}

#[test]
fn solve_exit_codes() {
    let dist = reference();
    let dist = dist.to_str().unwrap();
    assert_eq!(code(&pf(&["solve", "--dist", "/nonexistent/dist.json"])), 1);
    assert_eq!(code(&pf(&["solve", "--dist", dist, "--q", "3"])), 2);
    assert_eq!(code(&pf(&["solve", "--dist", dist, "--beta", "-1"])), 2);
    assert_eq!(code(&pf(&["solve", "--dist", dist, "--bogus"])), 2);
    assert_eq!(code(&pf(&["solve", "--dist", dist, "--max-iter", "1"])), 3);
}

#[test]
fn single_output_symbol_reports_zero_information() {
    let r = pf(&[
        "solve",
        "--dist",
        reference().to_str().unwrap(),
        "--card-z",
        "1",
        "--q",
        "1",
    ]);
    assert_eq!(code(&r), 0);
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert!(v["i_zx_bits"].as_f64().unwrap().abs() < 1e-12);
    assert!(v["i_zy_bits"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn unknown_override_is_a_usage_error() {
    let dist = reference();
    let dist = dist.to_str().unwrap();
    assert_eq!(code(&pf(&["solve", "--dist", dist, "--set", "gamma=1"])), 2);
    assert_eq!(code(&pf(&["solve", "--dist", dist, "--set", "beta"])), 2);
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.csv");
    assert_eq!(
        code(&pf(&[
            "sweep",
            "--dist",
            dist,
            "--out",
            out.to_str().unwrap(),
            "--set",
            "box_M=3"
        ])),
        2
    );
    assert_eq!(
        code(&pf(&["verify", "--dist", dist, "--set", "lemma1_pairs=x"])),
        2
    );
}

fn small_sweep(dir: &TempDir, name: &str, threads: Option<&str>) -> (PathBuf, Output) {
    let out = dir.path().join(name);
    let dist = reference();
    let args = [
        "sweep",
        "--dist",
        dist.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--beta-grid",
        "0.5,2",
        "--alpha-grid",
        "0.1:1:2",
        "--card-z",
        "2",
        "--restarts",
        "1",
        "--q",
        "2",
    ];
    let r = match threads {
        Some(t) => pf_env(&args, &[("PF_THREADS", t)]),
        None => pf(&args),
    };
    (out.clone(), r)
}

#[test]
fn sweep_writes_one_row_per_run_and_side_files() {
    let dir = TempDir::new().unwrap();
    let (out, r) = small_sweep(&dir, "s.csv", None);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|l| l.starts_with("dca_ridge,2,")));
    let header = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_owned();
    assert_eq!(header, pf_core::sweep::CSV_HEADER.join(","));
    for suffix in [".frontier.csv", ".json", ".defects.json"] {
        let mut p = out.clone().into_os_string();
        p.push(suffix);
        assert!(Path::new(&p).exists(), "missing {suffix}");
    }
    let frontier = csv_rows(&dir.path().join("s.csv.frontier.csv"));
    assert!(!frontier.is_empty() && frontier.len() <= 4);
}

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let dir = TempDir::new().unwrap();
    let (a, ra) = small_sweep(&dir, "a.csv", Some("1"));
    let (b, rb) = small_sweep(&dir, "b.csv", Some("3"));
    let (c, rc) = small_sweep(&dir, "c.csv", None);
    assert_eq!((code(&ra), code(&rb), code(&rc)), (0, 0, 0));
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_eq!(bytes, fs::read(&c).unwrap());
}

#[test]
fn sweep_rejects_bad_thread_setting_and_grids() {
    let dir = TempDir::new().unwrap();
    let (_, r) = small_sweep(&dir, "x.csv", Some("many"));
    assert_eq!(code(&r), 2);
    let out = dir.path().join("y.csv");
    let dist = reference();
    let r = pf(&[
        "sweep",
        "--dist",
        dist.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--beta-grid",
        "1:0.1:4",
    ]);
    assert_eq!(code(&r), 2);
}

#[test]
fn baseline_rows_and_guard() {
    let dir = TempDir::new().unwrap();
    let dist = reference();
    let dist = dist.to_str().unwrap();
    for (mode, n) in [("greedy", 3), ("exhaustive", 5), ("both", 8)] {
        let out = dir.path().join(format!("{mode}.csv"));
        let r = pf(&[
            "baseline",
            "--dist",
            dist,
            "--out",
            out.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert_eq!(code(&r), 0);
        assert_eq!(csv_rows(&out).len(), n, "{mode}");
    }

    let n = 13;
    let p_x = vec![1.0 / n as f64; n];
    let rows = vec![vec![0.5; n], vec![0.5; n]];
    let big = write_dist(
        &dir,
        "big.json",
        &serde_json::json!({"p_x": p_x, "p_y_given_x": rows}).to_string(),
    );
    let out = dir.path().join("big.csv");
    let r = pf(&[
        "baseline",
        "--dist",
        big.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "exhaustive",
    ]);
    assert_eq!(code(&r), 4);
    let r = pf(&[
        "baseline",
        "--dist",
        big.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "greedy",
    ]);
    assert_eq!(code(&r), 0);
    assert_eq!(csv_rows(&out).len(), n);
}

#[test]
fn verify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let dist = reference();
    let out = dir.path().join("verify.jsonl");
    let r = pf(&[
        "verify",
        "--dist",
        dist.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let lines = fs::read_to_string(&out).unwrap();
    assert!(lines.lines().count() >= 9);
    for l in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["passed"], true, "{l}");
    }

    assert_eq!(
        code(&pf(&[
            "verify",
            "--dist",
            dist.to_str().unwrap(),
            "--tol",
            "1e-30"
        ])),
        5
    );

    let bad = write_dist(
        &dir,
        "bad.json",
        r#"{"p_x": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334],
            "p_y_given_x": [[0.80, 0.08, 0.40], [0.025, 0.82, 0.05], [0.075, 0.10, 0.55]]}"#,
    );
    assert_eq!(code(&pf(&["verify", "--dist", bad.to_str().unwrap()])), 1);
}

#[test]
fn report_merges_and_summarises_dominance() {
    let dir = TempDir::new().unwrap();
    let dist = reference();
    let dist = dist.to_str().unwrap();
    let base = dir.path().join("base.csv");
    assert_eq!(
        code(&pf(&[
            "baseline",
            "--dist",
            dist,
            "--out",
            base.to_str().unwrap()
        ])),
        0
    );
    let (sweep, r) = small_sweep(&dir, "s.csv", None);
    assert_eq!(code(&r), 0);

    let out = dir.path().join("report.csv");
    let r = pf(&[
        "report",
        "--out",
        out.to_str().unwrap(),
        base.to_str().unwrap(),
        sweep.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(!csv_rows(&out).is_empty());
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("report.csv.dominance.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["baseline_points"], 8);
    assert_eq!(summary["dca_points"], 4);
    assert_eq!(summary["entries"].as_array().unwrap().len(), 8);
    let read = |p: &Path| pf_core::sweep::read_points_csv(fs::File::open(p).unwrap()).unwrap();
    let dca = read(&sweep);
    for (entry, b) in summary["entries"]
        .as_array()
        .unwrap()
        .iter()
        .zip(read(&base))
    {
        let expected = dca
            .iter()
            .any(|d| d.i_zx_bits >= b.i_zx_bits - 0.01 && d.i_zy_bits <= b.i_zy_bits + 0.01);
        assert_eq!(entry["dominated"], expected);
        assert_eq!(
            entry["baseline"]["i_zx_bits"].as_f64().unwrap(),
            b.i_zx_bits
        );
    }
}

#[test]
fn report_rejects_empty_and_malformed_inputs() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, pf_core::sweep::CSV_HEADER.join(",") + "\n").unwrap();
    let out = dir.path().join("r.csv");
    assert_eq!(
        code(&pf(&[
            "report",
            "--out",
            out.to_str().unwrap(),
            empty.to_str().unwrap()
        ])),
        1
    );
    assert_eq!(code(&pf(&["report", "--out", out.to_str().unwrap()])), 1);
    let junk = dir.path().join("junk.csv");
    fs::write(&junk, "a,b\n1,2\n").unwrap();
    assert_eq!(
        code(&pf(&[
            "report",
            "--out",
            out.to_str().unwrap(),
            junk.to_str().unwrap()
        ])),
        1
    );
}

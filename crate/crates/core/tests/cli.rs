use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use potmde::GpdParams;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_potmde"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn potmde")
}

/// Two runs, two locations, GPD(0.3, 1) marginals.
fn write_panel(dir: &Path, n: usize) -> PathBuf {
    let theta = GpdParams::new(0.3, 1.0).unwrap();
    let mut text = String::from("run,t,v1,v2\n");
    for r in 0..2u64 {
        let a = theta.sample(n, 10 + r).unwrap();
        let b = theta.sample(n, 20 + r).unwrap();
        for t in 0..n {
            text.push_str(&format!("r{r},{},{},{}\n", t + 1, a[t], b[t]));
        }
    }
    let path = dir.join("panel.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn project_writes_one_counts_table_per_run() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 50);
    let out = run_in(
        dir.path(),
        &["project", "--panel", "panel.csv", "--event", "sum", "--out", "o"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("o"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["counts_001_r0.csv", "counts_002_r1.csv", "series.csv"]);
    let counts = read(&dir.path().join("o"), "counts_001_r0.csv");
    let rows = data_lines(&counts);
    assert_eq!(rows[0], "q_from,count");
    assert_eq!(rows[1], "0,50");
    assert!(rows.last().unwrap().ends_with(",0"));
    assert_eq!(data_lines(&read(&dir.path().join("o"), "series.csv")).len(), 101);
}

#[test]
fn malformed_row_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "run,t,v1\n1,1,0.5\n1,2,-x\n").unwrap();
    let out = run_in(dir.path(), &["project", "--panel", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 30);
    assert_eq!(run_in(dir.path(), &["nonsense"]).status.code(), Some(1));
    assert_eq!(
        run_in(dir.path(), &["fit", "--panel", "panel.csv", "--u", "x"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run_in(dir.path(), &["fit", "--panel", "missing.csv"]).status.code(),
        Some(2)
    );
    // too few exceedances is a data error that names k and min_k
    let out = run_in(dir.path(), &["fit", "--panel", "panel.csv", "--u", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_in(
        dir.path(),
        &["fit", "--panel", "panel.csv", "--u", "5", "--min-k", "50"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("k = ") && err.contains("minimum is 50"), "{err}");
    assert_eq!(run_in(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn fit_recovers_the_shape() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 5000);
    let out = run_in(
        dir.path(),
        &[
            "fit",
            "--panel",
            "panel.csv",
            "--event",
            "order-stat",
            "--subset",
            "1",
            "--order-index",
            "1",
            "--u",
            "0.5",
            "--out",
            "o",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&read(&dir.path().join("o"), "fit.json")).unwrap();
    let g = doc["result"]["fit"]["params"]["gamma"].as_f64().unwrap();
    assert!((g - 0.3).abs() < 0.06, "gamma {g}");
    assert_eq!(doc["header"]["command"], "fit");
    assert_eq!(doc["header"]["config"]["u"], 0.5);
    let curve = read(&dir.path().join("o"), "fit_curve.csv");
    let rows = data_lines(&curve);
    assert_eq!(rows[0], "x,empirical,fitted,ci_lo,ci_hi");
    assert_eq!(rows.len(), 102);
}

#[test]
fn fit_methods_differ_only_in_method_and_estimates() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 2000);
    let base = ["fit", "--panel", "panel.csv", "--u", "1", "--q", "8"];
    let mut docs = Vec::new();
    for m in ["mde2", "mle", "mde3"] {
        let out_dir = format!("o_{m}");
        let mut args = base.to_vec();
        args.extend(["--method", m, "--out", &out_dir]);
        let out = run_in(dir.path(), &args);
        assert!(out.status.success(), "{m}: {}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_str(&read(&dir.path().join(&out_dir), "fit.json")).unwrap();
        docs.push(v);
    }
    let keys = |v: &serde_json::Value| {
        let mut k: Vec<String> = v["result"].as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    assert_eq!(keys(&docs[0]), keys(&docs[1]));
    for field in ["threshold_u", "per_run_counts", "total_k", "rate", "n_per_run"] {
        assert_eq!(docs[0]["result"][field], docs[1]["result"][field], "{field}");
    }
    assert_eq!(docs[0]["result"]["fit"]["method"], "mde2");
    assert_eq!(docs[1]["result"]["fit"]["method"], "mle");
    assert_ne!(docs[0]["result"]["fit"]["params"], docs[1]["result"]["fit"]["params"]);
    // three-parameter row: (q, u, (gamma, mu, sigma), estimate, CI columns)
    let row = &docs[2]["result"]["row"];
    for field in ["q", "u", "gamma", "mu", "sigma", "expected_count", "ci_lo", "ci_hi"] {
        assert!(row.get(field).is_some(), "{field}");
    }
    assert!(row["mu"].as_f64().is_some());
    assert!(docs[0]["result"]["row"]["ci_lo"].as_f64().is_some());
}

#[test]
fn scan_appends_region_average() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 2000);
    let out = run_in(
        dir.path(),
        &[
            "scan",
            "--panel",
            "panel.csv",
            "--u-from",
            "0.5",
            "--u-to",
            "2",
            "--u-step",
            "0.5",
            "--q",
            "10",
            "--u1",
            "0.5",
            "--u2",
            "1.5",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = data_lines(&text);
    assert_eq!(
        rows[0],
        "u,k,gamma,mu,sigma,target_probability,expected_count,ci_lo,ci_hi,skipped"
    );
    assert_eq!(rows.len(), 5);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("# region_average u1=0.5 u2=1.5"), "{last}");
    assert!(last.ends_with("contributing=3"), "{last}");
}

#[test]
fn ci_command_reports_both_scales() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 2000);
    for variant in ["plug-in", "residual"] {
        let out = run_in(
            dir.path(),
            &[
                "ci",
                "--panel",
                "panel.csv",
                "--u",
                "1",
                "--x",
                "2",
                "--variant",
                variant,
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        let json = text.split_once('\n').unwrap().1;
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        let s = &v["result"]["survival"];
        assert!(s["lower"].as_f64().unwrap() <= s["center"].as_f64().unwrap());
        assert_eq!(s["scale_note"], "corrected");
    }
}

#[test]
fn report_rows_follow_the_job_file() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 2000);
    std::fs::write(
        dir.path().join("job.toml"),
        r#"
panel = "panel.csv"
[event]
kind = "order_stat"
subset = [1, 2]
order_index = 2

[[targets]]
name = "single"
q = 12.0
u = 1.0

[[targets]]
name = "region"
q = 12.0
u1 = 0.5
u2 = 2.0
u_step = 0.5
method = "mde3"
"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["report", "--config", "job.toml", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&dir.path().join("o"), "report.csv");
    let rows = data_lines(&text);
    assert_eq!(
        rows[0],
        "name,q,u,method,gamma,mu,sigma,expected_count,probability,ci_lo,ci_hi"
    );
    assert!(rows[1].starts_with("single,12,1,mde2,"));
    assert!(rows[2].starts_with("region,12,\"[0.5, 2]\",mde3,"));
}

#[test]
fn simulate_appendix_d_emits_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate",
            "--preset",
            "appendix-d",
            "--reps",
            "100",
            "--gamma-grid",
            "0.2,0.4",
            "--out",
            "o",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for n in [10, 50, 100] {
        let text = read(&dir.path().join("o"), &format!("appendix_d_n{n}.csv"));
        // two γ values × two estimators
        assert_eq!(data_lines(&text).len(), 5, "n = {n}");
        assert!(text.contains("# seed: 2024"));
    }
    assert_eq!(data_lines(&read(&dir.path().join("o"), "mise.csv")).len(), 4);
}

#[test]
fn output_directory_must_be_empty() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 20);
    std::fs::create_dir(dir.path().join("o")).unwrap();
    std::fs::write(dir.path().join("o/keep.txt"), "x").unwrap();
    let out = run_in(dir.path(), &["project", "--panel", "panel.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(read(&dir.path().join("o"), "keep.txt"), "x");
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn every_command_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 1500);
    std::fs::write(
        dir.path().join("job.toml"),
        "panel = \"panel.csv\"\n[[targets]]\nname = \"a\"\nq = 9.0\nu1 = 0.5\nu2 = 1.5\nu_step = 0.25\n",
    )
    .unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "project",
            "--panel",
            "panel.csv",
            "--event",
            "run-pattern",
            "--order-index",
            "1",
        ],
        vec!["fit", "--panel", "panel.csv", "--u", "1", "--q", "9"],
        vec!["fit", "--panel", "panel.csv", "--u", "1", "--method", "mde3"],
        vec!["scan", "--panel", "panel.csv", "--u-grid", "0.5,1,1.5,2", "--q", "9"],
        vec!["ci", "--panel", "panel.csv", "--u", "1", "--q", "9"],
        vec!["report", "--config", "job.toml"],
        vec![
            "simulate",
            "--preset",
            "appendix-d",
            "--reps",
            "100",
            "--gamma-grid",
            "0.3",
            "--n-grid",
            "10,50",
        ],
        vec!["simulate", "--preset", "coverage", "--reps", "100", "--seed", "9"],
    ];
    for (i, cmd) in commands.iter().enumerate() {
        let mut outputs = Vec::new();
        for (j, threads) in ["1", "4", "4"].iter().enumerate() {
            let name = format!("out_{i}_{j}");
            let mut args = cmd.clone();
            args.extend(["--threads", threads, "--out", &name]);
            let out = run_in(dir.path(), &args);
            assert!(
                out.status.success(),
                "{cmd:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            outputs.push(snapshot(&dir.path().join(&name)));
        }
        assert!(!outputs[0].is_empty());
        assert_eq!(outputs[0], outputs[1], "{cmd:?}: 1 vs 4 threads");
        assert_eq!(outputs[1], outputs[2], "{cmd:?}: repeated run");
    }
}

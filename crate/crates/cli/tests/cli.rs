use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bergman-lab"));
    c.env_remove("BERGMAN_LAB_OUT");
    c
}

fn run_config(dir: &Path, text: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    bin().arg("run").arg("--config").arg(&path).args(extra).output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

const BERGMAN: &str = r#"
geometry = "FS_CP1(1)"
q = 0
ks = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20,
      21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40]
experiments = ["bergman"]
"#;

#[test]
fn bergman_fs_l1_error_is_one_over_k() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run_config(tmp.path(), BERGMAN, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("bergman.csv"));
    for col in ["k", "dim", "l1_error", "max_dev"] {
        assert!(header.iter().any(|h| h == col), "missing {col}");
    }
    let at = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert_eq!(rows.len(), 40);
    for r in &rows {
        let k: f64 = r[at("k")].parse().unwrap();
        let l1: f64 = r[at("l1_error")].parse().unwrap();
        assert!((l1 * k - 1.0).abs() < 1e-10, "k = {k}: {l1}");
        assert_eq!(r[at("dim")].parse::<f64>().unwrap(), k + 1.0);
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["config"]["geometry"], "FS_CP1(1)");
    assert!(summary["timings"]["total"].as_f64().unwrap() >= 0.0);
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
geometry = "PERTURBED_CP1(1,tmax)"
q = 0
ks = [4, 8, 12, 16]
experiments = ["bergman", "trace", "spectrum", "kernel"]

[symbol]
"0" = "0.5 + x3(1)"
"#;
    let mut csvs = vec![];
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = run_config(tmp.path(), text, &["--out", out.to_str().unwrap()]);
        assert!(o.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&o.stderr));
        let files: Vec<String> = ["bergman", "trace", "spectrum", "kernel"]
            .iter()
            .map(|n| std::fs::read_to_string(out.join(format!("{n}.csv"))).unwrap())
            .collect();
        csvs.push(files);
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn spectrum_hemisphere_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
geometry = "FS_CP1(1)"
q = 0
ks = [1, 2, 3]
experiments = ["spectrum"]
gammas = [0.5]

[symbol]
"0" = "hemisphere(1)"
"#;
    let out = tmp.path().join("out");
    run_config(tmp.path(), text, &["--out", out.to_str().unwrap()]);
    let (header, rows) = read_csv(&out.join("spectrum.csv"));
    assert_eq!(header, ["k", "gamma", "n_above_scaled", "limit_mass", "error"]);
    // hemisphere at k=1 has eigenvalues 3/4 and 1/4
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 1.0);
    assert!((rows[0][3].parse::<f64>().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("env-out");
    let path = tmp.path().join("c.toml");
    std::fs::write(&path, "geometry = \"NEG_CP1(1)\"\nq = 1\nks = [2, 3]\nexperiments = [\"bergman\"]\n").unwrap();
    let o = bin().arg("run").arg("--config").arg(&path).env("BERGMAN_LAB_OUT", &out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("bergman.csv").exists());
}

#[test]
fn empty_experiment_list_writes_summary_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run_config(tmp.path(), "geometry = \"FS_CP1(1)\"\nq = 0\n", &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let files: Vec<String> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(files, ["summary.json"]);
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for text in [
        "geometry = \"FS_CP1(1)\"\nq = 0\nunknown_key = 3\n",
        "geometry = \"KLEIN_BOTTLE\"\nq = 0\n",
        "geometry = \"PRODUCT_CP1xCP1(1,1)\"\nq = 0\n",
        "geometry = \"FS_CP1(1)\"\nq = 0\nks = [1]\nexperiments = [\"trace\"]\n[symbol]\n\"0\" = \"bogus(1)\"\n",
        "not toml at all [",
    ] {
        let out = tmp.path().join("never");
        let o = run_config(tmp.path(), text, &["--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!out.exists(), "computed before validating: {text}");
    }
}

#[test]
fn dry_run_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
geometry = "PRODUCT_CP1xCP1(1,1)"
q = 1
ks = [2, 4]
experiments = ["trace"]

[symbol]
"0" = "0.3"
"1" = "0.7*x3(1)"

[tolerances]
trace = 2.5
"#;
    let first = run_config(tmp.path(), text, &["--dry-run"]);
    assert!(first.status.success());
    let emitted = String::from_utf8(first.stdout).unwrap();
    let second = run_config(tmp.path(), &emitted, &["--dry-run"]);
    assert_eq!(String::from_utf8(second.stdout).unwrap(), emitted);
    assert!(emitted.contains("trace = 2.5"));
}

#[test]
fn list_catalog() {
    let o = bin().arg("list-catalog").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let line = |name: &str| text.lines().find(|l| l.starts_with(name)).unwrap().to_string();
    assert!(line("FS_CP1").contains("dim = d·k+1"));
    assert!(line("PRODUCT_CP1xCP1").contains("q=1 only"));
    let o = bin().args(["list-catalog", "--json"]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 4);
    assert_eq!(v[3]["q"], "q=1 only");
}

#[test]
fn non_finite_symbol_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "geometry = \"FS_CP1(1)\"\nq = 0\nks = [4]\nexperiments = [\"trace\"]\n[symbol]\n\"0\" = \"1/(x1(1)-x1(1))\"\n";
    let out = tmp.path().join("out");
    let o = run_config(tmp.path(), text, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}

#[test]
fn thread_count_changes_values_by_at_most_1e_12() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
geometry = "FS_CP1(1)"
q = 0
ks = [5, 10, 15, 20]
experiments = ["bergman", "trace", "kernel"]

[symbol]
"0" = "0.5 + x3(1) + x1(1)^2"
"#;
    let mut tables = vec![];
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let o = run_config(tmp.path(), text, &["--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        tables.push(["bergman", "trace", "kernel"].map(|n| read_csv(&out.join(format!("{n}.csv"))).1));
    }
    for (a, b) in tables[0].iter().zip(&tables[1]) {
        for (ra, rb) in a.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
                assert!((x.is_nan() && y.is_nan()) || (x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }
}

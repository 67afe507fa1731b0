use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fdchange"))
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/two_shift.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["synth", "--n", "80", "--m", "40", "--seed", "5", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn null_sample_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "null.csv", &[]);
    let out = run(&["test", "--input", input.to_str().unwrap(), "--reps", "2000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn shifted_sample_exits_one_near_the_shift() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "shift.csv", &["--shift", "40:t:2"]);
    let json = dir.path().join("r.json");
    let out = run(&[
        "test", "--input", input.to_str().unwrap(), "--reps", "2000", "--json", json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(json).unwrap()).unwrap();
    let cp = v["change_points"][0]["indices"][0].as_u64().unwrap();
    assert!(cp.abs_diff(40) <= 3, "change point {cp}");
}

#[test]
fn both_modes_report_paired_rows() {
    let json = tempfile::NamedTempFile::new().unwrap();
    let out = run(&[
        "test", "--input", bundled().to_str().unwrap(), "--header", "--labels", "--mode", "both", "--reps", "2000",
        "--json", json.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(json.path()).unwrap()).unwrap();
    let rows = v["segments"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["mode"], "H");
    assert_eq!(rows[1]["mode"], "S");
    assert_eq!(rows[0]["segment"], rows[1]["segment"]);
}

#[test]
fn no_simulate_without_table_is_an_error() {
    let out = run(&["test", "--input", bundled().to_str().unwrap(), "--header", "--labels", "--no-simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fdchange tables"));
}

#[test]
fn table_miss_with_no_simulate_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    std::fs::write(&table, "d,alpha,critical_value\n1,0.05,0.4614\n").unwrap();
    let out = run(&[
        "test", "--input", bundled().to_str().unwrap(), "--header", "--labels", "--d", "3", "--no-simulate", "--table",
        table.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d = 3"));
}

#[test]
fn user_table_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    std::fs::write(&table, "d,alpha,critical_value\n2,0.05,1000\n").unwrap();
    let out = run(&[
        "test", "--input", bundled().to_str().unwrap(), "--header", "--labels", "--d", "2", "--no-simulate", "--table",
        table.to_str().unwrap(),
    ]);
    // absurd critical value: nothing is rejected
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn parse_errors_name_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2,3\n4,five,6\n7,8,9\n").unwrap();
    let out = run(&["test", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2, column 2"));
    std::fs::write(&bad, "1,2,3\n4,5\n").unwrap();
    let out = run(&["test", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn one_row_is_insufficient() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    std::fs::write(&one, "1,2,3\n").unwrap();
    let out = run(&["test", "--input", one.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient sample"));
}

#[test]
fn smoothing_and_resampling_paths() {
    let input = bundled();
    for extra in [["--grid", "101", "", ""], ["--basis", "20", "--grid", "101"]] {
        let mut args = vec!["test", "--input", input.to_str().unwrap(), "--header", "--labels", "--reps", "2000"];
        args.extend(extra.iter().filter(|s| !s.is_empty()));
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{:?}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn plotdata_is_tidy() {
    let plot = tempfile::NamedTempFile::new().unwrap();
    let out = run(&[
        "test", "--input", bundled().to_str().unwrap(), "--header", "--labels", "--segment", "--reps", "2000",
        "--plotdata", plot.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = std::fs::read_to_string(plot.path()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "series,mode,segment,index,x,value");
    let series: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        series.into_iter().collect::<Vec<_>>(),
        vec!["cusum", "eigenfunction", "segment_mean"]
    );
}

#[test]
fn tables_have_expected_shape_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = bin()
            .args(["tables", "--d-max", "5", "--alphas", "0.10,0.05,0.01", "--reps", "5000", "--seed", "3", "--out"])
            .arg(p)
            .env_remove("FDCHANGE_TABLE_CACHE")
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 16);
}

#[test]
fn table_cache_directory_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["tables", "--d-max", "2", "--reps", "1000", "--bridge-grid", "50", "--seed", "9"])
        .env("FDCHANGE_TABLE_CACHE", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn power_edge_cases() {
    let out = run(&["power", "--reps", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["power", "--drift", "log", "--reps", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["t", "sin", "0.8t(1-t)", "t^2", "sqrt", "exp", "cos"] {
        assert!(err.contains(name), "menu lacks {name}: {err}");
    }
}

#[test]
fn power_is_reproducible() {
    let args = [
        "power", "--n", "30", "--k-star", "0,15", "--reps", "20", "--gen-grid", "100", "--grid", "51", "--preprocess",
        "resample", "--table-reps", "2000", "--seed", "4",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

#[test]
fn comparison_preset_layout() {
    let out = run(&["power", "--preset", "comparison", "--reps", "1", "--table-reps", "1000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10 * 3 * 2);
    assert!(rows.iter().any(|r| r.starts_with("bb,100,50,0.8t(1-t)")));
}

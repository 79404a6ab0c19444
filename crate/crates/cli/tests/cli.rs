use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kspec-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn kspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kspec")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_data(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SIX_ROWS: &str = "0.1,0.3\n-0.4,0.9\n1.2,-0.5\n0.7,0.2\n-1.1,-0.8\n0.3,1.4\n";

#[test]
fn bad_flags_and_configs_exit_2() {
    let dir = scratch("exit2");
    assert_eq!(code(&kspec(&["simulate", "--nope"])), 2);
    assert_eq!(code(&kspec(&["simulate", "--preset", "missing", "--seed", "1"])), 2);
    let data = write_data(&dir, "d.csv", SIX_ROWS);
    let o = kspec(&["bounds", "--data", path(&data), "--eps", "0", "--out", path(&dir.join("o"))]);
    assert_eq!(code(&o), 2);
    let cfg = write_data(&dir, "c.json", "{\"name\": \"x\", \"bogus\": 1}");
    assert_eq!(code(&kspec(&["simulate", "--config", path(&cfg), "--out", path(&dir.join("s"))])), 2);
}

#[test]
fn unreadable_or_malformed_data_exits_3() {
    let dir = scratch("exit3");
    let o = kspec(&["bounds", "--data", path(&dir.join("absent.csv")), "--out", path(&dir.join("o"))]);
    assert_eq!(code(&o), 3);
    let ragged = write_data(&dir, "r.csv", "1,2\n3\n");
    let o = kspec(&["bounds", "--data", path(&ragged), "--out", path(&dir.join("o"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn degenerate_gap_exits_4() {
    let dir = scratch("exit4");
    let data = write_data(&dir, "d.csv", "1,2\n1,2\n1,2\n");
    let o = kspec(&["bounds", "--data", path(&data), "--kernel", "linear", "--stat", "eig:2", "--out", path(&dir.join("o"))]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("distinct eigenvalues"));
}

#[test]
fn bounds_writes_rows_for_each_theorem_and_epsilon() {
    let dir = scratch("bounds");
    let data = write_data(&dir, "d.csv", SIX_ROWS);
    let out = dir.join("o");
    let o = kspec(&["bounds", "--data", path(&data), "--eps", "0.01,0.1,1", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("bounds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "statistic,index,epsilon,theorem,kind,value,stderr,flags");
    let rows: Vec<&str> = lines.collect();
    for th in ["spectral_gap", "uniform_diag"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(3) == Some(th)).count(), 3, "{th}");
    }
    assert!(rows.iter().all(|r| r.starts_with("eig,1,")));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(json["n"], 6);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
}

#[test]
fn align_reads_label_column() {
    let dir = scratch("align");
    let data = write_data(&dir, "d.csv", "a,b,y\n0.1,0.2,1\n0.3,-0.1,-1\n1.0,0.4,1\n-0.6,0.8,-1\n0.2,0.2,1\n");
    let out = dir.join("o");
    let o = kspec(&["align", "--data", path(&data), "--header", "--label-col", "y", "--eps", "0.1", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("align.csv")).unwrap();
    let a: f64 = csv
        .lines()
        .find(|l| l.contains(",alignment,"))
        .and_then(|l| l.split(',').nth(5))
        .unwrap()
        .parse()
        .unwrap();
    assert!(a > 0.0 && a <= 1.0);
    assert_eq!(csv.lines().filter(|l| l.contains(",bound,")).count(), 4);

    let o = kspec(&["align", "--data", path(&data), "--header", "--out", path(&out)]);
    assert_eq!(code(&o), 3);
    let bad = write_data(&dir, "l.csv", "1\n2\n1\n-1\n1\n");
    let o = kspec(&["align", "--data", path(&data), "--header", "--labels", path(&bad), "--out", path(&out)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn simulate_is_reproducible_from_its_config() {
    let dir = scratch("sim");
    let first = dir.join("a");
    let o = kspec(&["simulate", "--preset", "fig1-boxplot", "--trials", "20", "--seed", "3", "--out", path(&first)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = first.join("fig1-boxplot/results.csv");
    assert!(first.join("fig1-boxplot/boxplot.svg").exists());

    let second = dir.join("b");
    let o = kspec(&["simulate", "--config", path(&first.join("config.json")), "--out", path(&second)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&results).unwrap(), fs::read(second.join("fig1-boxplot/results.csv")).unwrap());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(listed.contains(&"manifest.json") && listed.contains(&"config.json"));
    for f in &listed {
        assert!(first.join(f).exists(), "{f}");
    }
}

#[test]
fn simulate_without_seed_reports_the_one_it_drew() {
    let dir = scratch("noseed");
    let o = kspec(&["simulate", "--preset", "fig1-boxplot", "--trials", "2", "--no-svg", "--out", path(&dir)]);
    assert!(o.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let seed = manifest["seed"].as_u64().unwrap();
    assert!(String::from_utf8_lossy(&o.stderr).contains(&seed.to_string()));
}

#[test]
fn two_trial_run_is_fast() {
    let dir = scratch("fast");
    let t = Instant::now();
    let o = kspec(&["simulate", "--preset", "example1-fig2-top", "--trials", "2", "--seed", "1", "--out", path(&dir)]);
    assert!(o.status.success());
    assert!(t.elapsed() < Duration::from_secs(1), "{:?}", t.elapsed());
}

const SMALL_ORACLE: &str = r#"{
  "name": "small", "n": 20, "p": 2, "trials": 100, "seed": 2,
  "kernel": {"family": "gaussian", "sigma": 1.0},
  "inner_kernel": {"family": "linear"}
}"#;

#[test]
fn audit_honours_trial_count_and_zero_perturbation() {
    let dir = scratch("audit");
    let cfg = write_data(&dir, "oracle.json", SMALL_ORACLE);
    let out = dir.join("a");
    let o = kspec(&["audit", "--config", path(&cfg), "--oracle-trials", "120", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("audit.csv")).unwrap();
    let weyl = csv.lines().find(|l| l.starts_with("weyl,")).unwrap();
    assert_eq!(weyl.split(',').nth(1), Some("120"));

    let o = kspec(&["audit", "--config", path(&cfg), "--oracle-trials", "4", "--out", path(&out)]);
    assert_eq!(code(&o), 2);

    let zero = dir.join("z");
    let o = kspec(&["audit", "--config", path(&cfg), "--zero-perturbation", "--out", path(&zero)]);
    assert!(o.status.success());
    let csv = fs::read_to_string(zero.join("audit.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(2), Some("0"), "{line}");
    }
}

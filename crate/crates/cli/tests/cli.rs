use std::fs;
use std::process::{Command, Output};

fn nwa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nwa")).args(args).output().unwrap()
}

#[test]
fn scenario_writes_tables_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nwa(&["scenario", "--reps", "40", "--design", "poisson", "--rho", "0.3", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["table2.csv", "table3.csv", "table4.csv", "tables.txt"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with("# master_seed=20240601 config_hash="), "{name}");
    }
    let t2 = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert!(t2.contains("poisson_rho0.3"));
    assert!(!dir.path().join("raw_poisson_rho0.3.csv").exists());
}

#[test]
fn bad_config_value_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "reps = 10\nrho = 1.5\n").unwrap();
    let o = nwa(&["study", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rho") && err.contains("(-1, 1)"), "{err}");
}

#[test]
fn flag_overrides_set_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "rho = 0.2\n").unwrap();
    let out = dir.path().join("o");
    let o = nwa(&[
        "scenario", "--config", cfg.to_str().unwrap(), "--set", "rho=0.1", "--rho", "0.6", "--reps", "5", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("table2.csv")).unwrap().contains("srs_rho0.6"));
}

#[test]
fn fit_reads_csv_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("survey.csv");
    let mut text = String::from("unit,pi,r,x1,y\n");
    for i in 0..40 {
        let x = 2.0 + (i % 7) as f64 * 0.5;
        let r = i % 5 != 0;
        let y = if r { format!("{}", 3.0 + x) } else { "NA".into() };
        text.push_str(&format!("{i},0.2,{},{x},{y}\n", r as u8));
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("fit");
    let o = nwa(&["fit", input.to_str().unwrap(), "--variants", "mle_1,cal_S", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("mle_1") && stdout.contains("cal_S") && stdout.contains("converged"), "{stdout}");
    for name in ["estimates.csv", "variance.csv", "weights.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn trace_prints_iterations() {
    let o = nwa(&["trace", "--variant", "mle_1", "--replicate", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().count() >= 3, "{stdout}");
}

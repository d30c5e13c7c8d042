use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_v2i-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn init_then_run_writes_results_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    let out_dir = dir.path().join("out");
    let o = sim(&["init", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = sim(&[
        "run",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--replications",
        "2",
        "--duration-s",
        "60",
        "--trace",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let runs = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    let mut lines = runs.lines();
    assert!(lines.next().unwrap().starts_with("scenario,seed,penetration_rate,"));
    let seeds: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["4", "5"]);

    let cells = fs::read_to_string(out_dir.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 2);
    let reports: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("reports.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);

    let traces = out_dir.join("traces");
    for suffix in ["vehicles", "messages", "switches"] {
        let p = traces.join(format!("junction-d0500-p0.50-s4-{suffix}.csv"));
        assert!(p.exists(), "{}", p.display());
    }
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let read = |d: &Path| fs::read(d.join("runs.csv")).unwrap();
    for name in ["a", "b"] {
        let o = sim(&[
            "sweep-junction",
            "--demands",
            "300,600",
            "--penetrations",
            "0,1",
            "--duration-s",
            "120",
            "--out-dir",
            dir.path().join(name).to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read(&dir.path().join("a")), read(&dir.path().join("b")));
}

#[test]
fn invalid_config_exits_nonzero_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[control]\nalpha = 0.5\n").unwrap();
    let o = sim(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("control.alpha"), "{}", stderr(&o));

    fs::write(&cfg, "penetration = 0.5\n").unwrap();
    let o = sim(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn out_of_domain_sweep_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&[
        "sweep-grid",
        "--ratios",
        "1.0",
        "--penetrations",
        "1.5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("penetration_rate"), "{}", stderr(&o));
    assert!(!dir.path().join("runs.csv").exists());
}

use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_otfs-sync"));
    c.env_remove("OTFS_SYNC_THREADS");
    c
}

const SMALL: &str = r#"{"schema_version":1,"m":64,"n":16,"kappa_max":[0.5],"snr_db":[20],"users":[2],"trials":4,"seed":9,
  "variants":{"timing":[{"kind":"first-peak"},{"kind":"highest-peak"}],"cfo":["ml"]}}"#;

#[test]
fn run_writes_csv_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let mut outputs = Vec::new();
    for (name, threads) in [("a.csv", None), ("b.csv", Some("1"))] {
        let out = dir.path().join(name);
        let mut cmd = bin();
        cmd.args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out);
        if let Some(t) = threads {
            cmd.env("OTFS_SYNC_THREADS", t);
        }
        assert!(cmd.status().unwrap().success());
        outputs.push(std::fs::read_to_string(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let lines: Vec<&str> = outputs[0].lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("experiment_id,variant,M,N,Q,scheme,pilot_structure,snr_db,kappa_max,trials,"));
    assert!(lines[1].contains(",first-peak/ml,64,16,2,gbbma-delay,mu-pcp,20,0.5,4,"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, SMALL.replace("\"trials\":4", "\"trials\":4,\"extra\":true")).unwrap();
    let st = bin().args(["run", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let missing = bin().args(["run", "--config", "/nonexistent/cfg.json"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));

    let cap = dir.path().join("cap.json");
    std::fs::write(&cap, SMALL.replace("\"users\":[2]", "\"users\":[40]")).unwrap();
    assert_eq!(bin().args(["run", "--config"]).arg(&cap).status().unwrap().code(), Some(2));

    let good = dir.path().join("good.json");
    std::fs::write(&good, SMALL).unwrap();
    let threads = bin().args(["run", "--config"]).arg(&good).env("OTFS_SYNC_THREADS", "zero").status().unwrap();
    assert_eq!(threads.code(), Some(2));
}

#[test]
fn analyze_tables() {
    let out = bin().args(["analyze", "--what", "complexity"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("4,2.91,114688.00,") && l.contains(",94208.00,")));

    let out = bin().args(["analyze", "--what", "doppler-energy"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.5,0.81831,0.81831,0.91,"));
    assert!(text.contains("alpha = 0.5961"));

    for what in ["efficiency", "capacity"] {
        assert!(bin().args(["analyze", "--what", what]).status().unwrap().success());
    }
}

#[test]
fn presets_print_valid_configs() {
    for sub in ["to-sweep", "cfo-sweep", "nmse-sweep"] {
        for axis in ["snr", "doppler", "cfo"] {
            let out = bin().args([sub, "--axis", axis, "--print-config"]).output().unwrap();
            assert!(out.status.success());
            let text = String::from_utf8(out.stdout).unwrap();
            otfs_sync::harness::ExperimentConfig::from_json(&text).unwrap();
        }
    }
}

#[test]
fn gnuplot_script_for_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let csv = dir.path().join("r.csv");
    std::fs::write(&cfg, SMALL).unwrap();
    assert!(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&csv).status().unwrap().success());
    let out = bin().args(["gnuplot", "--csv"]).arg(&csv).args(["--y", "cfo_mse", "--log-y"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("'first-peak/ml'") && text.contains("'highest-peak/ml'") && text.contains("logscale"));
    let bad = bin().args(["gnuplot", "--csv"]).arg(&csv).args(["--y", "nope"]).status().unwrap();
    assert_eq!(bad.code(), Some(2));
}

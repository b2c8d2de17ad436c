use otfs_sync::harness::{aggregate, run_experiment, ExperimentConfig};
use otfs_sync::SyncError;

fn cfg(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

#[test]
fn noiseless_static_known_offsets() {
    let c = cfg(
        r#"{"schema_version":1,"m":128,"n":32,"kappa_max":[0],"snr_db":[null],"users":[1],"trials":1,"seed":4,
            "timing_offsets":{"kind":"fixed","value":5},"cfo":{"kind":"fixed","values":[0.3]},
            "variants":{"timing":[{"kind":"first-peak"},{"kind":"genie"}],"cfo":["ml"]}}"#,
    );
    let recs = run_experiment(&c).unwrap();
    for r in &recs {
        assert_eq!(r.to_err_mean, 0.0, "{}", r.variant);
        assert!(r.cfo_mse.unwrap().sqrt() <= 1e-3, "{}", r.variant);
        assert!(r.nmse_db.unwrap() < -60.0);
        assert_eq!(r.trials, 1);
    }
}

#[test]
fn records_cover_every_point_and_variant() {
    let c = cfg(
        r#"{"schema_version":1,"m":64,"n":16,"kappa_max":[0,0.5],"snr_db":[10,null],"users":[1,2],"trials":2,
            "variants":{"timing":[{"kind":"first-peak"},{"kind":"highest-peak"}],"cfo":["ml","absorbed"]}}"#,
    );
    let recs = run_experiment(&c).unwrap();
    assert_eq!(recs.len(), 2 * 2 * 2 * 4);
    assert_eq!(recs[0].variant, "first-peak/ml");
    assert_eq!(recs[3].variant, "highest-peak/absorbed");
    assert!(recs.iter().all(|r| r.to_err_mean.is_finite() && r.cfo_mse.unwrap().is_finite()));
    assert_eq!(recs.last().unwrap().q, 2);
}

#[test]
fn capacity_violations_surface_before_trials() {
    let c = cfg(r#"{"schema_version":1,"m":128,"n":32,"kappa_max":[2.91],"snr_db":[20],"users":[5],"trials":1000000}"#);
    let t = std::time::Instant::now();
    assert!(matches!(run_experiment(&c), Err(SyncError::Capacity { requested: 5, capacity: 4 })));
    assert!(t.elapsed().as_secs() < 5);
    let su = cfg(
        r#"{"schema_version":1,"m":128,"n":32,"kappa_max":[1],"snr_db":[20],"users":[7],"trials":1,
            "pilot":{"structure":"su-pcp"}}"#,
    );
    assert!(matches!(run_experiment(&su), Err(SyncError::Capacity { requested: 7, capacity: 6 })));
}

#[test]
fn more_users_do_not_help_timing() {
    let c = cfg(
        r#"{"schema_version":1,"m":128,"n":32,"kappa_max":[2.91],"beta":12,"snr_db":[20],"users":[2,4],"trials":150,"seed":31,
            "variants":{"timing":[{"kind":"first-peak"}],"cfo":[]}}"#,
    );
    let recs = run_experiment(&c).unwrap();
    let (q2, q4) = (&recs[0], &recs[1]);
    let se = |r: &otfs_sync::harness::ResultRecord| {
        let second = r.to_err_var + r.to_err_bias * r.to_err_bias;
        ((second - r.to_err_mean * r.to_err_mean).max(0.0) / (r.trials * r.q) as f64).sqrt()
    };
    assert!(q2.to_err_mean <= q4.to_err_mean + 3.0 * (se(q2).powi(2) + se(q4).powi(2)).sqrt());
}

#[test]
fn su_pcp_runs_end_to_end() {
    let single = r#"{"schema_version":1,"m":128,"n":32,"kappa_max":[0],"snr_db":[null],"users":[1],"trials":3,
            "pilot":{"structure":"su-pcp","half_len":11},"channel":{"kind":"uniform","taps":1},
            "variants":{"timing":[{"kind":"first-peak"}],"cfo":["ml"]}}"#;
    let recs = run_experiment(&cfg(single)).unwrap();
    assert_eq!(recs[0].to_err_mean, 0.0);
    assert!(recs[0].cfo_mse.unwrap() < 1e-8);

    let equal = single
        .replace(r#""users":[1]"#, r#""users":[2]"#)
        .replace(r#""first-peak""#, r#""genie""#)
        .replace(r#""trials":3,"#, r#""trials":3,"timing_offsets":{"kind":"fixed","value":4},"#);
    let recs = run_experiment(&cfg(&equal)).unwrap();
    assert!(recs[0].cfo_mse.unwrap() < 1e-8);
    assert!(recs[0].nmse_db.unwrap() < -60.0);

    // Consecutive blocks leave no room for unequal offsets: a later user's
    // prefix lands in an earlier user's region when that user is delayed more.
    let uneven = equal.replace(r#""timing_offsets":{"kind":"fixed","value":4},"#, r#""seed":1,"#);
    assert!(run_experiment(&cfg(&uneven)).unwrap()[0].nmse_db.unwrap() > -40.0);

    // Even lengths put a null at DC in the sequence spectrum; with a static
    // BEM the pilot matrix is then rank deficient.
    let even = single.replace(r#""half_len":11"#, r#""half_len":10"#);
    assert!(matches!(run_experiment(&cfg(&even)), Err(SyncError::Singular { .. })));
}

#[test]
fn aggregate_is_order_independent() {
    let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 - 0.37).collect();
    let mut rev = xs.clone();
    rev.reverse();
    let (a, b) = (aggregate(&xs).unwrap(), aggregate(&rev).unwrap());
    assert!((a.mean - b.mean).abs() <= 1e-12);
    assert!((a.variance - b.variance).abs() <= 1e-12);
    assert!((a.mean_square - b.mean_square).abs() <= 1e-12);
}

#[test]
fn error_classes_map_to_exit_codes() {
    assert!(SyncError::Config("x".into()).is_config());
    assert!(SyncError::Capacity { requested: 2, capacity: 1 }.is_config());
    assert!(!SyncError::Numerical("x".into()).is_config());
    assert!(!SyncError::Singular { condition: 1e20 }.is_config());
}

use super::*;
use crate::model::J_PER_KWH;

fn write_temp(content: &str, name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    (dir, path)
}

#[test]
fn nec_scenario_matches_case_study_table() {
    let prices: Vec<PriceSeries> = (0..4)
        .map(|_| PriceSeries::constant(50.0 / J_PER_MWH))
        .collect();
    let s = build_nec_scenario(&prices, &NecOptions::default()).unwrap();

    assert_eq!(s.track.len(), 4);
    assert_eq!(s.horizon.num_intervals(), 12);
    assert_eq!(s.horizon.interval_len(), 300.0);

    let acc1 = &s.accs[0];
    let h1 = &acc1.agents[0];
    assert_eq!(h1.id, "H1");
    // 10432 kW for 300 s.
    assert!((h1.y_max[0] - 10_432.0e3 * 300.0).abs() < 1e-6);
    assert_eq!(h1.y_min[0], 0.0);
    // 0.0303 $/kWh in $/J.
    assert!((h1.cost_b[0] - 0.0303 / J_PER_KWH).abs() < 1e-18);
    assert_eq!((h1.d_e[0], h1.d_th[0]), (0.0, 1.0));

    let c1 = &acc1.agents[1];
    assert_eq!((c1.d_e[0], c1.d_th[0]), (1.0, 1.02));
    assert!((c1.y_max[0] - 1_550.0e3 * 300.0).abs() < 1e-6);

    let n1 = &acc1.agents[2];
    assert_eq!(n1.kind, crate::model::AgentKind::NetworkConnection);
    assert!((n1.y_min[0] + 10_000.0e3 * 300.0).abs() < 1e-6);

    let c2 = &s.accs[1].agents[1];
    assert_eq!((c2.d_e[0], c2.d_th[0]), (1.0, 2.0));
    assert!((c2.cost_b[0] - 0.0818 / J_PER_KWH).abs() < 1e-18);
    assert_eq!(s.accs[2].agents.len(), 1);
    assert_eq!(s.accs[3].agents.len(), 1);

    let spec = &s.trains[0].spec;
    assert_eq!(spec.mass, 545_000.0);
    assert_eq!(spec.davis_a, 10_195.16);
    assert_eq!(spec.v_max, 66.67);
}

#[test]
fn scenario_round_trips_through_json() {
    let s = build_nec_mini_scenario();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    write_scenario(&s, &path).unwrap();
    let loaded = load_scenario(&path).unwrap();
    assert_eq!(loaded, s);
}

#[test]
fn scenario_version_and_field_errors() {
    let mut s = build_nec_mini_scenario();
    s.schema_version = 99;
    let err = s.validate().unwrap_err();
    assert!(
        matches!(&err, Error::Schema { path, .. } if path == "schema_version"),
        "{err}"
    );

    let mut s = build_nec_mini_scenario();
    s.accs[2].network_price.pop();
    let err = s.validate().unwrap_err();
    assert!(
        matches!(&err, Error::Schema { path, .. } if path == "accs[2].network_price"),
        "{err}"
    );

    let mut s = build_nec_mini_scenario();
    s.accs[1].agents[0].cost_c[3] = -1.0;
    let err = s.validate().unwrap_err();
    assert!(
        matches!(&err, Error::Schema { path, .. } if path.starts_with("accs[1].agents[0]")),
        "{err}"
    );

    let mut s = build_nec_mini_scenario();
    s.trains[0].timetable.stations[2].position = 99_000.0;
    assert!(s.validate().is_err());
}

#[test]
fn load_scenario_reports_malformed_json() {
    let (_dir, path) = write_temp("{ not json", "bad.json");
    let err = load_scenario(&path).unwrap_err();
    assert!(matches!(err, Error::Schema { .. }), "{err}");
}

#[test]
fn price_csv_converts_to_usd_per_joule() {
    let (_dir, path) = write_temp(
        "timestamp_s,price_usd_per_mwh\n0,50\n300,72.5\n600,50\n",
        "prices.csv",
    );
    let series = load_price_series(&path).unwrap();
    assert_eq!(series.points.len(), 3);
    assert!((series.points[0].1 - 50.0 / 3.6e9).abs() < 1e-24);
    assert!((series.points[0].1 - 1.3889e-8).abs() < 5e-12);
    assert_eq!(series.at(-5.0), series.points[0].1);
    assert_eq!(series.at(450.0), series.points[1].1);
    assert_eq!(series.at(1e9), series.points[2].1);
}

#[test]
fn price_csv_rejects_bad_input() {
    let (_d1, p1) = write_temp("time,price\n0,50\n", "a.csv");
    assert!(matches!(
        load_price_series(&p1).unwrap_err(),
        Error::Parse { line: 1, .. }
    ));

    let (_d2, p2) = write_temp(
        "timestamp_s,price_usd_per_mwh\n0,50\n0,60\n",
        "b.csv",
    );
    assert!(matches!(
        load_price_series(&p2).unwrap_err(),
        Error::Parse { line: 3, .. }
    ));

    let (_d3, p3) = write_temp(
        "timestamp_s,price_usd_per_mwh\n0,abc\n",
        "c.csv",
    );
    assert!(matches!(
        load_price_series(&p3).unwrap_err(),
        Error::Parse { line: 2, .. }
    ));
}

#[test]
fn price_profile_requires_horizon_coverage() {
    let grid = HorizonGrid::new(0.0, 4, 300.0).unwrap();
    let series = PriceSeries {
        points: vec![(0.0, 1e-11), (600.0, 2e-11)],
    };
    // Last timestamp 600 covers interval 3 onward by holding, but the
    // series must reach the final interval start (900).
    assert!(series.profile(&grid).is_err());

    let series = PriceSeries {
        points: vec![(0.0, 1e-11), (900.0, 2e-11)],
    };
    let profile = series.profile(&grid).unwrap();
    assert_eq!(profile, vec![1e-11, 1e-11, 1e-11, 2e-11]);
}

#[test]
fn gps_trace_smooths_and_differentiates() {
    let mut csv = String::from("t_s,x_m,v_mps\n");
    for k in 0..20 {
        let t = k as f64;
        // Constant acceleration 1 m/s^2.
        writeln!(csv, "{t},{},{t}", 0.5 * t * t).unwrap();
    }
    let (_dir, path) = write_temp(&csv, "trace.csv");
    let trace = load_gps_trace(&path).unwrap();
    assert_eq!(trace.len(), 20);
    // Interior samples: moving average of a linear ramp is exact, and
    // the central difference recovers the acceleration.
    for s in &trace[3..17] {
        assert!((s.v - s.t).abs() < 1e-9, "v at t={}", s.t);
        assert!((s.a - 1.0).abs() < 1e-9, "a at t={}", s.t);
    }
}

#[test]
fn gps_trace_clamps_negative_speeds() {
    let mut csv = String::from("t_s,x_m,v_mps\n");
    for k in 0..12 {
        writeln!(csv, "{k},0,-1").unwrap();
    }
    let (_dir, path) = write_temp(&csv, "neg.csv");
    let trace = load_gps_trace(&path).unwrap();
    assert!(trace.iter().all(|s| s.v == 0.0));
}

#[test]
fn gps_trace_rejects_short_or_unordered() {
    let (_d1, p1) = write_temp("t_s,x_m,v_mps\n0,0,0\n1,1,1\n", "short.csv");
    assert!(load_gps_trace(&p1).is_err());

    let mut csv = String::from("t_s,x_m,v_mps\n");
    for k in 0..12 {
        writeln!(csv, "{},0,0", if k == 6 { 3 } else { k }).unwrap();
    }
    let (_d2, p2) = write_temp(&csv, "unordered.csv");
    assert!(matches!(
        load_gps_trace(&p2).unwrap_err(),
        Error::Parse { line: 8, .. }
    ));
}

use std::fmt::Write as _;

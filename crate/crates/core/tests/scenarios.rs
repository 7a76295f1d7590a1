use std::path::{Path, PathBuf};

use cabletrans::{run_scenario, Scenario, Trajectory};

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Scenario {
    Scenario::load(dir().join(name)).unwrap()
}

#[test]
fn every_scenario_file_validates() {
    let mut n = 0;
    for e in std::fs::read_dir(dir()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn hover_run_writes_artifacts() {
    let s = load("hover.json");
    let out = tempfile::tempdir().unwrap();
    let r = run_scenario(&s, Some(&dir()), Some(out.path())).unwrap();
    assert!(r.metrics.completed);
    assert!(r.metrics.rmse < 5e-3, "{}", r.metrics.rmse);
    assert!(r.metrics.max_cable_residual < 1e-4);
    assert_eq!(r.metrics.slack_events, 0);
    let traj = Trajectory::load(out.path().join("trajectory.json")).unwrap();
    assert!((traj.total_duration() - r.trajectory_duration).abs() < 1e-12);
    for f in ["metrics.json", "payload.csv", "robot0.csv", "robot2.csv"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
}

#[test]
fn narrow_gap_is_flown_without_contact() {
    let s = load("narrow_gap.json");
    let r = run_scenario(&s, Some(&dir()), None).unwrap();
    let m = &r.metrics;
    assert!(m.completed, "{:?}", m.failure);
    assert!(m.min_clearance.unwrap() > 0.0);
    assert!(m.rmse < 0.05);
    assert!(m.max_cable_residual < 1e-4);
}

#[test]
fn agile_circle_keeps_cables_rigid() {
    let s = load("circle_entry.json");
    let r = run_scenario(&s, Some(&dir()), None).unwrap();
    assert!(r.metrics.completed);
    assert!(r.planned_max_accel > 9.0);
    assert!(
        r.metrics.max_cable_residual < 1e-4,
        "{}",
        r.metrics.max_cable_residual
    );
    assert!(r.metrics.max_attitude_error < 5f64.to_radians());
}

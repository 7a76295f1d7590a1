use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cabletrans"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn random_grid_matches_oracle() {
    let o = run(&[
        "map", "--random", "20", "--fill", "0.15", "--seed", "5", "--verify",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["verify"]["exact"], true);
    assert_eq!(v["cells"], 8000);
}

#[test]
fn empty_cloud_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("empty.xyz");
    std::fs::write(&cloud, "# nothing\n").unwrap();
    let o = run(&["map", "--cloud", cloud.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
}

#[test]
fn cloud_parse_error_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("bad.xyz");
    std::fs::write(&cloud, "0 0 0\n1 1 1\n2 two 2\n").unwrap();
    let o = run(&["map", "--cloud", cloud.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn bad_arguments_exit_with_input_code() {
    let o = run(&[
        "plan",
        "--map-spec",
        "x.json",
        "--start",
        "1,2",
        "--goal",
        "0,0,1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn cached_map_plans_and_reports_no_path() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("gap.esdf");
    let spec = scenarios().join("maps/narrow_gap.json");
    let o = run(&[
        "map",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        cache.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(cache.exists());
    // goal inside the wall
    let o = run(&[
        "plan",
        "--map",
        cache.to_str().unwrap(),
        "--start=-3,0,1",
        "--goal",
        "0,1.5,1",
        "--out",
        dir.path().join("p").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn free_space_plan_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan");
    let spec = scenarios().join("maps/free_space.json");
    let o = run(&[
        "plan",
        "--map-spec",
        spec.to_str().unwrap(),
        "--start=-5,0,1",
        "--goal",
        "5,0,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = json(&o);
    assert_eq!(v["success"], true);
    assert!(v["penalties"]["obstacle"].as_f64().unwrap() < 1e-3);
    assert!(out.join("trajectory.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["success"], true);
}

#[test]
fn sim_is_deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("hover.json");
    let a = run(&["sim", "--scenario", sc.to_str().unwrap(), "--seed", "7"]);
    let b = run(&[
        "sim",
        "--scenario",
        sc.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(json(&a)["metrics"], json(&b)["metrics"]);
    assert!(dir.path().join("metrics.json").exists());
    assert!(dir.path().join("payload.csv").exists());
}

#[test]
fn mass_estimate_from_hover() {
    let sc = scenarios().join("hover.json");
    let o = run(&[
        "sim",
        "--scenario",
        sc.to_str().unwrap(),
        "--noiseless",
        "--mass-estimate",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(json(&o)["relative_error"].as_f64().unwrap() < 0.01);
}

#[test]
fn gradcheck_reports_worst_error() {
    let o = run(&["gradcheck", "--instances", "3", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["pass"], true);
    assert_eq!(v["terms"].as_array().unwrap().len(), 8);
}

#[test]
fn replan_keeps_state_continuous() {
    let sc = scenarios().join("free_space.json");
    let o = run(&[
        "replan",
        "--scenario",
        sc.to_str().unwrap(),
        "--at",
        "2.5",
        "--goal=5,-2,1",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(json(&o)["continuity"].as_f64().unwrap() < 1e-6);
}

#[test]
fn bench_small_ring() {
    let o = bin()
        .args([
            "bench",
            "--density",
            "sparse",
            "--radius",
            "3",
            "--targets",
            "2",
            "--seed",
            "3",
        ])
        .env("CABLETRANS_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = json(&o);
    let row = &v["benchmark"][0];
    assert_eq!(row["targets"], 2);
    assert!(row["success_rate"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bad_thread_count_is_an_input_error() {
    let o = bin()
        .args(["gradcheck", "--instances", "1"])
        .env("CABLETRANS_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

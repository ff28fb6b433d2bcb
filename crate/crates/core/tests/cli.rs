use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use behexec::catalog::{FOLLOW_PATH, GENERATE_PATH, HOVER, TAKE_OFF};
use behexec::mission::exploration_mission;

fn demo(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../demo")
        .join(file)
}

fn behexec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_behexec"))
        .args(args)
        .output()
        .unwrap()
}

fn run(mission: &Path, grid: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--mission",
        mission.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    behexec(&args)
}

fn events(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn demo_completes_and_streams_json_events() {
    let out = run(
        &demo("demo.txt"),
        &demo("demo_grid.txt"),
        &["--virtual-dt", "0.01"],
    );
    assert_eq!(out.status.code(), Some(0));
    let ev = events(&out);
    assert_eq!(ev[0]["kind"], "mission_started");
    assert_eq!(ev.last().unwrap()["detail"], "COMPLETED");
    for e in &ev {
        let keys: Vec<&String> = e.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 4);
    }
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("monitoring: "));
    assert!(stderr.contains("n/a"));
}

#[test]
fn unreachable_room_is_tolerated() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.txt");
    // (0.75, 1.75) lies beyond a wall spanning the whole grid.
    std::fs::write(&grid, "......\n......\n######\n......\n").unwrap();
    let mission = dir.path().join("m.txt");
    std::fs::write(&mission, exploration_mission(&[(0.75, 1.75), (2.75, 0.25)])).unwrap();
    let out = run(&mission, &grid, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ev = events(&out);
    let finished = |b: &str| {
        ev.iter()
            .filter(|e| e["kind"] == "finished" && e["behavior"] == b)
            .map(|e| e["detail"].as_str().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(
        finished(GENERATE_PATH),
        ["WRONG_PROGRESS no path", "GOAL_ACHIEVED"]
    );
    // Without a plan the first FOLLOW_PATH is refused, the second flies.
    assert!(ev
        .iter()
        .any(|e| e["kind"] == "rejected" && e["behavior"] == FOLLOW_PATH));
    assert_eq!(finished(FOLLOW_PATH), ["GOAL_ACHIEVED"]);
    assert_eq!(finished(TAKE_OFF), ["GOAL_ACHIEVED"]);
    // GENERATE_PATH failed, then FOLLOW_PATH was refused.
    assert_eq!(
        ev.last().unwrap()["detail"],
        "COMPLETED with 2 tolerated failure(s)"
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerated failures: 2"));
}

#[test]
fn aborted_mission_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mission = dir.path().join("m.txt");
    // LAND while landed is refused and the mission aborts.
    std::fs::write(&mission, format!("{HOVER}\nLAND\n{TAKE_OFF}\n")).unwrap();
    let out = run(&mission, &demo("demo_grid.txt"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let ev = events(&out);
    assert!(!ev
        .iter()
        .any(|e| e["kind"] == "activated" && e["behavior"] == TAKE_OFF));
    assert!(String::from_utf8_lossy(&out.stderr).contains("abort reason"));
}

#[test]
fn errors_name_the_offending_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad_grid = dir.path().join("ragged.txt");
    std::fs::write(&bad_grid, "....\n...\n").unwrap();
    let out = run(&demo("demo.txt"), &bad_grid, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ragged.txt"));

    let bad_mission = dir.path().join("typo.txt");
    std::fs::write(&bad_mission, "TAKE_OF\n").unwrap();
    let out = run(&bad_mission, &demo("demo_grid.txt"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("typo.txt") && err.contains("line 1"), "{err}");

    let out = run(&dir.path().join("missing.txt"), &demo("demo_grid.txt"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));
}

#[test]
fn flag_validation() {
    let (m, g) = (demo("demo.txt"), demo("demo_grid.txt"));
    assert_eq!(run(&m, &g, &["--virtual-dt", "0.5"]).status.code(), Some(1));
    assert_eq!(run(&m, &g, &["--freq", "NOPE=10"]).status.code(), Some(1));
    assert_eq!(
        run(&m, &g, &["--systems", "nonexistent"]).status.code(),
        Some(1)
    );
    // A mission naming a behavior from a system that is not loaded.
    let out = run(&m, &g, &["--systems", "basic_quadrotor_behaviors"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown behavior"));
}

#[test]
fn frequency_override_keeps_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let (m, g) = (demo("demo.txt"), demo("demo_grid.txt"));
    let out = run(
        &m,
        &g,
        &[
            "--freq",
            &format!("{FOLLOW_PATH}=50"),
            "--metrics-out",
            csv.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("behavior,a,t1_us,t2_ms,t3_ms\n"));
    assert!(text.lines().any(|l| l.starts_with("FOLLOW_PATH,3,")));
}

#[test]
fn lists_behavior_systems() {
    let out = behexec(&["behaviors"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("navigation_with_grid: GENERATE_PATH_WITH_OCCUPANCY_GRID"));
}

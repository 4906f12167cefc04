//! CLI round trips and exit-code contract.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use tagloc::formats;
use tagloc::geometry::Pose2;
use tagloc::sim::presets;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tagloc"))
}

fn scenario_path(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("scenario.toml");
    formats::write_scenario(&p, &presets::path1(9)).unwrap();
    p
}

#[test]
fn build_map_output_feeds_localize() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_path(dir.path());

    // A mapping drive past the true tag layout, observations noise-free.
    let s = presets::path1(9);
    let mut session = String::new();
    for k in 0..60u64 {
        let robot = Pose2::new(0.4 * k as f64, 0.0, 0.0);
        writeln!(
            session,
            "[[poses]]\nepoch = {k}\nx = {}\ny = {}\ntheta = {}\n",
            robot.x, robot.y, robot.theta
        )
        .unwrap();
    }
    for k in 0..60u64 {
        let robot = Pose2::new(0.4 * k as f64, 0.0, 0.0);
        for (id, tag) in &s.tag_layout.entries {
            if robot.position_distance(tag) > 4.0 {
                continue;
            }
            let rel = robot.inverse().compose(tag);
            writeln!(
                session,
                "[[observations]]\nepoch = {k}\ntag_id = {id}\nx = {}\ny = {}\ntheta = {}\ninfo = [1.0, 1.0, 1.0]\n",
                rel.x, rel.y, rel.theta
            )
            .unwrap();
        }
    }
    let session_path = dir.path().join("session.toml");
    std::fs::write(&session_path, session).unwrap();

    let map_path = dir.path().join("map.toml");
    let st = bin()
        .args(["build-map", "--session"])
        .arg(&session_path)
        .arg("--out")
        .arg(&map_path)
        .status()
        .unwrap();
    assert!(st.success());

    // The built map matches the layout it was observed from.
    let built = formats::read_tag_map(&map_path).unwrap();
    for (id, tag) in &built.entries {
        assert!(s.tag_layout.entries[id].position_distance(tag) < 1e-9);
    }

    // And localize accepts it unchanged.
    let out = dir.path().join("loc");
    let st = bin()
        .args(["localize", "--methods", "SCIF-Full", "--scenario"])
        .arg(&scenario)
        .arg("--map")
        .arg(&map_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    assert!(out.join("summary.csv").exists());
}

#[test]
fn parse_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = 'x'\n").unwrap();
    let st = bin()
        .args(["simulate", "--scenario"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn unknown_method_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_path(dir.path());
    let st = bin()
        .args(["localize", "--methods", "NoSuchMethod", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(4));
}

#[test]
fn empty_session_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("empty.toml");
    std::fs::write(&session, "poses = []\nobservations = []\n").unwrap();
    let st = bin()
        .args(["build-map", "--session"])
        .arg(&session)
        .arg("--out")
        .arg(dir.path().join("map.toml"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

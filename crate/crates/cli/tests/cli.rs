use std::path::Path;
use std::process::{Command, Output};

fn deformcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deformcap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FAST: &str = r#"{
  "object_pose": {"population_size": 30, "iterations": 3},
  "deform": {"outer_iterations": 1, "inner_iterations": 2},
  "voxel_mm": 2.0
}"#;

fn synth(dir: &Path, frames: &str) -> String {
    let out = dir.join("data");
    let o = deformcap(&["synth", "--scenario", "press", "--frames", frames, "--views", "3", "--seed", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = String::from_utf8(o.stdout).unwrap().trim().to_string();
    assert!(Path::new(&manifest).is_file());
    manifest
}

#[test]
fn pipeline_runs_with_config_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "2");
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, FAST).unwrap();
    let run = tmp.path().join("run");
    let dump = tmp.path().join("dump");
    let o = deformcap(&[
        "pipeline", "--manifest", &manifest, "--config", s(&cfg), "--out", s(&run), "--pop", "20", "--dump-render", s(&dump),
    ]);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(0), "{stderr}");
    assert!(stderr.contains("\"population_size\": 20"), "CLI overrides the config file");
    assert!(stderr.contains("\"iterations\": 3"), "config file overrides defaults");
    for f in ["pose_0.json", "pose_1.json", "object_1.obj", "hand_1.obj", "contactmap_1.csv", "trace_1.csv", "report.json", "timings.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert!(dump.join("render_0001_02.pgm").is_file());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("joint_error_mean_mm"));

    let csv = tmp.path().join("report.csv");
    let o = deformcap(&["eval", "--pred", s(&run), "--gt", &manifest, "--report", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().count() >= 3, "{text}");
}

#[test]
fn stage_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "2");
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, FAST).unwrap();
    let (poses, objpose, meshes, maps) = (tmp.path().join("poses"), tmp.path().join("objpose"), tmp.path().join("meshes"), tmp.path().join("maps"));
    let steps: Vec<Vec<&str>> = vec![
        vec!["hand-track", "--manifest", &manifest, "--out", s(&poses), "--conf-thresh", "0.6", "--smooth-alpha", "0.7"],
        vec!["object-pose", "--manifest", &manifest, "--hand", s(&poses), "--out", s(&objpose), "--config", s(&cfg), "--init", "uniform", "--seed", "3"],
        vec!["deform", "--manifest", &manifest, "--objpose", s(&objpose), "--hand", s(&poses), "--out", s(&meshes), "--config", s(&cfg), "--lambdas", "5,5,1,1,2", "--node-spacing", "15"],
        vec!["contact-map", "--manifest", &manifest, "--objpose", s(&objpose), "--meshes", s(&meshes), "--out", s(&maps)],
    ];
    for args in steps {
        let o = deformcap(&args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(poses.join("hand_1.obj").is_file());
    assert!(objpose.join("pose_1.json").is_file());
    assert!(meshes.join("object_1.obj").is_file() && meshes.join("trace_1.csv").is_file());
    let map = std::fs::read_to_string(maps.join("contactmap_1.csv")).unwrap();
    assert!(map.lines().count() > 100);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = deformcap(&["pipeline", "--manifest", s(&missing), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(3));

    let manifest = synth(tmp.path(), "2");
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"object_pose": {"populaton_size": 3}}"#).unwrap();
    let o = deformcap(&["pipeline", "--manifest", &manifest, "--config", s(&bad), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(3));

    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, FAST).unwrap();
    std::fs::remove_file(tmp.path().join("data/masks/mask_0001_01.pgm")).unwrap();
    let o = deformcap(&["pipeline", "--manifest", &manifest, "--config", s(&cfg), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("frame 1, stage object_pose"), "{stderr}");
}

#[test]
fn table1_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t1");
    let o = deformcap(&["synth", "--scenario", "table1", "--seed", "1", "--out", s(&out)]);
    assert!(o.status.success());
    assert!(out.join("table1.json").is_file() && out.join("cameras_10.json").is_file());
}

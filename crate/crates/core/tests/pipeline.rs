//! End-to-end runs of the pipeline on a small synthetic press sequence.

use std::path::{Path, PathBuf};

use deformcap::io::obj::load_mesh;
use deformcap::io::outputs::{contact_map_path, hand_mesh_path, load_pose, object_mesh_path, pose_path, trace_path};
use deformcap::object_pose::PoseSample;
use deformcap::pipeline::{
    evaluate_run, exit_code, run_contact_stage, run_deform_stage, run_hand_stage, run_object_stage, run_pipeline,
    PipelineConfig, SequenceInputs, STAGE_OBJECT,
};
use deformcap::synth::{make_press_sequence, write_scene};
use deformcap::Error;

const FRAMES: usize = 3;

fn fast_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.object_pose.population_size = 40;
    cfg.object_pose.iterations = 4;
    cfg.deform.outer_iterations = 2;
    cfg.deform.inner_iterations = 3;
    cfg.voxel_mm = 2.0;
    cfg
}

fn scene(dir: &Path) -> PathBuf {
    write_scene(&make_press_sequence(FRAMES, 4, 5), &dir.join("data"), 30.0).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn full_run_writes_every_frame_and_matches_the_stage_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = SequenceInputs::load(&scene(tmp.path())).unwrap();
    let cfg = fast_config();
    let run = tmp.path().join("run");
    let summary = run_pipeline(&inputs, &cfg, &run, false).unwrap();
    assert_eq!(summary.timings.frames_run, FRAMES);
    assert_eq!(summary.report.frames.len(), FRAMES);
    assert!(summary.report.aggregate.joint_error_mean_mm.is_some());
    for f in 0..FRAMES {
        for p in [pose_path(&run, f), object_mesh_path(&run, f), hand_mesh_path(&run, f), trace_path(&run, f), contact_map_path(&run, f)] {
            assert!(p.is_file(), "{}", p.display());
        }
    }
    assert!(run.join("report.json").is_file() && run.join("config.json").is_file());

    let hand = tmp.path().join("hand");
    let objpose = tmp.path().join("objpose");
    let meshes = tmp.path().join("meshes");
    let maps = tmp.path().join("maps");
    run_hand_stage(&inputs, &cfg, &hand).unwrap();
    run_object_stage(&inputs, Some(&hand), &cfg, &objpose).unwrap();
    run_deform_stage(&inputs, &objpose, Some(&hand), &cfg, &meshes).unwrap();
    run_contact_stage(&inputs, &objpose, &meshes, &maps).unwrap();
    for f in 0..FRAMES {
        assert_eq!(read(&hand_mesh_path(&hand, f)), read(&hand_mesh_path(&run, f)));
        assert_eq!(read(&object_mesh_path(&meshes, f)), read(&object_mesh_path(&run, f)));
        assert_eq!(read(&trace_path(&meshes, f)), read(&trace_path(&run, f)));
        assert_eq!(read(&contact_map_path(&maps, f)), read(&contact_map_path(&run, f)));
        let full = load_pose(&pose_path(&run, f)).unwrap();
        assert_eq!(load_pose(&pose_path(&hand, f)).unwrap().hand_theta, full.hand_theta);
        assert_eq!(load_pose(&pose_path(&objpose, f)).unwrap().object_alpha, full.object_alpha);
    }
    let again = evaluate_run(&inputs, &run, cfg.voxel_mm).unwrap();
    assert_eq!(again, summary.report);
}

#[test]
fn disabled_deformation_leaves_rigid_templates() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = SequenceInputs::load(&scene(tmp.path())).unwrap();
    let mut cfg = fast_config();
    cfg.stages.deform = false;
    cfg.stages.contact_map = false;
    let run = tmp.path().join("run");
    run_pipeline(&inputs, &cfg, &run, false).unwrap();
    for f in 0..FRAMES {
        let alpha = load_pose(&pose_path(&run, f)).unwrap().object_alpha.unwrap();
        let expect = PoseSample::new(alpha).apply(&inputs.template);
        let mesh = load_mesh(&object_mesh_path(&run, f)).unwrap();
        assert_eq!(mesh.faces, expect.faces);
        for (a, b) in mesh.vertices.iter().zip(&expect.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!(!trace_path(&run, f).exists() && !contact_map_path(&run, f).exists());
    }
}

#[test]
fn missing_mask_aborts_in_the_object_stage_and_keeps_earlier_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = SequenceInputs::load(&scene(tmp.path())).unwrap();
    std::fs::remove_file(inputs.manifest.resolve(&inputs.manifest.frames[1].masks[2])).unwrap();
    let run = tmp.path().join("run");
    let err = run_pipeline(&inputs, &fast_config(), &run, false).unwrap_err();
    match &err {
        Error::Stage { frame, stage, .. } => {
            assert_eq!(*frame, 1);
            assert_eq!(*stage, STAGE_OBJECT);
        }
        other => panic!("unexpected error {other}"),
    }
    assert_eq!(exit_code(&err), 2);
    assert!(pose_path(&run, 0).is_file());
    assert!(!pose_path(&run, 1).exists());
}

#[test]
fn resume_after_the_last_frame_only_rewrites_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = SequenceInputs::load(&scene(tmp.path())).unwrap();
    let cfg = fast_config();
    let run = tmp.path().join("run");
    let first = run_pipeline(&inputs, &cfg, &run, false).unwrap();
    let pose = read(&pose_path(&run, FRAMES - 1));
    let second = run_pipeline(&inputs, &cfg, &run, true).unwrap();
    assert_eq!(second.timings.frames_skipped, FRAMES);
    assert_eq!(second.timings.frames_run, 0);
    assert_eq!(first.report, second.report);
    assert_eq!(pose, read(&pose_path(&run, FRAMES - 1)));
}

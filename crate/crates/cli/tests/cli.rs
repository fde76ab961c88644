use std::path::{Path, PathBuf};
use std::process::Command;

use fvv_cli::{load_config, orbit_reference, run_pipeline, run_stage, validate_config, Layout, OrbitRequest, Overrides, RenderRequest, Stage, StageError, StageOptions};
use fvv_core::scene::{import_scene, select_reference, VirtualView};
use nalgebra::Point3;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Temp directory holding copies of the fixture scene and pipeline config.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for name in ["synth_scene.json", "pipeline.json"] {
        std::fs::copy(fixtures().join(name), dir.path().join(name)).unwrap();
    }
    let cfg = dir.path().join("pipeline.json");
    (dir, cfg)
}

fn with_json(src: &Path, dst: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(src).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(dst, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn fields(v: &[fvv_cli::Violation]) -> Vec<&str> {
    v.iter().map(|x| x.field.as_str()).collect()
}

#[test]
fn shipped_configs_validate() {
    for name in ["pipeline.json", "content1.json", "content2.json"] {
        validate_config(&fixtures().join(name)).unwrap_or_else(|v| panic!("{name}: {v:?}"));
    }
}

#[test]
fn full_size_volumes_exceed_the_default_voxel_budget() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["content1.json", "content2.json"] {
        let dst = dir.path().join(name);
        with_json(&fixtures().join(name), &dst, |v| {
            v["volume"].as_object_mut().unwrap().remove("voxel_budget");
        });
        let err = validate_config(&dst).unwrap_err();
        assert_eq!(fields(&err), ["volume.voxel_budget"], "{name}");
    }
}

#[test]
fn every_violation_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let dst = dir.path().join("bad.json");
    with_json(&fixtures().join("pipeline.json"), &dst, |v| {
        v["volume"]["voxel_size"] = (-0.1).into();
        v["thresholds"]["tau"] = 300.into();
        v["thresholds"]["t_max"] = 10.into();
    });
    let err = validate_config(&dst).unwrap_err();
    let f = fields(&err);
    for want in ["volume.voxel_size", "thresholds.tau", "thresholds.t_max"] {
        assert!(f.contains(&want), "{want} missing from {f:?}");
    }
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let dst = dir.path().join("bad.json");
    std::fs::write(&dst, "{\n  \"paths\": {\n    \"frames\": 3,\n").unwrap();
    let err = validate_config(&dst).unwrap_err();
    assert_eq!(err.len(), 1);
    assert!(err[0].message.contains("line "), "{}", err[0].message);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let dst = dir.path().join("bad.json");
    with_json(&fixtures().join("pipeline.json"), &dst, |v| {
        v["volume"]["voxelsize"] = 0.1.into();
    });
    assert!(validate_config(&dst).is_err());
}

#[test]
fn binary_exit_codes() {
    let (dir, cfg) = workspace();
    let fvv = env!("CARGO_BIN_EXE_fvv");

    let out = Command::new(fvv).args(["carve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(StageError::EXIT_MISSING_INPUT as i32));
    assert!(String::from_utf8_lossy(&out.stderr).contains("masks"));

    let bad = dir.path().join("bad.json");
    with_json(&cfg, &bad, |v| v["thresholds"]["tau"] = 999.into());
    let out = Command::new(fvv).args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(StageError::EXIT_CONFIG as i32));
    assert!(String::from_utf8_lossy(&out.stderr).contains("thresholds.tau"));

    let out = Command::new(fvv).args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
}

#[test]
fn missing_masks_is_a_missing_input() {
    let (_dir, cfg) = workspace();
    let cfg = load_config(&cfg, &Overrides::default()).unwrap();
    let err = run_stage(Stage::Carve, &cfg, &StageOptions::default()).unwrap_err();
    assert!(matches!(err, StageError::MissingInput { stage: Stage::Carve, .. }), "{err}");
    // the failure is still logged
    let log = std::fs::read_to_string(Layout::new(&cfg.paths.output).run_log()).unwrap();
    assert!(log.contains("\"status\":\"error\""));
}

#[test]
fn pipeline_render_orbit_and_rerun() {
    let (_dir, cfg_path) = workspace();
    let cfg = load_config(&cfg_path, &Overrides::default()).unwrap();
    let layout = Layout::new(&cfg.paths.output);
    run_stage(Stage::Synth, &cfg, &StageOptions::default()).unwrap();
    let reports = run_pipeline(&cfg, &StageOptions::default()).unwrap();
    assert_eq!(reports.iter().map(|r| r.stage).collect::<Vec<_>>(), Stage::PIPELINE);
    assert!(layout.scene_dir().join("scene.json").exists());

    // render writes exactly the requested image
    let out_png = cfg.paths.output.join("view.png");
    let opts = StageOptions {
        frame: Some(0),
        render: RenderRequest {
            view: Some([0.0, -20.0, 6.0]),
            look_at: Some([0.0, 0.0, 1.0]),
            fov_deg: Some(35.0),
            size: Some((160, 90)),
            output: Some(out_png.clone()),
        },
    };
    let report = run_stage(Stage::Render, &cfg, &opts).unwrap();
    assert_eq!(report.outputs, std::slice::from_ref(&out_png));
    assert_eq!(image::image_dimensions(&out_png).unwrap(), (160, 90));

    // render without a viewpoint is a configuration error
    let err = run_stage(Stage::Render, &cfg, &StageOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), StageError::EXIT_CONFIG);

    // orbit oracle agrees with reference selection on the exported rig
    let req = OrbitRequest { center: [0.0, 0.0, 1.0], radius: 30.0, height: 8.0, steps: 72, output: None };
    let (path, samples) = orbit_reference(&cfg, &req).unwrap();
    assert_eq!(path, layout.orbit_reference());
    assert_eq!(samples.len(), 72);
    let scene = import_scene(&layout.scene_dir()).unwrap();
    for s in &samples {
        let view = VirtualView::new(Point3::from(s.position), Point3::from(s.look_at), 0.7, 64, 64).unwrap();
        assert_eq!(s.reference, select_reference(&scene.rig, &view).unwrap());
    }
    let distinct: std::collections::BTreeSet<u32> = samples.iter().map(|s| s.reference).collect();
    assert_eq!(distinct.len(), scene.rig.len(), "a full orbit passes every camera");

    // rerunning a stage reproduces its outputs
    let before: Vec<Vec<u8>> = reports[1].outputs.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let again = run_stage(Stage::Carve, &cfg, &StageOptions::default()).unwrap();
    assert_eq!(again.outputs, reports[1].outputs);
    let after: Vec<Vec<u8>> = again.outputs.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert!(before == after);

    // a held lock blocks the stage and is left in place
    std::fs::write(layout.lock(), b"other").unwrap();
    let err = run_stage(Stage::Mesh, &cfg, &StageOptions::default()).unwrap_err();
    assert!(matches!(err, StageError::Locked { .. }), "{err}");
    assert_eq!(std::fs::read(layout.lock()).unwrap(), b"other");
    std::fs::remove_file(layout.lock()).unwrap();

    let log = std::fs::read_to_string(layout.run_log()).unwrap();
    let records: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(records.iter().any(|r| r["stage"] == "export" && r["status"] == "ok"));
    assert!(records.iter().all(|r| r["wall_ms"].is_number() && r["outputs"].is_array()));
}

#[test]
fn single_frame_selection_is_honored() {
    let (_dir, cfg_path) = workspace();
    let cfg = load_config(&cfg_path, &Overrides::default()).unwrap();
    run_stage(Stage::Synth, &cfg, &StageOptions::default()).unwrap();
    let err = run_stage(Stage::Segment, &cfg, &StageOptions { frame: Some(7), ..Default::default() }).unwrap_err();
    assert!(err.exit_code() != 0, "{err}");
    let report = run_stage(Stage::Segment, &cfg, &StageOptions { frame: Some(0), ..Default::default() }).unwrap();
    assert_eq!(report.frames, [0]);
}

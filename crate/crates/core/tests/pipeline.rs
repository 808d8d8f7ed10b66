mod common;

use std::fs;
use std::path::Path;
use std::time::Duration;

use anonbench::dataset::DetectionSet;
use anonbench::imaging::{read_image, write_image, ImageBuffer};
use anonbench::pipeline::{
    discover_frames, run, DetectionSource, FrameStatus, PipelineConfig, PipelineError, MANIFEST_FILE,
};

fn gray(w: usize, h: usize, v: u8) -> ImageBuffer {
    ImageBuffer::filled(w, h, 1, v).unwrap()
}

fn echo_argv(dets: &Path, extra: &[&str]) -> Vec<String> {
    let mut argv = vec![
        env!("CARGO_BIN_EXE_echo-detector").to_string(),
        "--detections".into(),
        dets.display().to_string(),
    ];
    argv.extend(extra.iter().map(|s| s.to_string()));
    argv
}

fn synthetic_run_setup(n: usize, seed: u64) -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
    let root = tempfile::tempdir().unwrap();
    let input = root.path().join("in");
    let dets = common::write_synthetic_set(&input, n, seed);
    let det_file = root.path().join("dets.json");
    dets.save(&det_file).unwrap();
    (root, input, det_file)
}

#[test]
fn discovery_is_sorted_and_uses_relative_ids() {
    let dir = tempfile::tempdir().unwrap();
    write_image(&dir.path().join("b.ppm"), &ImageBuffer::filled(2, 2, 3, 0).unwrap()).unwrap();
    write_image(&dir.path().join("a.pgm"), &gray(2, 2, 0)).unwrap();
    fs::create_dir_all(dir.path().join("cam/night")).unwrap();
    write_image(&dir.path().join("cam/night/c.png"), &gray(2, 2, 0)).unwrap();
    fs::write(dir.path().join("notes.txt"), "x").unwrap();

    let ids: Vec<String> = discover_frames(dir.path()).unwrap().into_iter().map(|f| f.frame_id).collect();
    assert_eq!(ids, ["a", "b", "cam/night/c"]);
}

#[test]
fn discovery_without_frames_is_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("readme.txt"), "no frames here").unwrap();
    assert!(matches!(discover_frames(dir.path()), Err(PipelineError::EmptyInput(_))));
}

#[test]
fn three_frame_run_writes_outputs_and_manifest() {
    let (root, input, det_file) = synthetic_run_setup(3, 11);
    let out = root.path().join("out");
    let cfg = PipelineConfig::new(input.clone(), out.clone(), DetectionSource::File(det_file));
    let manifest = run(&cfg).unwrap();

    assert_eq!(manifest.frames.len(), 3);
    assert_eq!(manifest.totals.succeeded, 3);
    assert!(!manifest.has_failures());
    for frame in discover_frames(&input).unwrap() {
        let written = out.join(&frame.relative);
        assert!(written.is_file(), "missing {}", written.display());
        let before = read_image(&frame.path).unwrap();
        let after = read_image(&written).unwrap();
        assert_eq!((before.width(), before.height(), before.channels()), (after.width(), after.height(), after.channels()));
    }
    let on_disk: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk["frames"].as_array().unwrap().len(), 3);
    assert_eq!(on_disk["frames"][0]["status"], "ok");
    assert!(on_disk["frames"][0]["digest"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn reruns_produce_identical_digests() {
    let (root, input, det_file) = synthetic_run_setup(6, 12);
    let digests = |name: &str, workers: usize| {
        let mut cfg = PipelineConfig::new(input.clone(), root.path().join(name), DetectionSource::File(det_file.clone()));
        cfg.workers = workers;
        run(&cfg).unwrap().frames.into_iter().map(|f| (f.frame_id, f.digest)).collect::<Vec<_>>()
    };
    let first = digests("a", 1);
    assert_eq!(first, digests("b", 1));
    assert_eq!(first, digests("c", 8));
}

#[test]
fn output_dir_inside_input_dir_is_skipped() {
    let (_root, input, det_file) = synthetic_run_setup(3, 13);
    let cfg = PipelineConfig::new(input.clone(), input.join("anon"), DetectionSource::File(det_file));
    run(&cfg).unwrap();
    // second run must not pick up the first run's outputs
    assert_eq!(run(&cfg).unwrap().frames.len(), 3);
}

#[test]
fn region_counts_account_for_every_admitted_detection() {
    let (root, input, det_file) = synthetic_run_setup(8, 14);
    let cfg = PipelineConfig::new(input, root.path().join("out"), DetectionSource::File(det_file));
    let manifest = run(&cfg).unwrap();
    for f in &manifest.frames {
        let regions: usize = f.regions.values().sum();
        assert_eq!(regions + f.regions_outside_image, f.detections_admitted, "{}", f.frame_id);
    }
}

#[test]
fn command_detector_matches_file_detector() {
    let (root, input, det_file) = synthetic_run_setup(5, 15);
    let file = run(&PipelineConfig::new(input.clone(), root.path().join("f"), DetectionSource::File(det_file.clone()))).unwrap();
    let mut cmd_cfg = PipelineConfig::new(input, root.path().join("c"), DetectionSource::Command(echo_argv(&det_file, &[])));
    cmd_cfg.workers = 2;
    let cmd = run(&cmd_cfg).unwrap();
    let key = |m: &anonbench::pipeline::RunManifest| {
        m.frames.iter().map(|f| (f.frame_id.clone(), f.digest.clone(), f.regions.clone())).collect::<Vec<_>>()
    };
    assert_eq!(key(&file), key(&cmd));
}

#[test]
fn malformed_detector_response_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(&input).unwrap();
    write_image(&input.join("a.pgm"), &gray(16, 16, 50)).unwrap();
    let script = r#"while read line; do echo '{"frame_id":"a","detections":[{"category":"face","bbox":[1,1,4,4]}]}'; done"#;
    let cfg = PipelineConfig::new(
        input,
        dir.path().join("out"),
        DetectionSource::Command(vec!["sh".into(), "-c".into(), script.into()]),
    );
    let err = run(&cfg).unwrap_err();
    let message = err.to_string();
    assert!(matches!(err, PipelineError::Frame { .. }), "{message}");
    assert!(message.contains("score"), "{message}");
}

#[test]
fn slow_detector_times_out_and_is_recorded() {
    let (root, input, det_file) = synthetic_run_setup(2, 16);
    let mut cfg = PipelineConfig::new(
        input,
        root.path().join("out"),
        DetectionSource::Command(echo_argv(&det_file, &["--sleep-ms", "2000"])),
    );
    cfg.detector_timeout = Duration::from_millis(100);
    cfg.skip_failed = true;
    let manifest = run(&cfg).unwrap();
    assert_eq!(manifest.totals.failed, 2);
    for f in &manifest.frames {
        match &f.status {
            FrameStatus::Failed { error } => assert!(error.contains("no response within"), "{error}"),
            FrameStatus::Ok => panic!("{} should have timed out", f.frame_id),
        }
        assert!(f.digest.is_none());
    }
}

#[test]
fn corrupt_frame_is_skipped_or_fatal() {
    let (root, input, det_file) = synthetic_run_setup(4, 17);
    fs::write(input.join("broken.ppm"), b"P6\n4 4\n255\nxx").unwrap();

    let mut cfg = PipelineConfig::new(input.clone(), root.path().join("skip"), DetectionSource::File(det_file.clone()));
    cfg.skip_failed = true;
    let manifest = run(&cfg).unwrap();
    assert_eq!((manifest.totals.succeeded, manifest.totals.failed), (4, 1));
    let broken = manifest.frames.iter().find(|f| f.frame_id == "broken").unwrap();
    assert!(matches!(broken.status, FrameStatus::Failed { .. }));
    assert!(!root.path().join("skip/broken.ppm").exists());

    let strict_out = root.path().join("strict");
    let cfg = PipelineConfig::new(input, strict_out.clone(), DetectionSource::File(det_file));
    match run(&cfg) {
        Err(PipelineError::Frame { frame_id, .. }) => assert_eq!(frame_id, "broken"),
        other => panic!("expected frame failure, got {other:?}"),
    }
    assert!(!strict_out.join(MANIFEST_FILE).exists());
}

#[test]
fn frames_without_detections_pass_through_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(&input).unwrap();
    let img = ImageBuffer::new(8, 8, 1, (0..64).map(|v| v as u8 * 3).collect()).unwrap();
    write_image(&input.join("x.pgm"), &img).unwrap();
    let det_file = dir.path().join("dets.json");
    DetectionSet::default().save(&det_file).unwrap();
    run(&PipelineConfig::new(input.clone(), dir.path().join("out"), DetectionSource::File(det_file))).unwrap();
    assert_eq!(fs::read(input.join("x.pgm")).unwrap(), fs::read(dir.path().join("out/x.pgm")).unwrap());
}

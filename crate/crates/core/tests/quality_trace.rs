use std::fs;

use reconsim::controller::ExperimentConfig;
use reconsim::environment::{CameraMask, QualityModel};
use reconsim::{run_episode, Error};

fn all_masks() -> Vec<CameraMask> {
    CameraMask::all_with_count(5, 2, 5)
}

#[test]
fn full_column_set_answers_every_lookup() {
    let masks = all_masks();
    assert_eq!(masks.len(), 26);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("quality.csv");
    let mut csv = String::from("frame");
    for m in &masks {
        csv.push_str(&format!(",{m}"));
    }
    csv.push('\n');
    for f in 0..3 {
        csv.push_str(&f.to_string());
        for (i, _) in masks.iter().enumerate() {
            csv.push_str(&format!(",{}", 100 * f + i));
        }
        csv.push('\n');
    }
    fs::write(&path, csv).unwrap();
    let model = QualityModel::load_trace(&path, 5, 5).unwrap();
    for f in 0..3 {
        for (i, m) in masks.iter().enumerate() {
            assert_eq!(model.quality(f, m).unwrap(), (100 * f + i) as f64);
        }
    }
    assert_eq!(model.quality(0, &CameraMask::from_indices(&[2], 5)).unwrap(), 0.0);
}

#[test]
fn missing_columns_are_listed_at_load_time() {
    let masks = all_masks();
    let keep: Vec<_> = masks
        .iter()
        .filter(|m| m.to_string() != "11000" && m.to_string() != "01111")
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("quality.csv");
    let header: Vec<String> = keep.iter().map(|m| m.to_string()).collect();
    let row = vec!["500"; keep.len()].join(",");
    fs::write(&path, format!("frame,{}\n0,{row}\n", header.join(","))).unwrap();
    let err = QualityModel::load_trace(&path, 5, 5).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Schema(_)), "{msg}");
    assert!(msg.contains("11000") && msg.contains("01111"), "{msg}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn negative_cell_is_a_parse_error() {
    let masks = all_masks();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("quality.csv");
    let header: Vec<String> = masks.iter().map(|m| m.to_string()).collect();
    let mut cells = vec!["500".to_string(); masks.len()];
    cells[4] = "-1".into();
    fs::write(&path, format!("frame,{}\n0,{}\n", header.join(","), cells.join(","))).unwrap();
    match QualityModel::load_trace(&path, 5, 5).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn synthetic_model_replays_through_a_trace() {
    let mut cfg = ExperimentConfig {
        n_frames: 300,
        ..ExperimentConfig::camera_comparison()
    }
    .with_seed(5);
    cfg.quality.noise_sd = 0.0;
    let env = cfg.build_environment().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("quality.csv");
    fs::write(&path, env.quality.to_trace_csv(cfg.n_frames, &all_masks()).unwrap()).unwrap();

    let mut replay = cfg.clone();
    replay.quality.trace = Some(path);
    let env2 = replay.build_environment().unwrap();
    assert!(matches!(env2.quality, QualityModel::Trace(_)));
    for f in (0..cfg.n_frames).step_by(7) {
        for m in all_masks() {
            for s in 0..4 {
                assert_eq!(env.step(f, &m, s).unwrap(), env2.step(f, &m, s).unwrap());
            }
        }
    }
    let a = run_episode(&cfg).unwrap().frame_log_csv();
    let b = run_episode(&replay).unwrap().frame_log_csv();
    assert_eq!(a, b);
}

#[test]
fn short_quality_trace_is_a_config_error() {
    let cfg = ExperimentConfig {
        n_frames: 50,
        ..ExperimentConfig::default()
    };
    let env = cfg.build_environment().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("quality.csv");
    fs::write(&path, env.quality.to_trace_csv(10, &all_masks()).unwrap()).unwrap();
    let mut replay = cfg;
    replay.quality.trace = Some(path);
    assert_eq!(replay.build_environment().unwrap_err().exit_code(), 2);
}

use dualtrack::baseline::dead_reckoning_track;
use dualtrack::eval::{compute_errors, drift_ratio};
use dualtrack::features::{
    export_training_set, read_features, read_training_set, synthesize_features, write_features, DeviceLayout,
    SynthesisConfig, TdofSource,
};
use dualtrack::fusion::{read_result, track, weights_from_noise, write_result, SolverConfig};
use dualtrack::geometry::{Arena, LinkGeometry, Point2D, SpeakerPair};
use dualtrack::search::{find_start, SearchConfig};
use dualtrack::trajectory::{
    generate_shape, read_trajectory, sample_trajectory, write_trajectory, MotionProfile, SampledTrajectory, Shape,
};

fn layout() -> DeviceLayout {
    let p = Point2D::new;
    DeviceLayout {
        arena: Arena::new(0.0, 6.0, 0.0, 6.0).unwrap(),
        links: vec![
            LinkGeometry::los(p(0.0, 0.0), p(6.0, 0.0)).unwrap(),
            LinkGeometry::los(p(0.0, 0.0), p(0.0, 6.0)).unwrap(),
        ],
        speakers: SpeakerPair::new(p(2.5, 0.0), p(3.5, 0.0)).unwrap(),
    }
}

fn walk(laps: usize) -> SampledTrajectory {
    let path = generate_shape(Shape::Square, Point2D::new(3.0, 3.0), 4.0, laps).unwrap();
    sample_trajectory(&path, &MotionProfile::default(), 100.0).unwrap()
}

fn quiet() -> SynthesisConfig {
    let mut cfg = SynthesisConfig {
        plcr_noise: false,
        tdof_noise: false,
        tdof_source: TdofSource::Oracle,
        ..SynthesisConfig::default()
    };
    cfg.acoustic.receiver_noise = 0.0;
    cfg
}

#[test]
fn files_round_trip_through_tracking() {
    let dir = tempfile::tempdir().unwrap();
    let truth = walk(2);
    let l = layout();
    let f = synthesize_features(&truth, &l, &SynthesisConfig::default(), 11).unwrap();

    write_trajectory(&dir.path().join("truth.csv"), &truth).unwrap();
    write_features(&dir.path().join("features.csv"), &f).unwrap();
    let truth_back = read_trajectory(&dir.path().join("truth.csv")).unwrap();
    let f_back = read_features(&dir.path().join("features.csv")).unwrap();
    assert_eq!(f_back, f);

    let w = weights_from_noise(0.05, 1e-4, 343.0).unwrap();
    let out = track(&f_back, &l.links, &l.speakers, truth.positions[0], &w, &SolverConfig::default(), &l.arena)
        .unwrap();
    write_result(&dir.path().join("result.csv"), &out, Some(&truth_back)).unwrap();
    let est = read_result(&dir.path().join("result.csv")).unwrap();
    let report = compute_errors(&est, &truth_back).unwrap();
    assert_eq!(report.laps(), 2);
    assert!(report.median < 0.05, "{}", report.median);
}

#[test]
fn fusion_holds_drift_the_baseline_accumulates() {
    let truth = walk(4);
    let l = layout();
    let w = weights_from_noise(0.05, 1e-4, 343.0).unwrap();
    let (mut fused, mut dead) = (0.0, 0.0);
    for seed in 0..4 {
        let f = synthesize_features(&truth, &l, &SynthesisConfig::default(), seed).unwrap();
        let start = truth.positions[0];
        let a = track(&f, &l.links, &l.speakers, start, &w, &SolverConfig::default(), &l.arena).unwrap();
        let b = dead_reckoning_track(&f, &l.links, start, &l.arena).unwrap();
        let ra = compute_errors(&a.trajectory, &truth).unwrap();
        let rb = compute_errors(&b.trajectory, &truth).unwrap();
        fused += ra.per_lap_median[3];
        dead += rb.per_lap_median[3];
        assert!(drift_ratio(&rb).unwrap().value > 1.0);
    }
    assert!(fused < 0.5 * dead, "{fused} vs {dead}");
}

#[test]
fn search_recovers_the_start_of_a_quiet_walk() {
    let truth = walk(1);
    let l = layout();
    let f = synthesize_features(&truth, &l, &quiet(), 0).unwrap();
    let w = weights_from_noise(0.05, 1e-4, 343.0).unwrap();
    let solver = SolverConfig::default();
    let ctx = dualtrack::fusion::StepContext {
        links: &l.links,
        speakers: &l.speakers,
        weights: w,
        solver: &solver,
        arena: &l.arena,
    };
    let est = find_start(&f, &SearchConfig::default(), &ctx).unwrap();
    assert!(est.start.distance(truth.positions[0]) < 0.354, "{:?}", est.start);
    assert_eq!(est.coarse.loss_surface.len(), 625);
}

#[test]
fn training_corpus_pairs_features_with_positions() {
    let dir = tempfile::tempdir().unwrap();
    let l = layout();
    let walks = [walk(1), walk(1)];
    let streams: Vec<_> = walks
        .iter()
        .enumerate()
        .map(|(i, t)| synthesize_features(t, &l, &quiet(), i as u64).unwrap())
        .collect();
    let path = dir.path().join("corpus.csv");
    let n = export_training_set(&walks, &streams, &path).unwrap();
    assert_eq!(n, walks[0].len() + walks[1].len());
    let rows = read_training_set(&path).unwrap();
    assert_eq!(rows.len(), n);
    let last = rows.last().unwrap();
    assert_eq!(last.traj_id, 1);
    let end = walks[1].positions.last().unwrap();
    assert_eq!((last.x, last.y), (end.x, end.y));
}

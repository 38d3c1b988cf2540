use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualtrack::trajectory::read_trajectory;
use dualtrack_cli::config::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualtrack"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two links, default noise unless `noiseless`.
fn write_config(dir: &Path, noiseless: bool) -> PathBuf {
    let mut cfg = ExperimentConfig::default();
    cfg.layout.links.truncate(2);
    if noiseless {
        cfg.wifi.noise = false;
        cfg.acoustic.noise = false;
        cfg.acoustic.receiver_noise = 0.0;
    }
    let path = dir.join("exp.toml");
    fs::write(&path, cfg.to_text()).unwrap();
    path
}

fn summary_value(summary: &str, method: &str, col: usize) -> f64 {
    let line = summary
        .lines()
        .find(|l| l.starts_with(&format!("{method},")))
        .expect("summary line");
    line.split(',').nth(col).unwrap().parse().unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), false);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["simulate", "--config", s(&cfg), "--seed", "7", "--out", s(out), "--waveforms", "1"]);
    }
    for f in ["truth.csv", "features.csv", "config.toml", "waveforms/frame_0000.f32", "waveforms/frame_0000.f32.hdr"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let c = dir.path().join("c");
    ok(&["simulate", "--config", s(&cfg), "--seed", "8", "--out", s(&c)]);
    assert_ne!(fs::read(a.join("features.csv")).unwrap(), fs::read(c.join("features.csv")).unwrap());
}

#[test]
fn feature_rows_follow_the_sample_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), false);
    let out = dir.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let truth = read_trajectory(&out.join("truth.csv")).unwrap();
    let features = fs::read_to_string(out.join("features.csv")).unwrap();
    let rows = features.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, truth.len());
    assert_eq!(rows, (truth.duration() * 100.0).round() as usize + 1);
}

#[test]
fn mode_flag_sets_the_header_tag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), false);
    for mode in ["los", "nlos"] {
        let out = dir.path().join(mode);
        ok(&["simulate", "--config", s(&cfg), "--mode", mode, "--out", s(&out)]);
        let text = fs::read_to_string(out.join("features.csv")).unwrap();
        assert!(text.lines().any(|l| l == format!("#mode={mode}")));
    }
}

#[test]
fn noiseless_tracking_and_search() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), true);
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let features = sim.join("features.csv");
    let truth = sim.join("truth.csv");
    let t = read_trajectory(&truth).unwrap();
    let init = format!("{},{}", t.positions[0].x, t.positions[0].y);

    let out = dir.path().join("known");
    let summary = ok(&[
        "track", "--config", s(&cfg), "--features", s(&features), "--truth", s(&truth),
        "--init", &init, "--out", s(&out),
    ]);
    assert!(summary_value(&summary, "fusion", 1) <= 0.05, "{summary}");
    let csv = fs::read_to_string(out.join("result_fusion.csv")).unwrap();
    assert!(csv.starts_with("t,x_true,y_true,x_est,y_est,error_m,E1,E2,confidence,snapped\n"));

    let out = dir.path().join("searched");
    ok(&[
        "track", "--config", s(&cfg), "--features", s(&features), "--search", "--out", s(&out),
    ]);
    let text = fs::read_to_string(out.join("summary_fusion.txt")).unwrap();
    let start = text.lines().find_map(|l| l.strip_prefix("start=")).unwrap();
    let (x, y) = start.split_once(',').unwrap();
    let d = (x.parse::<f64>().unwrap() - t.positions[0].x).hypot(y.parse::<f64>().unwrap() - t.positions[0].y);
    assert!(d <= 0.25, "found start {start} is {d} m off");

    let out = dir.path().join("surface");
    ok(&["search", "--config", s(&cfg), "--features", s(&features), "--out", s(&out)]);
    let surface = fs::read_to_string(out.join("loss_surface.csv")).unwrap();
    assert!(surface.starts_with("cand_x,cand_y,loss\n"));
    assert_eq!(surface.lines().count(), 1 + 25 * 25);
}

#[test]
fn baseline_drifts_more_than_fusion() {
    // Single runs are noisy, so compare drift averaged over a few seeds.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), false);
    let mut drift = [0.0f64; 2];
    for seed in 1..=4 {
        let sim = dir.path().join(format!("sim{seed}"));
        ok(&["simulate", "--config", s(&cfg), "--seed", &seed.to_string(), "--out", s(&sim)]);
        let t = read_trajectory(&sim.join("truth.csv")).unwrap();
        let init = format!("{},{}", t.positions[0].x, t.positions[0].y);
        for (i, method) in ["fusion", "baseline"].iter().enumerate() {
            let out = ok(&[
                "track", "--config", s(&cfg), "--features", s(&sim.join("features.csv")),
                "--truth", s(&sim.join("truth.csv")), "--init", &init, "--method", method,
                "--out", s(&dir.path().join("trk")),
            ]);
            drift[i] += summary_value(&out, method, 3) / 4.0;
        }
    }
    assert!(drift[1] > drift[0], "{drift:?}");
}

#[test]
fn evaluate_writes_tables_and_parseable_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), false);
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let truth_path = sim.join("truth.csv");
    let t = read_trajectory(&truth_path).unwrap();

    // A result that is the truth itself.
    let mut perfect = String::from("t,x_true,y_true,x_est,y_est,error_m,E1,E2,confidence,snapped\n");
    for (ts, p) in t.timestamps.iter().zip(&t.positions) {
        perfect.push_str(&format!("{ts},,,{},{},,0,0,0,0\n", p.x, p.y));
    }
    let perfect_path = dir.path().join("perfect.csv");
    fs::write(&perfect_path, perfect).unwrap();
    let init = format!("{},{}", t.positions[0].x, t.positions[0].y);
    let trk = dir.path().join("trk");
    ok(&[
        "track", "--config", s(&cfg), "--features", s(&sim.join("features.csv")),
        "--init", &init, "--method", "baseline", "--out", s(&trk),
    ]);

    let ev = dir.path().join("ev");
    let perfect_arg = format!("oracle={}", s(&perfect_path));
    ok(&[
        "evaluate", "--truth", s(&truth_path), "--result", &perfect_arg,
        "--result", s(&trk.join("result_baseline.csv")), "--out", s(&ev),
    ]);
    let summary = fs::read_to_string(ev.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("method,median_m,mean_m,drift_ratio,laps"));
    assert!(summary.lines().any(|l| l.starts_with("oracle,0.000000,0.000000,")));
    assert!(summary.lines().any(|l| l.starts_with("baseline,")));

    let cdf = fs::read_to_string(ev.join("cdf.csv")).unwrap();
    for l in cdf.lines().skip(1).filter(|l| l.starts_with("oracle,")) {
        assert_eq!(l.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.0);
    }
    let cmp = fs::read_to_string(ev.join("comparison.csv")).unwrap();
    assert_eq!(cmp.lines().count(), 3);

    for f in ["overlay.svg", "cdf.svg"] {
        let text = fs::read_to_string(ev.join(f)).unwrap();
        let doc = roxmltree::Document::parse(&text).expect(f);
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert!(lines >= 2, "{f} has {lines} polylines");
    }
}

#[test]
fn evaluate_rejects_misaligned_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), false);
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let short = dir.path().join("short.csv");
    fs::write(&short, "t,x_true,y_true,x_est,y_est,error_m,E1,E2,confidence,snapped\n0,,,1,1,,0,0,0,0\n").unwrap();
    let out = run(&[
        "evaluate", "--truth", s(&sim.join("truth.csv")), "--result", s(&short),
        "--out", s(&dir.path().join("ev")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "trajectory.size = -2.0\n").unwrap();
    let out = run(&["simulate", "--config", s(&bad), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trajectory"));

    let cfg = write_config(dir.path(), false);
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let out = run(&[
        "track", "--config", s(&cfg), "--features", s(&sim.join("features.csv")),
        "--out", s(&dir.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(1), "missing start must be rejected");

    let out = run(&["sweep", "--param", "links", "--values", "", "--out", s(&dir.path().join("sw"))]);
    assert_eq!(out.status.code(), Some(1), "empty sweep must be rejected");
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "track", "--features", s(&dir.path().join("absent.csv")), "--init", "1,1",
        "--out", s(&dir.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.trajectory.laps = 2;
    let path = dir.path().join("exp.toml");
    fs::write(&path, cfg.to_text()).unwrap();
    let mut tables = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("sw{i}"));
        ok(&[
            "sweep", "--config", s(&path), "--param", "noise", "--values", "0,0.05",
            "--seeds", "2", "--workers", workers, "--out", s(&out),
        ]);
        tables.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let text = String::from_utf8(tables.remove(0)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "parameter,value,method,median_m,mean_m,drift_ratio,laps,seeds,failures,start_error_m"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("noise,0,fusion,"));
}

//! Command-line surface. `main` only forwards to [`run`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use dualtrack::acoustic::{write_waveform, CrossChirpReceiver};
use dualtrack::eval::{
    cdf_csv, compare_methods, comparison_csv, compute_errors, lap_csv, summary_csv, summary_line, ErrorReport,
    SUMMARY_HEADER,
};
use dualtrack::features::{acoustic_frame_indices, read_features, write_features, FeatureStream};
use dualtrack::fsutil::write_atomic;
use dualtrack::fusion::{read_result, write_result};
use dualtrack::geometry::Point2D;
use dualtrack::search::{find_start_with, loss_surface_to_csv};
use dualtrack::seed::component_rng;
use dualtrack::trajectory::{read_trajectory, write_trajectory};
use dualtrack::Error;

use crate::config::ExperimentConfig;
use crate::experiment::{run_sweep, sweep_csv, Init, Method, RunOutput, Scenario, SweepParam, SweepSpec};
use crate::plot::{cdf_svg, overlay_svg};

#[derive(Debug, Parser)]
#[command(name = "dualtrack", version, about = "WiFi and acoustic fusion tracking experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a truth trajectory and its feature stream.
    Simulate(SimulateArgs),
    /// Track a feature stream.
    Track(TrackArgs),
    /// Search for the start position and dump the loss surface.
    Search(SearchArgs),
    /// Compare result files against the truth.
    Evaluate(EvaluateArgs),
    /// Run a parameter sweep over seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Los,
    Nlos,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Keep only the first N links of the layout.
    #[arg(long)]
    pub links: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    /// Dump the receiver windows of the first N acoustic frames.
    #[arg(long, default_value_t = 0)]
    pub waveforms: usize,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "fusion")]
    pub method: String,
    /// Known start as `x,y`.
    #[arg(long, conflicts_with_all = ["search", "segment"])]
    pub init: Option<String>,
    /// Find the start by grid search first.
    #[arg(long)]
    pub search: bool,
    /// Split the stream at acoustic gaps and search every chunk (fusion only).
    #[arg(long)]
    pub segment: bool,
    /// Truth CSV; adds error columns and a summary line.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config cell size (m).
    #[arg(long)]
    pub cell: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub truth: PathBuf,
    /// Result CSVs, optionally as `name=path`; the file stem names the rest.
    #[arg(long = "result", required = true)]
    pub results: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub param: String,
    /// Comma separated values; the parameter's defaults when omitted.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value = "fusion")]
    pub method: String,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure classes map to exit codes 1 (bad input) and 2 (runtime).
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::UnknownShape(_)
            | Error::SegmentTooShort { .. }
            | Error::LengthMismatch { .. }
            | Error::Misaligned { .. } => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

type CmdResult = std::result::Result<(), Failure>;

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Track(a) => track_cmd(&a),
        Command::Search(a) => search_cmd(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Sweep(a) => sweep(&a),
    }
}

/// Loads the config and applies the command-line overrides.
fn load_config(c: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.mode {
        cfg.layout.mode = match m {
            ModeArg::Los => "los",
            ModeArg::Nlos => "nlos",
        }
        .into();
    }
    if let Some(n) = c.links {
        if n == 0 || n > cfg.layout.links.len() {
            return Err(invalid(format!(
                "--links: asked for {n}, layout has {}",
                cfg.layout.links.len()
            )));
        }
        cfg.layout.links.truncate(n);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn make_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn parse_point(s: &str) -> std::result::Result<Point2D, Failure> {
    let bad = || invalid(format!("--init: expected `x,y`, got {s:?}"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    let x: f64 = x.trim().parse().map_err(|_| bad())?;
    let y: f64 = y.trim().parse().map_err(|_| bad())?;
    Ok(Point2D::new(x, y))
}

fn check_stream(scn: &Scenario, f: &FeatureStream) -> CmdResult {
    if f.mode != scn.layout.mode() {
        return Err(invalid(format!(
            "features are {} but the layout is {}; pass --mode",
            f.mode.as_str(),
            scn.layout.mode().as_str()
        )));
    }
    if f.links() != scn.layout.links.len() {
        return Err(invalid(format!(
            "features carry {} links but the layout has {}; pass --links",
            f.links(),
            scn.layout.links.len()
        )));
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> CmdResult {
    let cfg = load_config(&a.common)?;
    let scn = Scenario::from_config(&cfg)?;
    let features = scn.features(cfg.seed)?;
    make_dir(&a.out)?;
    write_trajectory(&a.out.join("truth.csv"), &scn.truth)?;
    write_features(&a.out.join("features.csv"), &features)?;
    write_text(&a.out.join("config.toml"), &cfg.to_text())?;
    if a.waveforms > 0 {
        let dir = a.out.join("waveforms");
        make_dir(&dir)?;
        let ac = scn.synthesis.acoustic;
        let rx = CrossChirpReceiver::new(&ac)?;
        let mut rng = component_rng(cfg.seed, "waveform_dump");
        let frames = acoustic_frame_indices(&scn.truth, ac.up.sweep_time);
        for (i, &k) in frames.iter().take(a.waveforms).enumerate() {
            let w = rx.render(
                scn.truth.positions[k],
                &scn.layout.speakers,
                scn.truth.timestamps[k],
                0.0,
                &mut rng,
            );
            write_waveform(&dir.join(format!("frame_{i:04}.f32")), &w)?;
        }
    }
    println!(
        "simulated {} samples, {} links ({}), seed {}",
        features.len(),
        features.links(),
        features.mode.as_str(),
        cfg.seed
    );
    Ok(())
}

fn track_cmd(a: &TrackArgs) -> CmdResult {
    let cfg = load_config(&a.common)?;
    let scn = Scenario::from_config(&cfg)?;
    let method: Method = a.method.parse()?;
    let features = read_features(&a.features)?;
    check_stream(&scn, &features)?;
    let truth = a.truth.as_deref().map(read_trajectory).transpose()?;

    let run: RunOutput = if a.segment {
        if method != Method::Fusion {
            return Err(invalid("--segment needs --method fusion"));
        }
        scn.run_segmented(&features)?
    } else {
        let init = match (&a.init, a.search) {
            (Some(s), false) => Init::Known(parse_point(s)?),
            (None, true) => Init::Search,
            _ => return Err(invalid("a start is required: pass --init x,y or --search")),
        };
        scn.run(&features, method, init)?
    };

    make_dir(&a.out)?;
    let name = method.as_str();
    write_result(&a.out.join(format!("result_{name}.csv")), &run.output, truth.as_ref())?;

    let mut s = String::new();
    let _ = writeln!(s, "method={name}");
    let _ = writeln!(s, "start={},{}", run.start.x, run.start.y);
    let _ = writeln!(s, "chunks={}", run.searches.len().max(1));
    for (i, e) in run.searches.iter().enumerate() {
        let _ = writeln!(
            s,
            "search.{i}=start {},{} coarse {},{} loss {} window {}",
            e.start.x,
            e.start.y,
            e.coarse.best.x,
            e.coarse.best.y,
            e.refined.as_ref().map_or(e.coarse.best_loss(), |r| r.best_loss()),
            e.window_len
        );
    }
    if let Some(t) = &truth {
        let report = compute_errors(&run.output.trajectory, t)?;
        let line = summary_line(name, &report);
        let _ = writeln!(s, "{SUMMARY_HEADER}\n{line}");
        println!("{line}");
    } else {
        println!("tracked {} samples with {name}", run.output.trajectory.len());
    }
    write_text(&a.out.join(format!("summary_{name}.txt")), &s)
}

fn search_cmd(a: &SearchArgs) -> CmdResult {
    let cfg = load_config(&a.common)?;
    let mut scn = Scenario::from_config(&cfg)?;
    if let Some(c) = a.cell {
        scn.search.cell_size = c;
        scn.search.validate()?;
    }
    let features = read_features(&a.features)?;
    check_stream(&scn, &features)?;
    let est = find_start_with(&features, &scn.search, &scn.ctx(), None)?;
    let surface = &est.coarse;
    make_dir(&a.out)?;
    write_text(&a.out.join("loss_surface.csv"), &loss_surface_to_csv(surface)?)?;
    let text = format!(
        "start={},{}\ncoarse={},{}\nloss={}\nmargin={}\n",
        est.start.x,
        est.start.y,
        surface.best.x,
        surface.best.y,
        surface.best_loss(),
        surface.runner_up_margin
    );
    write_text(&a.out.join("start.txt"), &text)?;
    println!("start {:.3},{:.3}", est.start.x, est.start.y);
    Ok(())
}

fn named_result(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
        _ => {
            let p = PathBuf::from(spec);
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().trim_start_matches("result_").to_string())
                .unwrap_or_else(|| spec.to_string());
            (stem, p)
        }
    }
}

fn evaluate(a: &EvaluateArgs) -> CmdResult {
    let cfg = load_config(&a.common)?;
    let arena = cfg.arena()?;
    let truth = read_trajectory(&a.truth)?;
    let mut reports: Vec<(String, ErrorReport)> = Vec::new();
    let mut tracks = Vec::new();
    for spec in &a.results {
        let (name, path) = named_result(spec);
        if reports.iter().any(|(n, _)| *n == name) {
            return Err(invalid(format!("duplicate result name {name:?}")));
        }
        let est = read_result(&path)?;
        let report = compute_errors(&est, &truth).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        reports.push((name.clone(), report));
        tracks.push((name, est));
    }
    make_dir(&a.out)?;
    write_text(&a.out.join("summary.csv"), &summary_csv(&reports))?;
    write_text(&a.out.join("cdf.csv"), &cdf_csv(&reports))?;
    write_text(&a.out.join("laps.csv"), &lap_csv(&reports))?;
    if reports.len() >= 2 {
        write_text(&a.out.join("comparison.csv"), &comparison_csv(&compare_methods(&reports)?))?;
    }
    write_text(&a.out.join("overlay.svg"), &overlay_svg(&arena, &truth, &tracks))?;
    write_text(&a.out.join("cdf.svg"), &cdf_svg(&reports))?;
    print!("{}", summary_csv(&reports));
    Ok(())
}

fn parse_values(s: &str) -> std::result::Result<Vec<f64>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| invalid(format!("--values: bad number {v:?}"))))
        .collect()
}

fn sweep(a: &SweepArgs) -> CmdResult {
    let cfg = load_config(&a.common)?;
    let scn = Scenario::from_config(&cfg)?;
    let param: SweepParam = a.param.parse()?;
    let values = match &a.values {
        Some(v) => parse_values(v)?,
        None => param.default_values(),
    };
    let spec = SweepSpec {
        param,
        values,
        seeds: a.seeds,
        method: a.method.parse()?,
    };
    spec.validate()?;
    let rows = run_sweep(&scn, &spec, a.workers)?;
    make_dir(&a.out)?;
    let table = sweep_csv(&rows);
    write_text(&a.out.join("sweep.csv"), &table)?;
    let mut failures = String::new();
    for r in &rows {
        for f in &r.failures {
            let _ = writeln!(failures, "{}={}: {f}", param.as_str(), r.value);
        }
    }
    write_text(&a.out.join("sweep_failures.txt"), &failures)?;
    print!("{table}");
    Ok(())
}

//! Scenario runners shared by the commands, the sweeps and the tests.

use std::str::FromStr;

use rayon::prelude::*;

use dualtrack::acoustic::AcousticConfig;
use dualtrack::baseline::dead_reckoning_track;
use dualtrack::eval::{compute_errors, drift_ratio, ErrorReport};
use dualtrack::features::{synthesize_features, DeviceLayout, FeatureStream, SynthesisConfig};
use dualtrack::fusion::{track, FusionWeights, SolverConfig, StepContext, TrackerOutput};
use dualtrack::geometry::{Arena, Point2D};
use dualtrack::search::{
    find_start, segment_by_confidence, track_segmented, SearchConfig, StartEstimate,
};
use dualtrack::trajectory::SampledTrajectory;
use dualtrack::{Error, Result};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fusion,
    Baseline,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fusion => "fusion",
            Method::Baseline => "baseline",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fusion" => Ok(Method::Fusion),
            "baseline" => Ok(Method::Baseline),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Known(Point2D),
    Search,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub output: TrackerOutput,
    pub start: Point2D,
    /// Start searches, one per tracked chunk.
    pub searches: Vec<StartEstimate>,
}

/// Everything a run needs, resolved from a config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub layout: DeviceLayout,
    pub truth: SampledTrajectory,
    pub synthesis: SynthesisConfig,
    pub weights: FusionWeights,
    pub solver: SolverConfig,
    pub search: SearchConfig,
    pub min_high_conf: usize,
    pub conf_threshold: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            layout: cfg.device_layout()?,
            truth: cfg.truth()?,
            synthesis: cfg.synthesis()?,
            weights: cfg.weights()?,
            solver: cfg.solver(),
            search: cfg.search(),
            min_high_conf: cfg.search.min_high_conf,
            conf_threshold: cfg.search.conf_threshold,
            seed: cfg.seed,
        })
    }

    /// Keeps the first `n` links.
    pub fn with_links(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.layout.links.len() {
            return Err(Error::InvalidInput(format!(
                "links: asked for {n}, layout has {}",
                self.layout.links.len()
            )));
        }
        let mut s = self.clone();
        s.layout.links.truncate(n);
        Ok(s)
    }

    pub fn arena(&self) -> &Arena {
        &self.layout.arena
    }

    pub fn ctx(&self) -> StepContext<'_> {
        StepContext {
            links: &self.layout.links,
            speakers: &self.layout.speakers,
            weights: self.weights,
            solver: &self.solver,
            arena: &self.layout.arena,
        }
    }

    pub fn features(&self, seed: u64) -> Result<FeatureStream> {
        synthesize_features(&self.truth, &self.layout, &self.synthesis, seed)
    }

    pub fn run(&self, features: &FeatureStream, method: Method, init: Init) -> Result<RunOutput> {
        let ctx = self.ctx();
        let (start, searches) = match init {
            Init::Known(p) => (p, Vec::new()),
            Init::Search => {
                let est = find_start(features, &self.search, &ctx)?;
                (est.start, vec![est])
            }
        };
        let output = match method {
            Method::Fusion => track(
                features,
                ctx.links,
                ctx.speakers,
                start,
                &self.weights,
                &self.solver,
                ctx.arena,
            )?,
            Method::Baseline => dead_reckoning_track(features, ctx.links, start, ctx.arena)?,
        };
        Ok(RunOutput {
            output,
            start,
            searches,
        })
    }

    /// Fusion with data division: every chunk searches its own start.
    pub fn run_segmented(&self, features: &FeatureStream) -> Result<RunOutput> {
        let seg = segment_by_confidence(features, self.min_high_conf, self.conf_threshold)?;
        let (output, searches) = track_segmented(features, &seg, &self.search, &self.ctx())?;
        Ok(RunOutput {
            output,
            start: searches[0].start,
            searches,
        })
    }

    pub fn report(&self, run: &RunOutput) -> Result<ErrorReport> {
        compute_errors(&run.output.trajectory, &self.truth)
    }
}

/// Fraction of the arena, sampled on an `n` x `n` grid of cell centres,
/// from which both speakers are detectable.
pub fn coverage_fraction(layout: &DeviceLayout, acoustic: &AcousticConfig, n: usize) -> f64 {
    let a = &layout.arena;
    let floor = acoustic.detection_amplitude();
    let mut hits = 0usize;
    for j in 0..n {
        for i in 0..n {
            let p = Point2D::new(
                a.x_min + (i as f64 + 0.5) * a.width() / n as f64,
                a.y_min + (j as f64 + 0.5) * a.height() / n as f64,
            );
            if acoustic.attenuation(p.distance(layout.speakers.s1)) >= floor
                && acoustic.attenuation(p.distance(layout.speakers.s2)) >= floor
            {
                hits += 1;
            }
        }
    }
    hits as f64 / (n * n) as f64
}

/// Detection range giving `fraction` coverage, by bisection.
pub fn detection_range_for_coverage(layout: &DeviceLayout, acoustic: &AcousticConfig, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!("coverage fraction must be in (0, 1), got {fraction}")));
    }
    let a = &layout.arena;
    let (mut lo, mut hi) = (0.0, a.width().hypot(a.height()) * 2.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let cfg = AcousticConfig {
            detection_range: mid,
            ..*acoustic
        };
        if coverage_fraction(layout, &cfg, 300) < fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Links,
    Noise,
    Grid,
    Segmentation,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Links => "links",
            SweepParam::Noise => "noise",
            SweepParam::Grid => "grid",
            SweepParam::Segmentation => "segmentation",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::Links => vec![1.0, 2.0, 3.0],
            SweepParam::Noise => vec![0.0, 0.025, 0.05, 0.1],
            SweepParam::Grid => vec![0.5, 0.25],
            SweepParam::Segmentation => vec![0.0, 1.0],
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "links" => Ok(SweepParam::Links),
            "noise" => Ok(SweepParam::Noise),
            "grid" => Ok(SweepParam::Grid),
            "segmentation" => Ok(SweepParam::Segmentation),
            other => Err(Error::InvalidInput(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Replicates per cell. Replicate `j` uses seed `base + j` in every
    /// cell, so cells are compared on the same noise draws.
    pub seeds: usize,
    pub method: Method,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.seeds == 0 {
            return Err(Error::InvalidInput("sweep: needs at least one value and one seed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub method: Method,
    /// Means over successful replicates.
    pub median: f64,
    pub mean: f64,
    pub drift_ratio: f64,
    pub laps: usize,
    pub seeds_ok: usize,
    pub failures: Vec<String>,
    /// Mean distance of the searched start from the true start.
    pub start_error: Option<f64>,
    pub reports: Vec<ErrorReport>,
}

pub const SWEEP_HEADER: &str = "parameter,value,method,median_m,mean_m,drift_ratio,laps,seeds,failures,start_error_m";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let start = self.start_error.map(|e| format!("{e:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{},{},{start}",
            self.param.as_str(),
            self.value,
            self.method.as_str(),
            self.median,
            self.mean,
            self.drift_ratio,
            self.laps,
            self.seeds_ok,
            self.failures.len(),
        )
    }
}

struct CellRun {
    report: ErrorReport,
    start_error: Option<f64>,
}

fn run_cell(base: &Scenario, param: SweepParam, value: f64, method: Method, seed: u64) -> Result<CellRun> {
    let mut scn = base.clone();
    let mut init = Init::Known(scn.truth.positions[0]);
    let mut segmented = false;
    match param {
        SweepParam::Links => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::InvalidInput(format!("links: {value} is not a link count")));
            }
            scn = scn.with_links(value as usize)?;
        }
        SweepParam::Noise => {
            if !(value >= 0.0) {
                return Err(Error::InvalidInput(format!("noise: {value} is negative")));
            }
            scn.synthesis.wifi.noise_sigma_v = value;
            scn.synthesis.plcr_noise = value > 0.0;
        }
        SweepParam::Grid => {
            scn.search.cell_size = value;
            init = Init::Search;
        }
        SweepParam::Segmentation => {
            init = Init::Search;
            segmented = value != 0.0;
        }
    }
    let features = scn.features(seed)?;
    let run = if segmented {
        scn.run_segmented(&features)?
    } else {
        scn.run(&features, method, init)?
    };
    let start_error = (init == Init::Search).then(|| run.start.distance(scn.truth.positions[0]));
    Ok(CellRun {
        report: scn.report(&run)?,
        start_error,
    })
}

/// Runs every (value, replicate) pair on a pool of `workers` threads.
/// Failed replicates are recorded in their row and the sweep carries on.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec, workers: usize) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let jobs: Vec<(usize, u64)> = (0..spec.values.len())
        .flat_map(|c| (0..spec.seeds).map(move |j| (c, j as u64)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("workers: {e}")))?;
    let results: Vec<Result<CellRun>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, j)| run_cell(base, spec.param, spec.values[c], spec.method, base.seed.wrapping_add(j)))
            .collect()
    });

    let mut rows = Vec::with_capacity(spec.values.len());
    for (c, &value) in spec.values.iter().enumerate() {
        let mut reports = Vec::new();
        let mut failures = Vec::new();
        let mut starts = Vec::new();
        for (&(cell, j), r) in jobs.iter().zip(&results) {
            if cell != c {
                continue;
            }
            match r {
                Ok(run) => {
                    reports.push(run.report.clone());
                    starts.extend(run.start_error);
                }
                Err(e) => failures.push(format!("seed {}: {e}", base.seed.wrapping_add(j))),
            }
        }
        let n = reports.len().max(1) as f64;
        let drift: f64 = reports
            .iter()
            .map(|r| drift_ratio(r).map(|d| d.value).unwrap_or(f64::NAN))
            .sum::<f64>()
            / n;
        rows.push(SweepRow {
            param: spec.param,
            value,
            method: spec.method,
            median: reports.iter().map(|r| r.median).sum::<f64>() / n,
            mean: reports.iter().map(|r| r.mean).sum::<f64>() / n,
            drift_ratio: if reports.is_empty() { f64::NAN } else { drift },
            laps: reports.first().map_or(0, |r| r.laps()),
            seeds_ok: reports.len(),
            failures,
            start_error: (!starts.is_empty()).then(|| starts.iter().sum::<f64>() / starts.len() as f64),
            reports,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

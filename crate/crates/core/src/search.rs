//! Initial-position search: track the stream from each candidate start,
//! push the reconstruction back through the feature model and keep the
//! candidate whose re-synthesized features best match the observation.
//! Also cuts long streams into chunks that each hold confident acoustic data.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureStream;
use crate::fsutil::write_atomic;
use crate::fusion::{track, StepContext, StepDiagnostics, TrackerOutput};
use crate::geometry::{path_difference, Arena, Point2D, Velocity2D};
use crate::trajectory::SampledTrajectory;
use crate::wifi::coefficients;

/// Confidence at or above which an acoustic frame counts as high confidence.
pub const HIGH_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub cell_size: f64,
    pub candidates: Vec<Point2D>,
}

impl CandidateGrid {
    /// Regular lattice anchored at the arena's lower-left corner, edges included.
    pub fn covering(arena: &Arena, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidInput(format!("cell size must be positive, got {cell_size}")));
        }
        let nx = (arena.width() / cell_size + 1e-9).floor() as usize + 1;
        let ny = (arena.height() / cell_size + 1e-9).floor() as usize + 1;
        let mut candidates = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                candidates.push(Point2D::new(
                    arena.x_min + i as f64 * cell_size,
                    arena.y_min + j as f64 * cell_size,
                ));
            }
        }
        Ok(Self { cell_size, candidates })
    }

    /// Half-cell lattice over the neighbouring cells of `center`, clipped to the arena.
    pub fn refinement(center: Point2D, cell_size: f64, arena: &Arena) -> Self {
        let half = cell_size / 2.0;
        let mut candidates = Vec::with_capacity(25);
        for j in -2..=2 {
            for i in -2..=2 {
                let p = Point2D::new(center.x + i as f64 * half, center.y + j as f64 * half);
                if arena.contains(p) {
                    candidates.push(p);
                }
            }
        }
        Self {
            cell_size: half,
            candidates,
        }
    }

    pub fn single(p: Point2D, cell_size: f64) -> Self {
        Self {
            cell_size,
            candidates: vec![p],
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Point2D,
    pub best_index: usize,
    /// `(candidate, loss)` in grid order; failed candidates carry `+inf`.
    pub loss_surface: Vec<(Point2D, f64)>,
    /// `(runner_up - best) / runner_up`, 0 with a single candidate.
    pub runner_up_margin: f64,
}

impl SearchResult {
    pub fn best_loss(&self) -> f64 {
        self.loss_surface[self.best_index].1
    }
}

/// Weighted RMS discrepancy between the observed features and those the
/// feature model predicts along the trajectory tracked from `candidate`.
///
/// Wi-Fi rows use the tracked displacement over each step, so a start that
/// forces the solver to correct itself shows up even with two links. TDoF
/// rows are weighted by the observed confidence. Returns `+inf` if tracking
/// or the feature model fails.
pub fn reconstruct_loss(candidate: Point2D, observed: &FeatureStream, ctx: &StepContext<'_>) -> f64 {
    if observed.is_empty() {
        return f64::INFINITY;
    }
    let out = match track(
        observed,
        ctx.links,
        ctx.speakers,
        candidate,
        &ctx.weights,
        ctx.solver,
        ctx.arena,
    ) {
        Ok(out) => out,
        Err(_) => return f64::INFINITY,
    };
    let p = out.positions();
    let (k1, k2) = ctx.weights.normalized();

    let mut wifi = 0.0;
    for k in 0..p.len().saturating_sub(1) {
        let dt = observed.timestamps[k + 1] - observed.timestamps[k];
        let v = (p[k + 1] - p[k]).scale(1.0 / dt);
        for (link, &r) in ctx.links.iter().zip(&observed.plcr[k]) {
            match coefficients(p[k], link) {
                Ok(a) => wifi += (a.dot(v) - r).powi(2),
                Err(_) => return f64::INFINITY,
            }
        }
    }
    if p.len() > 1 {
        wifi /= (p.len() - 1) as f64;
    }

    let mut acoustic = 0.0;
    let mut frames = 0usize;
    for k in observed.acoustic_indices() {
        let (tdof, conf) = observed.acoustic[k].usable().expect("usable index");
        let d = path_difference(p[k], ctx.speakers) - tdof * ctx.solver.c_s;
        acoustic += conf * d * d;
        frames += 1;
    }
    if frames > 0 {
        acoustic /= frames as f64;
    }
    (k1 * wifi + k2 * acoustic).sqrt()
}

/// Exhaustive evaluation over `grid`. Candidates run concurrently; the
/// argmin keeps the smallest index on ties, so the result does not depend
/// on scheduling.
pub fn search_initial(observed: &FeatureStream, grid: &CandidateGrid, ctx: &StepContext<'_>) -> Result<SearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("candidate grid is empty".into()));
    }
    if observed.is_empty() {
        return Err(Error::InvalidInput("feature stream is empty".into()));
    }
    let losses: Vec<f64> = grid
        .candidates
        .par_iter()
        .map(|&c| reconstruct_loss(c, observed, ctx))
        .collect();

    let mut best: Option<usize> = None;
    for (i, &l) in losses.iter().enumerate() {
        if l.is_finite() && best.is_none_or(|b| l < losses[b]) {
            best = Some(i);
        }
    }
    let best_index = best.ok_or(Error::NoFeasibleStart)?;
    let runner_up = losses
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best_index)
        .map(|(_, &l)| l)
        .fold(f64::INFINITY, f64::min);
    let best_loss = losses[best_index];
    let runner_up_margin = if grid.len() == 1 || runner_up <= 0.0 {
        0.0
    } else if runner_up.is_infinite() {
        1.0
    } else {
        (runner_up - best_loss) / runner_up
    };
    Ok(SearchResult {
        best: grid.candidates[best_index],
        best_index,
        loss_surface: grid.candidates.iter().copied().zip(losses).collect(),
        runner_up_margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub cell_size: f64,
    /// Seconds of the stream used to score candidates.
    pub window: f64,
    pub refine: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.25,
            window: 10.0,
            refine: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) || !(self.window > 0.0) {
            return Err(Error::InvalidInput("search needs positive cell size and window".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartEstimate {
    pub start: Point2D,
    pub coarse: SearchResult,
    pub refined: Option<SearchResult>,
    /// Number of samples scored.
    pub window_len: usize,
}

/// Samples whose timestamps fall within `window` seconds of the first.
pub fn search_window(stream: &FeatureStream, window: f64) -> usize {
    let Some(&t0) = stream.timestamps.first() else {
        return 0;
    };
    stream.timestamps.partition_point(|&t| t - t0 <= window + 1e-9)
}

/// Coarse grid search over the arena followed by one half-cell pass
/// around the winner.
pub fn find_start(stream: &FeatureStream, cfg: &SearchConfig, ctx: &StepContext<'_>) -> Result<StartEstimate> {
    find_start_with(stream, cfg, ctx, None)
}

/// As [`find_start`], with `prior` scored as one extra coarse candidate
/// placed after the grid.
pub fn find_start_with(
    stream: &FeatureStream,
    cfg: &SearchConfig,
    ctx: &StepContext<'_>,
    prior: Option<Point2D>,
) -> Result<StartEstimate> {
    cfg.validate()?;
    let n = search_window(stream, cfg.window);
    let prefix = stream.slice(0..n);
    let mut grid = CandidateGrid::covering(ctx.arena, cfg.cell_size)?;
    if let Some(p) = prior.filter(|p| ctx.arena.contains(*p)) {
        grid.candidates.push(p);
    }
    let coarse = search_initial(&prefix, &grid, ctx)?;
    let mut start = coarse.best;
    let refined = if cfg.refine {
        let fine = CandidateGrid::refinement(coarse.best, cfg.cell_size, ctx.arena);
        let r = search_initial(&prefix, &fine, ctx)?;
        if r.best_loss() < coarse.best_loss() {
            start = r.best;
        }
        Some(r)
    } else {
        None
    };
    Ok(StartEstimate {
        start,
        coarse,
        refined,
        window_len: n,
    })
}

/// Searches for the start, then tracks the whole stream from it.
pub fn track_with_search(
    stream: &FeatureStream,
    cfg: &SearchConfig,
    ctx: &StepContext<'_>,
) -> Result<(TrackerOutput, StartEstimate)> {
    let est = find_start(stream, cfg, ctx)?;
    let out = track(
        stream,
        ctx.links,
        ctx.speakers,
        est.start,
        &ctx.weights,
        ctx.solver,
        ctx.arena,
    )?;
    Ok((out, est))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub chunks: Vec<FeatureStream>,
    pub ranges: Vec<Range<usize>>,
    /// Set when the stream has too few confident samples to cut at all.
    pub insufficient: bool,
}

/// Runs of high-confidence samples. Two confident frames belong to the same
/// run when no more than one frame period separates them.
fn confident_runs(stream: &FeatureStream, threshold: f64) -> Vec<(usize, usize, usize)> {
    let usable: Vec<usize> = stream.acoustic_indices().collect();
    let period = usable.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(1);
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for &k in &usable {
        let (_, conf) = stream.acoustic[k].usable().expect("usable index");
        if conf < threshold {
            continue;
        }
        match runs.last_mut() {
            Some((_, end, count)) if k - *end <= period + period / 2 => {
                *end = k;
                *count += 1;
            }
            _ => runs.push((k, k, 1)),
        }
    }
    runs
}

/// Cuts the stream into contiguous chunks, each holding at least
/// `min_high_conf` confident samples. Cuts fall midway between confident
/// runs. Without enough confident data the whole stream is one chunk and
/// `insufficient` is set.
pub fn segment_by_confidence(stream: &FeatureStream, min_high_conf: usize, conf_threshold: f64) -> Result<Segmentation> {
    if !(conf_threshold > 0.0 && conf_threshold <= 1.0) {
        return Err(Error::InvalidInput(format!("confidence threshold must be in (0, 1], got {conf_threshold}")));
    }
    if min_high_conf == 0 {
        return Err(Error::InvalidInput("min_high_conf must be at least 1".into()));
    }
    let runs = confident_runs(stream, conf_threshold);
    let total: usize = runs.iter().map(|r| r.2).sum();
    if total < min_high_conf {
        return Ok(Segmentation {
            chunks: vec![stream.clone()],
            ranges: std::iter::once(0..stream.len()).collect(),
            insufficient: true,
        });
    }

    let mut ranges = Vec::new();
    let mut start = 0;
    let mut have = 0;
    let mut remaining = total;
    for (i, run) in runs.iter().enumerate() {
        have += run.2;
        remaining -= run.2;
        if have >= min_high_conf && remaining >= min_high_conf {
            let next = runs[i + 1].0;
            let cut = (run.1 + next).div_ceil(2);
            ranges.push(start..cut);
            start = cut;
            have = 0;
        }
    }
    ranges.push(start..stream.len());
    Ok(Segmentation {
        chunks: ranges.iter().map(|r| stream.slice(r.clone())).collect(),
        ranges,
        insufficient: false,
    })
}

/// Data division: each chunk is tracked on its own from a start searched
/// over the whole chunk, so the search always sees the chunk's confident
/// acoustic data. The previous chunk's predicted hand-over position competes
/// with the grid. Chunk outputs are concatenated.
pub fn track_segmented(
    stream: &FeatureStream,
    segmentation: &Segmentation,
    cfg: &SearchConfig,
    ctx: &StepContext<'_>,
) -> Result<(TrackerOutput, Vec<StartEstimate>)> {
    let dt = stream
        .dt()
        .ok_or_else(|| Error::InvalidInput("stream needs at least two samples".into()))?;
    let mut positions = Vec::with_capacity(stream.len());
    let mut velocities: Vec<Velocity2D> = Vec::with_capacity(stream.len());
    let mut diagnostics: Vec<StepDiagnostics> = Vec::with_capacity(stream.len());
    let mut starts = Vec::with_capacity(segmentation.chunks.len());
    let whole = SearchConfig {
        window: f64::INFINITY,
        ..*cfg
    };
    for chunk in &segmentation.chunks {
        let prior = match (positions.last(), velocities.last()) {
            (Some(&p), Some(&v)) => Some(p + v.displacement(dt)),
            _ => None,
        };
        let est = find_start_with(chunk, &whole, ctx, prior)?;
        let out = track(chunk, ctx.links, ctx.speakers, est.start, &ctx.weights, ctx.solver, ctx.arena)?;
        positions.extend_from_slice(&out.trajectory.positions);
        velocities.extend_from_slice(&out.trajectory.velocities);
        diagnostics.extend_from_slice(&out.diagnostics);
        starts.push(est);
    }
    if positions.len() != stream.len() {
        return Err(Error::LengthMismatch {
            what: "segmented output",
            got: positions.len(),
            expected: stream.len(),
        });
    }
    Ok((
        TrackerOutput {
            trajectory: SampledTrajectory {
                dt,
                timestamps: stream.timestamps.clone(),
                positions,
                velocities,
                lap_boundaries: Vec::new(),
            },
            diagnostics,
        },
        starts,
    ))
}

/// Loss-surface CSV: `cand_x,cand_y,loss`.
pub fn loss_surface_to_csv(result: &SearchResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cand_x", "cand_y", "loss"])
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    for (p, l) in &result.loss_surface {
        w.write_record([p.x.to_string(), p.y.to_string(), l.to_string()])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_loss_surface(path: &Path, result: &SearchResult) -> Result<()> {
    write_atomic(path, loss_surface_to_csv(result)?.as_bytes())
}

//! Wi-Fi/acoustic fusion tracker.
//!
//! Each 100 Hz step dead-reckons with the current velocity. When a usable
//! TDoF arrives, the prediction is projected onto its hyperbola and refined
//! by Gauss-Newton on
//!
//! ```text
//! e(p) = [ sqrt(k1) * g(p) ; sqrt(k2 * conf) * h(p) ]
//! g(p) = v_prior + (p - p_pred) / tau - v(M(p), r)
//! h(p) = |p - s1| - |p - s2| - tdof * c_s
//! ```
//!
//! `g` is the velocity residual (E1): the velocity implied by moving to `p`
//! instead of `p_pred` over the kinematic horizon `tau`, against the
//! velocity the PLCR vector yields at `p`. `h` is the hyperbola residual
//! (E2). The velocity is then re-estimated at the new position.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acoustic::AcousticMeasurement;
use crate::error::{Error, Result};
use crate::features::FeatureStream;
use crate::fsutil::{parse_err, read_to_string, write_atomic};
use crate::geometry::{
    nearest_feasible_point, path_difference, unit_or_zero, path_difference_gradient, Arena, LinkGeometry,
    Point2D, SpeakerPair, Vec2, Velocity2D,
};
use crate::trajectory::SampledTrajectory;
use crate::wifi::{build_steering_matrix, coefficient_jacobian, coefficients, recover_velocity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub k1: f64,
    pub k2: f64,
    pub sigma_v: f64,
    pub sigma_d: f64,
}

/// Maximum-likelihood weights: `k1 ~ 1/sigma_v^2`, `k2 ~ 1/(sigma_d c_s)^2`,
/// normalized to sum to one.
pub fn weights_from_noise(sigma_v: f64, sigma_d: f64, c_s: f64) -> Result<FusionWeights> {
    if !(sigma_v > 0.0) || !(sigma_d > 0.0) || !(c_s > 0.0) {
        return Err(Error::InvalidInput(
            "noise sigmas and c_s must be positive".into(),
        ));
    }
    let a = 1.0 / (sigma_v * sigma_v);
    let d = sigma_d * c_s;
    let b = 1.0 / (d * d);
    let (k1, k2) = if b.is_finite() && a.is_finite() {
        (a / (a + b), b / (a + b))
    } else {
        return Err(Error::InvalidInput("noise sigmas out of range".into()));
    };
    Ok(FusionWeights {
        k1,
        k2,
        sigma_v,
        sigma_d,
    })
}

impl FusionWeights {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            k1: self.k1 * c,
            k2: self.k2 * c,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) || !(self.k2 >= 0.0 && self.k2.is_finite()) {
            return Err(Error::InvalidInput("weights need k1 > 0 and k2 >= 0".into()));
        }
        Ok(())
    }

    pub(crate) fn normalized(&self) -> (f64, f64) {
        let s = self.k1 + self.k2;
        (self.k1 / s, self.k2 / s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub c_s: f64,
    /// Time over which a position correction is converted into a velocity
    /// discrepancy in the E1 term.
    pub horizon: f64,
    pub gn_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c_s: 343.0,
            horizon: 1.0,
            gn_iterations: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_s > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidInput("solver constants must be positive".into()));
        }
        if self.gn_iterations == 0 || self.gn_iterations > 5 {
            return Err(Error::InvalidInput("gn_iterations must be between 1 and 5".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub point: Point2D,
    pub degenerate: bool,
    pub iterations: usize,
}

/// Closest point to `p_prev` on the branch `path_difference = tdof * c_s`.
///
/// The branch is walked through its hyperbolic-angle parameterization, so
/// every candidate satisfies the constraint exactly; the distance is
/// minimized by a coarse scan followed by golden-section refinement.
pub fn project_onto_hyperbola(
    p_prev: Point2D,
    pair: &SpeakerPair,
    tdof: f64,
    c_s: f64,
) -> ProjectionResult {
    project_with(p_prev, pair, tdof * c_s)
}

const PROJECTION_SCAN: usize = 256;
const PROJECTION_REFINE: usize = 80;

fn project_with(p: Point2D, pair: &SpeakerPair, target: f64) -> ProjectionResult {
    if !target.is_finite() || target.abs() >= pair.baseline() {
        return ProjectionResult {
            point: p,
            degenerate: true,
            iterations: 0,
        };
    }
    let center = pair.midpoint();
    let cf = 0.5 * pair.baseline();
    // Focal frame: `u` from s1 to s2, `n` its left normal. A positive
    // target means closer to s2, i.e. the branch on the +u side.
    let u = (pair.s2 - pair.s1).scale(1.0 / pair.baseline());
    let n = u.perp();
    let local = p - center;
    let (px, py) = (local.dot(u), local.dot(n));
    let a = 0.5 * target.abs();
    let b = (cf * cf - a * a).sqrt();
    let sign = if target >= 0.0 { 1.0 } else { -1.0 };
    let to_world = |x: f64, y: f64| center + u.scale(x) + n.scale(y);
    if a == 0.0 {
        return ProjectionResult {
            point: to_world(0.0, py),
            degenerate: false,
            iterations: 1,
        };
    }
    let dist2 = |t: f64| {
        let dx = sign * a * t.cosh() - px;
        let dy = b * t.sinh() - py;
        dx * dx + dy * dy
    };
    // Beyond |t| = span the branch is farther from `p` than the vertex is.
    let reach = 2.0 * local.norm() + cf + 1.0;
    let span = (reach / b).asinh();
    let step = 2.0 * span / PROJECTION_SCAN as f64;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..=PROJECTION_SCAN {
        let d = dist2(-span + i as f64 * step);
        if d < best {
            best = d;
            best_i = i;
        }
    }
    let mut lo = -span + (best_i as f64 - 1.0) * step;
    let mut hi = -span + (best_i as f64 + 1.0) * step;
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (dist2(x1), dist2(x2));
    let mut iterations = 0;
    for _ in 0..PROJECTION_REFINE {
        iterations += 1;
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = dist2(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = dist2(x2);
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    ProjectionResult {
        point: to_world(sign * a * t.cosh(), b * t.sinh()),
        degenerate: false,
        iterations,
    }
}

/// Velocity from the PLCR vector at `p`, with its derivative with respect
/// to `p` (`jac[a][j] = dv_a / dp_j`). A single link has no unique
/// solution; the minimum-norm velocity along its steering row is used.
pub fn velocity_with_jacobian(
    p: Point2D,
    links: &[LinkGeometry],
    r: &[f64],
) -> Result<(Velocity2D, [[f64; 2]; 2])> {
    if links.len() != r.len() {
        return Err(Error::LengthMismatch {
            what: "PLCR vector",
            got: r.len(),
            expected: links.len(),
        });
    }
    if links.len() == 1 {
        let a = coefficients(p, &links[0])?;
        let aa = a.dot(a);
        if aa < 1e-12 {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        let h = coefficient_jacobian(p, &links[0])?;
        let v = a.scale(r[0] / aa);
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let da = Vec2::new(h[0][j], h[1][j]);
            let dv = da.scale(r[0] / aa) - a.scale(2.0 * r[0] * a.dot(da) / (aa * aa));
            jac[0][j] = dv.x;
            jac[1][j] = dv.y;
        }
        return Ok((Velocity2D::from(v), jac));
    }
    let m = build_steering_matrix(p, links)?;
    let v = recover_velocity(&m, r)?;
    let n = m.normal_matrix();
    let det = n[0][0] * n[1][1] - n[0][1] * n[1][0];
    let inv = [
        [n[1][1] / det, -n[0][1] / det],
        [-n[1][0] / det, n[0][0] / det],
    ];
    let resid: Vec<f64> = m
        .rows
        .iter()
        .zip(r)
        .map(|(row, ri)| ri - (row.x * v.vx + row.y * v.vy))
        .collect();
    let hs = links
        .iter()
        .map(|l| coefficient_jacobian(p, l))
        .collect::<Result<Vec<_>>>()?;
    let mut jac = [[0.0; 2]; 2];
    for j in 0..2 {
        // d/dp_j of N^-1 M^T r = N^-1 (dM^T (r - M v) - M^T dM v)
        let mut b = [0.0; 2];
        for (i, row) in m.rows.iter().enumerate() {
            let da = Vec2::new(hs[i][0][j], hs[i][1][j]);
            let dmv = da.x * v.vx + da.y * v.vy;
            b[0] += da.x * resid[i] - row.x * dmv;
            b[1] += da.y * resid[i] - row.y * dmv;
        }
        jac[0][j] = inv[0][0] * b[0] + inv[0][1] * b[1];
        jac[1][j] = inv[1][0] * b[0] + inv[1][1] * b[1];
    }
    Ok((v, jac))
}

/// Velocity estimate used by the trackers.
pub fn estimate_velocity(p: Point2D, links: &[LinkGeometry], r: &[f64]) -> Result<Velocity2D> {
    if links.len() == 1 {
        return velocity_with_jacobian(p, links, r).map(|(v, _)| v);
    }
    let m = build_steering_matrix(p, links)?;
    recover_velocity(&m, r)
}

/// Everything the per-step objective depends on besides the position.
#[derive(Debug, Clone, Copy)]
pub struct FusionProblem<'a> {
    pub links: &'a [LinkGeometry],
    pub plcr: &'a [f64],
    pub v_prior: Velocity2D,
    /// Dead-reckoned position the velocity term is anchored to.
    pub anchor: Point2D,
    pub horizon: f64,
    pub pair: &'a SpeakerPair,
    pub acoustic: Option<AcousticMeasurement>,
    pub c_s: f64,
    pub weights: FusionWeights,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub e: [f64; 3],
    /// `jac[row][j] = d e_row / d p_j`.
    pub jac: [[f64; 2]; 3],
    pub e1: f64,
    pub e2: f64,
}

impl Residuals {
    pub fn cost(&self) -> f64 {
        self.e.iter().map(|x| x * x).sum()
    }
}

pub fn fusion_residuals(p: Point2D, prob: &FusionProblem<'_>) -> Result<Residuals> {
    let (k1, k2) = prob.weights.normalized();
    let (v, dv) = velocity_with_jacobian(p, prob.links, prob.plcr)?;
    let s1 = k1.sqrt();
    let inv_tau = 1.0 / prob.horizon;
    let g = [
        prob.v_prior.vx + (p.x - prob.anchor.x) * inv_tau - v.vx,
        prob.v_prior.vy + (p.y - prob.anchor.y) * inv_tau - v.vy,
    ];
    let mut e = [s1 * g[0], s1 * g[1], 0.0];
    let mut jac = [
        [s1 * (inv_tau - dv[0][0]), -s1 * dv[0][1]],
        [-s1 * dv[1][0], s1 * (inv_tau - dv[1][1])],
        [0.0, 0.0],
    ];
    let mut e2 = 0.0;
    if let Some((tdof, conf)) = prob.acoustic.and_then(|a| a.usable()) {
        let h = path_difference(p, prob.pair) - tdof * prob.c_s;
        let s2 = (k2 * conf).sqrt();
        let grad = path_difference_gradient(p, prob.pair);
        e[2] = s2 * h;
        jac[2] = [s2 * grad.x, s2 * grad.y];
        e2 = h.abs();
    }
    Ok(Residuals {
        e,
        jac,
        e1: g[0].hypot(g[1]),
        e2,
    })
}

/// One damped Gauss-Newton update `p - (J^T J + mu I)^-1 J^T e` with
/// `mu = 1e-6 trace(J^T J)`.
pub fn gauss_newton_step(p: Point2D, e: &[f64], jac: &[[f64; 2]]) -> Point2D {
    let mut a = [[0.0; 2]; 2];
    let mut b = [0.0; 2];
    for (ei, ji) in e.iter().zip(jac) {
        for r in 0..2 {
            b[r] += ji[r] * ei;
            for c in 0..2 {
                a[r][c] += ji[r] * ji[c];
            }
        }
    }
    let mu = 1e-6 * (a[0][0] + a[1][1]);
    if !(mu > 0.0) {
        return p;
    }
    a[0][0] += mu;
    a[1][1] += mu;
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let dx = (a[1][1] * b[0] - a[0][1] * b[1]) / det;
    let dy = (a[0][0] * b[1] - a[1][0] * b[0]) / det;
    Point2D::new(p.x - dx, p.y - dy)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub e1: f64,
    pub e2: f64,
    pub confidence: f64,
    pub snapped: bool,
    pub velocity_held: bool,
    pub degenerate: bool,
    /// The refined point was rejected in favour of a cheaper candidate.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverState {
    pub position: Point2D,
    pub velocity: Velocity2D,
    pub timestamp: f64,
    pub last_acoustic: Option<AcousticMeasurement>,
    pub diagnostics: StepDiagnostics,
}

impl SolverState {
    pub fn new(position: Point2D, velocity: Velocity2D, timestamp: f64) -> Self {
        Self {
            position,
            velocity,
            timestamp,
            last_acoustic: None,
            diagnostics: StepDiagnostics::default(),
        }
    }
}

/// Inputs shared by every step of a session.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub links: &'a [LinkGeometry],
    pub speakers: &'a SpeakerPair,
    pub weights: FusionWeights,
    pub solver: &'a SolverConfig,
    pub arena: &'a Arena,
}

/// Snap to the arena; report whether the point moved.
pub(crate) fn snap(p: Point2D, arena: &Arena) -> (Point2D, bool) {
    let q = nearest_feasible_point(p, arena);
    (q, q != p)
}

/// Velocity for the step that just landed on `p`. A boundary snap holds
/// the previous velocity for one frame; a second snap in a row re-estimates
/// so the track can slide along the wall instead of pinning to it. Where the
/// steering matrix is undefined because `p` sits on a device, it is
/// evaluated a hair towards the arena centre. Any remaining failure holds.
pub(crate) fn next_velocity(
    prev: &SolverState,
    p: Point2D,
    snapped: bool,
    links: &[LinkGeometry],
    r: &[f64],
    arena: &Arena,
) -> (Velocity2D, bool) {
    if snapped && !prev.diagnostics.snapped {
        return (prev.velocity, true);
    }
    let on_device = links.iter().any(|l| l.tx == p || l.rx == p);
    let at = if on_device {
        p + unit_or_zero(arena.center() - p).scale(DEVICE_NUDGE)
    } else {
        p
    };
    match estimate_velocity(at, links, r) {
        Ok(v) => (v, false),
        Err(_) => (prev.velocity, true),
    }
}

/// Offset used to evaluate steering next to a device instead of on it.
const DEVICE_NUDGE: f64 = 1e-6;

pub fn fuse_step(
    state: &SolverState,
    r: &[f64],
    meas: Option<&AcousticMeasurement>,
    dt: f64,
    ctx: &StepContext<'_>,
) -> SolverState {
    let p_pred = state.position + state.velocity.displacement(dt);
    let mut diag = StepDiagnostics::default();
    let mut p_new = p_pred;
    let usable = meas
        .filter(|m| m.usable().is_some())
        .filter(|_| ctx.weights.k2 > 0.0)
        .copied();
    if let Some(m) = usable {
        let (tdof, conf) = m.usable().expect("filtered");
        diag.confidence = conf;
        if let Ok(v_prior) = estimate_velocity(p_pred, ctx.links, r) {
            let prob = FusionProblem {
                links: ctx.links,
                plcr: r,
                v_prior,
                anchor: p_pred,
                horizon: ctx.solver.horizon,
                pair: ctx.speakers,
                acoustic: Some(m),
                c_s: ctx.solver.c_s,
                weights: ctx.weights,
            };
            let proj = project_with(p_pred, ctx.speakers, tdof * ctx.solver.c_s);
            diag.degenerate = proj.degenerate;
            let start = proj.point;
            let mut q = start;
            for _ in 0..ctx.solver.gn_iterations {
                match fusion_residuals(q, &prob) {
                    Ok(res) => {
                        q = gauss_newton_step(q, &res.e, &res.jac);
                        diag.iterations += 1;
                    }
                    Err(_) => break,
                }
            }
            let mut best: Option<(Point2D, Residuals)> = None;
            for (i, cand) in [q, start, p_pred].into_iter().enumerate() {
                if let Ok(res) = fusion_residuals(cand, &prob) {
                    if best.as_ref().is_none_or(|(_, b)| res.cost() < b.cost()) {
                        diag.fallback = i > 0;
                        best = Some((cand, res));
                    }
                }
            }
            if let Some((cand, res)) = best {
                p_new = cand;
                diag.e1 = res.e1;
                diag.e2 = res.e2;
            }
        }
    }
    let (p_new, snapped) = snap(p_new, ctx.arena);
    diag.snapped = snapped;
    let (velocity, held) = next_velocity(state, p_new, snapped, ctx.links, r, ctx.arena);
    diag.velocity_held = held;
    SolverState {
        position: p_new,
        velocity,
        timestamp: state.timestamp + dt,
        last_acoustic: usable.or(state.last_acoustic),
        diagnostics: diag,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerOutput {
    pub trajectory: SampledTrajectory,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl TrackerOutput {
    pub fn positions(&self) -> &[Point2D] {
        &self.trajectory.positions
    }
}

pub(crate) fn check_inputs(
    features: &FeatureStream,
    links: &[LinkGeometry],
    initial: Point2D,
    arena: &Arena,
) -> Result<f64> {
    features.validate()?;
    if features.is_empty() {
        return Err(Error::InvalidInput("feature stream is empty".into()));
    }
    if features.links() != links.len() {
        return Err(Error::LengthMismatch {
            what: "links",
            got: links.len(),
            expected: features.links(),
        });
    }
    if links.iter().any(|l| l.mode != features.mode) {
        return Err(Error::InvalidInput("link modes differ from the feature stream".into()));
    }
    if !initial.is_finite() || !arena.contains(initial) {
        return Err(Error::InvalidInput(format!(
            "initial position ({}, {}) lies outside the arena",
            initial.x, initial.y
        )));
    }
    let dt = features.dt().unwrap_or(0.01);
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("timestamps must increase".into()));
    }
    Ok(dt)
}

pub(crate) fn initial_state(features: &FeatureStream, links: &[LinkGeometry], initial: Point2D) -> SolverState {
    let (v0, held) = match estimate_velocity(initial, links, &features.plcr[0]) {
        Ok(v) => (v, false),
        Err(_) => (Velocity2D::ZERO, true),
    };
    let mut s = SolverState::new(initial, v0, features.timestamps[0]);
    s.diagnostics.velocity_held = held;
    s
}

pub(crate) fn finish(features: &FeatureStream, states: Vec<SolverState>, dt: f64) -> TrackerOutput {
    let diagnostics = states.iter().map(|s| s.diagnostics).collect();
    TrackerOutput {
        trajectory: SampledTrajectory {
            dt,
            timestamps: features.timestamps.clone(),
            positions: states.iter().map(|s| s.position).collect(),
            velocities: states.iter().map(|s| s.velocity).collect(),
            lap_boundaries: Vec::new(),
        },
        diagnostics,
    }
}

/// Runs the fusion tracker over a whole stream from `initial`. Acoustic
/// frames are applied at the samples that carry them.
pub fn track(
    features: &FeatureStream,
    links: &[LinkGeometry],
    speakers: &SpeakerPair,
    initial: Point2D,
    weights: &FusionWeights,
    solver: &SolverConfig,
    arena: &Arena,
) -> Result<TrackerOutput> {
    weights.validate()?;
    solver.validate()?;
    let dt = check_inputs(features, links, initial, arena)?;
    let ctx = StepContext {
        links,
        speakers,
        weights: *weights,
        solver,
        arena,
    };
    let mut states = Vec::with_capacity(features.len());
    states.push(initial_state(features, links, initial));
    for k in 1..features.len() {
        let step_dt = features.timestamps[k] - features.timestamps[k - 1];
        let next = fuse_step(
            states.last().expect("nonempty"),
            &features.plcr[k],
            Some(&features.acoustic[k]),
            step_dt,
            &ctx,
        );
        states.push(next);
    }
    Ok(finish(features, states, dt))
}

/// Result CSV: `t,x_true,y_true,x_est,y_est,error_m,E1,E2,confidence,snapped`.
/// Truth columns are left empty without a reference trajectory.
pub fn result_to_csv(output: &TrackerOutput, truth: Option<&SampledTrajectory>) -> Result<String> {
    if let Some(t) = truth {
        if t.len() != output.trajectory.len() {
            return Err(Error::LengthMismatch {
                what: "truth samples",
                got: t.len(),
                expected: output.trajectory.len(),
            });
        }
    }
    let mut s = String::from("t,x_true,y_true,x_est,y_est,error_m,E1,E2,confidence,snapped\n");
    for (k, (p, d)) in output
        .trajectory
        .positions
        .iter()
        .zip(&output.diagnostics)
        .enumerate()
    {
        let t = output.trajectory.timestamps[k];
        let (xt, yt, err) = match truth {
            Some(tr) => {
                let q = tr.positions[k];
                (q.x.to_string(), q.y.to_string(), q.distance(*p).to_string())
            }
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            s,
            "{t},{xt},{yt},{},{},{err},{},{},{},{}",
            p.x,
            p.y,
            d.e1,
            d.e2,
            d.confidence,
            u8::from(d.snapped)
        );
    }
    Ok(s)
}

pub fn write_result(path: &Path, output: &TrackerOutput, truth: Option<&SampledTrajectory>) -> Result<()> {
    write_atomic(path, result_to_csv(output, truth)?.as_bytes())
}

pub fn read_result(path: &Path) -> Result<SampledTrajectory> {
    parse_result(path, &read_to_string(path)?)
}

/// Reads the estimated track back from a result CSV. The step is taken from
/// the first two timestamps; lap boundaries are not stored in the file.
pub fn parse_result(path: &Path, text: &str) -> Result<SampledTrajectory> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, format!("missing column {name}")))
    };
    let (ct, cx, cy) = (col("t")?, col("x_est")?, col("y_est")?);
    let mut timestamps = Vec::new();
    let mut positions = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e))?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| parse_err(path, line, format!("bad number `{}`", &rec[j])))
        };
        timestamps.push(num(ct)?);
        positions.push(Point2D::new(num(cx)?, num(cy)?));
    }
    let dt = match timestamps.as_slice() {
        [a, b, ..] if b > a => b - a,
        [_, _, ..] => return Err(Error::parse(path, "timestamps must increase")),
        _ => 1.0,
    };
    Ok(SampledTrajectory::from_positions(dt, timestamps, positions, Vec::new()))
}

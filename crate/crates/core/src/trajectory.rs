//! Ground-truth walking trajectories.
//!
//! A path is traversed as a sequence of legs, each starting and ending at
//! rest. Polygon vertices are turned from rest; circles are driven as a
//! single continuous arc whose speed keeps the lateral acceleration within
//! half of the acceleration budget. Every leg follows a trapezoidal speed
//! profile, so the continuous motion is C1 with acceleration bounded by
//! `max_accel`, and the forward-difference velocities of the samples
//! inherit that bound.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{meta_value, parse_err, read_to_string, split_comments, write_atomic};
use crate::geometry::{Arena, Point2D, Vec2, Velocity2D};

pub const CIRCLE_WAYPOINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Square,
    Circle,
    Triangle,
    TriangleInverted,
    Line,
}

impl Shape {
    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
            Shape::TriangleInverted => "triangle_inverted",
            Shape::Line => "line",
        }
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "square" => Ok(Shape::Square),
            "circle" => Ok(Shape::Circle),
            "triangle" => Ok(Shape::Triangle),
            "triangle_inverted" => Ok(Shape::TriangleInverted),
            "line" => Ok(Shape::Line),
            other => Err(Error::UnknownShape(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathKind {
    Polyline,
    /// Waypoints sample a circle; motion follows the true arc.
    Arc { center: Point2D, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    pub waypoints: Vec<Point2D>,
    pub laps: usize,
    /// Closed paths return to the first waypoint each lap; open paths are
    /// walked out and back.
    pub closed: bool,
    pub kind: PathKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub cruise_speed: f64,
    pub max_accel: f64,
    pub corner_slowdown: f64,
}

impl Default for MotionProfile {
    fn default() -> Self {
        Self {
            cruise_speed: 1.0,
            max_accel: 1.5,
            corner_slowdown: 0.8,
        }
    }
}

impl MotionProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.cruise_speed > 0.0 && self.cruise_speed.is_finite()) {
            return Err(Error::InvalidInput("cruise_speed must be positive".into()));
        }
        if !(self.max_accel > 0.0 && self.max_accel.is_finite()) {
            return Err(Error::InvalidInput("max_accel must be positive".into()));
        }
        if !(self.corner_slowdown > 0.0 && self.corner_slowdown <= 1.0) {
            return Err(Error::InvalidInput(
                "corner_slowdown must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    pub dt: f64,
    pub timestamps: Vec<f64>,
    pub positions: Vec<Point2D>,
    /// Forward differences: `positions[k + 1] = positions[k] + velocities[k] * dt`.
    pub velocities: Vec<Velocity2D>,
    /// Sample index at which each lap completes.
    pub lap_boundaries: Vec<usize>,
}

impl SampledTrajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.timestamps.last().copied().unwrap_or(0.0)
    }

    pub fn fits_in(&self, arena: &Arena) -> bool {
        self.positions.iter().all(|p| arena.contains(*p))
    }

    /// Trajectory built from positions only; velocities are forward
    /// differences and the final sample is at rest.
    pub fn from_positions(
        dt: f64,
        timestamps: Vec<f64>,
        positions: Vec<Point2D>,
        lap_boundaries: Vec<usize>,
    ) -> Self {
        let velocities = forward_velocities(&positions, dt);
        Self {
            dt,
            timestamps,
            positions,
            velocities,
            lap_boundaries,
        }
    }

    /// First `n` samples; lap boundaries past the cut are dropped.
    pub fn prefix(&self, n: usize) -> SampledTrajectory {
        let n = n.min(self.len());
        SampledTrajectory {
            dt: self.dt,
            timestamps: self.timestamps[..n].to_vec(),
            positions: self.positions[..n].to_vec(),
            velocities: self.velocities[..n].to_vec(),
            lap_boundaries: self
                .lap_boundaries
                .iter()
                .copied()
                .filter(|&b| b < n)
                .collect(),
        }
    }
}

pub(crate) fn forward_velocities(positions: &[Point2D], dt: f64) -> Vec<Velocity2D> {
    let mut v: Vec<Velocity2D> = positions
        .windows(2)
        .map(|w| Velocity2D::from((w[1] - w[0]).scale(1.0 / dt)))
        .collect();
    if !positions.is_empty() {
        v.push(Velocity2D::ZERO);
    }
    v
}

pub fn generate_shape(shape: Shape, center: Point2D, size: f64, laps: usize) -> Result<WaypointPath> {
    if !(size > 0.0 && size.is_finite()) {
        return Err(Error::InvalidInput("shape size must be positive".into()));
    }
    if laps == 0 {
        return Err(Error::InvalidInput("laps must be at least 1".into()));
    }
    let h = 0.5 * size;
    let at = |dx: f64, dy: f64| Point2D::new(center.x + dx, center.y + dy);
    let path = match shape {
        Shape::Square => WaypointPath {
            waypoints: vec![at(-h, -h), at(h, -h), at(h, h), at(-h, h)],
            laps,
            closed: true,
            kind: PathKind::Polyline,
        },
        Shape::Circle => {
            let waypoints = (0..CIRCLE_WAYPOINTS)
                .map(|i| {
                    let theta = -0.5 * PI + 2.0 * PI * i as f64 / CIRCLE_WAYPOINTS as f64;
                    at(h * theta.cos(), h * theta.sin())
                })
                .collect();
            WaypointPath {
                waypoints,
                laps,
                closed: true,
                kind: PathKind::Arc { center, radius: h },
            }
        }
        Shape::Triangle | Shape::TriangleInverted => {
            // Equilateral, side `size`, centroid at `center`.
            let height = size * 3f64.sqrt() / 2.0;
            let flip = if shape == Shape::Triangle { 1.0 } else { -1.0 };
            WaypointPath {
                waypoints: vec![
                    at(-h, -flip * height / 3.0),
                    at(h, -flip * height / 3.0),
                    at(0.0, flip * 2.0 * height / 3.0),
                ],
                laps,
                closed: true,
                kind: PathKind::Polyline,
            }
        }
        Shape::Line => WaypointPath {
            waypoints: vec![at(-h, 0.0), at(h, 0.0)],
            laps,
            closed: false,
            kind: PathKind::Polyline,
        },
    };
    Ok(path)
}

#[derive(Debug, Clone, Copy)]
struct Trapezoid {
    length: f64,
    accel: f64,
    peak: f64,
    ramp_time: f64,
    ramp_dist: f64,
    total_time: f64,
}

impl Trapezoid {
    fn new(length: f64, peak: f64, accel: f64) -> Self {
        let (peak, ramp_time, ramp_dist, cruise_time) = if length >= peak * peak / accel {
            let t = peak / accel;
            let d = 0.5 * peak * t;
            (peak, t, d, (length - 2.0 * d) / peak)
        } else {
            let v = (length * accel).sqrt();
            (v, v / accel, 0.5 * length, 0.0)
        };
        Self {
            length,
            accel,
            peak,
            ramp_time,
            ramp_dist,
            total_time: 2.0 * ramp_time + cruise_time,
        }
    }

    fn distance_at(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, self.total_time);
        if tau < self.ramp_time {
            0.5 * self.accel * tau * tau
        } else if tau <= self.total_time - self.ramp_time {
            self.ramp_dist + self.peak * (tau - self.ramp_time)
        } else {
            let r = self.total_time - tau;
            self.length - 0.5 * self.accel * r * r
        }
    }

    fn time_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length);
        if s <= self.ramp_dist {
            (2.0 * s / self.accel).sqrt()
        } else if s <= self.length - self.ramp_dist {
            self.ramp_time + (s - self.ramp_dist) / self.peak
        } else {
            self.total_time - (2.0 * (self.length - s) / self.accel).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Curve {
    Line { from: Point2D, dir: Vec2 },
    Arc { center: Point2D, radius: f64, start_angle: f64 },
}

impl Curve {
    fn point_at(&self, s: f64) -> Point2D {
        match *self {
            Curve::Line { from, dir } => from + dir.scale(s),
            Curve::Arc {
                center,
                radius,
                start_angle,
            } => {
                let a = start_angle + s / radius;
                Point2D::new(center.x + radius * a.cos(), center.y + radius * a.sin())
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Leg {
    curve: Curve,
    profile: Trapezoid,
    start_time: f64,
}

pub fn sample_trajectory(
    path: &WaypointPath,
    profile: &MotionProfile,
    rate: f64,
) -> Result<SampledTrajectory> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidInput("sample rate must be positive".into()));
    }
    profile.validate()?;
    if path.waypoints.len() < 2 {
        return Err(Error::InvalidInput("a path needs at least two waypoints".into()));
    }
    if path.laps == 0 {
        return Err(Error::InvalidInput("laps must be at least 1".into()));
    }
    let dt = 1.0 / rate;
    let (legs, lap_times) = build_legs(path, profile)?;
    let end_time = legs
        .last()
        .map(|l| l.start_time + l.profile.total_time)
        .unwrap_or(0.0);

    let mut n = (end_time / dt + 1e-9).floor() as usize + 1;
    if ((n - 1) as f64) * dt < end_time - 1e-12 {
        n += 1;
    }
    let mut positions = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    let mut leg_idx = 0;
    for k in 0..n {
        let t = k as f64 * dt;
        timestamps.push(t);
        let tc = t.min(end_time);
        while leg_idx + 1 < legs.len() && tc >= legs[leg_idx + 1].start_time {
            leg_idx += 1;
        }
        let leg = &legs[leg_idx];
        let s = leg.profile.distance_at(tc - leg.start_time);
        positions.push(leg.curve.point_at(s));
    }
    let lap_boundaries = lap_times
        .iter()
        .map(|&t| ((t / dt - 1e-9).ceil().max(0.0) as usize).min(n - 1))
        .collect();
    Ok(SampledTrajectory::from_positions(
        dt,
        timestamps,
        positions,
        lap_boundaries,
    ))
}

fn build_legs(path: &WaypointPath, profile: &MotionProfile) -> Result<(Vec<Leg>, Vec<f64>)> {
    let mut legs = Vec::new();
    let mut lap_times = Vec::with_capacity(path.laps);
    let mut t = 0.0;
    match path.kind {
        PathKind::Arc { center, radius } => {
            if !(radius > 0.0) {
                return Err(Error::SegmentTooShort { index: 0 });
            }
            let a = profile.max_accel;
            let peak = profile.corner_slowdown * profile.cruise_speed.min((0.5 * a * radius).sqrt());
            let lateral = peak * peak / radius;
            let tangential = (a * a - lateral * lateral).max(0.0).sqrt();
            let start = path.waypoints[0];
            let lap_len = 2.0 * PI * radius;
            let trap = Trapezoid::new(lap_len * path.laps as f64, peak, tangential);
            legs.push(Leg {
                curve: Curve::Arc {
                    center,
                    radius,
                    start_angle: (start.y - center.y).atan2(start.x - center.x),
                },
                profile: trap,
                start_time: 0.0,
            });
            for j in 1..=path.laps {
                lap_times.push(trap.time_at(lap_len * j as f64));
            }
        }
        PathKind::Polyline => {
            let mut lap: Vec<Point2D> = path.waypoints.clone();
            if path.closed {
                lap.push(path.waypoints[0]);
            } else {
                lap.extend(path.waypoints.iter().rev().skip(1).copied());
            }
            let mut index = 0;
            for _ in 0..path.laps {
                for w in lap.windows(2) {
                    let d = w[1] - w[0];
                    let length = d.norm();
                    if !(length > 1e-9) {
                        return Err(Error::SegmentTooShort { index });
                    }
                    let trap = Trapezoid::new(length, profile.cruise_speed, profile.max_accel);
                    legs.push(Leg {
                        curve: Curve::Line {
                            from: w[0],
                            dir: d.scale(1.0 / length),
                        },
                        profile: trap,
                        start_time: t,
                    });
                    t += trap.total_time;
                    index += 1;
                }
                lap_times.push(t);
            }
        }
    }
    Ok((legs, lap_times))
}

/// Truth CSV: `#dt=` and `#laps=` (semicolon separated boundaries) comment
/// lines, then `t,x,y`.
pub fn trajectory_to_csv(traj: &SampledTrajectory) -> String {
    let laps: Vec<String> = traj.lap_boundaries.iter().map(|b| b.to_string()).collect();
    let mut s = format!("#dt={}\n#laps={}\nt,x,y\n", traj.dt, laps.join(";"));
    for (t, p) in traj.timestamps.iter().zip(&traj.positions) {
        let _ = writeln!(s, "{t},{},{}", p.x, p.y);
    }
    s
}

pub fn write_trajectory(path: &Path, traj: &SampledTrajectory) -> Result<()> {
    write_atomic(path, trajectory_to_csv(traj).as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<SampledTrajectory> {
    parse_trajectory(path, &read_to_string(path)?)
}

pub fn parse_trajectory(path: &Path, text: &str) -> Result<SampledTrajectory> {
    let (meta, body) = split_comments(text);
    let dt: f64 = meta_value(&meta, "dt")
        .ok_or_else(|| Error::parse(path, "missing #dt= line"))?
        .parse()
        .map_err(|_| Error::parse(path, "bad #dt= value"))?;
    if !(dt > 0.0) {
        return Err(Error::parse(path, "#dt= must be positive"));
    }
    let laps = match meta_value(&meta, "laps") {
        None | Some("") => Vec::new(),
        Some(v) => v
            .split(';')
            .map(|b| b.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(path, "bad #laps= value"))?,
    };
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["t", "x", "y"] {
        return Err(Error::parse(path, "expected header t,x,y"));
    }
    let mut timestamps = Vec::new();
    let mut positions = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 4;
        let rec = rec.map_err(|e| parse_err(path, line, e))?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| parse_err(path, line, format!("bad number `{}`", &rec[j])))
        };
        timestamps.push(num(0)?);
        positions.push(Point2D::new(num(1)?, num(2)?));
    }
    if laps.iter().any(|&b| b >= positions.len()) {
        return Err(Error::parse(path, "lap boundary past the last sample"));
    }
    Ok(SampledTrajectory::from_positions(dt, timestamps, positions, laps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(shape: Shape, size: f64, laps: usize) -> SampledTrajectory {
        let path = generate_shape(shape, Point2D::new(0.0, 0.0), size, laps).unwrap();
        sample_trajectory(&path, &MotionProfile::default(), 100.0).unwrap()
    }

    #[test]
    fn square_corners() {
        let p = generate_shape(Shape::Square, Point2D::new(0.0, 0.0), 2.0, 1).unwrap();
        assert_eq!(
            p.waypoints,
            vec![
                Point2D::new(-1.0, -1.0),
                Point2D::new(1.0, -1.0),
                Point2D::new(1.0, 1.0),
                Point2D::new(-1.0, 1.0)
            ]
        );
        assert!(p.closed);
    }

    #[test]
    fn line_endpoints_and_back_and_forth() {
        let p = generate_shape(Shape::Line, Point2D::new(0.0, 0.0), 2.0, 1).unwrap();
        assert_eq!(p.waypoints, vec![Point2D::new(-1.0, 0.0), Point2D::new(1.0, 0.0)]);
        assert!(!p.closed);
        let t = sample_trajectory(&p, &MotionProfile::default(), 100.0).unwrap();
        // The turnaround falls between samples; the walker is within
        // a*dt^2/2 of it at the nearest sample.
        let far = t.positions.iter().map(|q| q.x).fold(f64::MIN, f64::max);
        assert!((far - 1.0).abs() <= 0.5 * 1.5 * 1e-4 + 1e-12);
        assert!(t.positions.last().unwrap().distance(Point2D::new(-1.0, 0.0)) < 1e-9);
    }

    #[test]
    fn circle_waypoints_on_radius() {
        let p = generate_shape(Shape::Circle, Point2D::new(0.5, -0.5), 2.0, 1).unwrap();
        assert_eq!(p.waypoints.len(), CIRCLE_WAYPOINTS);
        for w in &p.waypoints {
            assert!((w.distance(Point2D::new(0.5, -0.5)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unknown_shape_rejected() {
        assert!(matches!("hexagon".parse::<Shape>(), Err(Error::UnknownShape(_))));
        assert_eq!("triangle_inverted".parse::<Shape>().unwrap(), Shape::TriangleInverted);
    }

    #[test]
    fn straight_segment_cruises_at_speed() {
        let path = WaypointPath {
            waypoints: vec![Point2D::new(0.0, 0.0), Point2D::new(10.0, 0.0)],
            laps: 1,
            closed: true,
            kind: PathKind::Polyline,
        };
        let t = sample_trajectory(&path, &MotionProfile::default(), 100.0).unwrap();
        // Out leg: ramp 2/3 s each end, 10 - 2/3 m at cruise => 10.667 s.
        let ramp = 1.0 / 1.5;
        let leg = 2.0 * ramp + (10.0 - ramp) / 1.0;
        let k0 = ((ramp + 0.05) * 100.0) as usize;
        let k1 = ((leg - ramp - 0.05) * 100.0) as usize;
        assert!(k1 - k0 > 900);
        for k in k0..k1 {
            assert!((t.velocities[k].speed() - 1.0).abs() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn zero_length_segment_rejected() {
        let path = WaypointPath {
            waypoints: vec![Point2D::new(1.0, 1.0), Point2D::new(1.0, 1.0)],
            laps: 1,
            closed: true,
            kind: PathKind::Polyline,
        };
        assert!(matches!(
            sample_trajectory(&path, &MotionProfile::default(), 100.0),
            Err(Error::SegmentTooShort { .. })
        ));
        let p = generate_shape(Shape::Square, Point2D::new(0.0, 0.0), 1.0, 1).unwrap();
        assert!(sample_trajectory(&p, &MotionProfile::default(), 0.0).is_err());
    }

    #[test]
    fn square_lap_count() {
        let t = traj(Shape::Square, 4.0, 4);
        assert_eq!(t.lap_boundaries.len(), 4);
        assert!(t.lap_boundaries.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*t.lap_boundaries.last().unwrap(), t.len() - 1);
        for &b in &t.lap_boundaries {
            assert!(t.positions[b].distance(Point2D::new(-2.0, -2.0)) < 1e-3);
        }
    }

    fn check_invariants(t: &SampledTrajectory, profile: &MotionProfile) {
        assert_eq!(t.positions.len(), t.velocities.len());
        assert_eq!(t.positions.len(), t.timestamps.len());
        for k in 0..t.len() {
            assert!(t.velocities[k].speed() <= profile.cruise_speed + 1e-9);
        }
        for k in 0..t.len() - 1 {
            let dv = (t.velocities[k + 1].as_vec() - t.velocities[k].as_vec()).norm() / t.dt;
            assert!(dv <= profile.max_accel * (1.0 + 1e-6), "k={k} accel {dv}");
            let step = t.positions[k + 1] - t.positions[k] - t.velocities[k].displacement(t.dt);
            assert!(step.norm() <= profile.max_accel * t.dt * t.dt);
        }
        // Integrating velocities from the start reproduces the positions.
        let mut p = t.positions[0];
        for k in 0..t.len() - 1 {
            p = p + t.velocities[k].displacement(t.dt);
            let bound = profile.max_accel * t.dt * t.dt * (k + 1) as f64;
            assert!(p.distance(t.positions[k + 1]) <= bound.max(1e-9));
        }
    }

    #[test]
    fn invariants_hold_for_every_shape() {
        let profile = MotionProfile::default();
        for shape in [
            Shape::Square,
            Shape::Circle,
            Shape::Triangle,
            Shape::TriangleInverted,
            Shape::Line,
        ] {
            let t = traj(shape, 3.0, 2);
            check_invariants(&t, &profile);
            assert_eq!(t.lap_boundaries.len(), 2, "{shape:?}");
        }
    }

    #[test]
    fn circle_samples_stay_on_radius() {
        let t = traj(Shape::Circle, 2.0, 3);
        for p in &t.positions {
            assert!((p.distance(Point2D::new(0.0, 0.0)) - 1.0).abs() <= 1e-3);
        }
        assert_eq!(t.lap_boundaries.len(), 3);
    }

    #[test]
    fn truth_csv_round_trip() {
        let t = traj(Shape::Square, 4.0, 2);
        let text = trajectory_to_csv(&t);
        assert!(text.starts_with("#dt=0.01\n#laps="));
        let back = parse_trajectory(Path::new("truth.csv"), &text).unwrap();
        assert_eq!(back.positions, t.positions);
        assert_eq!(back.timestamps, t.timestamps);
        assert_eq!(back.lap_boundaries, t.lap_boundaries);
        assert_eq!(trajectory_to_csv(&back), text);
    }

    #[test]
    fn truth_csv_rejects_bad_laps() {
        let text = "#dt=0.01\n#laps=5\nt,x,y\n0,0,0\n";
        assert!(parse_trajectory(Path::new("truth.csv"), text).is_err());
        let text = "#laps=\nt,x,y\n0,0,0\n";
        assert!(parse_trajectory(Path::new("truth.csv"), text).is_err());
    }
}

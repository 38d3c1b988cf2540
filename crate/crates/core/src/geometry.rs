//! Planar geometry shared by every other module: points, links, speaker
//! pairs, the feasible arena, and the two path-length functions whose level
//! sets are the Wi-Fi ellipses and the acoustic/DPLCR hyperbolas.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2D) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Displacement or direction in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Sub for Point2D {
    type Output = Vec2;
    fn sub(self, rhs: Point2D) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Add<Vec2> for Point2D {
    type Output = Point2D;
    fn add(self, rhs: Vec2) -> Point2D {
        Point2D::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub<Vec2> for Point2D {
    type Output = Point2D;
    fn sub(self, rhs: Vec2) -> Point2D {
        Point2D::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        self.scale(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity2D {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity2D {
    pub const ZERO: Velocity2D = Velocity2D { vx: 0.0, vy: 0.0 };

    pub const fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn speed(self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn as_vec(self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    /// Displacement covered in `dt` seconds.
    pub fn displacement(self, dt: f64) -> Vec2 {
        Vec2::new(self.vx * dt, self.vy * dt)
    }
}

impl From<Vec2> for Velocity2D {
    fn from(v: Vec2) -> Self {
        Velocity2D::new(v.x, v.y)
    }
}

/// How a link's PLCR relates to the user position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    /// Transmitter -> user -> receiver; iso-lines are ellipses.
    Los,
    /// Two receivers sharing the transmitter -> user segment; the
    /// differential path length has hyperbolic iso-lines.
    Nlos,
}

impl LinkMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkMode::Los => "los",
            LinkMode::Nlos => "nlos",
        }
    }
}

impl std::str::FromStr for LinkMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "los" => Ok(LinkMode::Los),
            "nlos" => Ok(LinkMode::Nlos),
            other => Err(Error::InvalidInput(format!("unknown link mode `{other}`"))),
        }
    }
}

/// One Wi-Fi feature channel. In NLoS mode `tx` and `rx` are the two
/// receivers of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub tx: Point2D,
    pub rx: Point2D,
    pub mode: LinkMode,
}

impl LinkGeometry {
    pub fn new(tx: Point2D, rx: Point2D, mode: LinkMode) -> Result<Self> {
        if !(tx.is_finite() && rx.is_finite()) {
            return Err(Error::InvalidInput("link endpoints must be finite".into()));
        }
        if tx.distance(rx) <= 0.0 {
            return Err(Error::InvalidInput("link endpoints coincide".into()));
        }
        Ok(Self { tx, rx, mode })
    }

    pub fn los(tx: Point2D, rx: Point2D) -> Result<Self> {
        Self::new(tx, rx, LinkMode::Los)
    }

    pub fn nlos(rx1: Point2D, rx2: Point2D) -> Result<Self> {
        Self::new(rx1, rx2, LinkMode::Nlos)
    }

    pub fn baseline(&self) -> f64 {
        self.tx.distance(self.rx)
    }

    /// The path-length function whose gradient is this link's steering row.
    pub fn path_length(&self, p: Point2D) -> f64 {
        match self.mode {
            LinkMode::Los => p.distance(self.tx) + p.distance(self.rx),
            LinkMode::Nlos => p.distance(self.tx) - p.distance(self.rx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeakerPair {
    /// Up-chirp speaker.
    pub s1: Point2D,
    /// Down-chirp speaker.
    pub s2: Point2D,
}

impl SpeakerPair {
    pub fn new(s1: Point2D, s2: Point2D) -> Result<Self> {
        if !(s1.is_finite() && s2.is_finite()) || s1.distance(s2) <= 0.0 {
            return Err(Error::InvalidInput(
                "speaker pair needs two distinct finite positions".into(),
            ));
        }
        Ok(Self { s1, s2 })
    }

    pub fn baseline(&self) -> f64 {
        self.s1.distance(self.s2)
    }

    pub fn midpoint(&self) -> Point2D {
        Point2D::new(0.5 * (self.s1.x + self.s2.x), 0.5 * (self.s1.y + self.s2.y))
    }

    pub fn swapped(&self) -> SpeakerPair {
        SpeakerPair {
            s1: self.s2,
            s2: self.s1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Arena {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let a = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::InvalidInput(format!(
                "arena bounds must satisfy x_min < x_max and y_min < y_max, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point2D) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2D {
        Point2D::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

/// Transmitter -> `p` -> receiver path length.
pub fn reflection_path_length(p: Point2D, link: &LinkGeometry) -> f64 {
    p.distance(link.tx) + p.distance(link.rx)
}

/// `|p - s1| - |p - s2|`. The constant focal term that some hyperbola
/// formulations add on both sides cancels, so it is omitted.
pub fn path_difference(p: Point2D, pair: &SpeakerPair) -> f64 {
    p.distance(pair.s1) - p.distance(pair.s2)
}

/// Gradient of [`path_difference`] with respect to `p`. Zero on the focal
/// axis outside the segment, where the hyperbola degenerates.
pub fn path_difference_gradient(p: Point2D, pair: &SpeakerPair) -> Vec2 {
    unit_or_zero(p - pair.s1) - unit_or_zero(p - pair.s2)
}

/// Euclidean projection onto the arena rectangle.
pub fn nearest_feasible_point(p: Point2D, arena: &Arena) -> Point2D {
    Point2D::new(
        p.x.clamp(arena.x_min, arena.x_max),
        p.y.clamp(arena.y_min, arena.y_max),
    )
}

pub(crate) fn unit_or_zero(v: Vec2) -> Vec2 {
    let n = v.norm();
    if n > 0.0 {
        v.scale(1.0 / n)
    } else {
        Vec2::default()
    }
}

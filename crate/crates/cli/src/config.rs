//! Experiment configuration: a flat `section.key = value` text file.
//! Every key is optional; missing keys take the defaults below.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dualtrack::acoustic::{AcousticConfig, ChirpConfig};
use dualtrack::features::{DeviceLayout, SynthesisConfig, TdofSource};
use dualtrack::fusion::{weights_from_noise, FusionWeights, SolverConfig};
use dualtrack::geometry::{Arena, LinkGeometry, LinkMode, Point2D, SpeakerPair};
use dualtrack::search::SearchConfig;
use dualtrack::trajectory::{generate_shape, sample_trajectory, MotionProfile, SampledTrajectory, Shape};
use dualtrack::wifi::WifiConfig;
use dualtrack::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Written as a string when it does not fit a signed 64-bit integer.
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub arena: ArenaSection,
    pub layout: LayoutSection,
    pub trajectory: TrajectorySection,
    pub wifi: WifiSection,
    pub acoustic: AcousticSection,
    pub fusion: FusionSection,
    pub search: SearchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaSection {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSection {
    /// `los` or `nlos`.
    pub mode: String,
    /// `[x1, y1, x2, y2]` per link: transmitter then receiver in LoS mode,
    /// the two receivers of a pair in NLoS mode.
    pub links: Vec<[f64; 4]>,
    pub speaker_up: [f64; 2],
    pub speaker_down: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub shape: String,
    pub center: [f64; 2],
    pub size: f64,
    pub laps: usize,
    pub cruise_speed: f64,
    pub max_accel: f64,
    pub corner_slowdown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WifiSection {
    pub carrier_frequency: f64,
    /// Feature and trajectory sample rate.
    pub plcr_rate: f64,
    pub noise_sigma_v: f64,
    pub noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcousticSection {
    pub c_s: f64,
    pub ref_amplitude_at_1m: f64,
    pub effective_range: f64,
    pub detection_range: f64,
    pub f_min: f64,
    pub bandwidth: f64,
    pub sweep_time: f64,
    pub sample_rate: f64,
    pub noise_sigma_d: f64,
    pub receiver_noise: f64,
    /// `waveform` or `oracle`.
    pub tdof_source: String,
    pub noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    /// Explicit weights. When absent they are derived from the noise sigmas.
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub horizon: f64,
    pub gn_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub cell_size: f64,
    pub window: f64,
    pub refine: bool,
    pub min_high_conf: usize,
    pub conf_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            arena: ArenaSection::default(),
            layout: LayoutSection::default(),
            trajectory: TrajectorySection::default(),
            wifi: WifiSection::default(),
            acoustic: AcousticSection::default(),
            fusion: FusionSection::default(),
            search: SearchSection::default(),
        }
    }
}

impl Default for ArenaSection {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 6.0,
            y_min: 0.0,
            y_max: 6.0,
        }
    }
}

impl Default for LayoutSection {
    fn default() -> Self {
        Self {
            mode: "los".into(),
            links: vec![[0.0, 0.0, 6.0, 0.0], [0.0, 0.0, 0.0, 6.0], [6.0, 6.0, 0.0, 6.0]],
            speaker_up: [2.5, 0.0],
            speaker_down: [3.5, 0.0],
        }
    }
}

impl Default for TrajectorySection {
    fn default() -> Self {
        let m = MotionProfile::default();
        Self {
            shape: "square".into(),
            center: [3.0, 3.0],
            size: 4.0,
            laps: 4,
            cruise_speed: m.cruise_speed,
            max_accel: m.max_accel,
            corner_slowdown: m.corner_slowdown,
        }
    }
}

impl Default for WifiSection {
    fn default() -> Self {
        let w = WifiConfig::default();
        Self {
            carrier_frequency: w.carrier_frequency,
            plcr_rate: w.plcr_rate,
            noise_sigma_v: w.noise_sigma_v,
            noise: true,
        }
    }
}

impl Default for AcousticSection {
    fn default() -> Self {
        let a = AcousticConfig::default();
        Self {
            c_s: a.c_s,
            ref_amplitude_at_1m: a.ref_amplitude_at_1m,
            effective_range: a.effective_range,
            detection_range: a.detection_range,
            f_min: a.up.f_min,
            bandwidth: a.up.bandwidth,
            sweep_time: a.up.sweep_time,
            sample_rate: a.up.sample_rate,
            noise_sigma_d: a.noise_sigma_d,
            receiver_noise: a.receiver_noise,
            tdof_source: "waveform".into(),
            noise: true,
        }
    }
}

impl Default for FusionSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            k1: None,
            k2: None,
            horizon: s.horizon,
            gn_iterations: s.gn_iterations,
        }
    }
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchConfig::default();
        Self {
            cell_size: s.cell_size,
            window: s.window,
            refine: s.refine,
            min_high_conf: 1,
            conf_threshold: dualtrack::search::HIGH_CONFIDENCE,
        }
    }
}

mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom("seed must be nonnegative")),
            Repr::Text(s) => s.trim().parse().map_err(de::Error::custom),
        }
    }
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    let msg = msg.to_string();
    let msg = msg.strip_prefix("invalid input: ").unwrap_or(&msg);
    Error::InvalidInput(format!("{field}: {msg}"))
}

fn point(xy: [f64; 2]) -> Point2D {
    Point2D::new(xy[0], xy[1])
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = dualtrack::fsutil::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    /// One `section.key = value` line per field, keys sorted.
    pub fn to_text(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }

    pub fn mode(&self) -> Result<LinkMode> {
        self.layout.mode.parse().map_err(|e| field_err("layout.mode", e))
    }

    pub fn arena(&self) -> Result<Arena> {
        let a = &self.arena;
        Arena::new(a.x_min, a.x_max, a.y_min, a.y_max).map_err(|e| field_err("arena", e))
    }

    pub fn device_layout(&self) -> Result<DeviceLayout> {
        let mode = self.mode()?;
        if self.layout.links.is_empty() {
            return Err(field_err("layout.links", "at least one link is required"));
        }
        let links = self
            .layout
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| {
                LinkGeometry::new(Point2D::new(l[0], l[1]), Point2D::new(l[2], l[3]), mode)
                    .map_err(|e| field_err(&format!("layout.links[{i}]"), e))
            })
            .collect::<Result<Vec<_>>>()?;
        let speakers = SpeakerPair::new(point(self.layout.speaker_up), point(self.layout.speaker_down))
            .map_err(|e| field_err("layout.speaker_up", e))?;
        let layout = DeviceLayout {
            arena: self.arena()?,
            links,
            speakers,
        };
        layout.validate().map_err(|e| field_err("layout", e))?;
        Ok(layout)
    }

    pub fn shape(&self) -> Result<Shape> {
        self.trajectory.shape.parse().map_err(|e| field_err("trajectory.shape", e))
    }

    pub fn motion(&self) -> MotionProfile {
        MotionProfile {
            cruise_speed: self.trajectory.cruise_speed,
            max_accel: self.trajectory.max_accel,
            corner_slowdown: self.trajectory.corner_slowdown,
        }
    }

    pub fn wifi(&self) -> WifiConfig {
        WifiConfig::with_carrier(self.wifi.carrier_frequency, self.wifi.plcr_rate, self.wifi.noise_sigma_v)
    }

    pub fn acoustic(&self) -> AcousticConfig {
        let a = &self.acoustic;
        let chirp = |base: ChirpConfig| ChirpConfig {
            f_min: a.f_min,
            bandwidth: a.bandwidth,
            sweep_time: a.sweep_time,
            sample_rate: a.sample_rate,
            ..base
        };
        AcousticConfig {
            c_s: a.c_s,
            ref_amplitude_at_1m: a.ref_amplitude_at_1m,
            effective_range: a.effective_range,
            detection_range: a.detection_range,
            up: chirp(ChirpConfig::up()),
            down: chirp(ChirpConfig::down()),
            noise_sigma_d: a.noise_sigma_d,
            receiver_noise: a.receiver_noise,
        }
    }

    pub fn synthesis(&self) -> Result<SynthesisConfig> {
        Ok(SynthesisConfig {
            wifi: self.wifi(),
            acoustic: self.acoustic(),
            tdof_source: self
                .acoustic
                .tdof_source
                .parse::<TdofSource>()
                .map_err(|e| field_err("acoustic.tdof_source", e))?,
            plcr_noise: self.wifi.noise,
            tdof_noise: self.acoustic.noise,
        })
    }

    pub fn weights(&self) -> Result<FusionWeights> {
        match (self.fusion.k1, self.fusion.k2) {
            (Some(k1), Some(k2)) => {
                let w = FusionWeights {
                    k1,
                    k2,
                    sigma_v: self.wifi.noise_sigma_v,
                    sigma_d: self.acoustic.noise_sigma_d,
                };
                w.validate().map_err(|e| field_err("fusion.k1", e))?;
                Ok(w)
            }
            (None, None) => weights_from_noise(self.wifi.noise_sigma_v, self.acoustic.noise_sigma_d, self.acoustic.c_s)
                .map_err(|e| field_err("wifi.noise_sigma_v", e)),
            _ => Err(field_err("fusion.k1", "k1 and k2 must be given together")),
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            c_s: self.acoustic.c_s,
            horizon: self.fusion.horizon,
            gn_iterations: self.fusion.gn_iterations,
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            cell_size: self.search.cell_size,
            window: self.search.window,
            refine: self.search.refine,
        }
    }

    pub fn truth(&self) -> Result<SampledTrajectory> {
        let path = generate_shape(
            self.shape()?,
            point(self.trajectory.center),
            self.trajectory.size,
            self.trajectory.laps,
        )
        .map_err(|e| field_err("trajectory", e))?;
        let traj = sample_trajectory(&path, &self.motion(), self.wifi.plcr_rate).map_err(|e| field_err("trajectory", e))?;
        let arena = self.arena()?;
        if !traj.fits_in(&arena) {
            return Err(field_err("trajectory", "path leaves the arena"));
        }
        Ok(traj)
    }

    /// Checks every section, reporting the first offending field.
    pub fn validate(&self) -> Result<()> {
        self.device_layout()?;
        self.motion().validate().map_err(|e| field_err("trajectory", e))?;
        self.wifi().validate().map_err(|e| field_err("wifi", e))?;
        self.acoustic().validate().map_err(|e| field_err("acoustic", e))?;
        self.synthesis()?;
        self.weights()?;
        self.solver().validate().map_err(|e| field_err("fusion", e))?;
        self.search().validate().map_err(|e| field_err("search", e))?;
        if self.search.min_high_conf == 0 {
            return Err(field_err("search.min_high_conf", "must be at least 1"));
        }
        if !(self.search.conf_threshold > 0.0 && self.search.conf_threshold <= 1.0) {
            return Err(field_err("search.conf_threshold", "must be in (0, 1]"));
        }
        self.truth()?;
        Ok(())
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            // Scalars first so a section's own keys stay together.
            for (k, v) in t.iter().filter(|(_, v)| !v.is_table()) {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                let _ = writeln!(out, "{key} = {v}");
            }
            for (k, v) in t.iter().filter(|(_, v)| v.is_table()) {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            let _ = writeln!(out, "{prefix} = {other}");
        }
    }
}

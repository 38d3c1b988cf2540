//! Time-aligned feature streams (Wi-Fi PLCR plus acoustic TDoF), their
//! synthesis from a trajectory, and the CSV formats they travel in.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acoustic::{
    confidence_score, tdof_oracle, AcousticConfig, AcousticMeasurement, CrossChirpReceiver,
};
use crate::error::{Error, Result};
use crate::fsutil::{meta_value, parse_err, read_to_string, split_comments, write_atomic};
use crate::geometry::{Arena, LinkGeometry, LinkMode, Point2D, SpeakerPair};
use crate::seed::component_rng;
use crate::trajectory::SampledTrajectory;
use crate::wifi::{add_plcr_noise, synthesize_plcr, WifiConfig};

/// Device placement for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceLayout {
    pub arena: Arena,
    pub links: Vec<LinkGeometry>,
    pub speakers: SpeakerPair,
}

impl DeviceLayout {
    pub fn validate(&self) -> Result<()> {
        self.arena.validate()?;
        if self.links.is_empty() {
            return Err(Error::InvalidInput("layout has no links".into()));
        }
        let mode = self.links[0].mode;
        if self.links.iter().any(|l| l.mode != mode) {
            return Err(Error::InvalidInput("all links must share one mode".into()));
        }
        let devices = self
            .links
            .iter()
            .flat_map(|l| [l.tx, l.rx])
            .chain([self.speakers.s1, self.speakers.s2]);
        for d in devices {
            if !self.arena.contains(d) {
                return Err(Error::InvalidInput(format!(
                    "device at ({}, {}) lies outside the arena",
                    d.x, d.y
                )));
            }
        }
        Ok(())
    }

    pub fn mode(&self) -> LinkMode {
        self.links[0].mode
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    pub timestamps: Vec<f64>,
    pub mode: LinkMode,
    /// `plcr[k][i]` is link `i` at sample `k`.
    pub plcr: Vec<Vec<f64>>,
    /// One entry per sample; samples without an acoustic frame hold an
    /// absent measurement.
    pub acoustic: Vec<AcousticMeasurement>,
}

impl FeatureStream {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn links(&self) -> usize {
        self.plcr.first().map_or(0, Vec::len)
    }

    pub fn dt(&self) -> Option<f64> {
        if self.len() >= 2 {
            Some(self.timestamps[1] - self.timestamps[0])
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        if self.plcr.len() != n {
            return Err(Error::LengthMismatch {
                what: "PLCR",
                got: self.plcr.len(),
                expected: n,
            });
        }
        if self.acoustic.len() != n {
            return Err(Error::LengthMismatch {
                what: "acoustic",
                got: self.acoustic.len(),
                expected: n,
            });
        }
        let l = self.links();
        for row in &self.plcr {
            if row.len() != l {
                return Err(Error::LengthMismatch {
                    what: "PLCR row",
                    got: row.len(),
                    expected: l,
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("non-finite PLCR value".into()));
            }
        }
        for (k, (t, a)) in self.timestamps.iter().zip(&self.acoustic).enumerate() {
            if (t - a.timestamp).abs() > 1e-9 {
                return Err(Error::Misaligned {
                    index: k,
                    a: *t,
                    b: a.timestamp,
                });
            }
            if !(0.0..=1.0).contains(&a.confidence) {
                return Err(Error::InvalidInput(format!(
                    "confidence {} outside [0, 1] at sample {k}",
                    a.confidence
                )));
            }
        }
        Ok(())
    }

    /// Same stream with every acoustic confidence set to zero.
    pub fn without_acoustic(&self) -> FeatureStream {
        let mut out = self.clone();
        for a in &mut out.acoustic {
            a.confidence = 0.0;
        }
        out
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> FeatureStream {
        FeatureStream {
            timestamps: self.timestamps[range.clone()].to_vec(),
            mode: self.mode,
            plcr: self.plcr[range.clone()].to_vec(),
            acoustic: self.acoustic[range].to_vec(),
        }
    }

    /// Indices of samples that carry a usable TDoF.
    pub fn acoustic_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.acoustic
            .iter()
            .enumerate()
            .filter(|(_, a)| a.usable().is_some())
            .map(|(k, _)| k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TdofSource {
    /// Render receiver windows and dechirp them.
    Waveform,
    /// Geometric TDoF plus Gaussian noise.
    Oracle,
}

impl std::str::FromStr for TdofSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "waveform" => Ok(TdofSource::Waveform),
            "oracle" => Ok(TdofSource::Oracle),
            other => Err(Error::InvalidInput(format!("unknown tdof source `{other}`"))),
        }
    }
}

impl TdofSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TdofSource::Waveform => "waveform",
            TdofSource::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub wifi: WifiConfig,
    pub acoustic: AcousticConfig,
    pub tdof_source: TdofSource,
    pub plcr_noise: bool,
    pub tdof_noise: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            wifi: WifiConfig::default(),
            acoustic: AcousticConfig::default(),
            tdof_source: TdofSource::Waveform,
            plcr_noise: true,
            tdof_noise: true,
        }
    }
}

/// Feature stream observed along `traj`. PLCR is produced at every sample,
/// acoustic frames once per sweep at the nearest sample. All randomness is
/// drawn from streams keyed by `seed`.
pub fn synthesize_features(
    traj: &SampledTrajectory,
    layout: &DeviceLayout,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<FeatureStream> {
    layout.validate()?;
    let mut plcr = synthesize_plcr(traj, &layout.links, &cfg.wifi)?;
    if !plcr.singular.is_empty() {
        let k = plcr.singular[0];
        let p = traj.positions[k];
        return Err(Error::SingularCoefficient { x: p.x, y: p.y });
    }
    if cfg.plcr_noise {
        add_plcr_noise(&mut plcr, &cfg.wifi, &mut component_rng(seed, "plcr_noise"));
    }
    let acoustic = synthesize_acoustic(traj, &layout.speakers, cfg, seed)?;
    Ok(FeatureStream {
        timestamps: traj.timestamps.clone(),
        mode: layout.mode(),
        plcr: plcr.values,
        acoustic,
    })
}

/// Sample indices at which acoustic frames land.
pub fn acoustic_frame_indices(traj: &SampledTrajectory, period: f64) -> Vec<usize> {
    let mut out = Vec::new();
    if traj.is_empty() {
        return out;
    }
    let end = traj.duration();
    let mut j = 0usize;
    loop {
        let t = j as f64 * period;
        if t > end + 1e-9 {
            break;
        }
        let k = ((t / traj.dt).round() as usize).min(traj.len() - 1);
        if out.last() != Some(&k) {
            out.push(k);
        }
        j += 1;
    }
    out
}

fn synthesize_acoustic(
    traj: &SampledTrajectory,
    pair: &SpeakerPair,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<Vec<AcousticMeasurement>> {
    let ac = &cfg.acoustic;
    ac.validate()?;
    let mut out: Vec<AcousticMeasurement> = traj
        .timestamps
        .iter()
        .map(|&t| AcousticMeasurement::absent(t))
        .collect();
    let frames = acoustic_frame_indices(traj, ac.frame_period());
    let mut rng = component_rng(seed, "acoustic");
    match cfg.tdof_source {
        TdofSource::Waveform => {
            let rx = CrossChirpReceiver::new(ac)?;
            let clock_offset: f64 = rng.random_range(0.0..1.0);
            for k in frames {
                let t = traj.timestamps[k];
                let w = rx.render(traj.positions[k], pair, t, clock_offset, &mut rng);
                let mut m = rx.extract_tdof(&w, clock_offset);
                m.timestamp = t;
                out[k] = m;
            }
        }
        TdofSource::Oracle => {
            for k in frames {
                let p = traj.positions[k];
                out[k] = oracle_measurement(p, pair, ac, traj.timestamps[k], cfg.tdof_noise, &mut rng);
            }
        }
    }
    Ok(out)
}

/// Fast stand-in for a dechirped frame: geometric TDoF (optionally noisy),
/// amplitude from the attenuation law, and the same detection rule as the
/// waveform path.
pub fn oracle_measurement<R: Rng + ?Sized>(
    p: Point2D,
    pair: &SpeakerPair,
    cfg: &AcousticConfig,
    timestamp: f64,
    noisy: bool,
    rng: &mut R,
) -> AcousticMeasurement {
    let a1 = cfg.attenuation(p.distance(pair.s1));
    let a2 = cfg.attenuation(p.distance(pair.s2));
    let floor = cfg.detection_amplitude();
    if a1 < floor || a2 < floor {
        return AcousticMeasurement::absent(timestamp);
    }
    let tdof = if noisy {
        tdof_oracle(p, pair, cfg, Some(rng))
    } else {
        tdof_oracle::<R>(p, pair, cfg, None)
    };
    let amplitude = a1.max(a2);
    AcousticMeasurement {
        tdof: Some(tdof),
        amplitude,
        confidence: confidence_score(amplitude),
        timestamp,
    }
}

fn opt_f64(s: &str) -> std::result::Result<Option<f64>, std::num::ParseFloatError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serializes a feature stream as CSV: `#links=`/`#mode=` comment lines,
/// then `t,plcr_1..plcr_L,tdof,amplitude,confidence`.
pub fn features_to_csv(stream: &FeatureStream) -> String {
    let l = stream.links();
    let mut s = String::new();
    let _ = writeln!(s, "#links={l}");
    let _ = writeln!(s, "#mode={}", stream.mode.as_str());
    s.push('t');
    for i in 1..=l {
        let _ = write!(s, ",plcr_{i}");
    }
    s.push_str(",tdof,amplitude,confidence\n");
    for k in 0..stream.len() {
        let _ = write!(s, "{}", stream.timestamps[k]);
        for v in &stream.plcr[k] {
            let _ = write!(s, ",{v}");
        }
        let a = &stream.acoustic[k];
        let _ = writeln!(s, ",{},{},{}", fmt_opt(a.tdof), a.amplitude, a.confidence);
    }
    s
}

pub fn write_features(path: &Path, stream: &FeatureStream) -> Result<()> {
    write_atomic(path, features_to_csv(stream).as_bytes())
}

pub fn read_features(path: &Path) -> Result<FeatureStream> {
    parse_features(path, &read_to_string(path)?)
}

pub fn parse_features(path: &Path, text: &str) -> Result<FeatureStream> {
    let (meta, body) = split_comments(text);
    let l: usize = meta_value(&meta, "links")
        .ok_or_else(|| Error::parse(path, "missing #links= line"))?
        .parse()
        .map_err(|_| Error::parse(path, "bad #links= value"))?;
    let mode: LinkMode = meta_value(&meta, "mode")
        .unwrap_or("los")
        .parse()
        .map_err(|_| Error::parse(path, "bad #mode= value"))?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    if headers.len() != l + 4 {
        return Err(Error::parse(
            path,
            format!("expected {} columns for {l} links, found {}", l + 4, headers.len()),
        ));
    }
    let mut stream = FeatureStream {
        timestamps: Vec::new(),
        mode,
        plcr: Vec::new(),
        acoustic: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e))?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| parse_err(path, line, format!("bad number `{}`", &rec[j])))
        };
        let t = num(0)?;
        let row = (1..=l).map(num).collect::<Result<Vec<_>>>()?;
        let tdof = opt_f64(&rec[l + 1]).map_err(|_| parse_err(path, line, "bad tdof"))?;
        stream.timestamps.push(t);
        stream.plcr.push(row);
        stream.acoustic.push(AcousticMeasurement {
            tdof,
            amplitude: num(l + 2)?,
            confidence: num(l + 3)?,
            timestamp: t,
        });
    }
    stream.validate().map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(stream)
}

/// One row of the training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRow {
    pub traj_id: usize,
    pub t: f64,
    pub plcr: Vec<f64>,
    pub tdof: Option<f64>,
    pub amplitude: f64,
    pub confidence: f64,
    pub x: f64,
    pub y: f64,
}

/// Writes features (inputs) paired with true positions (labels), one row
/// per sample, and returns the number of data rows.
pub fn export_training_set(
    trajectories: &[SampledTrajectory],
    features: &[FeatureStream],
    destination: &Path,
) -> Result<usize> {
    if trajectories.len() != features.len() {
        return Err(Error::LengthMismatch {
            what: "feature streams",
            got: features.len(),
            expected: trajectories.len(),
        });
    }
    let l = features.first().map_or(0, FeatureStream::links);
    let mut s = String::new();
    let _ = writeln!(s, "#links={l}");
    s.push_str("traj_id,t");
    for i in 1..=l {
        let _ = write!(s, ",plcr_{i}");
    }
    s.push_str(",tdof,amplitude,confidence,x,y\n");
    let mut count = 0;
    for (id, (traj, f)) in trajectories.iter().zip(features).enumerate() {
        if f.len() != traj.len() {
            return Err(Error::LengthMismatch {
                what: "feature samples",
                got: f.len(),
                expected: traj.len(),
            });
        }
        if f.links() != l {
            return Err(Error::LengthMismatch {
                what: "links",
                got: f.links(),
                expected: l,
            });
        }
        for k in 0..traj.len() {
            let _ = write!(s, "{id},{}", traj.timestamps[k]);
            for v in &f.plcr[k] {
                let _ = write!(s, ",{v}");
            }
            let a = &f.acoustic[k];
            let p = traj.positions[k];
            let _ = writeln!(
                s,
                ",{},{},{},{},{}",
                fmt_opt(a.tdof),
                a.amplitude,
                a.confidence,
                p.x,
                p.y
            );
            count += 1;
        }
    }
    write_atomic(destination, s.as_bytes())?;
    Ok(count)
}

pub fn read_training_set(path: &Path) -> Result<Vec<CorpusRow>> {
    let text = read_to_string(path)?;
    let (meta, body) = split_comments(&text);
    let l: usize = meta_value(&meta, "links")
        .ok_or_else(|| Error::parse(path, "missing #links= line"))?
        .parse()
        .map_err(|_| Error::parse(path, "bad #links= value"))?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e))?;
        if rec.len() != l + 7 {
            return Err(parse_err(path, line, "wrong column count"));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| parse_err(path, line, format!("bad number `{}`", &rec[j])))
        };
        rows.push(CorpusRow {
            traj_id: rec[0].parse().map_err(|_| parse_err(path, line, "bad traj_id"))?,
            t: num(1)?,
            plcr: (2..2 + l).map(num).collect::<Result<Vec<_>>>()?,
            tdof: opt_f64(&rec[l + 2]).map_err(|_| parse_err(path, line, "bad tdof"))?,
            amplitude: num(l + 3)?,
            confidence: num(l + 4)?,
            x: num(l + 5)?,
            y: num(l + 6)?,
        });
    }
    Ok(rows)
}

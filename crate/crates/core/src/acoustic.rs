//! Dual-speaker cross-chirp acoustics at waveform level.
//!
//! Speaker `s1` loops an up chirp and `s2` a down chirp, both periodic with
//! the sweep time `T`. A receiver window of one period is dechirped against
//! each template; the beat frequency gives each delay modulo `T`, and the
//! difference of the two delays is the TDoF, free of the receiver clock.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::geometry::{path_difference, Point2D, SpeakerPair};

/// Received amplitude at which confidence saturates.
pub const CONFIDENCE_THRESHOLD: f64 = 2000.0;

/// Zero-padding factor of the dechirp transform.
pub const PAD_FACTOR: usize = 8;

/// Peak-to-median ratio of the beat spectrum required for a detection.
pub const DETECTION_RATIO: f64 = 8.0;

/// Amplitudes below this are numerical residue, not signal.
const MIN_AMPLITUDE: f64 = 1e-6;

const MIN_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChirpDirection {
    Up,
    Down,
}

impl FromStr for ChirpDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(ChirpDirection::Up),
            "down" => Ok(ChirpDirection::Down),
            other => Err(Error::InvalidInput(format!("unknown chirp direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    pub f_min: f64,
    pub bandwidth: f64,
    pub sweep_time: f64,
    pub sample_rate: f64,
    pub direction: ChirpDirection,
}

impl ChirpConfig {
    pub fn up() -> Self {
        Self {
            f_min: 18_000.0,
            bandwidth: 4_000.0,
            sweep_time: 0.1,
            sample_rate: 48_000.0,
            direction: ChirpDirection::Up,
        }
    }

    pub fn down() -> Self {
        Self {
            direction: ChirpDirection::Down,
            ..Self::up()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.f_min) && positive(self.bandwidth) && positive(self.sweep_time)) {
            return Err(Error::InvalidInput(
                "chirp f_min, bandwidth and sweep_time must be positive".into(),
            ));
        }
        if !(self.sample_rate >= 2.0 * (self.f_min + self.bandwidth)) {
            return Err(Error::InvalidInput(format!(
                "sample rate {} below Nyquist for a chirp reaching {} Hz",
                self.sample_rate,
                self.f_min + self.bandwidth
            )));
        }
        let n = self.sweep_time * self.sample_rate;
        if (n - n.round()).abs() > 1e-6 {
            return Err(Error::InvalidInput(
                "sweep_time * sample_rate must be an integer".into(),
            ));
        }
        Ok(())
    }

    pub fn samples_per_sweep(&self) -> usize {
        (self.sweep_time * self.sample_rate).round() as usize
    }

    /// Phase in radians at time `t` within a sweep.
    pub fn phase(&self, t: f64) -> f64 {
        let k = PI * self.bandwidth / self.sweep_time;
        match self.direction {
            ChirpDirection::Up => 2.0 * PI * self.f_min * t + k * t * t,
            ChirpDirection::Down => 2.0 * PI * (self.f_min + self.bandwidth) * t - k * t * t,
        }
    }

    /// Delay resolution of one bin of the padded dechirp transform.
    pub fn delay_bin(&self) -> f64 {
        let bin_hz = self.sample_rate / (self.samples_per_sweep() * PAD_FACTOR) as f64;
        bin_hz * self.sweep_time / self.bandwidth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub start_offset: f64,
}

impl Waveform {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticMeasurement {
    /// Delay of the up chirp minus delay of the down chirp. Positive when
    /// `s1` is farther. Absent when either chirp went undetected.
    pub tdof: Option<f64>,
    pub amplitude: f64,
    pub confidence: f64,
    pub timestamp: f64,
}

impl AcousticMeasurement {
    pub fn absent(timestamp: f64) -> Self {
        Self {
            tdof: None,
            amplitude: 0.0,
            confidence: 0.0,
            timestamp,
        }
    }

    /// TDoF and confidence when the measurement can be used at all.
    pub fn usable(&self) -> Option<(f64, f64)> {
        match self.tdof {
            Some(t) if self.confidence > 0.0 => Some((t, self.confidence)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticConfig {
    pub c_s: f64,
    pub ref_amplitude_at_1m: f64,
    /// Distance at which confidence starts to fall below 1.
    pub effective_range: f64,
    /// Beyond this distance from either speaker the chirp is lost in the
    /// noise floor and the frame yields no TDoF.
    pub detection_range: f64,
    pub up: ChirpConfig,
    pub down: ChirpConfig,
    pub noise_sigma_d: f64,
    /// Std of additive white noise at the receiver, in amplitude units.
    pub receiver_noise: f64,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self {
            c_s: 343.0,
            ref_amplitude_at_1m: 2000.0,
            effective_range: 1.0,
            detection_range: 10.0,
            up: ChirpConfig::up(),
            down: ChirpConfig::down(),
            noise_sigma_d: 1e-4,
            receiver_noise: 5.0,
        }
    }
}

impl AcousticConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.c_s) {
            return Err(Error::InvalidInput("c_s must be positive".into()));
        }
        if !positive(self.effective_range) || !positive(self.detection_range) {
            return Err(Error::InvalidInput("acoustic ranges must be positive".into()));
        }
        if !positive(self.ref_amplitude_at_1m) {
            return Err(Error::InvalidInput("ref_amplitude_at_1m must be positive".into()));
        }
        if !(self.noise_sigma_d >= 0.0 && self.noise_sigma_d.is_finite())
            || !(self.receiver_noise >= 0.0 && self.receiver_noise.is_finite())
        {
            return Err(Error::InvalidInput("acoustic noise levels must be non-negative".into()));
        }
        self.up.validate()?;
        self.down.validate()?;
        if self.up.direction != ChirpDirection::Up || self.down.direction != ChirpDirection::Down {
            return Err(Error::InvalidInput("chirp pair must be one up and one down".into()));
        }
        if self.up.samples_per_sweep() != self.down.samples_per_sweep()
            || self.up.sample_rate != self.down.sample_rate
        {
            return Err(Error::InvalidInput("up and down chirps must share timing".into()));
        }
        Ok(())
    }

    pub fn attenuation(&self, distance: f64) -> f64 {
        self.ref_amplitude_at_1m / distance.max(MIN_DISTANCE)
    }

    /// Smallest amplitude that still counts as a detection.
    pub fn detection_amplitude(&self) -> f64 {
        self.ref_amplitude_at_1m / self.detection_range
    }

    pub fn frame_period(&self) -> f64 {
        self.up.sweep_time
    }
}

pub fn synth_chirp(cfg: &ChirpConfig) -> Result<Waveform> {
    cfg.validate()?;
    let n = cfg.samples_per_sweep();
    let samples = (0..n)
        .map(|i| cfg.phase(i as f64 / cfg.sample_rate).cos())
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: cfg.sample_rate,
        start_offset: 0.0,
    })
}

fn signed_bin(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Applies a circular delay of `delay_samples` to a spectrum of length `n`
/// produced from real data. The Nyquist bin keeps a real factor so the
/// inverse stays real; integer delays are exact shifts.
fn delay_spectrum(spec: &mut [Complex<f64>], delay_samples: f64) {
    let n = spec.len();
    for (k, x) in spec.iter_mut().enumerate() {
        if n.is_multiple_of(2) && k == n / 2 {
            *x *= (PI * delay_samples).cos();
            continue;
        }
        let w = -2.0 * PI * signed_bin(k, n) * delay_samples / n as f64;
        *x *= Complex::from_polar(1.0, w);
    }
}

/// Delays `w` by `distance / c_s` with band-limited interpolation and
/// scales it by the 1/d attenuation law. The output is long enough to hold
/// the whole delayed signal.
pub fn propagate(w: &Waveform, distance: f64, cfg: &AcousticConfig) -> Result<Waveform> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::InvalidInput("propagation distance must be positive".into()));
    }
    let delay = distance / cfg.c_s * w.sample_rate;
    let n = w.samples.len() + delay.ceil() as usize + 1;
    let mut buf: Vec<Complex<f64>> = w
        .samples
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    delay_spectrum(&mut buf, delay);
    planner.plan_fft_inverse(n).process(&mut buf);
    let gain = cfg.attenuation(distance) / n as f64;
    Ok(Waveform {
        samples: buf.iter().map(|c| c.re * gain).collect(),
        sample_rate: w.sample_rate,
        start_offset: w.start_offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    pub delay: f64,
    /// Amplitude of the matching chirp in the received signal.
    pub amplitude: f64,
    pub peak_ratio: f64,
}

/// Dechirp machinery for one sweep length, reusable across frames.
pub struct Dechirper {
    cfg: ChirpConfig,
    n: usize,
    n_fft: usize,
    template: Vec<Complex<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dechirper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dechirper")
            .field("cfg", &self.cfg)
            .field("n_fft", &self.n_fft)
            .finish()
    }
}

impl Dechirper {
    pub fn new(cfg: &ChirpConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.samples_per_sweep();
        let n_fft = n * PAD_FACTOR;
        let template = (0..n)
            .map(|i| Complex::from_polar(1.0, cfg.phase(i as f64 / cfg.sample_rate)))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self {
            cfg: *cfg,
            n,
            n_fft,
            template,
            fft,
        })
    }

    /// Delay in `[0, T)` of this chirp within one sweep-long window, assuming
    /// the emitted chirp repeats every sweep. Samples beyond the slice are
    /// treated as silence.
    pub fn estimate(&self, window: &[f64]) -> Option<DelayEstimate> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for (i, (x, t)) in window.iter().zip(&self.template).take(self.n).enumerate() {
            buf[i] = t * *x;
        }
        self.fft.process(&mut buf);
        let mag: Vec<f64> = buf.iter().map(|c| c.norm()).collect();

        let bin_hz = self.cfg.sample_rate / self.n_fft as f64;
        let band = (self.cfg.bandwidth / bin_hz).round() as usize;
        let idx = |b: isize| -> usize { b.rem_euclid(self.n_fft as isize) as usize };
        let mut best = 0isize;
        let mut best_mag = -1.0;
        let mut in_band = Vec::with_capacity(2 * band);
        for b in -(band as isize) + 1..band as isize {
            let m = mag[idx(b)];
            in_band.push(m);
            if m > best_mag {
                best_mag = m;
                best = b;
            }
        }
        let mid = in_band.len() / 2;
        let median = *in_band
            .select_nth_unstable_by(mid, |a, b| a.total_cmp(b))
            .1;
        let peak_ratio = if median > 0.0 {
            best_mag / median
        } else if best_mag > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if !(peak_ratio >= DETECTION_RATIO) {
            return None;
        }

        let (offset, peak) = parabolic(
            mag[idx(best - 1)],
            mag[idx(best)],
            mag[idx(best + 1)],
        );
        let f = (best as f64 + offset) * bin_hz;
        // The up template turns a delay d into a beat at +B d / T; the down
        // template into -B d / T. The tail of the previous sweep beats one
        // bandwidth away.
        let f = match self.cfg.direction {
            ChirpDirection::Up => f,
            ChirpDirection::Down => -f,
        };
        let (delay, wrap_bin) = if f >= 0.0 {
            (f * self.cfg.sweep_time / self.cfg.bandwidth, -(band as isize))
        } else {
            (
                (f + self.cfg.bandwidth) * self.cfg.sweep_time / self.cfg.bandwidth,
                band as isize,
            )
        };
        let wrap_bin = match self.cfg.direction {
            ChirpDirection::Up => best + wrap_bin,
            ChirpDirection::Down => best - wrap_bin,
        };
        let (_, wrap) = parabolic(
            mag[idx(wrap_bin - 1)],
            mag[idx(wrap_bin)],
            mag[idx(wrap_bin + 1)],
        );
        let amplitude = 2.0 * (peak + wrap) / self.n as f64;
        if amplitude < MIN_AMPLITUDE {
            return None;
        }
        let delay = delay.rem_euclid(self.cfg.sweep_time);
        Some(DelayEstimate {
            delay,
            amplitude,
            peak_ratio,
        })
    }
}

/// Vertex of the parabola through three equally spaced samples: returns the
/// offset of the vertex from the middle sample and its height.
fn parabolic(a: f64, b: f64, c: f64) -> (f64, f64) {
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return (0.0, b);
    }
    let off = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    (off, b - 0.25 * (a - c) * off)
}

/// Mixes `received` with the reference chirp over the reference's sweep
/// window and converts the dominant beat frequency into a delay. `None`
/// means no peak stood out of the noise floor or the signals overlap for
/// less than half a sweep.
pub fn mix_and_estimate_delay(
    reference: &Waveform,
    received: &Waveform,
    cfg: &ChirpConfig,
) -> Result<Option<DelayEstimate>> {
    if (reference.sample_rate - received.sample_rate).abs() > 1e-9 {
        return Err(Error::InvalidInput("sample rates differ".into()));
    }
    let dechirper = Dechirper::new(cfg)?;
    let n = cfg.samples_per_sweep();
    let shift = ((reference.start_offset - received.start_offset) * cfg.sample_rate).round() as isize;
    let window: Vec<f64> = (0..n as isize)
        .map(|i| {
            let j = i + shift;
            if j >= 0 && (j as usize) < received.samples.len() {
                received.samples[j as usize]
            } else {
                0.0
            }
        })
        .collect();
    let overlap = (0..n as isize)
        .filter(|i| {
            let j = i + shift;
            j >= 0 && (j as usize) < received.samples.len()
        })
        .count();
    if overlap * 2 < n {
        return Ok(None);
    }
    Ok(dechirper.estimate(&window))
}

pub fn confidence_score(amplitude: f64) -> f64 {
    if amplitude.is_nan() || amplitude <= 0.0 {
        return 0.0;
    }
    (amplitude / CONFIDENCE_THRESHOLD).min(1.0)
}

/// Geometric TDoF, optionally with Gaussian noise of std `noise_sigma_d`.
pub fn tdof_oracle<R: Rng + ?Sized>(
    p: Point2D,
    pair: &SpeakerPair,
    cfg: &AcousticConfig,
    rng: Option<&mut R>,
) -> f64 {
    let clean = path_difference(p, pair) / cfg.c_s;
    match rng {
        Some(rng) if cfg.noise_sigma_d > 0.0 => {
            clean + Normal::new(0.0, cfg.noise_sigma_d).expect("finite sigma").sample(rng)
        }
        _ => clean,
    }
}

/// Renders receiver windows and extracts TDoF from them.
pub struct CrossChirpReceiver {
    cfg: AcousticConfig,
    n: usize,
    up_spec: Vec<Complex<f64>>,
    down_spec: Vec<Complex<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    up: Dechirper,
    down: Dechirper,
}

impl std::fmt::Debug for CrossChirpReceiver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CrossChirpReceiver")
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl CrossChirpReceiver {
    pub fn new(cfg: &AcousticConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.up.samples_per_sweep();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let spectrum = |c: &ChirpConfig| -> Result<Vec<Complex<f64>>> {
            let mut buf: Vec<Complex<f64>> = synth_chirp(c)?
                .samples
                .iter()
                .map(|&x| Complex::new(x, 0.0))
                .collect();
            fwd.process(&mut buf);
            Ok(buf)
        };
        Ok(Self {
            cfg: *cfg,
            n,
            up_spec: spectrum(&cfg.up)?,
            down_spec: spectrum(&cfg.down)?,
            ifft: planner.plan_fft_inverse(n),
            up: Dechirper::new(&cfg.up)?,
            down: Dechirper::new(&cfg.down)?,
        })
    }

    pub fn config(&self) -> &AcousticConfig {
        &self.cfg
    }

    /// One sweep-long window recorded at `p` starting at `start` on the
    /// receiver clock, which runs `clock_offset` seconds ahead of the
    /// speakers. Both speakers loop their chirps from time zero.
    pub fn render<R: Rng + ?Sized>(
        &self,
        p: Point2D,
        pair: &SpeakerPair,
        start: f64,
        clock_offset: f64,
        rng: &mut R,
    ) -> Waveform {
        let fs = self.cfg.up.sample_rate;
        let period = self.cfg.up.sweep_time;
        let d1 = p.distance(pair.s1);
        let d2 = p.distance(pair.s2);
        let lag = |d: f64| ((d / self.cfg.c_s + clock_offset - start).rem_euclid(period)) * fs;
        let mut a = self.up_spec.clone();
        delay_spectrum(&mut a, lag(d1));
        let mut b = self.down_spec.clone();
        delay_spectrum(&mut b, lag(d2));
        let (g1, g2) = (self.cfg.attenuation(d1), self.cfg.attenuation(d2));
        let mut buf: Vec<Complex<f64>> = a.iter().zip(&b).map(|(x, y)| x * g1 + y * g2).collect();
        self.ifft.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        let mut samples: Vec<f64> = buf.iter().map(|c| c.re * scale).collect();
        if self.cfg.receiver_noise > 0.0 {
            let normal = Normal::new(0.0, self.cfg.receiver_noise).expect("finite sigma");
            for s in &mut samples {
                *s += normal.sample(rng);
            }
        }
        Waveform {
            samples,
            sample_rate: fs,
            start_offset: start,
        }
    }

    /// TDoF from one receiver window. `rx_clock_offset` is removed from both
    /// per-chirp delays, which leaves their difference untouched.
    pub fn extract_tdof(&self, received: &Waveform, rx_clock_offset: f64) -> AcousticMeasurement {
        let timestamp = received.start_offset;
        let up = self.up.estimate(&received.samples);
        let down = self.down.estimate(&received.samples);
        let floor = self.cfg.detection_amplitude();
        match (up, down) {
            (Some(u), Some(d)) if u.amplitude >= floor && d.amplitude >= floor => {
                let period = self.cfg.up.sweep_time;
                let du = u.delay - rx_clock_offset;
                let dd = d.delay - rx_clock_offset;
                let amplitude = u.amplitude.max(d.amplitude);
                AcousticMeasurement {
                    tdof: Some(wrap_half(du - dd, period)),
                    amplitude,
                    confidence: confidence_score(amplitude),
                    timestamp,
                }
            }
            _ => AcousticMeasurement::absent(timestamp),
        }
    }
}

/// Wraps `x` into `(-period/2, period/2]`.
fn wrap_half(x: f64, period: f64) -> f64 {
    let w = x.rem_euclid(period);
    if w > 0.5 * period {
        w - period
    } else {
        w
    }
}

fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Raw little-endian f32 samples plus a `<path>.hdr` text sidecar.
pub fn write_waveform(path: &Path, w: &Waveform) -> Result<()> {
    let mut raw = Vec::with_capacity(w.samples.len() * 4);
    for &s in &w.samples {
        raw.extend_from_slice(&(s as f32).to_le_bytes());
    }
    write_atomic(path, &raw)?;
    let hdr = format!("sample_rate={}\nstart_offset={}\n", w.sample_rate, w.start_offset);
    write_atomic(&header_path(path), hdr.as_bytes())
}

pub fn read_waveform(path: &Path) -> Result<Waveform> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() % 4 != 0 {
        return Err(Error::parse(path, "raw length is not a multiple of 4"));
    }
    let samples = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let mut sample_rate = None;
    let mut start_offset = None;
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::parse(&hdr, format!("bad value for {k}")))?;
        match k.trim() {
            "sample_rate" => sample_rate = Some(v),
            "start_offset" => start_offset = Some(v),
            _ => {}
        }
    }
    Ok(Waveform {
        samples,
        sample_rate: sample_rate.ok_or_else(|| Error::parse(&hdr, "missing sample_rate"))?,
        start_offset: start_offset.ok_or_else(|| Error::parse(&hdr, "missing start_offset"))?,
    })
}

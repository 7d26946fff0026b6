//! Deterministic three-phase waveform synthesis.
//!
//! The generator stands in for an instrument front end: it emits contiguous
//! [`WaveformFrame`]s of voltage and current samples at 3200 Hz, with
//! disturbances injected from a [`DisturbanceScript`]. Envelopes switch
//! instantaneously at disturbance boundaries, so the expected RMS of any
//! window is available in closed form.

mod samplefile;
mod script;

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use samplefile::{read_sample_dir, write_sample_dir, SampleDirReader, StreamManifest};
pub use script::{parse_script, DisturbanceKind, DisturbanceScript, DisturbanceSpec, Phase, PhaseSet};

/// Fixed acquisition rate of the measurement front end.
pub const SAMPLE_RATE: u32 = 3200;
/// [`SAMPLE_RATE`] as a float, for time arithmetic.
pub const SAMPLE_RATE_HZ: f64 = SAMPLE_RATE as f64;
/// Number of phases in every stream.
pub const PHASE_COUNT: usize = 3;

/// Default frame length: 640 samples, one RMS window.
pub const DEFAULT_FRAME_LENGTH: usize = 640;

/// Highest harmonic order that may be injected or analyzed.
pub const MAX_HARMONIC_ORDER: u32 = 33;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid signal config: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {message}")]
    Range { line: usize, message: String },
    #[error("lines {first} and {second}: overlapping {kind} disturbances on phase {phase}")]
    Overlap {
        first: usize,
        second: usize,
        kind: DisturbanceKind,
        phase: Phase,
    },
    #[error("line {line}: disturbance ends at {end} s, past the stream duration of {duration} s")]
    PastDuration { line: usize, end: f64, duration: f64 },
    #[error("sample file: {0}")]
    SampleFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters of a synthetic stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub nominal_frequency: f64,
    /// Must equal [`SAMPLE_RATE`]; present so config files can state it.
    pub sampling_rate: u32,
    pub nominal_voltage_rms: f64,
    pub nominal_current_rms: f64,
    /// Stream length in seconds.
    pub duration: f64,
    pub seed: u64,
    /// Current lags voltage by this angle (degrees, positive = inductive).
    pub current_lag_deg: f64,
    /// Standard deviation of additive Gaussian voltage jitter, in volts.
    /// Current jitter is scaled by the current/voltage ratio. Zero disables.
    pub jitter_rms: f64,
    pub frame_length: usize,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            nominal_frequency: 50.0,
            sampling_rate: SAMPLE_RATE,
            nominal_voltage_rms: 230.0,
            nominal_current_rms: 10.0,
            duration: 1.0,
            seed: 0,
            current_lag_deg: 0.0,
            jitter_rms: 0.0,
            frame_length: DEFAULT_FRAME_LENGTH,
        }
    }
}

impl SignalConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        let fail = |m: String| Err(SignalError::Config(m));
        if self.sampling_rate != SAMPLE_RATE {
            return fail(format!("sampling_rate must be {SAMPLE_RATE}, got {}", self.sampling_rate));
        }
        if !(self.nominal_frequency > 0.0 && self.nominal_frequency.is_finite()) {
            return fail(format!("nominal_frequency must be > 0, got {}", self.nominal_frequency));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return fail(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.nominal_voltage_rms >= 0.0 && self.nominal_current_rms >= 0.0) {
            return fail("nominal RMS values must be >= 0".into());
        }
        if !(self.jitter_rms >= 0.0 && self.jitter_rms.is_finite()) {
            return fail(format!("jitter_rms must be >= 0, got {}", self.jitter_rms));
        }
        if self.frame_length == 0 {
            return fail("frame_length must be > 0".into());
        }
        Ok(())
    }

    /// Total samples per channel: `round(duration × 3200)`.
    pub fn total_samples(&self) -> u64 {
        (self.duration * SAMPLE_RATE_HZ).round() as u64
    }
}

/// One block of synchronized three-phase voltage and current samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformFrame {
    pub start_sample_index: u64,
    pub voltage: [Vec<f64>; PHASE_COUNT],
    pub current: [Vec<f64>; PHASE_COUNT],
}

impl WaveformFrame {
    pub fn len(&self) -> usize {
        self.voltage[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index one past the last sample in this frame.
    pub fn end_sample_index(&self) -> u64 {
        self.start_sample_index + self.len() as u64
    }

    pub fn is_well_formed(&self) -> bool {
        let n = self.len();
        self.voltage.iter().chain(self.current.iter()).all(|c| c.len() == n)
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        for ch in self.voltage.iter_mut().chain(self.current.iter_mut()) {
            ch.iter_mut().for_each(|x| *x *= factor);
        }
        self
    }
}

/// Validates `script` against `config` and returns a frame iterator.
pub fn generate_stream(
    config: &SignalConfig,
    script: &DisturbanceScript,
) -> Result<StreamGenerator, SignalError> {
    config.validate()?;
    script.validate()?;
    script.validate_duration(config.duration)?;
    Ok(StreamGenerator::new(config.clone(), script.clone()))
}

/// Convenience: collects the whole stream into memory.
pub fn generate_frames(
    config: &SignalConfig,
    script: &DisturbanceScript,
) -> Result<Vec<WaveformFrame>, SignalError> {
    Ok(generate_stream(config, script)?.collect())
}

/// Iterator over the frames of one synthetic stream.
#[derive(Debug)]
pub struct StreamGenerator {
    config: SignalConfig,
    waveform: Waveform,
    next_sample: u64,
    total: u64,
    jitter: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl StreamGenerator {
    fn new(config: SignalConfig, script: DisturbanceScript) -> Self {
        let total = config.total_samples();
        let jitter = (config.jitter_rms > 0.0).then(|| {
            (
                ChaCha8Rng::seed_from_u64(config.seed),
                Normal::new(0.0, config.jitter_rms).expect("jitter_rms validated"),
            )
        });
        Self {
            waveform: Waveform::new(&config, script),
            config,
            next_sample: 0,
            total,
            jitter,
        }
    }

    pub fn total_samples(&self) -> u64 {
        self.total
    }
}

impl Iterator for StreamGenerator {
    type Item = WaveformFrame;

    fn next(&mut self) -> Option<WaveformFrame> {
        if self.next_sample >= self.total {
            return None;
        }
        let start = self.next_sample;
        let len = (self.total - start).min(self.config.frame_length as u64) as usize;
        let mut frame = WaveformFrame {
            start_sample_index: start,
            voltage: std::array::from_fn(|_| Vec::with_capacity(len)),
            current: std::array::from_fn(|_| Vec::with_capacity(len)),
        };
        let ratio = if self.config.nominal_voltage_rms > 0.0 {
            self.config.nominal_current_rms / self.config.nominal_voltage_rms
        } else {
            0.0
        };
        for n in start..start + len as u64 {
            let s = self.waveform.sample(n);
            for p in 0..PHASE_COUNT {
                let (mut v, mut i) = (s.voltage[p], s.current[p]);
                if let Some((rng, dist)) = self.jitter.as_mut() {
                    v += dist.sample(rng);
                    i += ratio * dist.sample(rng);
                }
                frame.voltage[p].push(v);
                frame.current[p].push(i);
            }
        }
        self.next_sample += len as u64;
        Some(frame)
    }
}

struct Sample {
    voltage: [f64; PHASE_COUNT],
    current: [f64; PHASE_COUNT],
}

/// Closed-form description of the scripted waveform, evaluated per sample.
#[derive(Debug)]
struct Waveform {
    f0: f64,
    v_peak: f64,
    i_peak: f64,
    lag_cycles: f64,
    scales: Vec<Interval>,
    harmonics: Vec<HarmonicComponent>,
    modulations: Vec<Modulation>,
    drifts: Vec<Drift>,
}

#[derive(Debug)]
struct Interval {
    start: u64,
    end: u64,
    phases: PhaseSet,
    factor: f64,
}

#[derive(Debug)]
struct HarmonicComponent {
    start: u64,
    end: u64,
    phases: PhaseSet,
    order: u32,
    relative_amplitude: f64,
}

#[derive(Debug)]
struct Modulation {
    start: u64,
    end: u64,
    phases: PhaseSet,
    depth: f64,
    frequency: f64,
}

/// Triangular frequency excursion: the offset rises linearly from zero to
/// `peak` Hz at the midpoint and falls back to zero at `end`.
#[derive(Debug)]
struct Drift {
    start: f64,
    end: f64,
    peak: f64,
}

impl Drift {
    /// Integral of the frequency offset from 0 to `t`, in cycles.
    fn cycles(&self, t: f64) -> f64 {
        let half = (self.end - self.start) / 2.0;
        let slope = self.peak / half;
        if t <= self.start {
            0.0
        } else if t <= self.start + half {
            let x = t - self.start;
            0.5 * slope * x * x
        } else if t <= self.end {
            let y = self.end - t;
            self.peak * half - 0.5 * slope * y * y
        } else {
            self.peak * half
        }
    }
}

fn to_sample(t: f64) -> u64 {
    (t * SAMPLE_RATE_HZ).round() as u64
}

fn in_span(n: u64, start: u64, end: u64) -> bool {
    n >= start && n < end
}

impl Waveform {
    fn new(config: &SignalConfig, script: DisturbanceScript) -> Self {
        let mut w = Waveform {
            f0: config.nominal_frequency,
            v_peak: config.nominal_voltage_rms * std::f64::consts::SQRT_2,
            i_peak: config.nominal_current_rms * std::f64::consts::SQRT_2,
            lag_cycles: config.current_lag_deg / 360.0,
            scales: Vec::new(),
            harmonics: Vec::new(),
            modulations: Vec::new(),
            drifts: Vec::new(),
        };
        for spec in script.entries {
            let (start, end) = (to_sample(spec.start), to_sample(spec.end));
            match spec.kind {
                DisturbanceKind::Sag
                | DisturbanceKind::Swell
                | DisturbanceKind::Interruption
                | DisturbanceKind::Unbalance => w.scales.push(Interval {
                    start,
                    end,
                    phases: spec.phases,
                    factor: spec.magnitude,
                }),
                DisturbanceKind::Harmonic => w.harmonics.push(HarmonicComponent {
                    start,
                    end,
                    phases: spec.phases,
                    order: spec.harmonic_order.unwrap_or(2),
                    relative_amplitude: spec.magnitude,
                }),
                DisturbanceKind::FlickerModulation => w.modulations.push(Modulation {
                    start,
                    end,
                    phases: spec.phases,
                    depth: spec.magnitude,
                    frequency: spec.modulation_frequency.unwrap_or(0.0),
                }),
                DisturbanceKind::FrequencyDrift => w.drifts.push(Drift {
                    start: spec.start,
                    end: spec.end,
                    peak: spec.magnitude,
                }),
            }
        }
        w
    }

    fn sample(&self, n: u64) -> Sample {
        let t = n as f64 / SAMPLE_RATE_HZ;
        // Fundamental phase in cycles; integral for nominal-frequency sampling
        // points, so reduce before scaling by 2π.
        let cycles = self.f0 * n as f64 / SAMPLE_RATE_HZ
            + self.drifts.iter().map(|d| d.cycles(t)).sum::<f64>();
        let mut out = Sample {
            voltage: [0.0; PHASE_COUNT],
            current: [0.0; PHASE_COUNT],
        };
        for (p, phase) in Phase::ALL.into_iter().enumerate() {
            let offset = -(p as f64) / 3.0;
            // magnitude disturbances scale the whole waveform, distortion included
            let mut scale = 1.0;
            for s in &self.scales {
                if in_span(n, s.start, s.end) && s.phases.contains(phase) {
                    scale *= s.factor;
                }
            }
            let mut envelope = 1.0;
            for m in &self.modulations {
                if in_span(n, m.start, m.end) && m.phases.contains(phase) {
                    envelope *= 1.0 + m.depth * (TAU * m.frequency * t).sin();
                }
            }
            let unit = |h: f64, lag: f64| (TAU * (h * (cycles + offset - lag)).rem_euclid(1.0)).sin();
            let mut v = envelope * unit(1.0, 0.0);
            let mut i = envelope * unit(1.0, self.lag_cycles);
            for h in &self.harmonics {
                if in_span(n, h.start, h.end) && h.phases.contains(phase) {
                    let order = h.order as f64;
                    v += h.relative_amplitude * unit(order, 0.0);
                    i += h.relative_amplitude * unit(order, self.lag_cycles);
                }
            }
            out.voltage[p] = self.v_peak * scale * v;
            out.current[p] = self.i_peak * scale * i;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn concat(frames: &[WaveformFrame], f: impl Fn(&WaveformFrame) -> &Vec<f64>) -> Vec<f64> {
        frames.iter().flat_map(|fr| f(fr).iter().copied()).collect()
    }

    #[test]
    fn clean_stream_is_pure_sinusoid() {
        let cfg = SignalConfig { nominal_voltage_rms: 1.0 / std::f64::consts::SQRT_2, ..Default::default() };
        let frames = generate_frames(&cfg, &DisturbanceScript::default()).unwrap();
        let va = concat(&frames, |f| &f.voltage[0]);
        assert_eq!(va.len(), 3200);
        for (n, v) in va.iter().enumerate() {
            let expected = (TAU * 50.0 * n as f64 / 3200.0).sin();
            assert!((v - expected).abs() < 1e-12, "sample {n}: {v} vs {expected}");
        }
        // phase B lags A by 120°
        let vb = concat(&frames, |f| &f.voltage[1]);
        let expected_b = (TAU * 50.0 * 10.0 / 3200.0 - TAU / 3.0).sin();
        assert!((vb[10] - expected_b).abs() < 1e-12);
    }

    #[test]
    fn sag_scales_affected_phase_only() {
        let cfg = SignalConfig::default();
        let script = parse_script("sag 0.2 0.5 A 0.80").unwrap();
        let frames = generate_frames(&cfg, &script).unwrap();
        let va = concat(&frames, |f| &f.voltage[0]);
        let vb = concat(&frames, |f| &f.voltage[1]);
        let sag = rms(&va[640..1600]);
        assert!((sag / (0.8 * 230.0) - 1.0).abs() < 1e-3);
        assert!((rms(&vb[640..1600]) / 230.0 - 1.0).abs() < 1e-9);
        assert!((rms(&va[1600..3200]) / 230.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sample_count_is_exact_and_contiguous() {
        let cfg = SignalConfig { duration: 1.23456, frame_length: 500, ..Default::default() };
        let frames = generate_frames(&cfg, &DisturbanceScript::default()).unwrap();
        let mut expected_start = 0;
        for f in &frames {
            assert!(f.is_well_formed());
            assert_eq!(f.start_sample_index, expected_start);
            expected_start = f.end_sample_index();
        }
        assert_eq!(expected_start, (1.23456f64 * 3200.0).round() as u64);
    }

    #[test]
    fn jitter_is_seeded() {
        let cfg = SignalConfig { jitter_rms: 0.5, seed: 7, ..Default::default() };
        let a = generate_frames(&cfg, &DisturbanceScript::default()).unwrap();
        let b = generate_frames(&cfg, &DisturbanceScript::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_frames(&SignalConfig { seed: 8, ..cfg }, &DisturbanceScript::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn current_follows_lag() {
        let cfg = SignalConfig { current_lag_deg: 90.0, ..Default::default() };
        let frames = generate_frames(&cfg, &DisturbanceScript::default()).unwrap();
        let ia = concat(&frames, |f| &f.current[0]);
        // i = I√2 sin(ωt − 90°) = −I√2 cos(ωt)
        assert!((ia[0] + 10.0 * std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn drift_is_phase_continuous_triangle() {
        let d = Drift { start: 1.0, end: 3.0, peak: 0.5 };
        assert_eq!(d.cycles(0.5), 0.0);
        assert!((d.cycles(2.0) - 0.25).abs() < 1e-15);
        assert!((d.cycles(3.0) - 0.5).abs() < 1e-15);
        assert!((d.cycles(10.0) - 0.5).abs() < 1e-15);
        // continuity around the apex
        assert!((d.cycles(2.0 - 1e-9) - d.cycles(2.0 + 1e-9)).abs() < 1e-8);
    }

    #[test]
    fn rejects_script_past_duration() {
        let cfg = SignalConfig { duration: 1.0, ..Default::default() };
        let script = parse_script("sag 0.5 1.5 A 0.8").unwrap();
        assert!(matches!(generate_stream(&cfg, &script), Err(SignalError::PastDuration { line: 1, .. })));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SignalConfig { sampling_rate: 4000, ..Default::default() };
        assert!(generate_stream(&cfg, &DisturbanceScript::default()).is_err());
        let cfg = SignalConfig { duration: 0.0, ..Default::default() };
        assert!(generate_stream(&cfg, &DisturbanceScript::default()).is_err());
    }
}

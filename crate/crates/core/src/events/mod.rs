//! Poly-phase voltage event detection.
//!
//! Four state machines run over the 0.2 s RMS stream:
//!
//! * sag: begins when any phase drops below the sag threshold, ends when all
//!   phases are at or above threshold + hysteresis;
//! * swell: begins when any phase rises above the swell threshold, ends when
//!   all phases are at or below threshold − hysteresis;
//! * interruption: begins when all phases are below the interruption
//!   threshold, ends when any phase reaches threshold + hysteresis;
//! * unbalance: begins when the max-deviation-over-mean factor exceeds its
//!   threshold, ends when it falls to threshold − hysteresis.
//!
//! While an interruption is active, sag transitions are suppressed. While a
//! sag, swell or interruption is active, and on the window where one ends,
//! unbalance transitions are suppressed (its amplitude comparison is not
//! meaningful during a magnitude event).
//!
//! Event start is the start of the first qualifying window; event end is the
//! start of the first window that satisfies the exit condition.

mod capture;
mod rawfile;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::RMS_WINDOW;
use crate::time::{StreamClock, Timestamp};

pub use capture::{CaptureConfig, ClosedEvent, EventMonitor, CAPTURE_CHANNELS};
pub use rawfile::{read_raw_file, write_raw_file, RawCapture, RAW_FILE_VERSION, RAW_MAGIC};

#[derive(Debug, Error)]
pub enum EventError {
    #[error("RMS timestamps must increase: got sample {got} after {previous}")]
    NonMonotonic { previous: u64, got: u64 },
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error("raw event file {path}: {message}")]
    RawFile { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Sag,
    Swell,
    Interruption,
    Unbalance,
}

impl EventType {
    pub const ALL: [EventType; 4] = [EventType::Sag, EventType::Swell, EventType::Interruption, EventType::Unbalance];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Sag => "sag",
            EventType::Swell => "swell",
            EventType::Interruption => "interruption",
            EventType::Unbalance => "unbalance",
        }
    }

    /// Directory holding this type's raw captures.
    pub fn dir_name(self) -> &'static str {
        match self {
            EventType::Sag => "Sag",
            EventType::Swell => "Swell",
            EventType::Interruption => "Interruption",
            EventType::Unbalance => "Unbalance",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        EventType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown event type '{s}'"))
    }
}

/// Detection thresholds, in per-unit of nominal unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventThresholds {
    pub sag_threshold: f64,
    pub swell_threshold: f64,
    pub interruption_threshold: f64,
    pub hysteresis: f64,
    /// Dimensionless unbalance factor.
    pub unbalance_threshold: f64,
    pub unbalance_hysteresis: f64,
    /// Volts.
    pub nominal_voltage_rms: f64,
}

impl Default for EventThresholds {
    fn default() -> Self {
        Self {
            sag_threshold: 0.85,
            swell_threshold: 1.10,
            interruption_threshold: 0.05,
            hysteresis: 0.02,
            unbalance_threshold: 0.02,
            unbalance_hysteresis: 0.005,
            nominal_voltage_rms: 230.0,
        }
    }
}

impl EventThresholds {
    pub fn with_nominal(nominal_voltage_rms: f64) -> Self {
        Self {
            nominal_voltage_rms,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), EventError> {
        let bad = |m: &str| Err(EventError::Thresholds(m.to_string()));
        if !(self.interruption_threshold < self.sag_threshold && self.sag_threshold < 1.0 && 1.0 < self.swell_threshold) {
            return bad("need interruption < sag < 1 < swell");
        }
        if !(self.hysteresis > 0.0) {
            return bad("hysteresis must be > 0");
        }
        if !(self.sag_threshold + self.hysteresis < 1.0 && self.swell_threshold - self.hysteresis > 1.0) {
            return bad("hysteresis band must not cross nominal");
        }
        if !(self.interruption_threshold > 0.0) {
            return bad("interruption threshold must be > 0");
        }
        if !(self.unbalance_hysteresis > 0.0 && self.unbalance_threshold > self.unbalance_hysteresis) {
            return bad("need unbalance_threshold > unbalance_hysteresis > 0");
        }
        if !(self.nominal_voltage_rms > 0.0) {
            return bad("nominal voltage must be > 0");
        }
        Ok(())
    }
}

/// `max_k |V_k − mean(V)| / mean(V)`; undefined for a zero mean.
pub fn compute_unbalance(v: [f64; 3]) -> Option<f64> {
    let mean = (v[0] + v[1] + v[2]) / 3.0;
    if !(mean > 0.0) {
        return None;
    }
    let dev = v.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    Some(dev / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Begin,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub event_type: EventType,
    pub edge: Edge,
    /// Window-start sample index of the transition.
    pub at_sample: u64,
}

/// The four event state machines of one measurement point.
#[derive(Debug, Clone)]
pub struct EventStateMachine {
    thresholds: EventThresholds,
    window: u64,
    /// Start sample of each active event, indexed by [`EventType`].
    active: [Option<u64>; 4],
    last_end: Option<u64>,
}

impl EventStateMachine {
    pub fn new(thresholds: EventThresholds) -> Result<Self, EventError> {
        thresholds.validate()?;
        Ok(Self {
            thresholds,
            window: RMS_WINDOW as u64,
            active: [None; 4],
            last_end: None,
        })
    }

    pub fn thresholds(&self) -> &EventThresholds {
        &self.thresholds
    }

    /// Start sample of the active event of `kind`, if any.
    pub fn active(&self, kind: EventType) -> Option<u64> {
        self.active[kind.index()]
    }

    /// End sample of the last evaluated window.
    pub fn last_end(&self) -> Option<u64> {
        self.last_end
    }

    /// Evaluates one RMS window ending at `end_sample`.
    pub fn update(&mut self, end_sample: u64, v_rms: [f64; 3]) -> Result<Vec<Transition>, EventError> {
        if let Some(previous) = self.last_end {
            if end_sample <= previous {
                return Err(EventError::NonMonotonic { previous, got: end_sample });
            }
        }
        self.last_end = Some(end_sample);
        let at = end_sample.saturating_sub(self.window);
        let t = self.thresholds.clone();
        let pu = v_rms.map(|v| v / t.nominal_voltage_rms);
        let any = |f: &dyn Fn(f64) -> bool| pu.iter().any(|x| f(*x));
        let all = |f: &dyn Fn(f64) -> bool| pu.iter().all(|x| f(*x));
        let mut out = Vec::new();
        let magnitude_kinds = [EventType::Sag, EventType::Swell, EventType::Interruption];
        let was_magnitude = magnitude_kinds.iter().any(|k| self.active(*k).is_some());

        let interruption_begin = all(&|x| x < t.interruption_threshold);
        let interruption_end = any(&|x| x >= t.interruption_threshold + t.hysteresis);
        self.step(EventType::Interruption, interruption_begin, interruption_end, at, &mut out);

        if self.active(EventType::Interruption).is_none() {
            let begin = any(&|x| x < t.sag_threshold);
            let end = all(&|x| x >= t.sag_threshold + t.hysteresis);
            self.step(EventType::Sag, begin, end, at, &mut out);
        }

        let begin = any(&|x| x > t.swell_threshold);
        let end = all(&|x| x <= t.swell_threshold - t.hysteresis);
        self.step(EventType::Swell, begin, end, at, &mut out);

        // the recovery window of a magnitude event still carries its asymmetry
        let magnitude_event = was_magnitude || magnitude_kinds.iter().any(|k| self.active(*k).is_some());
        if !magnitude_event {
            if let Some(u) = compute_unbalance(v_rms) {
                let begin = u > t.unbalance_threshold;
                let end = u <= t.unbalance_threshold - t.unbalance_hysteresis;
                self.step(EventType::Unbalance, begin, end, at, &mut out);
            }
        }
        Ok(out)
    }

    fn step(&mut self, kind: EventType, begin: bool, end: bool, at: u64, out: &mut Vec<Transition>) {
        let slot = &mut self.active[kind.index()];
        match *slot {
            None if begin => {
                *slot = Some(at);
                out.push(Transition { event_type: kind, edge: Edge::Begin, at_sample: at });
            }
            Some(_) if end => {
                *slot = None;
                out.push(Transition { event_type: kind, edge: Edge::End, at_sample: at });
            }
            _ => {}
        }
    }
}

/// A finalized event occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub event_id: u64,
    pub measurement_point_id: String,
    pub event_type: EventType,
    pub event_starting_time: Timestamp,
    pub event_ending_time: Timestamp,
    pub event_size_in_samples: u64,
    /// Absolute path of the compressed raw capture; `None` if it could not
    /// be written.
    pub file_path: Option<PathBuf>,
    pub raw_error: Option<String>,
    /// Stream ended while the event was still active.
    pub truncated: bool,
}

impl EventRecord {
    /// Raw-file path relative to the measurement point directory.
    pub fn relative_raw_path(kind: EventType, event_id: u64) -> PathBuf {
        Path::new(kind.dir_name()).join(format!("raw_{event_id:06}.pqz"))
    }
}

/// Writes the raw capture of `event` under `point_dir` and builds its record.
///
/// A failed raw write still yields a record, with `file_path` unset and the
/// failure in `raw_error`.
pub fn finalize_event(event: &ClosedEvent, point_id: &str, clock: &StreamClock, point_dir: &Path) -> EventRecord {
    let relative = EventRecord::relative_raw_path(event.event_type, event.event_id);
    let path = point_dir.join(&relative);
    let capture = RawCapture {
        event_id: event.event_id,
        sample_rate: crate::siggen::SAMPLE_RATE,
        capture_start: clock.at_sample(event.capture_start),
        channels: event.capture.clone(),
    };
    let written = path
        .parent()
        .map(std::fs::create_dir_all)
        .transpose()
        .map_err(EventError::from)
        .and_then(|_| write_raw_file(&path, &capture));
    let (file_path, raw_error) = match written {
        Ok(()) => (Some(std::path::absolute(&path).unwrap_or(path)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    EventRecord {
        event_id: event.event_id,
        measurement_point_id: point_id.to_string(),
        event_type: event.event_type,
        event_starting_time: clock.at_sample(event.start_sample),
        event_ending_time: clock.at_sample(event.end_sample),
        event_size_in_samples: event.end_sample - event.start_sample,
        file_path,
        raw_error,
        truncated: event.truncated,
    }
}

//! Raw-waveform capture around detected events.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Edge, EventError, EventStateMachine, EventThresholds, EventType, Transition};
use crate::analyzer::{RmsRecord, RMS_WINDOW};
use crate::siggen::{PHASE_COUNT, SAMPLE_RATE_HZ};

/// Va, Vb, Vc, Ia, Ib, Ic.
pub const CAPTURE_CHANNELS: usize = 2 * PHASE_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureConfig {
    /// Seconds of waveform kept before the event start.
    pub pre_trigger: f64,
    /// Seconds of waveform kept after the event end.
    pub post_trigger: f64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            pre_trigger: 0.2,
            post_trigger: 0.2,
        }
    }
}

impl CaptureConfig {
    fn samples(seconds: f64) -> u64 {
        (seconds.max(0.0) * SAMPLE_RATE_HZ).round() as u64
    }
}

/// An event whose exit condition was met (or whose stream ended), together
/// with its raw capture.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedEvent {
    pub event_id: u64,
    pub event_type: EventType,
    pub start_sample: u64,
    pub end_sample: u64,
    pub capture_start: u64,
    /// Channel-major capture covering `[capture_start, capture_start + len)`.
    pub capture: [Vec<f64>; CAPTURE_CHANNELS],
    pub truncated: bool,
}

impl ClosedEvent {
    pub fn capture_len(&self) -> usize {
        self.capture[0].len()
    }
}

#[derive(Debug)]
struct OpenCapture {
    event_id: u64,
    event_type: EventType,
    start_sample: u64,
    end_sample: Option<u64>,
    capture_start: u64,
    capture_end: Option<u64>,
    data: [Vec<f64>; CAPTURE_CHANNELS],
}

impl OpenCapture {
    fn captured_until(&self) -> u64 {
        self.capture_start + self.data[0].len() as u64
    }

    fn close(mut self, truncated: bool) -> ClosedEvent {
        if let Some(limit) = self.capture_end {
            let keep = limit.saturating_sub(self.capture_start) as usize;
            self.data.iter_mut().for_each(|ch| ch.truncate(keep));
        }
        ClosedEvent {
            event_id: self.event_id,
            event_type: self.event_type,
            start_sample: self.start_sample,
            end_sample: self.end_sample.expect("closed capture has an end"),
            capture_start: self.capture_start,
            capture: self.data,
            truncated,
        }
    }
}

/// Event state machines plus a pre-trigger ring buffer of raw samples.
///
/// Feed samples with [`push_samples`](Self::push_samples) up to the end of
/// each RMS window, then call [`update`](Self::update) with that window's
/// record. Captures span `[start − pre_trigger, end + post_trigger]`,
/// clamped to the stream.
#[derive(Debug)]
pub struct EventMonitor {
    machine: EventStateMachine,
    pre_samples: u64,
    post_samples: u64,
    ring: VecDeque<[f64; CAPTURE_CHANNELS]>,
    ring_capacity: usize,
    /// Index one past the newest sample pushed.
    pushed_end: u64,
    open: Vec<OpenCapture>,
    closed: Vec<ClosedEvent>,
    next_event_id: u64,
}

impl EventMonitor {
    pub fn new(thresholds: EventThresholds, capture: CaptureConfig) -> Result<Self, EventError> {
        let pre_samples = CaptureConfig::samples(capture.pre_trigger);
        let ring_capacity = pre_samples as usize + RMS_WINDOW;
        Ok(Self {
            machine: EventStateMachine::new(thresholds)?,
            pre_samples,
            post_samples: CaptureConfig::samples(capture.post_trigger),
            ring: VecDeque::with_capacity(ring_capacity),
            ring_capacity,
            pushed_end: 0,
            open: Vec::new(),
            closed: Vec::new(),
            next_event_id: 1,
        })
    }

    /// Continues event numbering after `last_id`.
    pub fn with_first_event_id(mut self, first: u64) -> Self {
        self.next_event_id = first;
        self
    }

    pub fn machine(&self) -> &EventStateMachine {
        &self.machine
    }

    pub fn push_samples(&mut self, start: u64, v: [&[f64]; 3], i: [&[f64]; 3]) {
        debug_assert_eq!(start, self.pushed_end, "samples must be contiguous");
        let n = v[0].len();
        for k in 0..n {
            let row = [v[0][k], v[1][k], v[2][k], i[0][k], i[1][k], i[2][k]];
            if self.ring.len() == self.ring_capacity {
                self.ring.pop_front();
            }
            self.ring.push_back(row);
            for cap in &mut self.open {
                if cap.capture_end.is_none_or(|end| cap.captured_until() < end) {
                    for (ch, x) in cap.data.iter_mut().zip(row) {
                        ch.push(x);
                    }
                }
            }
        }
        self.pushed_end = start + n as u64;
        self.close_completed();
    }

    /// Evaluates one RMS record; completed events become available from
    /// [`drain_closed`](Self::drain_closed).
    pub fn update(&mut self, rms: &RmsRecord) -> Result<Vec<Transition>, EventError> {
        let transitions = self.machine.update(rms.end_sample, rms.v_rms)?;
        for t in &transitions {
            match t.edge {
                Edge::Begin => self.begin(t.event_type, t.at_sample),
                Edge::End => {
                    if let Some(cap) = self
                        .open
                        .iter_mut()
                        .find(|c| c.event_type == t.event_type && c.end_sample.is_none())
                    {
                        cap.end_sample = Some(t.at_sample);
                        cap.capture_end = Some(t.at_sample + self.post_samples);
                    }
                }
            }
        }
        self.close_completed();
        Ok(transitions)
    }

    fn begin(&mut self, event_type: EventType, at: u64) {
        let ring_start = self.pushed_end - self.ring.len() as u64;
        let capture_start = at.saturating_sub(self.pre_samples).max(ring_start);
        let skip = (capture_start - ring_start) as usize;
        let mut data: [Vec<f64>; CAPTURE_CHANNELS] = Default::default();
        for row in self.ring.iter().skip(skip) {
            for (ch, x) in data.iter_mut().zip(row) {
                ch.push(*x);
            }
        }
        self.open.push(OpenCapture {
            event_id: self.next_event_id,
            event_type,
            start_sample: at,
            end_sample: None,
            capture_start,
            capture_end: None,
            data,
        });
        self.next_event_id += 1;
    }

    fn close_completed(&mut self) {
        let pushed_end = self.pushed_end;
        let (done, still_open): (Vec<_>, Vec<_>) = std::mem::take(&mut self.open)
            .into_iter()
            .partition(|c| c.capture_end.is_some_and(|end| end <= pushed_end));
        self.open = still_open;
        self.closed.extend(done.into_iter().map(|c| c.close(false)));
        self.closed.sort_by_key(|c| c.event_id);
    }

    /// Events closed since the last call, in event-id order.
    pub fn drain_closed(&mut self) -> Vec<ClosedEvent> {
        std::mem::take(&mut self.closed)
    }

    /// Ends the stream: active events end at the last evaluated window and
    /// pending post-trigger captures are clamped to the stream end.
    pub fn finish(mut self) -> Vec<ClosedEvent> {
        let stream_end = self.machine.last_end().unwrap_or(self.pushed_end);
        for mut cap in std::mem::take(&mut self.open) {
            let truncated = cap.end_sample.is_none();
            if truncated {
                cap.end_sample = Some(stream_end.max(cap.start_sample + 1));
            }
            cap.capture_end = Some(cap.capture_end.map_or(self.pushed_end, |e| e.min(self.pushed_end)));
            self.closed.push(cap.close(truncated));
        }
        self.closed.sort_by_key(|c| c.event_id);
        self.closed
    }
}

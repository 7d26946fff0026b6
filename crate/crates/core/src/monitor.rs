//! The measurement module: analysis, event detection and transfer-file
//! output over one sample stream.

use std::path::Path;

use thiserror::Error;

use crate::analyzer::{
    Analyzer, AnalyzerConfig, AnalyzerError, Diagnostics, PqRecord, RMS_WINDOW,
};
use crate::events::{
    finalize_event, CaptureConfig, ClosedEvent, EventError, EventMonitor, EventRecord, EventThresholds,
};
use crate::siggen::{SignalError, WaveformFrame};
use crate::store::{MeasurementPoint, StoreError, TransferWriter, WriteSummary, WriterOptions};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorConfig {
    pub analyzer: AnalyzerConfig,
    pub thresholds: EventThresholds,
    pub capture: CaptureConfig,
}

impl MonitorConfig {
    /// Defaults around the given nominal values.
    pub fn nominal(frequency: f64, voltage_rms: f64, current_rms: f64) -> Self {
        Self {
            analyzer: AnalyzerConfig {
                nominal_frequency: frequency,
                nominal_voltage_rms: voltage_rms,
                nominal_current_rms: current_rms,
                ..Default::default()
            },
            thresholds: EventThresholds::with_nominal(voltage_rms),
            capture: CaptureConfig::default(),
        }
    }
}

/// Output produced by one push.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub records: Vec<PqRecord>,
    pub closed: Vec<ClosedEvent>,
}

/// Analyzer and event monitor fed from the same samples.
#[derive(Debug)]
pub struct Monitor {
    analyzer: Analyzer,
    events: EventMonitor,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Result<Self, MonitorError> {
        Ok(Self {
            analyzer: Analyzer::new(config.analyzer)?,
            events: EventMonitor::new(config.thresholds, config.capture)?,
        })
    }

    pub fn next_sample(&self) -> u64 {
        self.analyzer.next_sample()
    }

    pub fn push_frame(&mut self, frame: &WaveformFrame) -> Result<Step, MonitorError> {
        if !frame.is_well_formed() {
            return Err(AnalyzerError::RaggedFrame.into());
        }
        let v = [&frame.voltage[0][..], &frame.voltage[1][..], &frame.voltage[2][..]];
        let i = [&frame.current[0][..], &frame.current[1][..], &frame.current[2][..]];
        self.push_samples(frame.start_sample_index, v, i)
    }

    /// Feeds contiguous samples starting at `start`.
    pub fn push_samples(&mut self, start: u64, v: [&[f64]; 3], i: [&[f64]; 3]) -> Result<Step, MonitorError> {
        if start != self.next_sample() {
            return Err(AnalyzerError::Gap {
                expected: self.next_sample(),
                found: start,
            }
            .into());
        }
        let n = v[0].len();
        if v.iter().chain(i.iter()).any(|c| c.len() != n) {
            return Err(AnalyzerError::RaggedFrame.into());
        }
        let mut step = Step::default();
        let mut offset = 0;
        // the event monitor must hold every sample of an RMS window before
        // it sees that window's record
        while offset < n {
            let at = start + offset as u64;
            let room = RMS_WINDOW - (at % RMS_WINDOW as u64) as usize;
            let take = room.min(n - offset);
            let vs = v.map(|c| &c[offset..offset + take]);
            let is = i.map(|c| &c[offset..offset + take]);
            self.events.push_samples(at, vs, is);
            for rec in self.analyzer.push_samples(at, vs, is)? {
                if let PqRecord::Rms(r) = &rec {
                    self.events.update(r)?;
                }
                step.records.push(rec);
            }
            offset += take;
        }
        step.closed = self.events.drain_closed();
        Ok(step)
    }

    /// Ends the stream; events still active are closed as truncated.
    pub fn finish(self) -> (Vec<ClosedEvent>, Diagnostics) {
        (self.events.finish(), self.analyzer.finish())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub writer: WriterOptions,
    /// Also return every record in memory.
    pub keep_records: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub written: WriteSummary,
    pub diagnostics: Diagnostics,
    pub events: Vec<EventRecord>,
    /// Present when [`RunOptions::keep_records`] is set.
    pub records: Vec<PqRecord>,
}

/// Runs a whole stream into a measurement point directory under `out_root`.
pub fn analyze_to_directory<I, E>(
    frames: I,
    config: MonitorConfig,
    point: &MeasurementPoint,
    stream_start: Timestamp,
    out_root: &Path,
    options: RunOptions,
) -> Result<RunSummary, MonitorError>
where
    I: IntoIterator<Item = Result<WaveformFrame, E>>,
    MonitorError: From<E>,
{
    // fails before anything is analyzed if out_root is unusable
    let mut writer = TransferWriter::create(out_root, point, stream_start, options.writer.clone())?;
    let mut monitor = Monitor::new(config)?;
    let mut summary = RunSummary::default();

    let emit_events = |closed: Vec<ClosedEvent>, writer: &mut TransferWriter, out: &mut Vec<EventRecord>| {
        for c in closed {
            let rec = finalize_event(&c, &point.id, writer.clock(), writer.point_dir());
            writer.push_event(&rec)?;
            out.push(rec);
        }
        Ok::<_, MonitorError>(())
    };

    for frame in frames {
        let step = monitor.push_frame(&frame?)?;
        for r in &step.records {
            writer.push_record(r)?;
        }
        if options.keep_records {
            summary.records.extend(step.records);
        }
        emit_events(step.closed, &mut writer, &mut summary.events)?;
    }
    let (closed, diagnostics) = monitor.finish();
    emit_events(closed, &mut writer, &mut summary.events)?;
    summary.diagnostics = diagnostics;
    summary.written = writer.finish()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::run_pipeline;
    use crate::events::EventType;
    use crate::siggen::{generate_frames, parse_script, SignalConfig};
    use crate::store::{LoadType, ParameterType, PointKind};

    fn point() -> MeasurementPoint {
        MeasurementPoint {
            id: "M1".into(),
            name: "monitor test".into(),
            point_kind: PointKind::Feeder,
            load_type: LoadType::IndustryUrban,
            city_name: "c".into(),
            region_name: "r".into(),
            voltage_level: 34.5,
        }
    }

    #[test]
    fn monitor_matches_plain_analyzer_and_finds_sag() {
        let sig = SignalConfig {
            duration: 6.0,
            frame_length: 1000,
            ..Default::default()
        };
        let script = parse_script("sag 2.0 3.0 A 0.8\n").unwrap();
        let frames = generate_frames(&sig, &script).unwrap();
        let cfg = MonitorConfig::nominal(50.0, 230.0, 10.0);
        let plain = run_pipeline(&frames, &cfg.analyzer).unwrap();

        let mut m = Monitor::new(cfg).unwrap();
        let mut records = Vec::new();
        let mut closed = Vec::new();
        for f in &frames {
            let s = m.push_frame(f).unwrap();
            records.extend(s.records);
            closed.extend(s.closed);
        }
        closed.extend(m.finish().0);
        assert_eq!(records, plain.records);
        assert_eq!(closed.len(), 1);
        assert_eq!(closed[0].event_type, EventType::Sag);
        assert_eq!((closed[0].start_sample, closed[0].end_sample), (6400, 9600));
    }

    #[test]
    fn directory_run_writes_events_and_raw() {
        let sig = SignalConfig {
            duration: 60.0,
            ..Default::default()
        };
        let script = parse_script("sag 10.0 10.6 B 0.8\n").unwrap();
        let frames = generate_frames(&sig, &script).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = analyze_to_directory(
            frames.into_iter().map(Ok::<_, MonitorError>),
            MonitorConfig::nominal(50.0, 230.0, 10.0),
            &point(),
            Timestamp(0),
            dir.path(),
            RunOptions::default(),
        )
        .unwrap();
        assert_eq!(s.written.rows(ParameterType::Power), 60);
        assert_eq!(s.written.rows(ParameterType::Rms), 300);
        assert_eq!(s.written.rows(ParameterType::Harmonics), 20);
        assert_eq!(s.written.rows(ParameterType::Event), 1);
        assert_eq!(s.events.len(), 1);
        let raw = s.events[0].file_path.as_ref().unwrap();
        assert!(raw.is_absolute() && raw.is_file());
        assert_eq!(std::fs::read_dir(dir.path().join("M1/Sag")).unwrap().count(), 1);
        assert_eq!(s.events[0].event_size_in_samples, 1920);
    }
}

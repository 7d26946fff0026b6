//! Online PQ parameter analysis.
//!
//! [`Analyzer`] consumes a contiguous 3200 Hz stream and emits each averaged
//! parameter on its own tumbling, sample-aligned window:
//!
//! | record     | window (samples) | period  |
//! |------------|------------------|---------|
//! | RMS        | 640              | 0.2 s   |
//! | frequency  | 3 200            | 1 s     |
//! | power      | 3 200            | 1 s     |
//! | harmonics  | 9 600            | 3 s     |
//! | Pst        | 1 920 000        | 10 min  |
//! | demand     | 2 880 000        | 15 min  |
//! | Plt        | 12 × Pst         | 2 h     |
//!
//! Record timestamps are the end of their window. Partial windows at the end
//! of a stream are dropped and counted in [`Diagnostics`].

mod dsp;
mod flicker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::siggen::{WaveformFrame, PHASE_COUNT, SAMPLE_RATE, SAMPLE_RATE_HZ};

pub use dsp::{
    compute_thd, goertzel, harmonic_magnitudes, phase_power, rms, thd_with_floor, tone_amplitude,
    zero_crossing_frequency, FrequencyEstimate, PhasePower, Phasor,
};
pub use flicker::{compute_plt, compute_pst, plt, PLT_SOURCE_COUNT, PST_MIN_COVERAGE};

pub const RMS_WINDOW: usize = 640;
pub const POWER_WINDOW: usize = 3200;
pub const FREQUENCY_WINDOW: usize = 3200;
pub const HARMONICS_WINDOW: usize = 9600;
pub const PST_WINDOW: u64 = 1_920_000;
pub const DEMAND_WINDOW: u64 = 2_880_000;
/// Per-second fundamental values averaged into one demand record.
pub const DEMAND_SERIES_LEN: usize = 900;
pub const HARMONIC_ORDERS: usize = 33;

const SECONDS_PER_HARMONICS_WINDOW: usize = HARMONICS_WINDOW / SAMPLE_RATE as usize;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("window holds {got} samples, expected {expected}")]
    WindowLength { got: usize, expected: usize },
    #[error("sample gap: expected index {expected}, frame starts at {found}")]
    Gap { expected: u64, found: u64 },
    #[error("frame channels have unequal lengths")]
    RaggedFrame,
    #[error("{what}: {got} values, need {needed}")]
    InsufficientData { what: &'static str, got: usize, needed: usize },
    #[error("{0}")]
    InvalidInput(String),
    #[error("invalid analyzer config: {0}")]
    Config(String),
}

/// Seconds since stream start for a sample index.
pub fn sample_to_seconds(sample: u64) -> f64 {
    sample as f64 / SAMPLE_RATE_HZ
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsRecord {
    /// Sample index one past the window (end-of-window timestamp).
    pub end_sample: u64,
    pub v_rms: [f64; 3],
    pub i_rms: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRecord {
    pub end_sample: u64,
    pub active_p: [f64; 3],
    pub reactive_q: [f64; 3],
    pub apparent_s: [f64; 3],
    pub power_factor: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicsRecord {
    pub end_sample: u64,
    /// Fundamental frequency the projections were taken at.
    pub fundamental: f64,
    /// Peak magnitudes, orders 1..=33, per phase.
    pub v_harmonics: [[f64; HARMONIC_ORDERS]; 3],
    pub i_harmonics: [[f64; HARMONIC_ORDERS]; 3],
    /// Percent; `None` marks an undefined THD (fundamental below floor).
    pub thd_v: [Option<f64>; 3],
    pub thd_i: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRecord {
    pub end_sample: u64,
    pub frequency: f64,
    /// True when the value was carried over from the previous window.
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandRecord {
    pub end_sample: u64,
    /// Mean fundamental current, RMS amperes.
    pub demand: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlickerPstRecord {
    pub end_sample: u64,
    pub pst: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlickerPltRecord {
    pub end_sample: u64,
    pub plt: [Option<f64>; 3],
    pub source_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // harmonics dominate; records are short-lived
pub enum PqRecord {
    Rms(RmsRecord),
    Frequency(FrequencyRecord),
    Power(PowerRecord),
    Harmonics(HarmonicsRecord),
    Demand(DemandRecord),
    FlickerPst(FlickerPstRecord),
    FlickerPlt(FlickerPltRecord),
}

impl PqRecord {
    pub fn end_sample(&self) -> u64 {
        match self {
            PqRecord::Rms(r) => r.end_sample,
            PqRecord::Frequency(r) => r.end_sample,
            PqRecord::Power(r) => r.end_sample,
            PqRecord::Harmonics(r) => r.end_sample,
            PqRecord::Demand(r) => r.end_sample,
            PqRecord::FlickerPst(r) => r.end_sample,
            PqRecord::FlickerPlt(r) => r.end_sample,
        }
    }

    pub fn timestamp(&self) -> f64 {
        sample_to_seconds(self.end_sample())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    pub nominal_frequency: f64,
    pub nominal_voltage_rms: f64,
    pub nominal_current_rms: f64,
    /// Accepted frequency band; estimates outside are held.
    pub frequency_band: (f64, f64),
    /// THD is undefined when the fundamental falls below this fraction of
    /// the nominal peak amplitude.
    pub thd_floor_ratio: f64,
    pub pst_calibration: f64,
    /// Reactive-power sign used when the phasor comparison is indeterminate.
    pub lag_hint_deg: f64,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            nominal_frequency: 50.0,
            nominal_voltage_rms: 230.0,
            nominal_current_rms: 10.0,
            frequency_band: (40.0, 70.0),
            thd_floor_ratio: 1e-9,
            pst_calibration: 1.0,
            lag_hint_deg: 0.0,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<(), AnalyzerError> {
        let (lo, hi) = self.frequency_band;
        if !(self.nominal_frequency > 0.0) {
            return Err(AnalyzerError::Config("nominal_frequency must be > 0".into()));
        }
        if !(lo > 0.0 && lo < hi) {
            return Err(AnalyzerError::Config(format!("bad frequency band {lo}..{hi}")));
        }
        if !(self.nominal_voltage_rms > 0.0) || self.nominal_current_rms < 0.0 {
            return Err(AnalyzerError::Config("nominal RMS values must be positive".into()));
        }
        Ok(())
    }

    /// Half-cycle length in samples at the nominal frequency.
    pub fn half_cycle_samples(&self) -> usize {
        ((SAMPLE_RATE_HZ / (2.0 * self.nominal_frequency)).round() as usize).max(1)
    }
}

/// Tallies of work dropped at stream end or flagged during analysis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub discarded_rms_windows: u64,
    pub discarded_power_windows: u64,
    pub discarded_harmonics_windows: u64,
    pub discarded_demand_windows: u64,
    pub discarded_pst_windows: u64,
    /// Pst values left over that did not complete a Plt group.
    pub missing_plt: u64,
    pub held_frequency_records: u64,
    pub undefined_thd_values: u64,
    pub undefined_pst_values: u64,
}

/// RMS over one 640-sample window of all six channels.
pub fn compute_rms(end_sample: u64, v: [&[f64]; 3], i: [&[f64]; 3]) -> Result<RmsRecord, AnalyzerError> {
    check_len(v.iter().chain(i.iter()), RMS_WINDOW)?;
    Ok(RmsRecord {
        end_sample,
        v_rms: v.map(rms),
        i_rms: i.map(rms),
    })
}

/// Power quantities over one 1 s window per phase.
pub fn compute_power(
    end_sample: u64,
    v: [&[f64]; 3],
    i: [&[f64]; 3],
    fundamental: f64,
    lag_hint_deg: f64,
) -> Result<PowerRecord, AnalyzerError> {
    check_len(v.iter().chain(i.iter()), POWER_WINDOW)?;
    let phases: [PhasePower; 3] = std::array::from_fn(|p| phase_power(v[p], i[p], fundamental, lag_hint_deg));
    Ok(PowerRecord {
        end_sample,
        active_p: phases.map(|x| x.active),
        reactive_q: phases.map(|x| x.reactive),
        apparent_s: phases.map(|x| x.apparent),
        power_factor: phases.map(|x| x.power_factor),
    })
}

/// Harmonic magnitudes (orders 1..=33) and THD over one 3 s window.
pub fn compute_harmonics(
    end_sample: u64,
    v: [&[f64]; 3],
    i: [&[f64]; 3],
    fundamental: f64,
    floors: (f64, f64),
) -> Result<HarmonicsRecord, AnalyzerError> {
    check_len(v.iter().chain(i.iter()), HARMONICS_WINDOW)?;
    let v_harmonics: [[f64; HARMONIC_ORDERS]; 3] = v.map(|x| harmonic_magnitudes(x, fundamental));
    let i_harmonics: [[f64; HARMONIC_ORDERS]; 3] = i.map(|x| harmonic_magnitudes(x, fundamental));
    Ok(HarmonicsRecord {
        end_sample,
        fundamental,
        thd_v: std::array::from_fn(|p| thd_with_floor(&v_harmonics[p], floors.0)),
        thd_i: std::array::from_fn(|p| thd_with_floor(&i_harmonics[p], floors.1)),
        v_harmonics,
        i_harmonics,
    })
}

/// Phase-A frequency over one 1 s window; holds `previous` when no estimate
/// is possible or it falls outside `band`.
pub fn estimate_frequency(
    end_sample: u64,
    window: &[f64],
    previous: f64,
    band: (f64, f64),
) -> Result<FrequencyRecord, AnalyzerError> {
    check_len(std::iter::once(&window), FREQUENCY_WINDOW)?;
    let (frequency, held) = match zero_crossing_frequency(window) {
        FrequencyEstimate::Measured(f) if f >= band.0 && f <= band.1 => (f, false),
        _ => (previous, true),
    };
    Ok(FrequencyRecord {
        end_sample,
        frequency,
        held,
    })
}

/// Arithmetic mean of 900 per-second fundamental current magnitudes.
pub fn compute_demand(series: &[f64]) -> Result<f64, AnalyzerError> {
    if series.len() != DEMAND_SERIES_LEN {
        return Err(AnalyzerError::InsufficientData {
            what: "per-second demand series",
            got: series.len(),
            needed: DEMAND_SERIES_LEN,
        });
    }
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

fn check_len<'a, S: AsRef<[f64]> + 'a>(
    channels: impl Iterator<Item = &'a S>,
    expected: usize,
) -> Result<(), AnalyzerError> {
    for ch in channels {
        let got = ch.as_ref().len();
        if got != expected {
            return Err(AnalyzerError::WindowLength { got, expected });
        }
    }
    Ok(())
}

const CHANNELS: usize = 2 * PHASE_COUNT;

fn slice(w: &[Vec<f64>; CHANNELS], from: usize) -> ([&[f64]; 3], [&[f64]; 3]) {
    (
        std::array::from_fn(|p| &w[p][from..]),
        std::array::from_fn(|p| &w[PHASE_COUNT + p][from..]),
    )
}

/// Single-pass analyzer for one measurement point.
///
/// Raw samples are buffered for at most one harmonics window (3 s);
/// everything longer is kept as per-window aggregates.
#[derive(Debug)]
pub struct Analyzer {
    config: AnalyzerConfig,
    next_sample: u64,
    /// Samples of the current 3 s window, Va Vb Vc Ia Ib Ic.
    window: [Vec<f64>; CHANNELS],
    last_frequency: f64,
    half_cycle_len: usize,
    half_cycle_acc: [f64; 3],
    half_cycle_fill: usize,
    half_cycle_series: [Vec<f64>; 3],
    pst_expected: usize,
    demand_series: [Vec<f64>; 3],
    previous_fundamental: Option<[f64; 3]>,
    pst_group: Vec<[Option<f64>; 3]>,
    diagnostics: Diagnostics,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Result<Self, AnalyzerError> {
        config.validate()?;
        let half_cycle_len = config.half_cycle_samples();
        Ok(Self {
            last_frequency: config.nominal_frequency,
            pst_expected: (PST_WINDOW / half_cycle_len as u64) as usize,
            half_cycle_len,
            config,
            next_sample: 0,
            window: std::array::from_fn(|_| Vec::with_capacity(HARMONICS_WINDOW)),
            half_cycle_acc: [0.0; 3],
            half_cycle_fill: 0,
            half_cycle_series: Default::default(),
            demand_series: Default::default(),
            previous_fundamental: None,
            pst_group: Vec::with_capacity(PLT_SOURCE_COUNT),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    /// Index of the next sample the analyzer expects.
    pub fn next_sample(&self) -> u64 {
        self.next_sample
    }

    pub fn push_frame(&mut self, frame: &WaveformFrame) -> Result<Vec<PqRecord>, AnalyzerError> {
        if !frame.is_well_formed() {
            return Err(AnalyzerError::RaggedFrame);
        }
        let v = [&frame.voltage[0][..], &frame.voltage[1][..], &frame.voltage[2][..]];
        let i = [&frame.current[0][..], &frame.current[1][..], &frame.current[2][..]];
        self.push_samples(frame.start_sample_index, v, i)
    }

    /// Feeds contiguous samples starting at `start`.
    pub fn push_samples(&mut self, start: u64, v: [&[f64]; 3], i: [&[f64]; 3]) -> Result<Vec<PqRecord>, AnalyzerError> {
        if start != self.next_sample {
            return Err(AnalyzerError::Gap {
                expected: self.next_sample,
                found: start,
            });
        }
        let n = v[0].len();
        if v.iter().chain(i.iter()).any(|c| c.len() != n) {
            return Err(AnalyzerError::RaggedFrame);
        }
        let mut out = Vec::new();
        let mut offset = 0;
        while offset < n {
            let room = RMS_WINDOW - self.window[0].len() % RMS_WINDOW;
            let take = room.min(n - offset);
            let range = offset..offset + take;
            for p in 0..PHASE_COUNT {
                self.window[p].extend_from_slice(&v[p][range.clone()]);
                self.window[PHASE_COUNT + p].extend_from_slice(&i[p][range.clone()]);
            }
            self.feed_half_cycles([&v[0][range.clone()], &v[1][range.clone()], &v[2][range.clone()]]);
            self.next_sample += take as u64;
            offset += take;
            if self.window[0].len().is_multiple_of(RMS_WINDOW) {
                self.close_windows(&mut out)?;
            }
        }
        Ok(out)
    }

    fn feed_half_cycles(&mut self, v: [&[f64]; 3]) {
        let mut absolute = self.next_sample;
        let n = v[0].len();
        for k in 0..n {
            for (acc, ch) in self.half_cycle_acc.iter_mut().zip(v) {
                *acc += ch[k] * ch[k];
            }
            self.half_cycle_fill += 1;
            absolute += 1;
            if self.half_cycle_fill == self.half_cycle_len {
                for p in 0..PHASE_COUNT {
                    let r = (self.half_cycle_acc[p] / self.half_cycle_len as f64).sqrt();
                    self.half_cycle_series[p].push(r);
                }
                self.half_cycle_acc = [0.0; 3];
                self.half_cycle_fill = 0;
            }
            if absolute.is_multiple_of(PST_WINDOW) {
                // partial half cycles do not straddle Pst windows
                self.half_cycle_acc = [0.0; 3];
                self.half_cycle_fill = 0;
            }
        }
    }

    fn close_windows(&mut self, out: &mut Vec<PqRecord>) -> Result<(), AnalyzerError> {
        let end = self.next_sample;
        let len = self.window[0].len();

        let (v, i) = slice(&self.window, len - RMS_WINDOW);
        out.push(PqRecord::Rms(compute_rms(end, v, i)?));

        if len.is_multiple_of(POWER_WINDOW) {
            let (v, i) = slice(&self.window, len - POWER_WINDOW);
            let freq = estimate_frequency(end, v[0], self.last_frequency, self.config.frequency_band)?;
            if freq.held {
                self.diagnostics.held_frequency_records += 1;
            }
            self.last_frequency = freq.frequency;
            out.push(PqRecord::Frequency(freq));
            out.push(PqRecord::Power(compute_power(end, v, i, self.last_frequency, self.config.lag_hint_deg)?));
        }

        if len == HARMONICS_WINDOW {
            let (v, i) = slice(&self.window, 0);
            let sqrt2 = std::f64::consts::SQRT_2;
            let floors = (
                self.config.thd_floor_ratio * self.config.nominal_voltage_rms * sqrt2,
                self.config.thd_floor_ratio * self.config.nominal_current_rms * sqrt2,
            );
            let rec = compute_harmonics(end, v, i, self.last_frequency, floors)?;
            self.diagnostics.undefined_thd_values +=
                rec.thd_v.iter().chain(rec.thd_i.iter()).filter(|t| t.is_none()).count() as u64;
            let fundamental_rms: [f64; 3] = std::array::from_fn(|p| rec.i_harmonics[p][0] / sqrt2);
            out.push(PqRecord::Harmonics(rec));
            self.window.iter_mut().for_each(Vec::clear);
            self.feed_demand(fundamental_rms);
        }

        if end.is_multiple_of(DEMAND_WINDOW) {
            let demand = [
                compute_demand(&self.demand_series[0])?,
                compute_demand(&self.demand_series[1])?,
                compute_demand(&self.demand_series[2])?,
            ];
            self.demand_series.iter_mut().for_each(Vec::clear);
            out.push(PqRecord::Demand(DemandRecord {
                end_sample: end,
                demand,
            }));
        }
        if end.is_multiple_of(PST_WINDOW) {
            self.close_pst(end, out)?;
        }
        Ok(())
    }

    /// Interpolates the 3 s fundamental magnitudes to one value per second.
    fn feed_demand(&mut self, current: [f64; 3]) {
        let previous = self.previous_fundamental.unwrap_or(current);
        let steps = SECONDS_PER_HARMONICS_WINDOW as f64;
        for k in 1..=SECONDS_PER_HARMONICS_WINDOW {
            let w = k as f64 / steps;
            for p in 0..PHASE_COUNT {
                self.demand_series[p].push(previous[p] + (current[p] - previous[p]) * w);
            }
        }
        self.previous_fundamental = Some(current);
    }

    fn close_pst(&mut self, end: u64, out: &mut Vec<PqRecord>) -> Result<(), AnalyzerError> {
        let mut pst = [None; 3];
        for (p, value) in pst.iter_mut().enumerate() {
            *value = compute_pst(&self.half_cycle_series[p], self.pst_expected, self.config.pst_calibration)?;
        }
        self.half_cycle_series.iter_mut().for_each(Vec::clear);
        self.diagnostics.undefined_pst_values += pst.iter().filter(|p| p.is_none()).count() as u64;
        out.push(PqRecord::FlickerPst(FlickerPstRecord { end_sample: end, pst }));

        self.pst_group.push(pst);
        if self.pst_group.len() == PLT_SOURCE_COUNT {
            let plt: [Option<f64>; 3] = std::array::from_fn(|p| {
                let values: Option<Vec<f64>> = self.pst_group.iter().map(|g| g[p]).collect();
                values.and_then(|v| compute_plt(&v).ok())
            });
            self.pst_group.clear();
            out.push(PqRecord::FlickerPlt(FlickerPltRecord {
                end_sample: end,
                plt,
                source_count: PLT_SOURCE_COUNT as u32,
            }));
        }
        Ok(())
    }

    /// Ends the stream, tallying the partial windows that are dropped.
    pub fn finish(self) -> Diagnostics {
        let mut d = self.diagnostics;
        let pending = self.window[0].len();
        d.discarded_rms_windows += u64::from(!pending.is_multiple_of(RMS_WINDOW));
        d.discarded_power_windows += u64::from(!pending.is_multiple_of(POWER_WINDOW));
        d.discarded_harmonics_windows += u64::from(pending != 0);
        let since_demand = self.next_sample % DEMAND_WINDOW;
        d.discarded_demand_windows += u64::from(since_demand != 0);
        d.discarded_pst_windows += u64::from(!self.next_sample.is_multiple_of(PST_WINDOW));
        d.missing_plt += self.pst_group.len() as u64;
        d
    }
}

/// Output of a whole-stream analysis run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<PqRecord>,
    pub diagnostics: Diagnostics,
}

impl PipelineOutput {
    pub fn rms(&self) -> impl Iterator<Item = &RmsRecord> {
        self.records.iter().filter_map(|r| match r {
            PqRecord::Rms(x) => Some(x),
            _ => None,
        })
    }

    pub fn power(&self) -> impl Iterator<Item = &PowerRecord> {
        self.records.iter().filter_map(|r| match r {
            PqRecord::Power(x) => Some(x),
            _ => None,
        })
    }

    pub fn harmonics(&self) -> impl Iterator<Item = &HarmonicsRecord> {
        self.records.iter().filter_map(|r| match r {
            PqRecord::Harmonics(x) => Some(x),
            _ => None,
        })
    }

    pub fn frequency(&self) -> impl Iterator<Item = &FrequencyRecord> {
        self.records.iter().filter_map(|r| match r {
            PqRecord::Frequency(x) => Some(x),
            _ => None,
        })
    }

    pub fn demand(&self) -> impl Iterator<Item = &DemandRecord> {
        self.records.iter().filter_map(|r| match r {
            PqRecord::Demand(x) => Some(x),
            _ => None,
        })
    }

    pub fn pst(&self) -> impl Iterator<Item = &FlickerPstRecord> {
        self.records.iter().filter_map(|r| match r {
            PqRecord::FlickerPst(x) => Some(x),
            _ => None,
        })
    }

    pub fn plt(&self) -> impl Iterator<Item = &FlickerPltRecord> {
        self.records.iter().filter_map(|r| match r {
            PqRecord::FlickerPlt(x) => Some(x),
            _ => None,
        })
    }

    /// Record counts in the order RMS, power, harmonics, frequency, demand,
    /// Pst, Plt.
    pub fn counts(&self) -> [usize; 7] {
        [
            self.rms().count(),
            self.power().count(),
            self.harmonics().count(),
            self.frequency().count(),
            self.demand().count(),
            self.pst().count(),
            self.plt().count(),
        ]
    }
}

/// Runs a whole stream through a fresh [`Analyzer`].
pub fn run_pipeline<I>(frames: I, config: &AnalyzerConfig) -> Result<PipelineOutput, AnalyzerError>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<WaveformFrame>,
{
    let mut analyzer = Analyzer::new(config.clone())?;
    let mut records = Vec::new();
    for frame in frames {
        records.extend(analyzer.push_frame(std::borrow::Borrow::borrow(&frame))?);
    }
    Ok(PipelineOutput {
        records,
        diagnostics: analyzer.finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siggen::{generate_frames, generate_stream, parse_script, DisturbanceScript, SignalConfig};

    fn analyzer_config(sig: &SignalConfig) -> AnalyzerConfig {
        AnalyzerConfig {
            nominal_frequency: sig.nominal_frequency,
            nominal_voltage_rms: sig.nominal_voltage_rms,
            nominal_current_rms: sig.nominal_current_rms,
            ..Default::default()
        }
    }

    fn run(sig: &SignalConfig, script: &str) -> PipelineOutput {
        let frames = generate_stream(sig, &parse_script(script).unwrap()).unwrap();
        run_pipeline(frames, &analyzer_config(sig)).unwrap()
    }

    #[test]
    fn sixty_second_cadence() {
        let sig = SignalConfig { duration: 60.0, ..Default::default() };
        let out = run(&sig, "");
        assert_eq!(out.counts(), [300, 60, 20, 60, 0, 0, 0]);
        assert_eq!(out.diagnostics.discarded_rms_windows, 0);
        assert_eq!(out.diagnostics.discarded_demand_windows, 1);
    }

    #[test]
    fn empty_input_is_clean() {
        let out = run_pipeline(Vec::<WaveformFrame>::new(), &AnalyzerConfig::default()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.diagnostics, Diagnostics::default());
    }

    #[test]
    fn partial_windows_are_dropped_and_tallied() {
        let sig = SignalConfig { duration: 4.1, ..Default::default() };
        let out = run(&sig, "");
        assert_eq!(out.counts(), [20, 4, 1, 4, 0, 0, 0]);
        assert_eq!(out.diagnostics.discarded_rms_windows, 1);
        assert_eq!(out.diagnostics.discarded_power_windows, 1);
        assert_eq!(out.diagnostics.discarded_harmonics_windows, 1);
    }

    #[test]
    fn timestamps_are_end_of_window_and_ordered() {
        let sig = SignalConfig { duration: 6.0, ..Default::default() };
        let out = run(&sig, "");
        let rms: Vec<u64> = out.rms().map(|r| r.end_sample).collect();
        assert_eq!(rms[0], 640);
        assert_eq!(*rms.last().unwrap(), 6 * 3200);
        let ends: Vec<u64> = out.records.iter().map(PqRecord::end_sample).collect();
        assert!(ends.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(out.harmonics().map(|h| h.end_sample).collect::<Vec<_>>(), vec![9600, 19200]);
    }

    #[test]
    fn gap_aborts() {
        let sig = SignalConfig { duration: 1.0, ..Default::default() };
        let mut frames = generate_frames(&sig, &DisturbanceScript::default()).unwrap();
        frames.remove(2);
        let err = run_pipeline(frames, &analyzer_config(&sig)).unwrap_err();
        assert!(matches!(err, AnalyzerError::Gap { expected: 1280, found: 1920 }));
    }

    #[test]
    fn frame_length_does_not_change_results() {
        let base = SignalConfig { duration: 9.0, jitter_rms: 0.3, seed: 3, ..Default::default() };
        let a = run(&base, "harmonic 1 8 A 0.05 5");
        let b = run(&SignalConfig { frame_length: 777, ..base.clone() }, "harmonic 1 8 A 0.05 5");
        assert_eq!(a, b);
    }

    #[test]
    fn frequency_held_through_interruption() {
        let sig = SignalConfig { duration: 3.0, ..Default::default() };
        let out = run(&sig, "interruption 1 2 ABC 0.0");
        let f: Vec<_> = out.frequency().collect();
        assert!(!f[0].held && (f[0].frequency - 50.0).abs() < 1e-3);
        assert!(f[1].held);
        assert_eq!(f[1].frequency, f[0].frequency);
        assert!(!f[2].held);
    }

    #[test]
    fn out_of_band_frequency_is_held() {
        let rec = estimate_frequency(3200, &vec![0.0; 3200], 50.0, (40.0, 70.0)).unwrap();
        assert!(rec.held);
        let fast: Vec<f64> = (0..3200).map(|k| (std::f64::consts::TAU * 80.0 * k as f64 / 3200.0).sin()).collect();
        let rec = estimate_frequency(3200, &fast, 49.9, (40.0, 70.0)).unwrap();
        assert!(rec.held);
        assert_eq!(rec.frequency, 49.9);
    }

    #[test]
    fn window_length_is_enforced() {
        let short = vec![0.0; 639];
        let ok = vec![0.0; 640];
        assert!(compute_rms(0, [&short, &ok, &ok], [&ok, &ok, &ok]).is_err());
        assert!(compute_demand(&[1.0; 899]).is_err());
    }

    #[test]
    fn demand_examples() {
        assert_eq!(compute_demand(&[10.0; 900]).unwrap(), 10.0);
        let mut series = vec![10.0; 450];
        series.extend(vec![20.0; 450]);
        assert_eq!(compute_demand(&series).unwrap(), 15.0);
    }

    #[test]
    fn thd_undefined_during_interruption() {
        let sig = SignalConfig { duration: 6.0, ..Default::default() };
        let out = run(&sig, "interruption 3 6 ABC 0.0");
        let h: Vec<_> = out.harmonics().collect();
        assert!(h[0].thd_v.iter().all(|t| t.unwrap() < 1e-6));
        assert!(h[1].thd_v.iter().all(Option::is_none));
        assert_eq!(out.diagnostics.undefined_thd_values, 6);
    }
}

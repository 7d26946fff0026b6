//! Transfer-file encoding and the per-point directory writer.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{MeasurementPoint, ParameterType, PointMetadata, StoreError};
use crate::analyzer::{PqRecord, HARMONIC_ORDERS};
use crate::events::{EventRecord, EventType};
use crate::time::{StreamClock, Timestamp, NANOS_PER_SAMPLE};

pub const FOOTER_PREFIX: &str = "#last_sample=";
pub const UNDEFINED: &str = "undefined";
pub const POINT_METADATA: &str = "point.json";

const PHASES: [&str; 3] = ["a", "b", "c"];

fn per_phase(prefix: &str) -> impl Iterator<Item = String> + '_ {
    PHASES.iter().map(move |p| format!("{prefix}_{p}"))
}

/// CSV header of a parameter's transfer files.
pub fn columns(param: ParameterType) -> Vec<String> {
    match param {
        ParameterType::Rms => per_phase("v_rms").chain(per_phase("i_rms")).collect(),
        ParameterType::Power => ["p", "q", "s", "pf"].iter().flat_map(|q| per_phase(q)).collect(),
        ParameterType::Harmonics => {
            let mut c = vec!["fundamental_hz".to_string()];
            c.extend(per_phase("thd_v"));
            c.extend(per_phase("thd_i"));
            for quantity in ["v", "i"] {
                for p in PHASES {
                    c.extend((1..=HARMONIC_ORDERS).map(|h| format!("{quantity}_{p}_h{h:02}")));
                }
            }
            c
        }
        ParameterType::Frequency => vec!["frequency_hz".into(), "held".into()],
        ParameterType::Demand => per_phase("demand").collect(),
        ParameterType::FlickerPst => per_phase("pst").collect(),
        ParameterType::FlickerPlt => {
            let mut c: Vec<String> = per_phase("plt").collect();
            c.push("source_count".into());
            c
        }
        ParameterType::Event => ["event_id", "event_type", "start", "end", "size_in_samples", "raw_path"]
            .map(String::from)
            .to_vec(),
    }
}

/// 17 significant digits: parses back to the identical `f64`.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_string(), float)
}

pub fn parameter_of(record: &PqRecord) -> ParameterType {
    match record {
        PqRecord::Rms(_) => ParameterType::Rms,
        PqRecord::Frequency(_) => ParameterType::Frequency,
        PqRecord::Power(_) => ParameterType::Power,
        PqRecord::Harmonics(_) => ParameterType::Harmonics,
        PqRecord::Demand(_) => ParameterType::Demand,
        PqRecord::FlickerPst(_) => ParameterType::FlickerPst,
        PqRecord::FlickerPlt(_) => ParameterType::FlickerPlt,
    }
}

/// One CSV row (without timestamp) for `record`.
pub fn encode_record(record: &PqRecord) -> (ParameterType, Vec<String>) {
    let floats = |xs: &[f64]| xs.iter().copied().map(float).collect::<Vec<_>>();
    let row = match record {
        PqRecord::Rms(r) => floats(&[r.v_rms, r.i_rms].concat()),
        PqRecord::Power(r) => floats(&[r.active_p, r.reactive_q, r.apparent_s, r.power_factor].concat()),
        PqRecord::Harmonics(r) => {
            let mut row = vec![float(r.fundamental)];
            row.extend(r.thd_v.iter().chain(&r.thd_i).copied().map(opt_float));
            for set in r.v_harmonics.iter().chain(&r.i_harmonics) {
                row.extend(floats(set));
            }
            row
        }
        PqRecord::Frequency(r) => vec![float(r.frequency), u8::from(r.held).to_string()],
        PqRecord::Demand(r) => floats(&r.demand),
        PqRecord::FlickerPst(r) => r.pst.iter().copied().map(opt_float).collect(),
        PqRecord::FlickerPlt(r) => {
            let mut row: Vec<String> = r.plt.iter().copied().map(opt_float).collect();
            row.push(r.source_count.to_string());
            row
        }
    };
    (parameter_of(record), row)
}

fn encode_event(e: &EventRecord) -> Vec<String> {
    let raw = e
        .file_path
        .as_ref()
        .map(|_| EventRecord::relative_raw_path(e.event_type, e.event_id).to_string_lossy().replace('\\', "/"))
        .unwrap_or_default();
    vec![
        e.event_id.to_string(),
        e.event_type.as_str().to_string(),
        e.event_starting_time.to_iso8601(),
        e.event_ending_time.to_iso8601(),
        e.event_size_in_samples.to_string(),
        raw,
    ]
}

/// An event log row. The type stays textual so that rows with an unknown
/// type can be rejected individually at ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLine {
    pub event_id: u64,
    pub event_type: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub size_in_samples: u64,
    /// Relative to the measurement point directory.
    pub raw_path: Option<String>,
}

impl EventLine {
    pub fn kind(&self) -> Result<EventType, String> {
        self.event_type.parse()
    }
}

/// Decoded values of one transfer-file row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowValues {
    Rms {
        v: [f64; 3],
        i: [f64; 3],
    },
    Power {
        p: [f64; 3],
        q: [f64; 3],
        s: [f64; 3],
        pf: [f64; 3],
    },
    Harmonics {
        fundamental: f64,
        thd_v: [Option<f64>; 3],
        thd_i: [Option<f64>; 3],
        /// Va, Vb, Vc, Ia, Ib, Ic magnitudes, orders 1..=33.
        magnitudes: Box<[[f64; HARMONIC_ORDERS]; 6]>,
    },
    Frequency {
        frequency: f64,
        held: bool,
    },
    Demand([f64; 3]),
    Pst([Option<f64>; 3]),
    Plt {
        plt: [Option<f64>; 3],
        source_count: u32,
    },
    Event(EventLine),
}

fn parse_float(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("bad number '{s}'"))
}

fn parse_opt(s: &str) -> Result<Option<f64>, String> {
    if s.trim() == UNDEFINED {
        Ok(None)
    } else {
        parse_float(s).map(Some)
    }
}

fn take<const N: usize, T>(fields: &[&str], parse: impl Fn(&str) -> Result<T, String>) -> Result<[T; N], String>
where
    T: Copy + Default,
{
    let mut out = [T::default(); N];
    for (slot, f) in out.iter_mut().zip(fields) {
        *slot = parse(f)?;
    }
    Ok(out)
}

/// Decodes one row of `param`; `fields` must match [`columns`] in length.
pub fn decode_row(param: ParameterType, fields: &[&str]) -> Result<RowValues, String> {
    let expected = columns(param).len();
    if fields.len() != expected {
        return Err(format!("expected {expected} fields, found {}", fields.len()));
    }
    let f3 = |k: usize| take::<3, f64>(&fields[k..k + 3], parse_float);
    let o3 = |k: usize| take::<3, Option<f64>>(&fields[k..k + 3], parse_opt);
    Ok(match param {
        ParameterType::Rms => RowValues::Rms { v: f3(0)?, i: f3(3)? },
        ParameterType::Power => RowValues::Power {
            p: f3(0)?,
            q: f3(3)?,
            s: f3(6)?,
            pf: f3(9)?,
        },
        ParameterType::Harmonics => {
            let mut magnitudes = Box::new([[0.0; HARMONIC_ORDERS]; 6]);
            for (c, set) in magnitudes.iter_mut().enumerate() {
                let from = 7 + c * HARMONIC_ORDERS;
                *set = take::<HARMONIC_ORDERS, f64>(&fields[from..from + HARMONIC_ORDERS], parse_float)?;
            }
            RowValues::Harmonics {
                fundamental: parse_float(fields[0])?,
                thd_v: o3(1)?,
                thd_i: o3(4)?,
                magnitudes,
            }
        }
        ParameterType::Frequency => RowValues::Frequency {
            frequency: parse_float(fields[0])?,
            held: match fields[1].trim() {
                "0" => false,
                "1" => true,
                other => return Err(format!("bad held flag '{other}'")),
            },
        },
        ParameterType::Demand => RowValues::Demand(f3(0)?),
        ParameterType::FlickerPst => RowValues::Pst(o3(0)?),
        ParameterType::FlickerPlt => RowValues::Plt {
            plt: o3(0)?,
            source_count: fields[3].trim().parse().map_err(|_| format!("bad source count '{}'", fields[3]))?,
        },
        ParameterType::Event => RowValues::Event(EventLine {
            event_id: fields[0].trim().parse().map_err(|_| format!("bad event id '{}'", fields[0]))?,
            event_type: fields[1].trim().to_string(),
            start: Timestamp::parse_iso8601(fields[2])?,
            end: Timestamp::parse_iso8601(fields[3])?,
            size_in_samples: fields[4].trim().parse().map_err(|_| format!("bad event size '{}'", fields[4]))?,
            raw_path: Some(fields[5].trim()).filter(|p| !p.is_empty()).map(String::from),
        }),
    })
}

/// A fully decoded transfer file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFile {
    pub parameter: ParameterType,
    pub rows: Vec<RowValues>,
    /// Time of the last row.
    pub measurement_date: Timestamp,
}

/// Parses the bytes of a transfer file of `param`.
pub fn parse_transfer_file(param: ParameterType, bytes: &[u8]) -> Result<ParsedFile, String> {
    let text = std::str::from_utf8(bytes).map_err(|_| "not UTF-8".to_string())?;
    let body = text.trim_end();
    let (data, footer) = body.rsplit_once('\n').ok_or("missing footer")?;
    let stamp = footer
        .trim()
        .strip_prefix(FOOTER_PREFIX)
        .ok_or_else(|| format!("last line is not a '{FOOTER_PREFIX}' footer"))?;
    let measurement_date = Timestamp::parse_iso8601(stamp)?;

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(data.as_bytes());
    let header = reader.headers().map_err(|e| format!("header: {e}"))?.clone();
    let expected = columns(param);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(format!("header does not match the {param} column set"));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("row {k}: {e}"))?;
        let fields: Vec<&str> = rec.iter().collect();
        rows.push(decode_row(param, &fields).map_err(|e| format!("row {k}: {e}"))?);
    }
    Ok(ParsedFile {
        parameter: param,
        rows,
        measurement_date,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WriterOptions {
    /// Overrides [`ParameterType::rows_per_file`] for every parameter.
    pub rows_per_file: Option<usize>,
}

/// Files and rows written per parameter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WriteSummary {
    pub point_dir: PathBuf,
    pub files: BTreeMap<ParameterType, Vec<PathBuf>>,
    pub rows: BTreeMap<ParameterType, u64>,
}

impl WriteSummary {
    pub fn rows(&self, param: ParameterType) -> u64 {
        self.rows.get(&param).copied().unwrap_or(0)
    }
}

#[derive(Debug, Default)]
struct Pending {
    rows: Vec<Vec<String>>,
    last_sample: Option<u64>,
    last_time: Option<Timestamp>,
    next_seq: u32,
}

/// Streams records of one measurement point into its directory.
///
/// Each parameter's rows are buffered and written as a complete file once
/// the file is full, at a gap in the record sequence, or at
/// [`finish`](Self::finish). Files appear atomically (written under a
/// `.part` name and renamed).
#[derive(Debug)]
pub struct TransferWriter {
    point_dir: PathBuf,
    clock: StreamClock,
    options: WriterOptions,
    pending: BTreeMap<ParameterType, Pending>,
    summary: WriteSummary,
}

impl TransferWriter {
    /// Checks that `out_root` is writable, then lays out the point
    /// directory and its metadata. Refuses a point directory that already
    /// holds transfer files.
    pub fn create(
        out_root: &Path,
        point: &MeasurementPoint,
        stream_start: Timestamp,
        options: WriterOptions,
    ) -> Result<Self, StoreError> {
        point.validate()?;
        let not_writable = |source| StoreError::NotWritable {
            path: out_root.to_path_buf(),
            source,
        };
        fs::create_dir_all(out_root).map_err(not_writable)?;
        let probe = out_root.join(format!(".pqstream_probe_{}", std::process::id()));
        fs::write(&probe, b"").map_err(not_writable)?;
        fs::remove_file(&probe).map_err(not_writable)?;

        let point_dir = out_root.join(&point.id);
        for p in ParameterType::ALL {
            let dir = point_dir.join(p.dir_name());
            if dir.is_dir() && fs::read_dir(&dir)?.next().is_some() {
                return Err(StoreError::Invalid(format!(
                    "{} already holds transfer files; write to a fresh output root",
                    dir.display()
                )));
            }
            fs::create_dir_all(&dir)?;
        }
        for t in EventType::ALL {
            fs::create_dir_all(point_dir.join(t.dir_name()))?;
        }
        let meta = serde_json::to_vec_pretty(&PointMetadata::new(point.clone(), stream_start))?;
        write_atomic(&point_dir.join(POINT_METADATA), &meta)?;

        Ok(Self {
            summary: WriteSummary {
                point_dir: point_dir.clone(),
                ..Default::default()
            },
            point_dir,
            clock: StreamClock::new(stream_start),
            options,
            pending: BTreeMap::new(),
        })
    }

    pub fn point_dir(&self) -> &Path {
        &self.point_dir
    }

    pub fn clock(&self) -> &StreamClock {
        &self.clock
    }

    fn limit(&self, param: ParameterType) -> usize {
        self.options.rows_per_file.unwrap_or_else(|| param.rows_per_file()).max(1)
    }

    pub fn push_record(&mut self, record: &PqRecord) -> Result<(), StoreError> {
        let (param, row) = encode_record(record);
        let end = record.end_sample();
        let step = param.interval_nanos().expect("records have fixed intervals") / NANOS_PER_SAMPLE;
        let contiguous = self
            .pending
            .get(&param)
            .and_then(|p| p.last_sample)
            .is_none_or(|last| last + step as u64 == end);
        let buffered = self.pending.get(&param).is_some_and(|p| !p.rows.is_empty());
        if buffered && !contiguous {
            self.flush(param)?;
        }
        let time = self.clock.at_sample(end);
        let p = self.pending.entry(param).or_default();
        p.rows.push(row);
        p.last_sample = Some(end);
        p.last_time = Some(time);
        if p.rows.len() >= self.limit(param) {
            self.flush(param)?;
        }
        Ok(())
    }

    pub fn push_event(&mut self, event: &EventRecord) -> Result<(), StoreError> {
        let param = ParameterType::Event;
        let p = self.pending.entry(param).or_default();
        p.rows.push(encode_event(event));
        p.last_time = Some(p.last_time.map_or(event.event_ending_time, |t| t.max(event.event_ending_time)));
        if p.rows.len() >= self.limit(param) {
            self.flush(param)?;
        }
        Ok(())
    }

    fn flush(&mut self, param: ParameterType) -> Result<(), StoreError> {
        let Some(p) = self.pending.get_mut(&param) else {
            return Ok(());
        };
        if p.rows.is_empty() {
            return Ok(());
        }
        p.next_seq += 1;
        let path = self
            .point_dir
            .join(param.dir_name())
            .join(format!("{}_{:04}.csv", param.as_str(), p.next_seq));
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(columns(param)).map_err(csv_io)?;
        for row in &p.rows {
            w.write_record(row).map_err(csv_io)?;
        }
        let mut bytes = w.into_inner().map_err(|e| StoreError::Invalid(e.to_string()))?;
        let last = p.last_time.expect("non-empty file has a last row");
        writeln!(bytes, "{FOOTER_PREFIX}{}", last.to_iso8601())?;
        write_atomic(&path, &bytes)?;

        *self.summary.rows.entry(param).or_default() += p.rows.len() as u64;
        self.summary.files.entry(param).or_default().push(path);
        p.rows.clear();
        p.last_sample = None;
        p.last_time = None;
        Ok(())
    }

    /// Writes out everything still buffered.
    pub fn finish(mut self) -> Result<WriteSummary, StoreError> {
        let params: Vec<_> = self.pending.keys().copied().collect();
        for p in params {
            self.flush(p)?;
        }
        Ok(self.summary)
    }
}

fn csv_io(e: csv::Error) -> StoreError {
    StoreError::Io(std::io::Error::other(e))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut part = path.as_os_str().to_owned();
    part.push(".part");
    let part = PathBuf::from(part);
    let mut f = fs::File::create(&part)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&part, path)?;
    Ok(())
}

/// Writes a finished record set (and already-finalized events) for one
/// point under `out_root`.
pub fn write_transfer_files(
    records: &[PqRecord],
    events: &[EventRecord],
    point: &MeasurementPoint,
    stream_start: Timestamp,
    out_root: &Path,
) -> Result<WriteSummary, StoreError> {
    let mut w = TransferWriter::create(out_root, point, stream_start, WriterOptions::default())?;
    for r in records {
        w.push_record(r)?;
    }
    for e in events {
        w.push_event(e)?;
    }
    w.finish()
}

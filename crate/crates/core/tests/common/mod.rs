#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};

use pqstream::analyzer::PqRecord;
use pqstream::monitor::{analyze_to_directory, MonitorConfig, MonitorError, RunOptions, RunSummary};
use pqstream::siggen::{generate_stream, parse_script, SignalConfig};
use pqstream::store::{LoadType, MeasurementPoint, PointKind};
use pqstream::time::Timestamp;

pub fn point(id: &str, load_type: LoadType) -> MeasurementPoint {
    MeasurementPoint {
        id: id.into(),
        name: format!("{id} busbar"),
        point_kind: PointKind::Busbar,
        load_type,
        city_name: "Ankara".into(),
        region_name: "Central".into(),
        voltage_level: 34.5,
    }
}

pub fn stream_start() -> Timestamp {
    Timestamp::parse_iso8601("2009-01-01T00:00:00Z").unwrap()
}

/// Generates `seconds` of stream with `script` and analyzes it into
/// `out_root/<point.id>`.
pub fn run_stream(
    seconds: f64,
    script: &str,
    point: &MeasurementPoint,
    out_root: &Path,
    keep_records: bool,
) -> RunSummary {
    let sig = SignalConfig {
        duration: seconds,
        frame_length: 3200,
        ..Default::default()
    };
    let frames = generate_stream(&sig, &parse_script(script).unwrap()).unwrap();
    analyze_to_directory(
        frames.map(Ok::<_, MonitorError>),
        MonitorConfig::nominal(50.0, 230.0, 10.0),
        point,
        stream_start(),
        out_root,
        RunOptions {
            keep_records,
            ..Default::default()
        },
    )
    .unwrap()
}

/// Values of a record in transfer-file column order; `None` is undefined.
pub fn record_values(r: &PqRecord) -> Vec<Option<f64>> {
    let some = |xs: &[f64]| xs.iter().map(|x| Some(*x)).collect::<Vec<_>>();
    match r {
        PqRecord::Rms(r) => [some(&r.v_rms), some(&r.i_rms)].concat(),
        PqRecord::Frequency(r) => vec![Some(r.frequency), Some(f64::from(u8::from(r.held)))],
        PqRecord::Power(r) => [r.active_p, r.reactive_q, r.apparent_s, r.power_factor]
            .iter()
            .flat_map(|x| some(x))
            .collect(),
        PqRecord::Harmonics(r) => {
            let mut v = vec![Some(r.fundamental)];
            v.extend(r.thd_v.iter().chain(&r.thd_i).copied());
            for set in r.v_harmonics.iter().chain(&r.i_harmonics) {
                v.extend(some(set));
            }
            v
        }
        PqRecord::Demand(r) => some(&r.demand),
        PqRecord::FlickerPst(r) => r.pst.to_vec(),
        PqRecord::FlickerPlt(r) => {
            let mut v = r.plt.to_vec();
            v.push(Some(f64::from(r.source_count)));
            v
        }
    }
}

/// Fresh, empty scratch directory under the cargo target dir that outlives
/// the test (for state shared through a `OnceLock`).
pub fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Prints one verdict line straight to stdout (bypassing the test harness
/// capture) and fails the test on FAIL.
pub fn verdict(criterion: u32, what: &str, ok: bool, detail: impl AsRef<str>) {
    let line = format!(
        "criterion {criterion} {}: {what} ({})\n",
        if ok { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "{}", line.trim_end());
}

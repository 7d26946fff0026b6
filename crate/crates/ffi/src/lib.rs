//! C ABI over the `pqstream` engine.
//!
//! Every function returns a [`PqsStatus`]; on failure a message is
//! available from [`pqs_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::OnceLock;

use pqstream::analyzer::{compute_plt, thd_with_floor, PqRecord, HARMONIC_ORDERS};
use pqstream::events::{ClosedEvent, EventType};
use pqstream::monitor::{Monitor, MonitorConfig};
use pqstream::store::{columns, compute_traffic_budget, ingest_directory, BudgetConfig, ParameterType};

/// Most values any record carries (a harmonics record).
pub const PQS_RECORD_MAX_VALUES: usize = 205;

const _: () = assert!(PQS_RECORD_MAX_VALUES == 1 + 6 + 6 * HARMONIC_ORDERS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Analysis = 3,
    Io = 4,
    Database = 5,
    /// Nothing to pop.
    Empty = 6,
    /// The call was rejected because the handle was already finished.
    Finished = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqsRecordKind {
    Rms = 0,
    Frequency = 1,
    Power = 2,
    Harmonics = 3,
    Demand = 4,
    FlickerPst = 5,
    FlickerPlt = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqsEventType {
    Sag = 0,
    Swell = 1,
    Interruption = 2,
    Unbalance = 3,
}

/// One record. `values[0..value_count]` follow the transfer-file column
/// order of the record's parameter (see [`pqs_record_column_name`]);
/// undefined values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PqsRecord {
    pub kind: PqsRecordKind,
    /// Sample index one past the record's window.
    pub end_sample: u64,
    pub value_count: usize,
    pub values: [f64; PQS_RECORD_MAX_VALUES],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PqsEvent {
    pub event_id: u64,
    pub event_type: PqsEventType,
    pub start_sample: u64,
    pub end_sample: u64,
    pub size_in_samples: u64,
    /// First sample of the raw capture and its length per channel.
    pub capture_start: u64,
    pub capture_samples: u64,
    /// Non-zero if the stream ended while the event was active.
    pub truncated: u8,
}

/// Opaque monitor handle.
pub struct PqsMonitor {
    monitor: Option<Monitor>,
    records: VecDeque<PqRecord>,
    events: VecDeque<ClosedEvent>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: PqsStatus, msg: impl Into<String>) -> PqsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PqsStatus) -> PqsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(PqsStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pqs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a monitor with default thresholds around the nominal values.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pqs_monitor_new(
    nominal_frequency: f64,
    nominal_voltage_rms: f64,
    nominal_current_rms: f64,
    out: *mut *mut PqsMonitor,
) -> PqsStatus {
    guard(|| {
        if out.is_null() {
            return fail(PqsStatus::NullPointer, "out is NULL");
        }
        let cfg = MonitorConfig::nominal(nominal_frequency, nominal_voltage_rms, nominal_current_rms);
        match Monitor::new(cfg) {
            Ok(m) => {
                let handle = Box::new(PqsMonitor {
                    monitor: Some(m),
                    records: VecDeque::new(),
                    events: VecDeque::new(),
                });
                unsafe { *out = Box::into_raw(handle) };
                PqsStatus::Ok
            }
            Err(e) => fail(PqsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Releases a monitor; NULL is ignored.
///
/// # Safety
/// `monitor` must come from [`pqs_monitor_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pqs_monitor_free(monitor: *mut PqsMonitor) {
    if !monitor.is_null() {
        drop(unsafe { Box::from_raw(monitor) });
    }
}

/// Index of the next sample the monitor expects.
///
/// # Safety
/// `monitor` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pqs_monitor_next_sample(monitor: *const PqsMonitor) -> u64 {
    unsafe { monitor.as_ref() }
        .and_then(|m| m.monitor.as_ref())
        .map_or(0, Monitor::next_sample)
}

/// Feeds `n` contiguous samples of each of the six channels.
///
/// # Safety
/// `monitor` must be a live handle; each channel pointer must address `n`
/// readable doubles.
#[no_mangle]
pub unsafe extern "C" fn pqs_monitor_push(
    monitor: *mut PqsMonitor,
    va: *const f64,
    vb: *const f64,
    vc: *const f64,
    ia: *const f64,
    ib: *const f64,
    ic: *const f64,
    n: usize,
) -> PqsStatus {
    guard(|| {
        let Some(h) = (unsafe { monitor.as_mut() }) else {
            return fail(PqsStatus::NullPointer, "monitor is NULL");
        };
        let chans = [va, vb, vc, ia, ib, ic];
        if n > 0 && chans.iter().any(|p| p.is_null()) {
            return fail(PqsStatus::NullPointer, "channel pointer is NULL");
        }
        let Some(m) = h.monitor.as_mut() else {
            return fail(PqsStatus::Finished, "monitor already finished");
        };
        let s: [&[f64]; 6] = chans.map(|p| if n == 0 { &[][..] } else { unsafe { std::slice::from_raw_parts(p, n) } });
        let start = m.next_sample();
        match m.push_samples(start, [s[0], s[1], s[2]], [s[3], s[4], s[5]]) {
            Ok(step) => {
                h.records.extend(step.records);
                h.events.extend(step.closed);
                PqsStatus::Ok
            }
            Err(e) => fail(PqsStatus::Analysis, e.to_string()),
        }
    })
}

/// Ends the stream: still-active events are closed and become poppable.
/// Further pushes fail with `FINISHED`.
///
/// # Safety
/// `monitor` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pqs_monitor_finish(monitor: *mut PqsMonitor) -> PqsStatus {
    guard(|| {
        let Some(h) = (unsafe { monitor.as_mut() }) else {
            return fail(PqsStatus::NullPointer, "monitor is NULL");
        };
        let Some(m) = h.monitor.take() else {
            return fail(PqsStatus::Finished, "monitor already finished");
        };
        h.events.extend(m.finish().0);
        PqsStatus::Ok
    })
}

fn record_values(r: &PqRecord) -> (PqsRecordKind, Vec<f64>) {
    let opt = |x: &Option<f64>| x.unwrap_or(f64::NAN);
    match r {
        PqRecord::Rms(r) => (PqsRecordKind::Rms, [r.v_rms, r.i_rms].concat()),
        PqRecord::Frequency(r) => (PqsRecordKind::Frequency, vec![r.frequency, f64::from(u8::from(r.held))]),
        PqRecord::Power(r) => (
            PqsRecordKind::Power,
            [r.active_p, r.reactive_q, r.apparent_s, r.power_factor].concat(),
        ),
        PqRecord::Harmonics(r) => {
            let mut v = vec![r.fundamental];
            v.extend(r.thd_v.iter().chain(&r.thd_i).map(opt));
            for set in r.v_harmonics.iter().chain(&r.i_harmonics) {
                v.extend_from_slice(set);
            }
            (PqsRecordKind::Harmonics, v)
        }
        PqRecord::Demand(r) => (PqsRecordKind::Demand, r.demand.to_vec()),
        PqRecord::FlickerPst(r) => (PqsRecordKind::FlickerPst, r.pst.iter().map(opt).collect()),
        PqRecord::FlickerPlt(r) => {
            let mut v: Vec<f64> = r.plt.iter().map(opt).collect();
            v.push(f64::from(r.source_count));
            (PqsRecordKind::FlickerPlt, v)
        }
    }
}

/// Records waiting to be popped.
///
/// # Safety
/// `monitor` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pqs_monitor_pending_records(monitor: *const PqsMonitor) -> usize {
    unsafe { monitor.as_ref() }.map_or(0, |h| h.records.len())
}

/// Pops the oldest record into `out`; `EMPTY` when none is waiting.
///
/// # Safety
/// `monitor` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pqs_monitor_pop_record(monitor: *mut PqsMonitor, out: *mut PqsRecord) -> PqsStatus {
    guard(|| {
        let (Some(h), false) = ((unsafe { monitor.as_mut() }), out.is_null()) else {
            return fail(PqsStatus::NullPointer, "monitor or out is NULL");
        };
        let Some(r) = h.records.pop_front() else {
            return PqsStatus::Empty;
        };
        let (kind, v) = record_values(&r);
        let mut rec = PqsRecord {
            kind,
            end_sample: r.end_sample(),
            value_count: v.len(),
            values: [0.0; PQS_RECORD_MAX_VALUES],
        };
        rec.values[..v.len()].copy_from_slice(&v);
        unsafe { out.write(rec) };
        PqsStatus::Ok
    })
}

/// Pops the oldest closed event into `out`; `EMPTY` when none is waiting.
///
/// # Safety
/// `monitor` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pqs_monitor_pop_event(monitor: *mut PqsMonitor, out: *mut PqsEvent) -> PqsStatus {
    guard(|| {
        let (Some(h), false) = ((unsafe { monitor.as_mut() }), out.is_null()) else {
            return fail(PqsStatus::NullPointer, "monitor or out is NULL");
        };
        let Some(e) = h.events.pop_front() else {
            return PqsStatus::Empty;
        };
        let event_type = match e.event_type {
            EventType::Sag => PqsEventType::Sag,
            EventType::Swell => PqsEventType::Swell,
            EventType::Interruption => PqsEventType::Interruption,
            EventType::Unbalance => PqsEventType::Unbalance,
        };
        unsafe {
            out.write(PqsEvent {
                event_id: e.event_id,
                event_type,
                start_sample: e.start_sample,
                end_sample: e.end_sample,
                size_in_samples: e.end_sample - e.start_sample,
                capture_start: e.capture_start,
                capture_samples: e.capture_len() as u64,
                truncated: u8::from(e.truncated),
            })
        };
        PqsStatus::Ok
    })
}

fn kind_param(kind: PqsRecordKind) -> ParameterType {
    match kind {
        PqsRecordKind::Rms => ParameterType::Rms,
        PqsRecordKind::Frequency => ParameterType::Frequency,
        PqsRecordKind::Power => ParameterType::Power,
        PqsRecordKind::Harmonics => ParameterType::Harmonics,
        PqsRecordKind::Demand => ParameterType::Demand,
        PqsRecordKind::FlickerPst => ParameterType::FlickerPst,
        PqsRecordKind::FlickerPlt => ParameterType::FlickerPlt,
    }
}

/// Name of value `index` of records of `kind`, or NULL if out of range. The
/// string is static.
#[no_mangle]
pub extern "C" fn pqs_record_column_name(kind: PqsRecordKind, index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<Vec<CString>>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        (0..7)
            .map(|k| {
                let kind = [
                    PqsRecordKind::Rms,
                    PqsRecordKind::Frequency,
                    PqsRecordKind::Power,
                    PqsRecordKind::Harmonics,
                    PqsRecordKind::Demand,
                    PqsRecordKind::FlickerPst,
                    PqsRecordKind::FlickerPlt,
                ][k];
                columns(kind_param(kind))
                    .into_iter()
                    .map(|c| CString::new(c).expect("column names have no NUL"))
                    .collect()
            })
            .collect()
    });
    names[kind as usize].get(index).map_or(ptr::null(), |s| s.as_ptr())
}

/// THD in percent from harmonic magnitudes (`magnitudes[0]` is the
/// fundamental). Writes NaN when the fundamental is at or below `floor`.
///
/// # Safety
/// `magnitudes` must address `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pqs_compute_thd(magnitudes: *const f64, n: usize, floor: f64, out: *mut f64) -> PqsStatus {
    guard(|| {
        if magnitudes.is_null() || out.is_null() {
            return fail(PqsStatus::NullPointer, "magnitudes or out is NULL");
        }
        if n == 0 {
            return fail(PqsStatus::InvalidArgument, "no magnitudes");
        }
        let m = unsafe { std::slice::from_raw_parts(magnitudes, n) };
        unsafe { *out = thd_with_floor(m, floor).unwrap_or(f64::NAN) };
        PqsStatus::Ok
    })
}

/// Long-term flicker from exactly 12 short-term values.
///
/// # Safety
/// `pst` must address `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pqs_compute_plt(pst: *const f64, n: usize, out: *mut f64) -> PqsStatus {
    guard(|| {
        if pst.is_null() || out.is_null() {
            return fail(PqsStatus::NullPointer, "pst or out is NULL");
        }
        match compute_plt(unsafe { std::slice::from_raw_parts(pst, n) }) {
            Ok(v) => {
                unsafe { *out = v };
                PqsStatus::Ok
            }
            Err(e) => fail(PqsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Total outgoing data rate (bits/s) of one measurement point with the
/// default precision and cadences.
///
/// # Safety
/// Both pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pqs_traffic_budget(with_events: *mut f64, without_events: *mut f64) -> PqsStatus {
    guard(|| {
        if with_events.is_null() || without_events.is_null() {
            return fail(PqsStatus::NullPointer, "output pointer is NULL");
        }
        let b = compute_traffic_budget(&BudgetConfig::default());
        unsafe {
            *with_events = b.total_with_events;
            *without_events = b.total_without_events;
        }
        PqsStatus::Ok
    })
}

fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, PqsStatus> {
    if p.is_null() {
        return Err(fail(PqsStatus::NullPointer, format!("{what} is NULL")));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(PqsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Ingests the transfer-file tree at `root` into the database file `db`.
/// `rows_inserted` (may be NULL) receives the number of new rows.
///
/// # Safety
/// `root` and `db` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn pqs_ingest_directory(
    root: *const c_char,
    db: *const c_char,
    rows_inserted: *mut u64,
) -> PqsStatus {
    guard(|| {
        let (root, db) = match (path_arg(root, "root"), path_arg(db, "db")) {
            (Ok(r), Ok(d)) => (r, d),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match ingest_directory(&root, &db) {
            Ok(report) => {
                if let Some(out) = unsafe { rows_inserted.as_mut() } {
                    *out = report.total_rows();
                }
                PqsStatus::Ok
            }
            Err(pqstream::store::StoreError::Db(e)) => fail(PqsStatus::Database, e.to_string()),
            Err(e) => fail(PqsStatus::Io, e.to_string()),
        }
    })
}

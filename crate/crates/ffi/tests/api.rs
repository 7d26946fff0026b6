use std::ffi::{CStr, CString};
use std::ptr;

use pqstream::siggen::{generate_frames, parse_script, SignalConfig};
use pqstream_ffi::*;

fn last_error() -> String {
    let p = pqs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_monitor() -> *mut PqsMonitor {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pqs_monitor_new(50.0, 230.0, 10.0, &mut m) }, PqsStatus::Ok);
    m
}

fn drain(m: *mut PqsMonitor) -> (Vec<PqsRecord>, Vec<PqsEvent>) {
    let mut recs = Vec::new();
    let mut rec = std::mem::MaybeUninit::<PqsRecord>::uninit();
    while unsafe { pqs_monitor_pop_record(m, rec.as_mut_ptr()) } == PqsStatus::Ok {
        recs.push(unsafe { rec.assume_init() });
    }
    let mut evs = Vec::new();
    let mut ev = std::mem::MaybeUninit::<PqsEvent>::uninit();
    while unsafe { pqs_monitor_pop_event(m, ev.as_mut_ptr()) } == PqsStatus::Ok {
        evs.push(unsafe { ev.assume_init() });
    }
    (recs, evs)
}

#[test]
fn monitor_roundtrip_finds_sag() {
    let sig = SignalConfig {
        duration: 6.0,
        frame_length: 777,
        ..Default::default()
    };
    let frames = generate_frames(&sig, &parse_script("sag 2.0 3.0 A 0.8\n").unwrap()).unwrap();
    let m = new_monitor();
    for f in &frames {
        let st = unsafe {
            pqs_monitor_push(
                m,
                f.voltage[0].as_ptr(),
                f.voltage[1].as_ptr(),
                f.voltage[2].as_ptr(),
                f.current[0].as_ptr(),
                f.current[1].as_ptr(),
                f.current[2].as_ptr(),
                f.voltage[0].len(),
            )
        };
        assert_eq!(st, PqsStatus::Ok);
    }
    assert_eq!(unsafe { pqs_monitor_next_sample(m) }, 6 * 3200);
    assert_eq!(unsafe { pqs_monitor_finish(m) }, PqsStatus::Ok);
    let (recs, evs) = drain(m);

    let rms: Vec<_> = recs.iter().filter(|r| r.kind == PqsRecordKind::Rms).collect();
    assert_eq!(rms.len(), 30);
    assert_eq!(rms[0].value_count, 6);
    assert_eq!(rms[0].end_sample, 640);
    assert!((rms[0].values[0] - 230.0).abs() < 0.5);
    let h = recs.iter().find(|r| r.kind == PqsRecordKind::Harmonics).unwrap();
    assert_eq!(h.value_count, PQS_RECORD_MAX_VALUES);

    assert_eq!(evs.len(), 1);
    let e = evs[0];
    assert_eq!(e.event_type, PqsEventType::Sag);
    assert_eq!((e.start_sample, e.end_sample, e.size_in_samples), (6400, 9600, 3200));
    assert_eq!(e.truncated, 0);
    assert!(e.capture_samples >= e.size_in_samples);

    let z = [0.0f64; 4];
    let st = unsafe { pqs_monitor_push(m, z.as_ptr(), z.as_ptr(), z.as_ptr(), z.as_ptr(), z.as_ptr(), z.as_ptr(), 4) };
    assert_eq!(st, PqsStatus::Finished);
    assert!(last_error().contains("finished"));
    unsafe { pqs_monitor_free(m) };
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(unsafe { pqs_monitor_new(50.0, 230.0, 10.0, ptr::null_mut()) }, PqsStatus::NullPointer);
    let m = new_monitor();
    let z = [0.0f64; 1];
    let st = unsafe { pqs_monitor_push(m, z.as_ptr(), ptr::null(), z.as_ptr(), z.as_ptr(), z.as_ptr(), z.as_ptr(), 1) };
    assert_eq!(st, PqsStatus::NullPointer);
    assert_eq!(unsafe { pqs_monitor_pop_record(m, ptr::null_mut()) }, PqsStatus::NullPointer);
    let mut rec = std::mem::MaybeUninit::<PqsRecord>::uninit();
    assert_eq!(unsafe { pqs_monitor_pop_record(m, rec.as_mut_ptr()) }, PqsStatus::Empty);
    unsafe { pqs_monitor_free(m) };
    unsafe { pqs_monitor_free(ptr::null_mut()) };
}

#[test]
fn bad_nominal_is_invalid() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pqs_monitor_new(50.0, -1.0, 10.0, &mut m) }, PqsStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn column_names_match_counts() {
    let name = |k, i| {
        let p = pqs_record_column_name(k, i);
        (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned())
    };
    assert_eq!(name(PqsRecordKind::Rms, 0).as_deref(), Some("v_rms_a"));
    assert!(name(PqsRecordKind::Rms, 6).is_none());
    assert!(name(PqsRecordKind::Harmonics, PQS_RECORD_MAX_VALUES - 1).is_some());
    assert!(name(PqsRecordKind::Harmonics, PQS_RECORD_MAX_VALUES).is_none());
}

#[test]
fn thd_and_plt() {
    let mut out = 0.0;
    let mags = [100.0, 3.0, 4.0];
    assert_eq!(unsafe { pqs_compute_thd(mags.as_ptr(), 3, 1.0, &mut out) }, PqsStatus::Ok);
    assert!((out - 5.0).abs() < 1e-12);
    let low = [0.5, 3.0];
    assert_eq!(unsafe { pqs_compute_thd(low.as_ptr(), 2, 1.0, &mut out) }, PqsStatus::Ok);
    assert!(out.is_nan());

    let pst = [0.7; 12];
    assert_eq!(unsafe { pqs_compute_plt(pst.as_ptr(), 12, &mut out) }, PqsStatus::Ok);
    assert!((out - 0.7).abs() < 1e-12);
    assert_eq!(unsafe { pqs_compute_plt(pst.as_ptr(), 11, &mut out) }, PqsStatus::InvalidArgument);
}

#[test]
fn budget_totals() {
    let (mut with, mut without) = (0.0, 0.0);
    assert_eq!(unsafe { pqs_traffic_budget(&mut with, &mut without) }, PqsStatus::Ok);
    assert!((without - 6990.533).abs() < 5e-4);
    assert!((with - 1_235_790.533).abs() < 5e-4);
}

#[test]
fn ingest_empty_tree() {
    let dir = tempfile::tempdir().unwrap();
    let root = CString::new(dir.path().join("tree").to_str().unwrap()).unwrap();
    std::fs::create_dir(dir.path().join("tree")).unwrap();
    let db = CString::new(dir.path().join("x.db").to_str().unwrap()).unwrap();
    let mut rows = 7u64;
    assert_eq!(unsafe { pqs_ingest_directory(root.as_ptr(), db.as_ptr(), &mut rows) }, PqsStatus::Ok);
    assert_eq!(rows, 0);
    assert_eq!(unsafe { pqs_ingest_directory(ptr::null(), db.as_ptr(), ptr::null_mut()) }, PqsStatus::NullPointer);
}

mod common;

use std::fs;
use std::path::Path;

use common::{point, run_stream, stream_start};
use pqstream::query::{event_detail, extract_raw_csv, timeseries, Cell};
use pqstream::store::{event_stat, LoadType, ParameterType, Store};
use pqstream::time::Timestamp;
use sha2::{Digest, Sha256};

fn tree(root: &Path, id: &str, script: &str) {
    run_stream(10.0, script, &point(id, LoadType::UrbanOnly), root, false);
}

fn count(store: &Store, table: &str) -> i64 {
    store
        .conn()
        .query_row(&format!("SELECT count(*) FROM {table}"), [], |r| r.get(0))
        .unwrap()
}

#[test]
fn identical_streams_at_two_points_are_both_stored() {
    let dir = tempfile::tempdir().unwrap();
    tree(dir.path(), "TWIN-A", "sag 2.0 3.0 A 0.8\n");
    tree(dir.path(), "TWIN-B", "sag 2.0 3.0 A 0.8\n");
    let mut store = Store::open_in_memory().unwrap();
    let r = store.ingest_directory(dir.path()).unwrap();
    assert!(r.duplicates.is_empty(), "{:?}", r.duplicates);
    for id in ["TWIN-A", "TWIN-B"] {
        assert_eq!(timeseries(&store, id, ParameterType::Power, None, None).unwrap().rows.len(), 10);
        assert_eq!(event_stat(store.conn(), id).unwrap().unwrap().sag_count, 1);
    }
}

#[test]
fn bad_files_and_rows_are_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    tree(dir.path(), "P1", "sag 2.0 3.0 A 0.8\nswell 5.0 6.0 ABC 1.2\n");
    let p = dir.path().join("P1");

    // truncated data file
    let rms = p.join("RMS/rms_0001.csv");
    let text = fs::read_to_string(&rms).unwrap();
    fs::write(&rms, &text[..text.len() / 2]).unwrap();
    // a future footer
    let freq = p.join("Frequency/frequency_0001.csv");
    let text = fs::read_to_string(&freq).unwrap();
    fs::write(&freq, text.replace("#last_sample=2009-01-01T00:00:10Z", "#last_sample=2999-01-01T00:00:10Z")).unwrap();
    // an unknown event type and a lost raw capture
    let ev = p.join("Event/event_0001.csv");
    let text = fs::read_to_string(&ev).unwrap();
    fs::write(&ev, text.replacen(",swell,", ",flash,", 1)).unwrap();
    fs::remove_file(p.join("Sag/raw_000001.pqz")).unwrap();

    let mut store = Store::open_in_memory().unwrap();
    let r = store.ingest_directory(dir.path()).unwrap();
    let skipped: Vec<String> = r.skipped.iter().map(|(f, _)| f.file_name().unwrap().to_string_lossy().into()).collect();
    assert!(skipped.contains(&"rms_0001.csv".to_string()), "{skipped:?}");
    assert!(skipped.contains(&"frequency_0001.csv".to_string()), "{skipped:?}");
    assert_eq!(r.rejected_rows.len(), 1);
    assert!(r.rejected_rows[0].2.contains("flash"), "{:?}", r.rejected_rows);
    assert_eq!(r.missing_raw, vec![("P1".to_string(), 1)]);

    assert_eq!(count(&store, "rms"), 0);
    assert_eq!(count(&store, "frequency"), 0);
    assert_eq!(count(&store, "power"), 10);
    let stat = event_stat(store.conn(), "P1").unwrap().unwrap();
    assert_eq!((stat.event_count, stat.sag_count, stat.swell_count), (1, 1, 0));
    let detail = event_detail(&store, 1).unwrap();
    assert!(detail.file_path.is_none());
    assert!(detail.raw_unavailable().is_some());
}

#[test]
fn queries_leave_the_database_untouched() {
    let dir = tempfile::tempdir().unwrap();
    tree(&dir.path().join("tree"), "P1", "sag 2.0 3.0 B 0.8\n");
    let db = dir.path().join("pq.db");
    Store::open(&db).unwrap().ingest_directory(&dir.path().join("tree")).unwrap();
    let digest = || hex::encode(Sha256::digest(fs::read(&db).unwrap()));
    let before = digest();

    let store = Store::open_read_only(&db).unwrap();
    for p in [ParameterType::Rms, ParameterType::Harmonics, ParameterType::Power] {
        timeseries(&store, "P1", p, None, None).unwrap();
    }
    let detail = event_detail(&store, 1).unwrap();
    let csv = dir.path().join("raw.csv");
    let n = extract_raw_csv(&detail, &csv).unwrap();
    drop(store);
    assert_eq!(digest(), before);

    // 1 s sag plus 0.2 s captured on each side
    assert_eq!(n, 4480);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("sample,time,va,vb,vc,ia,ib,ic"));
    assert_eq!(text.lines().count(), n + 1);
}

#[test]
fn series_range_is_inclusive() {
    let dir = tempfile::tempdir().unwrap();
    tree(dir.path(), "P1", "");
    let mut store = Store::open_in_memory().unwrap();
    store.ingest_directory(dir.path()).unwrap();
    let t = |s: i64| Timestamp(stream_start().nanos() + s * 1_000_000_000);
    let rows = timeseries(&store, "P1", ParameterType::Power, Some(t(3)), Some(t(6))).unwrap().rows;
    let times: Vec<Cell> = rows.iter().map(|r| r[0].clone()).collect();
    assert_eq!(times, (3..=6).map(|s| Cell::Time(t(s))).collect::<Vec<_>>());
    let all = timeseries(&store, "P1", ParameterType::Rms, None, None).unwrap();
    assert_eq!(all.rows.len(), 50);
    assert_eq!(all.rows[0][0], Cell::Time(Timestamp(stream_start().nanos() + 200_000_000)));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pqstream(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqstream"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PQSTREAM_DB")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = pqstream(args, cwd);
    assert!(
        out.status.success(),
        "{args:?}: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err(args: &[&str], cwd: &Path) -> String {
    let out = pqstream(args, cwd);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

#[test]
fn generate_analyze_ingest_query() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("signal.toml"), "duration = 30.0\nnominal_voltage_rms = 230.0\ncurrent_lag_deg = 20.0\n").unwrap();
    fs::write(d.join("script.txt"), "sag 5.0 6.0 A 0.8\nswell 12.0 12.4 ABC 1.15\n").unwrap();

    let gen = ok(&["gen", "--config", "signal.toml", "--script", "script.txt", "--out", "samples"], d);
    assert!(gen.contains("96000 samples"), "{gen}");

    let analyzed = ok(
        &[
            "analyze", "--in", "samples", "--out", "tree", "--nominal-v", "230", "--point-id", "BB-01",
            "--load-type", "heavy industry", "--city", "Bursa",
        ],
        d,
    );
    assert!(analyzed.contains("BB-01"), "{analyzed}");
    // a second run into the same point directory is refused
    assert!(err(&["analyze", "--in", "samples", "--out", "tree", "--nominal-v", "230", "--point-id", "BB-01"], d)
        .contains("BB-01"));

    let ingested = ok(&["ingest", "--root", "tree", "--db", "pq.db"], d);
    assert!(ingested.contains("files ingested: 5"), "{ingested}");
    let again = ok(&["ingest", "--root", "tree", "--db", "pq.db"], d);
    assert!(again.contains("duplicates skipped: 5"), "{again}");

    let events = ok(&["query", "events", "--db", "pq.db", "--group-by", "load_type"], d);
    let last = events.lines().last().unwrap();
    assert_eq!(last.split_whitespace().collect::<Vec<_>>(), ["Heavy", "Industry", "1", "1", "0", "2"]);

    ok(&["query", "events", "--db", "pq.db", "--group-by", "city_name", "--chart", "bar", "--out", "ev.svg"], d);
    let svg = fs::read_to_string(d.join("ev.svg")).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 4);

    let series = ok(
        &[
            "query", "series", "--db", "pq.db", "--point", "BB-01", "--param", "power", "--from",
            "2009-01-01T00:00:10Z", "--to", "2009-01-01T00:00:14Z",
        ],
        d,
    );
    assert_eq!(series.lines().count(), 2 + 5);

    ok(&["query", "series", "--db", "pq.db", "--point", "BB-01", "--param", "rms", "--chart", "timeseries", "--out", "rms.svg"], d);
    assert!(fs::read_to_string(d.join("rms.svg")).unwrap().contains("data-label=\"v_rms_a\""));

    let detail = ok(&["event", "1", "--db", "pq.db", "--raw", "--out", "sag.csv"], d);
    assert!(detail.contains("sag") && detail.contains("wrote 4480 samples"), "{detail}");
    assert!(fs::read_to_string(d.join("sag.csv")).unwrap().starts_with("sample,time,va,vb,vc,ia,ib,ic\n"));
}

#[test]
fn helpful_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(err(&["query", "events", "--db", "missing.db"], d).contains("missing.db"));
    ok(&["ingest", "--root", ".", "--db", "empty.db"], d);
    assert!(err(&["query", "events", "--db", "empty.db", "--group-by", "event_count"], d).contains("group keys"));
    assert!(err(&["query", "events", "--db", "empty.db", "--chart", "pie"], d).contains("--out"));
    assert!(err(&["query", "series", "--db", "empty.db", "--point", "X", "--param", "rms"], d).contains("'X'"));
    assert!(err(&["analyze", "--in", "nowhere", "--out", "t", "--nominal-v", "230"], d).contains("nowhere"));
    let budget = ok(&["budget"], d);
    assert!(budget.contains("6,990.533") && !budget.contains("Raw"), "{budget}");
}

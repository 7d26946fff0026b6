//! Compiles a small C client against the generated header and, when the
//! static library is present, links and runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const CLIENT: &str = r#"
#include <math.h>
#include <stdio.h>
#include "pqstream.h"

int main(void) {
    PqsMonitor *m = NULL;
    if (pqs_monitor_new(50.0, 230.0, 10.0, &m) != PQS_STATUS_OK) return 1;
    static double v[3][3200], i[3][3200];
    for (int p = 0; p < 3; p++)
        for (int k = 0; k < 3200; k++) {
            double ph = 2.0 * 3.141592653589793 * (50.0 * k / 3200.0 - p / 3.0);
            v[p][k] = 230.0 * sqrt(2.0) * sin(ph);
            i[p][k] = 10.0 * sqrt(2.0) * sin(ph);
        }
    if (pqs_monitor_push(m, v[0], v[1], v[2], i[0], i[1], i[2], 3200) != PQS_STATUS_OK) return 2;
    PqsRecord r;
    int rms = 0;
    while (pqs_monitor_pop_record(m, &r) == PQS_STATUS_OK)
        if (r.kind == PQS_RECORD_KIND_RMS) rms++;
    pqs_monitor_finish(m);
    pqs_monitor_free(m);
    double with, without;
    pqs_traffic_budget(&with, &without);
    printf("rms=%d without=%.3f %s\n", rms, without, pqs_record_column_name(PQS_RECORD_KIND_RMS, 0));
    return rms == 5 ? 0 : 3;
}
"#;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn cc() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok()?.status.success().then_some(cc)
}

fn write_client(dir: &Path) -> PathBuf {
    let src = dir.join("client.c");
    std::fs::write(&src, CLIENT).unwrap();
    src
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = write_client(dir.path());
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(crate_dir().join("include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn c_client_links_and_runs() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    // tests live in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).unwrap().join("libpqstream_ffi.a");
    if !lib.is_file() {
        eprintln!("{} not built; skipped", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = write_client(dir.path());
    let bin = dir.path().join("client");
    let out = Command::new(cc)
        .args(["-std=c99", "-I"])
        .arg(crate_dir().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}");
    assert_eq!(stdout.trim(), "rms=5 without=6990.533 v_rms_a");
}

//! Relational stream store (SQLite).
//!
//! Record rows carry no timestamps: each belongs to a `transfer_file` whose
//! `measurement_date` is the time of its last row.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rusqlite::{params, Connection, OpenFlags, OptionalExtension, Transaction, TransactionBehavior};
use sha2::{Digest, Sha256};

use super::files::{parse_transfer_file, EventLine, RowValues};
use super::{LoadType, MeasurementPoint, ParameterType, PointKind, PointMetadata, StoreError, POINT_METADATA};
use crate::events::EventType;
use crate::time::Timestamp;

const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS measurement_point (
    id            TEXT PRIMARY KEY,
    name          TEXT NOT NULL,
    point_kind    TEXT NOT NULL CHECK (point_kind IN ('busbar', 'feeder')),
    load_type     TEXT NOT NULL CHECK (load_type IN ('Heavy Industry', 'Industry+Urban', 'Urban Only')),
    city_name     TEXT NOT NULL,
    region_name   TEXT NOT NULL,
    voltage_level REAL NOT NULL CHECK (voltage_level > 0)
);

CREATE TABLE IF NOT EXISTS transfer_file (
    id                   INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    parameter_type       TEXT NOT NULL CHECK (parameter_type IN
        ('power', 'rms', 'harmonics', 'frequency', 'demand', 'flicker_pst', 'flicker_plt', 'event')),
    measurement_date     INTEGER NOT NULL,
    transfer_time        INTEGER NOT NULL,
    path                 TEXT NOT NULL,
    row_count            INTEGER NOT NULL CHECK (row_count >= 0),
    content_hash         TEXT NOT NULL UNIQUE,
    CHECK (measurement_date <= transfer_time)
);

CREATE TABLE IF NOT EXISTS rms (
    id INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    row_index INTEGER NOT NULL,
    v_rms_a REAL NOT NULL, v_rms_b REAL NOT NULL, v_rms_c REAL NOT NULL,
    i_rms_a REAL NOT NULL, i_rms_b REAL NOT NULL, i_rms_c REAL NOT NULL,
    UNIQUE (transfer_file_id, row_index)
);

CREATE TABLE IF NOT EXISTS power (
    id INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    row_index INTEGER NOT NULL,
    p_a REAL NOT NULL, p_b REAL NOT NULL, p_c REAL NOT NULL,
    q_a REAL NOT NULL, q_b REAL NOT NULL, q_c REAL NOT NULL,
    s_a REAL NOT NULL, s_b REAL NOT NULL, s_c REAL NOT NULL,
    pf_a REAL NOT NULL, pf_b REAL NOT NULL, pf_c REAL NOT NULL,
    UNIQUE (transfer_file_id, row_index)
);

-- magnitudes are little-endian f64 blobs, orders 1..33
CREATE TABLE IF NOT EXISTS harmonics (
    id INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    row_index INTEGER NOT NULL,
    fundamental_hz REAL NOT NULL,
    thd_v_a REAL, thd_v_b REAL, thd_v_c REAL,
    thd_i_a REAL, thd_i_b REAL, thd_i_c REAL,
    v_a BLOB NOT NULL, v_b BLOB NOT NULL, v_c BLOB NOT NULL,
    i_a BLOB NOT NULL, i_b BLOB NOT NULL, i_c BLOB NOT NULL,
    UNIQUE (transfer_file_id, row_index)
);

CREATE TABLE IF NOT EXISTS frequency (
    id INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    row_index INTEGER NOT NULL,
    frequency_hz REAL NOT NULL,
    held INTEGER NOT NULL CHECK (held IN (0, 1)),
    UNIQUE (transfer_file_id, row_index)
);

CREATE TABLE IF NOT EXISTS demand (
    id INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    row_index INTEGER NOT NULL,
    demand_a REAL NOT NULL, demand_b REAL NOT NULL, demand_c REAL NOT NULL,
    UNIQUE (transfer_file_id, row_index)
);

CREATE TABLE IF NOT EXISTS flicker_pst (
    id INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    row_index INTEGER NOT NULL,
    pst_a REAL, pst_b REAL, pst_c REAL,
    UNIQUE (transfer_file_id, row_index)
);

CREATE TABLE IF NOT EXISTS flicker_plt (
    id INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    row_index INTEGER NOT NULL,
    plt_a REAL, plt_b REAL, plt_c REAL,
    source_count INTEGER NOT NULL,
    UNIQUE (transfer_file_id, row_index)
);

CREATE TABLE IF NOT EXISTS event (
    id INTEGER PRIMARY KEY,
    measurement_point_id TEXT NOT NULL REFERENCES measurement_point(id),
    transfer_file_id INTEGER NOT NULL REFERENCES transfer_file(id),
    row_index INTEGER NOT NULL,
    event_id INTEGER NOT NULL,
    event_type TEXT NOT NULL CHECK (event_type IN ('sag', 'swell', 'interruption', 'unbalance')),
    event_starting_time INTEGER NOT NULL,
    event_ending_time INTEGER NOT NULL,
    event_size_in_samples INTEGER NOT NULL CHECK (event_size_in_samples >= 0),
    file_path TEXT,
    UNIQUE (measurement_point_id, event_id)
);

CREATE TABLE IF NOT EXISTS event_stat (
    measurement_point_id TEXT PRIMARY KEY REFERENCES measurement_point(id),
    event_count        INTEGER NOT NULL DEFAULT 0 CHECK (event_count >= 0),
    sag_count          INTEGER NOT NULL DEFAULT 0 CHECK (sag_count >= 0),
    swell_count        INTEGER NOT NULL DEFAULT 0 CHECK (swell_count >= 0),
    interruption_count INTEGER NOT NULL DEFAULT 0 CHECK (interruption_count >= 0),
    unbalance_count    INTEGER NOT NULL DEFAULT 0 CHECK (unbalance_count >= 0),
    CHECK (event_count = sag_count + swell_count + interruption_count + unbalance_count)
);

CREATE INDEX IF NOT EXISTS transfer_file_point ON transfer_file(measurement_point_id, parameter_type);
CREATE INDEX IF NOT EXISTS event_point ON event(measurement_point_id, event_type);
"#;

/// A transfer file as recorded in the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferFile {
    pub id: i64,
    pub measurement_point_id: String,
    pub parameter_type: ParameterType,
    /// Time of the last row in the file.
    pub measurement_date: Timestamp,
    pub transfer_time: Timestamp,
    pub path: String,
    pub row_count: u64,
    /// SHA-256 of point id, parameter and file bytes.
    pub content_hash: String,
}

/// Timestamp of row `row_index`: `measurement_date − (rows − 1 − index) × interval`.
pub fn derive_timestamps(file: &TransferFile, row_index: u64) -> Result<Timestamp, StoreError> {
    let interval = file
        .parameter_type
        .interval_nanos()
        .ok_or(StoreError::NoInterval(file.parameter_type))?;
    if row_index >= file.row_count {
        return Err(StoreError::RowIndex {
            index: row_index,
            rows: file.row_count,
        });
    }
    let back = (file.row_count - 1 - row_index) as i64;
    Ok(file.measurement_date.plus_nanos(-back * interval))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventStat {
    pub event_count: u64,
    pub sag_count: u64,
    pub swell_count: u64,
    pub interruption_count: u64,
    pub unbalance_count: u64,
}

impl EventStat {
    pub fn counts(&self) -> (u64, u64, u64, u64, u64) {
        (
            self.event_count,
            self.sag_count,
            self.swell_count,
            self.interruption_count,
            self.unbalance_count,
        )
    }

    pub fn is_consistent(&self) -> bool {
        self.event_count == self.sag_count + self.swell_count + self.interruption_count + self.unbalance_count
    }
}

fn stat_column(kind: EventType) -> &'static str {
    match kind {
        EventType::Sag => "sag_count",
        EventType::Swell => "swell_count",
        EventType::Interruption => "interruption_count",
        EventType::Unbalance => "unbalance_count",
    }
}

/// Counts one more event of `kind` at `point_id`, creating the row on the
/// first event.
pub fn update_event_stat(conn: &Connection, point_id: &str, kind: EventType) -> Result<EventStat, StoreError> {
    conn.execute(
        "INSERT INTO event_stat (measurement_point_id) VALUES (?1) ON CONFLICT DO NOTHING",
        [point_id],
    )?;
    let col = stat_column(kind);
    conn.execute(
        &format!("UPDATE event_stat SET event_count = event_count + 1, {col} = {col} + 1 WHERE measurement_point_id = ?1"),
        [point_id],
    )?;
    Ok(event_stat(conn, point_id)?.unwrap_or_default())
}

/// The stored summary row of `point_id`.
pub fn event_stat(conn: &Connection, point_id: &str) -> Result<Option<EventStat>, StoreError> {
    Ok(conn
        .query_row(
            "SELECT event_count, sag_count, swell_count, interruption_count, unbalance_count
             FROM event_stat WHERE measurement_point_id = ?1",
            [point_id],
            |r| {
                Ok(EventStat {
                    event_count: r.get::<_, i64>(0)? as u64,
                    sag_count: r.get::<_, i64>(1)? as u64,
                    swell_count: r.get::<_, i64>(2)? as u64,
                    interruption_count: r.get::<_, i64>(3)? as u64,
                    unbalance_count: r.get::<_, i64>(4)? as u64,
                })
            },
        )
        .optional()?)
}

/// Recounts `point_id`'s events from the event table.
pub fn scan_event_stat(conn: &Connection, point_id: &str) -> Result<EventStat, StoreError> {
    let mut stmt = conn.prepare("SELECT event_type, count(*) FROM event WHERE measurement_point_id = ?1 GROUP BY event_type")?;
    let mut stat = EventStat::default();
    let rows = stmt.query_map([point_id], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)? as u64)))?;
    for row in rows {
        let (kind, n) = row?;
        let kind: EventType = kind.parse().map_err(StoreError::Invalid)?;
        match kind {
            EventType::Sag => stat.sag_count += n,
            EventType::Swell => stat.swell_count += n,
            EventType::Interruption => stat.interruption_count += n,
            EventType::Unbalance => stat.unbalance_count += n,
        }
        stat.event_count += n;
    }
    Ok(stat)
}

/// What one ingestion pass did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    /// New rows per table.
    pub rows_inserted: BTreeMap<String, u64>,
    pub files_ingested: Vec<PathBuf>,
    /// Files whose content was already ingested.
    pub duplicates: Vec<PathBuf>,
    /// Files (or point directories) skipped, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    /// Individual rows rejected: file, row index, reason.
    pub rejected_rows: Vec<(PathBuf, usize, String)>,
    /// Events whose raw capture file is missing.
    pub missing_raw: Vec<(String, u64)>,
}

impl IngestReport {
    pub fn total_rows(&self) -> u64 {
        self.rows_inserted.values().sum()
    }

    pub fn rows(&self, table: &str) -> u64 {
        self.rows_inserted.get(table).copied().unwrap_or(0)
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "files ingested: {}, duplicates skipped: {}, files skipped: {}",
            self.files_ingested.len(),
            self.duplicates.len(),
            self.skipped.len()
        )?;
        for p in ParameterType::ALL {
            writeln!(f, "  {:<12} {:>10} rows", p.as_str(), self.rows(p.as_str()))?;
        }
        writeln!(f, "  {:<12} {:>10} rows", "total", self.total_rows())?;
        for (path, why) in &self.skipped {
            writeln!(f, "skipped {}: {why}", path.display())?;
        }
        for (path, row, why) in &self.rejected_rows {
            writeln!(f, "rejected {} row {row}: {why}", path.display())?;
        }
        for (point, id) in &self.missing_raw {
            writeln!(f, "raw capture missing for event {id} at {point}")?;
        }
        Ok(())
    }
}

/// A handle on one stream database.
#[derive(Debug)]
pub struct Store {
    conn: Connection,
}

impl Store {
    /// Opens (creating if needed) a database for writing.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        Self::prepare(conn, true)
    }

    /// Opens an existing database; any write attempt fails.
    pub fn open_read_only(path: &Path) -> Result<Self, StoreError> {
        if !path.is_file() {
            return Err(StoreError::NotFound(format!("database {}", path.display())));
        }
        let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)?;
        Self::prepare(conn, false)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::prepare(Connection::open_in_memory()?, true)
    }

    fn prepare(conn: Connection, writable: bool) -> Result<Self, StoreError> {
        conn.busy_timeout(Duration::from_secs(30))?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        if writable {
            conn.execute_batch(SCHEMA)?;
        }
        Ok(Self { conn })
    }

    pub fn conn(&self) -> &Connection {
        &self.conn
    }

    /// Inserts or refreshes a measurement point.
    pub fn upsert_point(&self, p: &MeasurementPoint) -> Result<(), StoreError> {
        p.validate()?;
        self.conn.execute(
            "INSERT INTO measurement_point (id, name, point_kind, load_type, city_name, region_name, voltage_level)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)
             ON CONFLICT(id) DO UPDATE SET name = excluded.name, point_kind = excluded.point_kind,
                load_type = excluded.load_type, city_name = excluded.city_name,
                region_name = excluded.region_name, voltage_level = excluded.voltage_level",
            params![
                p.id,
                p.name,
                p.point_kind.as_str(),
                p.load_type.as_str(),
                p.city_name,
                p.region_name,
                p.voltage_level
            ],
        )?;
        Ok(())
    }

    pub fn point(&self, id: &str) -> Result<Option<MeasurementPoint>, StoreError> {
        self
            .conn
            .query_row(
                "SELECT id, name, point_kind, load_type, city_name, region_name, voltage_level
                 FROM measurement_point WHERE id = ?1",
                [id],
                |r| {
                    Ok((
                        r.get::<_, String>(0)?,
                        r.get::<_, String>(1)?,
                        r.get::<_, String>(2)?,
                        r.get::<_, String>(3)?,
                        r.get::<_, String>(4)?,
                        r.get::<_, String>(5)?,
                        r.get::<_, f64>(6)?,
                    ))
                },
            )
            .optional()?
            .map(|(id, name, kind, load, city, region, kv)| -> Result<_, StoreError> {
                Ok(MeasurementPoint {
                    id,
                    name,
                    point_kind: kind.parse::<PointKind>()?,
                    load_type: load.parse::<LoadType>()?,
                    city_name: city,
                    region_name: region,
                    voltage_level: kv,
                })
            })
            .transpose()
    }

    pub fn transfer_files(&self, point_id: &str, param: ParameterType) -> Result<Vec<TransferFile>, StoreError> {
        let mut stmt = self.conn.prepare(
            "SELECT id, measurement_point_id, parameter_type, measurement_date, transfer_time, path, row_count, content_hash
             FROM transfer_file WHERE measurement_point_id = ?1 AND parameter_type = ?2 ORDER BY measurement_date, id",
        )?;
        let rows = stmt.query_map(params![point_id, param.as_str()], |r| {
            Ok(TransferFile {
                id: r.get(0)?,
                measurement_point_id: r.get(1)?,
                parameter_type: param,
                measurement_date: Timestamp(r.get(3)?),
                transfer_time: Timestamp(r.get(4)?),
                path: r.get(5)?,
                row_count: r.get::<_, i64>(6)? as u64,
                content_hash: r.get(7)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    /// Loads every measurement point tree under `root` (or `root` itself if
    /// it is a point directory).
    pub fn ingest_directory(&mut self, root: &Path) -> Result<IngestReport, StoreError> {
        let mut report = IngestReport::default();
        for dir in point_dirs(root)? {
            self.ingest_point(&dir, &mut report)?;
        }
        Ok(report)
    }

    fn ingest_point(&mut self, dir: &Path, report: &mut IngestReport) -> Result<(), StoreError> {
        let meta_path = dir.join(POINT_METADATA);
        let meta: PointMetadata = match fs::read(&meta_path)
            .map_err(|e| e.to_string())
            .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
        {
            Ok(m) => m,
            Err(why) => {
                report.skipped.push((meta_path, why));
                return Ok(());
            }
        };
        if let Err(e) = self.upsert_point(&meta.point) {
            report.skipped.push((meta_path, e.to_string()));
            return Ok(());
        }
        let point_dir = std::path::absolute(dir)?;
        for param in ParameterType::ALL {
            let sub = point_dir.join(param.dir_name());
            let Ok(entries) = fs::read_dir(&sub) else { continue };
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.is_file())
                .collect();
            files.sort();
            for file in files {
                self.ingest_file(&meta.point.id, &point_dir, param, &file, report)?;
            }
        }
        Ok(())
    }

    fn ingest_file(
        &mut self,
        point_id: &str,
        point_dir: &Path,
        param: ParameterType,
        path: &Path,
        report: &mut IngestReport,
    ) -> Result<(), StoreError> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) => {
                report.skipped.push((path.to_path_buf(), e.to_string()));
                return Ok(());
            }
        };
        // identical streams at two points give identical files; only a
        // repeat for the same point and parameter is a duplicate
        let hash = hex::encode(
            Sha256::new()
                .chain_update(point_id.as_bytes())
                .chain_update([0])
                .chain_update(param.as_str().as_bytes())
                .chain_update([0])
                .chain_update(&bytes)
                .finalize(),
        );
        let seen: bool = self
            .conn
            .query_row("SELECT 1 FROM transfer_file WHERE content_hash = ?1", [&hash], |_| Ok(true))
            .optional()?
            .unwrap_or(false);
        if seen {
            report.duplicates.push(path.to_path_buf());
            return Ok(());
        }
        let parsed = match parse_transfer_file(param, &bytes) {
            Ok(p) => p,
            Err(why) => {
                report.skipped.push((path.to_path_buf(), why));
                return Ok(());
            }
        };
        let transfer_time = Timestamp::now();
        if parsed.measurement_date > transfer_time {
            report.skipped.push((path.to_path_buf(), "measurement_date lies in the future".into()));
            return Ok(());
        }

        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        tx.execute(
            "INSERT INTO transfer_file (measurement_point_id, parameter_type, measurement_date, transfer_time, path, row_count, content_hash)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                point_id,
                param.as_str(),
                parsed.measurement_date.nanos(),
                transfer_time.nanos(),
                path.to_string_lossy(),
                parsed.rows.len() as i64,
                hash
            ],
        )?;
        let file_id = tx.last_insert_rowid();
        let mut inserted = 0u64;
        for (k, row) in parsed.rows.iter().enumerate() {
            match insert_row(&tx, point_id, file_id, k as i64, row, point_dir) {
                Ok(RowOutcome::Inserted) => inserted += 1,
                Ok(RowOutcome::Duplicate) => {}
                Ok(RowOutcome::MissingRaw(id)) => {
                    inserted += 1;
                    report.missing_raw.push((point_id.to_string(), id));
                }
                Err(RowError::Rejected(why)) => report.rejected_rows.push((path.to_path_buf(), k, why)),
                Err(RowError::Store(e)) => return Err(e),
            }
        }
        tx.commit()?;
        *report.rows_inserted.entry(param.as_str().to_string()).or_default() += inserted;
        report.files_ingested.push(path.to_path_buf());
        Ok(())
    }
}

/// Opens `db` and ingests `root` into it.
pub fn ingest_directory(root: &Path, db: &Path) -> Result<IngestReport, StoreError> {
    Store::open(db)?.ingest_directory(root)
}

fn point_dirs(root: &Path) -> Result<Vec<PathBuf>, StoreError> {
    if !root.is_dir() {
        return Err(StoreError::NotFound(format!("directory {}", root.display())));
    }
    if root.join(POINT_METADATA).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(POINT_METADATA).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

enum RowOutcome {
    Inserted,
    Duplicate,
    MissingRaw(u64),
}

enum RowError {
    Rejected(String),
    Store(StoreError),
}

impl From<rusqlite::Error> for RowError {
    fn from(e: rusqlite::Error) -> Self {
        RowError::Store(e.into())
    }
}

fn blob(xs: &[f64]) -> Vec<u8> {
    xs.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn insert_row(
    tx: &Transaction<'_>,
    point: &str,
    file: i64,
    k: i64,
    row: &RowValues,
    point_dir: &Path,
) -> Result<RowOutcome, RowError> {
    match row {
        RowValues::Rms { v, i } => {
            tx.execute(
                "INSERT INTO rms VALUES (NULL, ?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
                params![point, file, k, v[0], v[1], v[2], i[0], i[1], i[2]],
            )?;
        }
        RowValues::Power { p, q, s, pf } => {
            tx.execute(
                "INSERT INTO power VALUES (NULL, ?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15)",
                params![point, file, k, p[0], p[1], p[2], q[0], q[1], q[2], s[0], s[1], s[2], pf[0], pf[1], pf[2]],
            )?;
        }
        RowValues::Harmonics {
            fundamental,
            thd_v,
            thd_i,
            magnitudes,
        } => {
            let m = magnitudes.map(|set| blob(&set));
            tx.execute(
                "INSERT INTO harmonics VALUES (NULL, ?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16)",
                params![
                    point, file, k, fundamental, thd_v[0], thd_v[1], thd_v[2], thd_i[0], thd_i[1], thd_i[2], m[0], m[1],
                    m[2], m[3], m[4], m[5]
                ],
            )?;
        }
        RowValues::Frequency { frequency, held } => {
            tx.execute(
                "INSERT INTO frequency VALUES (NULL, ?1, ?2, ?3, ?4, ?5)",
                params![point, file, k, frequency, *held as i64],
            )?;
        }
        RowValues::Demand(d) => {
            tx.execute(
                "INSERT INTO demand VALUES (NULL, ?1, ?2, ?3, ?4, ?5, ?6)",
                params![point, file, k, d[0], d[1], d[2]],
            )?;
        }
        RowValues::Pst(p) => {
            tx.execute(
                "INSERT INTO flicker_pst VALUES (NULL, ?1, ?2, ?3, ?4, ?5, ?6)",
                params![point, file, k, p[0], p[1], p[2]],
            )?;
        }
        RowValues::Plt { plt, source_count } => {
            tx.execute(
                "INSERT INTO flicker_plt VALUES (NULL, ?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                params![point, file, k, plt[0], plt[1], plt[2], source_count],
            )?;
        }
        RowValues::Event(e) => return insert_event(tx, point, file, k, e, point_dir),
    }
    Ok(RowOutcome::Inserted)
}

fn insert_event(
    tx: &Transaction<'_>,
    point: &str,
    file: i64,
    k: i64,
    e: &EventLine,
    point_dir: &Path,
) -> Result<RowOutcome, RowError> {
    let kind = e.kind().map_err(RowError::Rejected)?;
    if e.end < e.start {
        return Err(RowError::Rejected(format!("event {} ends before it starts", e.event_id)));
    }
    let raw = e.raw_path.as_deref().map(|rel| point_dir.join(rel)).filter(|p| p.is_file());
    let n = tx.execute(
        "INSERT INTO event (measurement_point_id, transfer_file_id, row_index, event_id, event_type,
                            event_starting_time, event_ending_time, event_size_in_samples, file_path)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9) ON CONFLICT DO NOTHING",
        params![
            point,
            file,
            k,
            e.event_id as i64,
            kind.as_str(),
            e.start.nanos(),
            e.end.nanos(),
            e.size_in_samples as i64,
            raw.as_ref().map(|p| p.to_string_lossy().into_owned())
        ],
    )?;
    if n == 0 {
        return Ok(RowOutcome::Duplicate);
    }
    update_event_stat(tx, point, kind).map_err(RowError::Store)?;
    Ok(if raw.is_none() {
        RowOutcome::MissingRaw(e.event_id)
    } else {
        RowOutcome::Inserted
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(param: ParameterType, rows: u64) -> TransferFile {
        TransferFile {
            id: 1,
            measurement_point_id: "P".into(),
            parameter_type: param,
            measurement_date: Timestamp::parse_iso8601("2009-01-01T01:00:00Z").unwrap(),
            transfer_time: Timestamp::parse_iso8601("2009-01-02T00:00:00Z").unwrap(),
            path: String::new(),
            row_count: rows,
            content_hash: String::new(),
        }
    }

    #[test]
    fn timestamps_count_back_from_the_last_row() {
        let f = file(ParameterType::Power, 60);
        assert_eq!(derive_timestamps(&f, 59).unwrap(), f.measurement_date);
        assert_eq!(derive_timestamps(&f, 0).unwrap().seconds_since(f.measurement_date), -59.0);
        let f = file(ParameterType::Rms, 300);
        assert_eq!(derive_timestamps(&f, 0).unwrap().nanos(), f.measurement_date.nanos() - 59_800_000_000);
        assert!(matches!(derive_timestamps(&f, 300), Err(StoreError::RowIndex { .. })));
        assert!(matches!(derive_timestamps(&file(ParameterType::Event, 3), 0), Err(StoreError::NoInterval(_))));
    }

    fn point(id: &str) -> MeasurementPoint {
        MeasurementPoint {
            id: id.into(),
            name: id.into(),
            point_kind: PointKind::Busbar,
            load_type: LoadType::UrbanOnly,
            city_name: "c".into(),
            region_name: "r".into(),
            voltage_level: 154.0,
        }
    }

    #[test]
    fn event_stat_counts_incrementally() {
        let s = Store::open_in_memory().unwrap();
        s.upsert_point(&point("A")).unwrap();
        let first = update_event_stat(s.conn(), "A", EventType::Sag).unwrap();
        assert_eq!(first.counts(), (1, 1, 0, 0, 0));
        for _ in 0..4 {
            update_event_stat(s.conn(), "A", EventType::Sag).unwrap();
        }
        let mut last = first;
        for _ in 0..3 {
            last = update_event_stat(s.conn(), "A", EventType::Swell).unwrap();
        }
        assert_eq!(last.counts(), (8, 5, 3, 0, 0));
        assert!(last.is_consistent());
        assert_eq!(event_stat(s.conn(), "B").unwrap(), None);
    }

    #[test]
    fn schema_rejects_bad_points() {
        let s = Store::open_in_memory().unwrap();
        let err = s.conn().execute(
            "INSERT INTO measurement_point VALUES ('X', 'x', 'busbar', 'Rural', 'c', 'r', 1.0)",
            [],
        );
        assert!(err.is_err());
        assert!(s.upsert_point(&MeasurementPoint { voltage_level: -1.0, ..point("Y") }).is_err());
        s.upsert_point(&point("Z")).unwrap();
        assert_eq!(s.point("Z").unwrap().unwrap(), point("Z"));
    }

    #[test]
    fn read_only_store_refuses_writes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pq.db");
        Store::open(&path).unwrap().upsert_point(&point("A")).unwrap();
        let ro = Store::open_read_only(&path).unwrap();
        assert!(ro.upsert_point(&point("B")).is_err());
        assert!(Store::open_read_only(&dir.path().join("missing.db")).is_err());
    }
}

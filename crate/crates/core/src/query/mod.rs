//! Read-only retrospective queries over the stream database.

mod chart;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rusqlite::types::ValueRef;
use rusqlite::{params, OptionalExtension};

use crate::analyzer::HARMONIC_ORDERS;
use crate::events::{read_raw_file, EventType};
use crate::store::{columns, derive_timestamps, MeasurementPoint, ParameterType, Store, StoreError};
use crate::time::{Timestamp, NANOS_PER_SAMPLE};

pub use chart::{render_chart, render_chart_bytes, ChartKind, ChartSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
    Time(Timestamp),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(x) => Some(*x as f64),
            Cell::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Cell::Int(_) | Cell::Float(_))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("undefined"),
            Cell::Int(x) => write!(f, "{x}"),
            Cell::Float(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Time(t) => f.write_str(&t.to_iso8601()),
        }
    }
}

/// Rectangular query output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// The query as resolved, for display and reproducibility.
    pub provenance: String,
}

impl ResultTable {
    pub fn new(columns: Vec<String>, provenance: impl Into<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            provenance: provenance.into(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn is_rectangular(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.columns.len())
    }

    /// Left-aligned text columns, numbers right-aligned.
    pub fn to_text(&self) -> String {
        let text: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::to_string).collect()).collect();
        let mut width: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &text {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |cells: Vec<String>| cells.join("  ").trim_end().to_string() + "\n";
        out.push_str(&line(
            self.columns.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect(),
        ));
        out.push_str(&line(width.iter().map(|w| "-".repeat(*w)).collect()));
        for (row, cells) in text.iter().zip(&self.rows) {
            out.push_str(&line(
                row.iter()
                    .zip(&width)
                    .zip(cells)
                    .map(|((s, w), c)| if c.is_numeric() { format!("{s:>w$}") } else { format!("{s:<w$}") })
                    .collect(),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Sum,
    Count,
    Mean,
    Max,
    Min,
}

impl Aggregate {
    fn sql(self) -> &'static str {
        match self {
            Aggregate::Sum => "sum",
            Aggregate::Count => "count",
            Aggregate::Mean => "avg",
            Aggregate::Max => "max",
            Aggregate::Min => "min",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            other => other.sql(),
        }
    }
}

impl FromStr for Aggregate {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "sum" => Aggregate::Sum,
            "count" => Aggregate::Count,
            "mean" | "avg" => Aggregate::Mean,
            "max" => Aggregate::Max,
            "min" => Aggregate::Min,
            _ => return Err(StoreError::Invalid(format!("unknown aggregate '{s}'"))),
        })
    }
}

pub const EVENT_STAT_COLUMNS: [&str; 5] =
    ["event_count", "sag_count", "swell_count", "interruption_count", "unbalance_count"];

/// An aggregate over one event summary counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Measure {
    pub aggregate: Aggregate,
    pub column: String,
}

impl Measure {
    pub fn sum(column: &str) -> Self {
        Self {
            aggregate: Aggregate::Sum,
            column: column.to_string(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}({})", self.aggregate.label(), self.column)
    }
}

impl FromStr for Measure {
    type Err = StoreError;

    /// `sum:sag_count`, or a bare column for a sum.
    fn from_str(s: &str) -> Result<Self, StoreError> {
        let (agg, col) = s.split_once(':').unwrap_or(("sum", s));
        Ok(Measure {
            aggregate: agg.parse()?,
            column: col.trim().to_string(),
        })
    }
}

/// Grouped aggregation over the per-point event summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    /// Attribute equality filters on the measurement point.
    pub filters: Vec<(String, String)>,
    pub group_by: Vec<String>,
    pub measures: Vec<Measure>,
}

impl Default for QuerySpec {
    fn default() -> Self {
        Self {
            filters: Vec::new(),
            group_by: Vec::new(),
            measures: ["sag_count", "swell_count", "unbalance_count", "event_count"]
                .map(Measure::sum)
                .to_vec(),
        }
    }
}

impl QuerySpec {
    pub fn grouped_by(attributes: &[&str]) -> Self {
        Self {
            group_by: attributes.iter().map(|a| a.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let point_attr = |a: &str| MeasurementPoint::ATTRIBUTES.contains(&a);
        for g in &self.group_by {
            if !point_attr(g) {
                return Err(StoreError::Invalid(format!(
                    "cannot group by '{g}': group keys must be measurement point attributes ({})",
                    MeasurementPoint::ATTRIBUTES.join(", ")
                )));
            }
        }
        for (k, _) in &self.filters {
            if !point_attr(k) {
                return Err(StoreError::Invalid(format!(
                    "cannot filter on '{k}': filters must be measurement point attributes"
                )));
            }
        }
        if self.measures.is_empty() {
            return Err(StoreError::Invalid("at least one measure is required".into()));
        }
        for m in &self.measures {
            if !EVENT_STAT_COLUMNS.contains(&m.column.as_str()) {
                return Err(StoreError::Invalid(format!(
                    "unknown measure column '{}' (expected one of {})",
                    m.column,
                    EVENT_STAT_COLUMNS.join(", ")
                )));
            }
        }
        Ok(())
    }
}

fn from_sql(v: ValueRef<'_>) -> Cell {
    match v {
        ValueRef::Null => Cell::Null,
        ValueRef::Integer(i) => Cell::Int(i),
        ValueRef::Real(x) => Cell::Float(x),
        ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Cell::Text(hex::encode(b)),
    }
}

/// Sums (or other aggregates of) event summary counters per group of
/// measurement points, ascending by group key. Reads the summary table
/// only.
pub fn aggregate_events(store: &Store, spec: &QuerySpec) -> Result<ResultTable, StoreError> {
    spec.validate()?;
    let keys: Vec<String> = spec.group_by.iter().map(|g| format!("mp.{g}")).collect();
    let mut select = keys.clone();
    select.extend(spec.measures.iter().map(|m| format!("{}(es.{})", m.aggregate.sql(), m.column)));
    let mut sql = format!(
        "SELECT {} FROM event_stat es JOIN measurement_point mp ON es.measurement_point_id = mp.id",
        select.join(", ")
    );
    if !spec.filters.is_empty() {
        let conds: Vec<String> = spec
            .filters
            .iter()
            .enumerate()
            .map(|(k, (attr, _))| {
                if attr == "voltage_level" {
                    format!("mp.{attr} = CAST(?{} AS REAL)", k + 1)
                } else {
                    format!("mp.{attr} = ?{}", k + 1)
                }
            })
            .collect();
        sql.push_str(&format!(" WHERE {}", conds.join(" AND ")));
    }
    if keys.is_empty() {
        sql.push_str(" HAVING count(*) > 0");
    } else {
        sql.push_str(&format!(" GROUP BY {0} ORDER BY {0}", keys.join(", ")));
    }

    let mut columns = spec.group_by.clone();
    columns.extend(spec.measures.iter().map(Measure::label));
    let mut table = ResultTable::new(columns, sql.clone());
    let mut stmt = store.conn().prepare(&sql)?;
    let values: Vec<&str> = spec.filters.iter().map(|(_, v)| v.as_str()).collect();
    let mut rows = stmt.query(rusqlite::params_from_iter(values))?;
    while let Some(r) = rows.next()? {
        let row = (0..table.columns.len()).map(|k| r.get_ref(k).map(from_sql)).collect::<Result<_, _>>()?;
        table.rows.push(row);
    }
    Ok(table)
}

fn record_select(param: ParameterType) -> Result<String, StoreError> {
    let cols = match param {
        ParameterType::Harmonics => {
            let mut c: Vec<String> = columns(param)[..7].to_vec();
            c.extend(["v_a", "v_b", "v_c", "i_a", "i_b", "i_c"].map(String::from));
            c
        }
        ParameterType::Event => return Err(StoreError::NoInterval(param)),
        _ => columns(param),
    };
    Ok(format!(
        "SELECT row_index, {} FROM {} WHERE transfer_file_id = ?1 ORDER BY row_index",
        cols.join(", "),
        param.as_str()
    ))
}

/// Rows of one parameter for one point within `[from, to]` (inclusive), in
/// time order, with timestamps derived from each transfer file.
pub fn timeseries(
    store: &Store,
    point_id: &str,
    param: ParameterType,
    from: Option<Timestamp>,
    to: Option<Timestamp>,
) -> Result<ResultTable, StoreError> {
    if store.point(point_id)?.is_none() {
        return Err(StoreError::NotFound(format!("measurement point '{point_id}'")));
    }
    let sql = record_select(param)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(columns(param));
    let provenance = format!(
        "series point={point_id} param={param} from={} to={}",
        from.map_or("-".into(), |t| t.to_iso8601()),
        to.map_or("-".into(), |t| t.to_iso8601())
    );
    let mut table = ResultTable::new(header, provenance);
    let mut stmt = store.conn().prepare(&sql)?;
    let mut rows = Vec::new();
    for file in store.transfer_files(point_id, param)? {
        let mut q = stmt.query(params![file.id])?;
        while let Some(r) = q.next()? {
            let index: i64 = r.get(0)?;
            let t = derive_timestamps(&file, index as u64)?;
            if from.is_some_and(|f| t < f) || to.is_some_and(|e| t > e) {
                continue;
            }
            let mut row = vec![Cell::Time(t)];
            let stored = r.as_ref().column_count();
            for k in 1..stored {
                match r.get_ref(k)? {
                    ValueRef::Blob(b) => {
                        if b.len() != HARMONIC_ORDERS * 8 {
                            return Err(StoreError::Invalid(format!("harmonic blob of {} bytes", b.len())));
                        }
                        row.extend(
                            b.chunks_exact(8)
                                .map(|c| Cell::Float(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))),
                        );
                    }
                    v => row.push(from_sql(v)),
                }
            }
            rows.push(row);
        }
    }
    // files are ordered by last-sample time; a stable sort keeps ties in
    // ingestion order
    rows.sort_by_key(|r| match r[0] {
        Cell::Time(t) => t,
        _ => unreachable!("first column is the timestamp"),
    });
    table.rows = rows;
    Ok(table)
}

/// An event row with its point.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDetail {
    /// Database key.
    pub id: i64,
    pub measurement_point_id: String,
    /// Sequence number within the measurement point.
    pub event_id: u64,
    pub event_type: EventType,
    pub event_starting_time: Timestamp,
    pub event_ending_time: Timestamp,
    pub event_size_in_samples: u64,
    pub file_path: Option<PathBuf>,
}

impl EventDetail {
    /// Why the raw waveform cannot be provided, if it cannot.
    pub fn raw_unavailable(&self) -> Option<String> {
        match &self.file_path {
            None => Some("raw capture unavailable: it was not written when the event was finalized".into()),
            Some(p) if !p.is_file() => Some(format!("raw capture unavailable: {} no longer exists", p.display())),
            Some(_) => None,
        }
    }

    pub fn to_table(&self) -> ResultTable {
        let mut t = ResultTable::new(
            ["field", "value"].map(String::from).to_vec(),
            format!("event id={}", self.id),
        );
        let mut add = |k: &str, v: Cell| t.rows.push(vec![Cell::Text(k.into()), v]);
        add("id", Cell::Int(self.id));
        add("measurement_point_id", Cell::Text(self.measurement_point_id.clone()));
        add("event_id", Cell::Int(self.event_id as i64));
        add("event_type", Cell::Text(self.event_type.as_str().into()));
        add("event_starting_time", Cell::Time(self.event_starting_time));
        add("event_ending_time", Cell::Time(self.event_ending_time));
        add("event_size_in_samples", Cell::Int(self.event_size_in_samples as i64));
        add(
            "file_path",
            self.file_path
                .as_ref()
                .map_or(Cell::Null, |p| Cell::Text(p.display().to_string())),
        );
        t
    }
}

pub fn event_detail(store: &Store, id: i64) -> Result<EventDetail, StoreError> {
    let row = store
        .conn()
        .query_row(
            "SELECT measurement_point_id, event_id, event_type, event_starting_time, event_ending_time,
                    event_size_in_samples, file_path
             FROM event WHERE id = ?1",
            [id],
            |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, i64>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, i64>(3)?,
                    r.get::<_, i64>(4)?,
                    r.get::<_, i64>(5)?,
                    r.get::<_, Option<String>>(6)?,
                ))
            },
        )
        .optional()?
        .ok_or_else(|| StoreError::NotFound(format!("event {id}")))?;
    let (point, event_id, kind, start, end, size, path) = row;
    Ok(EventDetail {
        id,
        measurement_point_id: point,
        event_id: event_id as u64,
        event_type: kind.parse().map_err(StoreError::Invalid)?,
        event_starting_time: Timestamp(start),
        event_ending_time: Timestamp(end),
        event_size_in_samples: size as u64,
        file_path: path.map(PathBuf::from),
    })
}

/// Decompresses an event's raw capture into a CSV at `out_path`: one row
/// per sample with its time and the six channels.
pub fn extract_raw_csv(detail: &EventDetail, out_path: &Path) -> Result<usize, StoreError> {
    if let Some(why) = detail.raw_unavailable() {
        return Err(StoreError::NotFound(why));
    }
    let path = detail.file_path.as_ref().expect("checked above");
    let cap = read_raw_file(path).map_err(|e| StoreError::Invalid(e.to_string()))?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(fs::File::create(out_path)?);
    writeln!(w, "sample,time,va,vb,vc,ia,ib,ic")?;
    let step = if cap.sample_rate > 0 {
        1_000_000_000 / cap.sample_rate as i64
    } else {
        NANOS_PER_SAMPLE
    };
    for k in 0..cap.sample_count() {
        let t = cap.capture_start.plus_nanos(k as i64 * step);
        write!(w, "{k},{}", t.to_iso8601())?;
        for ch in &cap.channels {
            write!(w, ",{:.16e}", ch[k])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(cap.sample_count())
}

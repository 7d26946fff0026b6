//! Transfer files, the ingestion daemon and the stream database.
//!
//! On disk, one measurement point looks like
//!
//! ```text
//! <root>/<point_id>/point.json
//! <root>/<point_id>/RMS/rms_0001.csv
//! <root>/<point_id>/Power/power_0001.csv
//! ...
//! <root>/<point_id>/Event/event_0001.csv
//! <root>/<point_id>/Sag/raw_000001.pqz
//! ```
//!
//! Data files hold one row per record and no per-row timestamps; the footer
//! `#last_sample=<iso8601>` carries the time of the last row, and earlier
//! rows are placed at fixed intervals before it.

mod budget;
mod db;
mod files;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{Timestamp, NANOS_PER_SECOND};

pub use budget::{compute_traffic_budget, format_rate, BudgetConfig, BudgetRow, TrafficBudget};
pub use db::{
    derive_timestamps, event_stat, ingest_directory, scan_event_stat, update_event_stat, EventStat, IngestReport,
    Store, TransferFile,
};
pub use files::{
    columns, decode_row, encode_record, parameter_of, parse_transfer_file, write_transfer_files, EventLine,
    ParsedFile, RowValues, TransferWriter, WriteSummary, WriterOptions, FOOTER_PREFIX, POINT_METADATA, UNDEFINED,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("output root {path} is not writable: {source}")]
    NotWritable { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("parameter '{0}' has no fixed sampling interval")]
    NoInterval(ParameterType),
    #[error("row index {index} outside file of {rows} rows")]
    RowIndex { index: u64, rows: u64 },
    #[error("{0}")]
    Invalid(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Db(#[from] rusqlite::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterType {
    Power,
    Rms,
    Harmonics,
    Frequency,
    Demand,
    FlickerPst,
    FlickerPlt,
    Event,
}

impl ParameterType {
    pub const ALL: [ParameterType; 8] = [
        ParameterType::Power,
        ParameterType::Rms,
        ParameterType::Harmonics,
        ParameterType::Frequency,
        ParameterType::Demand,
        ParameterType::FlickerPst,
        ParameterType::FlickerPlt,
        ParameterType::Event,
    ];

    /// Lower-case name; also the file prefix and table name.
    pub fn as_str(self) -> &'static str {
        match self {
            ParameterType::Power => "power",
            ParameterType::Rms => "rms",
            ParameterType::Harmonics => "harmonics",
            ParameterType::Frequency => "frequency",
            ParameterType::Demand => "demand",
            ParameterType::FlickerPst => "flicker_pst",
            ParameterType::FlickerPlt => "flicker_plt",
            ParameterType::Event => "event",
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            ParameterType::Power => "Power",
            ParameterType::Rms => "RMS",
            ParameterType::Harmonics => "Harmonics",
            ParameterType::Frequency => "Frequency",
            ParameterType::Demand => "Demand",
            ParameterType::FlickerPst => "FlickerPST",
            ParameterType::FlickerPlt => "FlickerPLT",
            ParameterType::Event => "Event",
        }
    }

    /// Time between consecutive rows; events arrive irregularly.
    pub fn interval_nanos(self) -> Option<i64> {
        let ms = match self {
            ParameterType::Rms => 200,
            ParameterType::Power | ParameterType::Frequency => 1_000,
            ParameterType::Harmonics => 3_000,
            ParameterType::FlickerPst => 600_000,
            ParameterType::Demand => 900_000,
            ParameterType::FlickerPlt => 7_200_000,
            ParameterType::Event => return None,
        };
        Some(ms * (NANOS_PER_SECOND / 1_000))
    }

    /// Rows per file before the writer starts a new one: one hour of data.
    pub fn rows_per_file(self) -> usize {
        match self.interval_nanos() {
            Some(ns) => ((3_600 * NANOS_PER_SECOND) / ns).max(1) as usize,
            None => 1_000,
        }
    }
}

impl fmt::Display for ParameterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParameterType {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match key.as_str() {
            "pst" => "flicker_pst",
            "plt" => "flicker_plt",
            other => other,
        };
        ParameterType::ALL
            .into_iter()
            .find(|p| p.as_str() == alias)
            .ok_or_else(|| StoreError::Invalid(format!("unknown parameter type '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Busbar,
    Feeder,
}

impl PointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PointKind::Busbar => "busbar",
            PointKind::Feeder => "feeder",
        }
    }
}

impl FromStr for PointKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "busbar" => Ok(PointKind::Busbar),
            "feeder" => Ok(PointKind::Feeder),
            _ => Err(StoreError::Invalid(format!("unknown point kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LoadType {
    #[serde(rename = "Heavy Industry")]
    HeavyIndustry,
    #[serde(rename = "Industry+Urban")]
    IndustryUrban,
    #[serde(rename = "Urban Only")]
    UrbanOnly,
}

impl LoadType {
    pub const ALL: [LoadType; 3] = [LoadType::HeavyIndustry, LoadType::IndustryUrban, LoadType::UrbanOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            LoadType::HeavyIndustry => "Heavy Industry",
            LoadType::IndustryUrban => "Industry+Urban",
            LoadType::UrbanOnly => "Urban Only",
        }
    }
}

impl fmt::Display for LoadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoadType {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        LoadType::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                StoreError::Invalid(format!(
                    "unknown load type '{s}' (expected Heavy Industry, Industry+Urban or Urban Only)"
                ))
            })
    }
}

/// A busbar or feeder where the instrument is attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub id: String,
    pub name: String,
    pub point_kind: PointKind,
    pub load_type: LoadType,
    pub city_name: String,
    pub region_name: String,
    /// Kilovolts.
    pub voltage_level: f64,
}

impl MeasurementPoint {
    /// Attribute names usable as query group keys and filters.
    pub const ATTRIBUTES: [&'static str; 7] =
        ["id", "name", "point_kind", "load_type", "city_name", "region_name", "voltage_level"];

    pub fn validate(&self) -> Result<(), StoreError> {
        let id_ok = !self.id.is_empty()
            && self.id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !self.id.starts_with('.');
        if !id_ok {
            return Err(StoreError::Invalid(format!(
                "measurement point id '{}' must be non-empty ASCII letters, digits, '-', '_' or '.'",
                self.id
            )));
        }
        if !(self.voltage_level > 0.0 && self.voltage_level.is_finite()) {
            return Err(StoreError::Invalid(format!(
                "voltage level must be > 0 kV, got {}",
                self.voltage_level
            )));
        }
        Ok(())
    }
}

/// Contents of `point.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetadata {
    pub point: MeasurementPoint,
    /// Time of sample index 0.
    pub stream_start: String,
}

impl PointMetadata {
    pub fn new(point: MeasurementPoint, stream_start: Timestamp) -> Self {
        Self {
            point,
            stream_start: stream_start.to_iso8601(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_match_cadences() {
        let s = |p: ParameterType| p.interval_nanos().unwrap() as f64 / 1e9;
        assert_eq!(s(ParameterType::Rms), 0.2);
        assert_eq!(s(ParameterType::Power), 1.0);
        assert_eq!(s(ParameterType::Harmonics), 3.0);
        assert_eq!(s(ParameterType::FlickerPst), 600.0);
        assert_eq!(s(ParameterType::Demand), 900.0);
        assert_eq!(s(ParameterType::FlickerPlt), 7200.0);
        assert_eq!(ParameterType::Event.interval_nanos(), None);
        assert_eq!(ParameterType::Rms.rows_per_file(), 18_000);
        assert_eq!(ParameterType::FlickerPlt.rows_per_file(), 1);
    }

    #[test]
    fn names_parse_back() {
        for p in ParameterType::ALL {
            assert_eq!(p.as_str().parse::<ParameterType>().unwrap(), p);
        }
        assert_eq!("pst".parse::<ParameterType>().unwrap(), ParameterType::FlickerPst);
        assert!("voltage".parse::<ParameterType>().is_err());
        for l in LoadType::ALL {
            assert_eq!(l.as_str().parse::<LoadType>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.as_str()));
        }
        assert!("Rural".parse::<LoadType>().is_err());
    }

    #[test]
    fn point_validation() {
        let mut p = MeasurementPoint {
            id: "EZN-01".into(),
            name: "Ezine primary".into(),
            point_kind: PointKind::Busbar,
            load_type: LoadType::UrbanOnly,
            city_name: "Canakkale".into(),
            region_name: "Marmara".into(),
            voltage_level: 34.5,
        };
        p.validate().unwrap();
        p.voltage_level = 0.0;
        assert!(p.validate().is_err());
        p.voltage_level = 154.0;
        p.id = "../x".into();
        assert!(p.validate().is_err());
    }
}

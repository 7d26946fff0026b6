//! Absolute timestamps at nanosecond resolution.
//!
//! One sample at 3200 Hz lasts exactly 312 500 ns, so every sample instant
//! and every record timestamp is an exact integer here.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::siggen::SAMPLE_RATE;

pub const NANOS_PER_SECOND: i64 = 1_000_000_000;
pub const NANOS_PER_SAMPLE: i64 = NANOS_PER_SECOND / SAMPLE_RATE as i64;

/// Nanoseconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_nanos(ns: i64) -> Self {
        Timestamp(ns)
    }

    pub fn nanos(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp_nanos_opt().unwrap_or(i64::MAX))
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        DateTime::from_timestamp_nanos(self.0)
    }

    pub fn plus_nanos(self, ns: i64) -> Self {
        Timestamp(self.0 + ns)
    }

    pub fn plus_samples(self, samples: u64) -> Self {
        Timestamp(self.0 + samples as i64 * NANOS_PER_SAMPLE)
    }

    /// Seconds from `earlier` to `self`.
    pub fn seconds_since(self, earlier: Timestamp) -> f64 {
        (self.0 - earlier.0) as f64 / NANOS_PER_SECOND as f64
    }

    /// RFC 3339 with as many fractional digits as needed, `Z` suffix.
    pub fn to_iso8601(self) -> String {
        self.to_datetime().to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }

    pub fn parse_iso8601(s: &str) -> Result<Self, String> {
        let dt = DateTime::parse_from_rfc3339(s.trim()).map_err(|e| format!("bad timestamp '{s}': {e}"))?;
        dt.timestamp_nanos_opt()
            .map(Timestamp)
            .ok_or_else(|| format!("timestamp '{s}' out of range"))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso8601())
    }
}

impl FromStr for Timestamp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Timestamp::parse_iso8601(s)
    }
}

/// Maps sample indices of one stream to absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamClock {
    pub origin: Timestamp,
}

impl StreamClock {
    pub fn new(origin: Timestamp) -> Self {
        Self { origin }
    }

    pub fn at_sample(&self, sample: u64) -> Timestamp {
        self.origin.plus_samples(sample)
    }
}

/// Default origin for synthetic streams.
pub const DEFAULT_STREAM_START: &str = "2009-01-01T00:00:00Z";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_round_trip() {
        for s in ["2009-01-01T00:00:00Z", "2009-01-01T00:00:00.2Z", "2010-06-30T23:59:59.000312500Z"] {
            let t = Timestamp::parse_iso8601(s).unwrap();
            assert_eq!(Timestamp::parse_iso8601(&t.to_iso8601()).unwrap(), t);
        }
        let t = Timestamp::parse_iso8601("2009-01-01T00:00:00Z").unwrap();
        assert_eq!(t.plus_samples(640).to_iso8601(), "2009-01-01T00:00:00.200Z");
        assert!(Timestamp::parse_iso8601("yesterday").is_err());
    }

    #[test]
    fn sample_clock_is_exact() {
        let clock = StreamClock::new(Timestamp(0));
        assert_eq!(clock.at_sample(3200).nanos(), NANOS_PER_SECOND);
        assert_eq!(clock.at_sample(1).nanos(), 312_500);
    }
}

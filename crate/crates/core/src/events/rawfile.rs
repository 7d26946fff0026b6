//! `.pqz` raw event capture files.
//!
//! Layout before compression (all integers little-endian):
//!
//! ```text
//! magic          8 bytes  "PQSRAW\0\0"
//! version        u16      1
//! event_id       u64
//! channel_count  u16      6  (Va Vb Vc Ia Ib Ic)
//! sample_rate    u32      3200
//! capture_start  i64      ns since Unix epoch
//! sample_count   u64      samples per channel
//! samples        f64 × channel_count × sample_count, channel-major
//! ```
//!
//! The whole byte stream is gzip-compressed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{EventError, CAPTURE_CHANNELS};
use crate::time::Timestamp;

pub const RAW_MAGIC: &[u8; 8] = b"PQSRAW\0\0";
pub const RAW_FILE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RawCapture {
    pub event_id: u64,
    pub sample_rate: u32,
    pub capture_start: Timestamp,
    pub channels: [Vec<f64>; CAPTURE_CHANNELS],
}

impl RawCapture {
    pub fn sample_count(&self) -> usize {
        self.channels[0].len()
    }
}

pub fn write_raw_file(path: &Path, capture: &RawCapture) -> Result<(), EventError> {
    let n = capture.sample_count();
    if capture.channels.iter().any(|c| c.len() != n) {
        return Err(EventError::RawFile {
            path: path.to_path_buf(),
            message: "channels have unequal lengths".into(),
        });
    }
    let file = File::create(path)?;
    let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
    enc.write_all(RAW_MAGIC)?;
    enc.write_all(&RAW_FILE_VERSION.to_le_bytes())?;
    enc.write_all(&capture.event_id.to_le_bytes())?;
    enc.write_all(&(CAPTURE_CHANNELS as u16).to_le_bytes())?;
    enc.write_all(&capture.sample_rate.to_le_bytes())?;
    enc.write_all(&capture.capture_start.nanos().to_le_bytes())?;
    enc.write_all(&(n as u64).to_le_bytes())?;
    for ch in &capture.channels {
        for x in ch {
            enc.write_all(&x.to_le_bytes())?;
        }
    }
    enc.finish()?.flush()?;
    Ok(())
}

pub fn read_raw_file(path: &Path) -> Result<RawCapture, EventError> {
    let bad = |message: String| EventError::RawFile {
        path: path.to_path_buf(),
        message,
    };
    let mut r = GzDecoder::new(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| bad(format!("header: {e}")))?;
    if &magic != RAW_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u16::from_le_bytes(read_array(&mut r).map_err(|e| bad(e.to_string()))?);
    if version != RAW_FILE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut header = || -> std::io::Result<(u64, u16, u32, i64, u64)> {
        Ok((
            u64::from_le_bytes(read_array(&mut r)?),
            u16::from_le_bytes(read_array(&mut r)?),
            u32::from_le_bytes(read_array(&mut r)?),
            i64::from_le_bytes(read_array(&mut r)?),
            u64::from_le_bytes(read_array(&mut r)?),
        ))
    };
    let (event_id, channel_count, sample_rate, start, count) = header().map_err(|e| bad(format!("header: {e}")))?;
    if channel_count as usize != CAPTURE_CHANNELS {
        return Err(bad(format!("expected {CAPTURE_CHANNELS} channels, found {channel_count}")));
    }
    let mut channels: [Vec<f64>; CAPTURE_CHANNELS] = Default::default();
    for ch in channels.iter_mut() {
        ch.reserve(count as usize);
        for _ in 0..count {
            let x = f64::from_le_bytes(read_array(&mut r).map_err(|e| bad(format!("samples: {e}")))?);
            ch.push(x);
        }
    }
    Ok(RawCapture {
        event_id,
        sample_rate,
        capture_start: Timestamp(start),
        channels,
    })
}

fn read_array<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw_000001.pqz");
        let cap = RawCapture {
            event_id: 42,
            sample_rate: 3200,
            capture_start: Timestamp(1_230_768_000_000_000_000),
            channels: std::array::from_fn(|c| (0..100).map(|k| (c * 1000 + k) as f64 * 0.1).collect()),
        };
        write_raw_file(&path, &cap).unwrap();
        assert_eq!(read_raw_file(&path).unwrap(), cap);

        let mut raw = Vec::new();
        GzDecoder::new(File::open(&path).unwrap()).read_to_end(&mut raw).unwrap();
        assert_eq!(&raw[..8], RAW_MAGIC);
        assert_eq!(raw.len(), 8 + 2 + 8 + 2 + 4 + 8 + 8 + 6 * 100 * 8);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.pqz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), Compression::fast());
        enc.write_all(b"not a capture").unwrap();
        enc.finish().unwrap();
        assert!(read_raw_file(&path).is_err());
    }
}

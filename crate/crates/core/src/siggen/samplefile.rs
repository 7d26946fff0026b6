//! On-disk raw sample streams written by `pqstream gen` and read by
//! `pqstream analyze`.
//!
//! A stream directory holds `stream.json` plus `samples_NNNN.bin` chunks.
//! Each chunk stores six channels (Va, Vb, Vc, Ia, Ib, Ic) channel-major as
//! little-endian f64.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SignalConfig, SignalError, WaveformFrame, PHASE_COUNT, SAMPLE_RATE};

pub const MANIFEST_FILE: &str = "stream.json";
const CHANNELS: usize = 2 * PHASE_COUNT;
/// 60 s of samples per chunk.
const DEFAULT_CHUNK_SAMPLES: usize = 60 * SAMPLE_RATE as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub format_version: u32,
    pub sample_rate: u32,
    pub nominal_frequency: f64,
    pub nominal_voltage_rms: f64,
    pub nominal_current_rms: f64,
    pub current_lag_deg: f64,
    /// RFC 3339 timestamp of sample 0.
    pub start_time: String,
    pub total_samples: u64,
    pub frame_length: usize,
    pub chunks: Vec<ChunkEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkEntry {
    pub file: String,
    pub start_sample: u64,
    pub samples: usize,
}

/// Writes `frames` into `dir` (created if missing) and returns the manifest.
pub fn write_sample_dir(
    dir: &Path,
    config: &SignalConfig,
    start_time: &str,
    frames: impl IntoIterator<Item = WaveformFrame>,
) -> Result<StreamManifest, SignalError> {
    fs::create_dir_all(dir)?;
    let mut manifest = StreamManifest {
        format_version: 1,
        sample_rate: SAMPLE_RATE,
        nominal_frequency: config.nominal_frequency,
        nominal_voltage_rms: config.nominal_voltage_rms,
        nominal_current_rms: config.nominal_current_rms,
        current_lag_deg: config.current_lag_deg,
        start_time: start_time.to_string(),
        total_samples: 0,
        frame_length: config.frame_length,
        chunks: Vec::new(),
    };
    let mut pending: [Vec<f64>; CHANNELS] = Default::default();
    let mut chunk_start = 0u64;
    for frame in frames {
        if frame.start_sample_index != manifest.total_samples {
            return Err(SignalError::SampleFile(format!(
                "frame starts at sample {} but {} were expected",
                frame.start_sample_index, manifest.total_samples
            )));
        }
        for (dst, src) in pending.iter_mut().zip(frame.voltage.iter().chain(frame.current.iter())) {
            dst.extend_from_slice(src);
        }
        manifest.total_samples = frame.end_sample_index();
        if pending[0].len() >= DEFAULT_CHUNK_SAMPLES {
            flush_chunk(dir, &mut manifest, &mut pending, &mut chunk_start)?;
        }
    }
    if !pending[0].is_empty() {
        flush_chunk(dir, &mut manifest, &mut pending, &mut chunk_start)?;
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| SignalError::SampleFile(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

fn flush_chunk(
    dir: &Path,
    manifest: &mut StreamManifest,
    pending: &mut [Vec<f64>; CHANNELS],
    chunk_start: &mut u64,
) -> Result<(), SignalError> {
    let name = format!("samples_{:04}.bin", manifest.chunks.len());
    let mut out = BufWriter::new(File::create(dir.join(&name))?);
    let samples = pending[0].len();
    for ch in pending.iter_mut() {
        for x in ch.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
        ch.clear();
    }
    out.flush()?;
    manifest.chunks.push(ChunkEntry {
        file: name,
        start_sample: *chunk_start,
        samples,
    });
    *chunk_start += samples as u64;
    Ok(())
}

/// Opens a stream directory for frame-by-frame reading.
pub fn read_sample_dir(dir: &Path) -> Result<SampleDirReader, SignalError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: StreamManifest =
        serde_json::from_str(&text).map_err(|e| SignalError::SampleFile(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.sample_rate != SAMPLE_RATE {
        return Err(SignalError::SampleFile(format!(
            "sample rate {} is not {SAMPLE_RATE}",
            manifest.sample_rate
        )));
    }
    if manifest.frame_length == 0 {
        return Err(SignalError::SampleFile("frame_length must be > 0".into()));
    }
    Ok(SampleDirReader {
        dir: dir.to_path_buf(),
        manifest,
        next_chunk: 0,
        current: None,
    })
}

/// Streams frames back out of a sample directory, one chunk in memory at a time.
#[derive(Debug)]
pub struct SampleDirReader {
    dir: PathBuf,
    manifest: StreamManifest,
    next_chunk: usize,
    current: Option<LoadedChunk>,
}

#[derive(Debug)]
struct LoadedChunk {
    start_sample: u64,
    channels: [Vec<f64>; CHANNELS],
    offset: usize,
}

impl SampleDirReader {
    pub fn manifest(&self) -> &StreamManifest {
        &self.manifest
    }

    fn load(&mut self, idx: usize) -> Result<LoadedChunk, SignalError> {
        let entry = &self.manifest.chunks[idx];
        let mut reader = BufReader::new(File::open(self.dir.join(&entry.file))?);
        let mut channels: [Vec<f64>; CHANNELS] = Default::default();
        let mut buf = [0u8; 8];
        for ch in channels.iter_mut() {
            ch.reserve_exact(entry.samples);
            for _ in 0..entry.samples {
                reader.read_exact(&mut buf).map_err(|e| {
                    SignalError::SampleFile(format!("{}: truncated chunk ({e})", entry.file))
                })?;
                ch.push(f64::from_le_bytes(buf));
            }
        }
        Ok(LoadedChunk {
            start_sample: entry.start_sample,
            channels,
            offset: 0,
        })
    }
}

impl Iterator for SampleDirReader {
    type Item = Result<WaveformFrame, SignalError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(chunk) = self.current.as_mut() {
                let available = chunk.channels[0].len() - chunk.offset;
                if available > 0 {
                    let len = available.min(self.manifest.frame_length);
                    let range = chunk.offset..chunk.offset + len;
                    let frame = WaveformFrame {
                        start_sample_index: chunk.start_sample + chunk.offset as u64,
                        voltage: std::array::from_fn(|p| chunk.channels[p][range.clone()].to_vec()),
                        current: std::array::from_fn(|p| chunk.channels[PHASE_COUNT + p][range.clone()].to_vec()),
                    };
                    chunk.offset += len;
                    return Some(Ok(frame));
                }
            }
            if self.next_chunk >= self.manifest.chunks.len() {
                return None;
            }
            let idx = self.next_chunk;
            self.next_chunk += 1;
            match self.load(idx) {
                Ok(chunk) => self.current = Some(chunk),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siggen::{generate_frames, DisturbanceScript};

    #[test]
    fn write_then_read_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SignalConfig { duration: 61.3, jitter_rms: 1.0, ..Default::default() };
        let frames = generate_frames(&cfg, &DisturbanceScript::default()).unwrap();
        let manifest = write_sample_dir(dir.path(), &cfg, "2009-01-01T00:00:00Z", frames.clone()).unwrap();
        assert_eq!(manifest.chunks.len(), 2);
        assert_eq!(manifest.total_samples, cfg.total_samples());
        let back: Vec<_> = read_sample_dir(dir.path()).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, frames);
    }
}

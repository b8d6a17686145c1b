//! WAV audio, feature files and envelope dumps.
//!
//! Feature files: `"FDLPFEAT" | version | rows | cols | f32…`, integers
//! little-endian `u32`, values little-endian and row-major.
//!
//! Envelope dumps: `"FDLPENVL" | version | rows | cols | segments`, then
//! `(points, valid)` per segment, then the segments' rows back to back as
//! little-endian `f32`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dsp::Signal;
use crate::error::{Error, Result};
use crate::fdlp::{EnvelopeMatrix, Grid};
use crate::features::{FeatureMatrix, FrameSpec};

pub const FEATURE_MAGIC: &[u8; 8] = b"FDLPFEAT";
pub const ENVELOPE_MAGIC: &[u8; 8] = b"FDLPENVL";
pub const FORMAT_VERSION: u32 = 1;

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::UnsupportedFormat(format!("{}: {other}", path.display())),
    }
}

/// One channel of a 16-bit PCM or 32-bit float WAV file, scaled to [-1, 1].
pub fn read_wav(path: &Path, channel: usize, expected_rate: u32) -> Result<Signal> {
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channel >= channels {
        return Err(Error::invalid(format!(
            "{}: channel {channel} requested, file has {channels}",
            path.display()
        )));
    }
    if spec.sample_rate != expected_rate {
        return Err(Error::RateMismatch {
            expected: expected_rate,
            actual: spec.sample_rate,
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .skip(channel)
            .step_by(channels)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .skip(channel)
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit {format:?} samples (need 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    }
    .map_err(|e| map_hound(path, e))?;
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: non-finite sample {v}",
            path.display()
        )));
    }
    Signal::new(samples, spec.sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Mono WAV. The 16-bit path rounds `x · 32768` and saturates.
pub fn write_wav(path: &Path, signal: &Signal, encoding: WavEncoding) -> Result<()> {
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &x in &signal.samples {
        match encoding {
            WavEncoding::Pcm16 => {
                w.write_sample((x * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
            }
            WavEncoding::Float32 => w.write_sample(x as f32),
        }
        .map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Binary,
    Csv,
}

impl std::str::FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(FeatureFormat::Binary),
            "csv" => Ok(FeatureFormat::Csv),
            other => Err(Error::invalid(format!("unknown feature format {other:?}"))),
        }
    }
}

fn header(magic: &[u8; 8], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = magic.to_vec();
    for v in [FORMAT_VERSION, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn push_f32(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = header(FEATURE_MAGIC, m.num_frames(), m.num_coeffs());
    push_f32(&mut out, m.frames.as_slice());
    out
}

pub fn write_features(m: &FeatureMatrix, path: &Path, format: FeatureFormat) -> Result<()> {
    match format {
        FeatureFormat::Binary => write_bytes(path, &encode_features(m)),
        FeatureFormat::Csv => {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            for r in 0..m.num_frames() {
                let line: Vec<String> = m.frames.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn bad(&self, reason: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<(usize, usize)> {
        if self.take(8)? != magic {
            return Err(self.bad(format!(
                "expected magic {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION as usize {
            return Err(self.bad(format!("unsupported version {version}")));
        }
        Ok((self.u32()?, self.u32()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| self.bad("payload size overflows"))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.bad(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        path,
    };
    let (rows, cols) = c.header(FEATURE_MAGIC)?;
    let data = c.f32s(rows.saturating_mul(cols))?;
    c.finish()?;
    Ok(FeatureMatrix {
        frames: Grid::from_vec(rows, cols, data)?,
        spec: FrameSpec::default(),
    })
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

pub fn read_features_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                reason: format!("line {} has {} fields", i + 1, row.len()),
            });
        }
        data.extend(row);
        rows += 1;
    }
    Ok(FeatureMatrix {
        frames: Grid::from_vec(rows, cols.unwrap_or(0), data)?,
        spec: FrameSpec::default(),
    })
}

pub fn encode_envelopes(segments: &[EnvelopeMatrix]) -> Result<Vec<u8>> {
    let cols = segments.first().map_or(0, |s| s.shape().1);
    if let Some(s) = segments.iter().find(|s| s.shape().1 != cols) {
        return Err(Error::shape(
            format!("{cols} bands"),
            format!("{} bands", s.shape().1),
        ));
    }
    let rows: usize = segments.iter().map(|s| s.shape().0).sum();
    let mut out = header(ENVELOPE_MAGIC, rows, cols);
    out.extend_from_slice(&(segments.len() as u32).to_le_bytes());
    for s in segments {
        out.extend_from_slice(&(s.shape().0 as u32).to_le_bytes());
        out.extend_from_slice(&(s.valid_points() as u32).to_le_bytes());
    }
    for s in segments {
        push_f32(&mut out, s.values().as_slice());
    }
    Ok(out)
}

pub fn decode_envelopes(bytes: &[u8], path: &Path) -> Result<Vec<EnvelopeMatrix>> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        path,
    };
    let (rows, cols) = c.header(ENVELOPE_MAGIC)?;
    let n = c.u32()?;
    let mut table = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        table.push((c.u32()?, c.u32()?));
    }
    if table.iter().map(|t| t.0).sum::<usize>() != rows {
        return Err(c.bad("segment table does not add up to the row count"));
    }
    let mut out = Vec::with_capacity(table.len());
    for (points, valid) in table {
        let data = c.f32s(points * cols)?;
        let m = Grid::from_vec(points, cols, data)
            .and_then(|g| EnvelopeMatrix::new(g, valid))
            .map_err(|e| c.bad(e.to_string()))?;
        out.push(m);
    }
    c.finish()?;
    Ok(out)
}

pub fn write_envelopes(path: &Path, segments: &[EnvelopeMatrix]) -> Result<()> {
    write_bytes(path, &encode_envelopes(segments)?)
}

pub fn read_envelopes(path: &Path) -> Result<Vec<EnvelopeMatrix>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_envelopes(&bytes, path)
}

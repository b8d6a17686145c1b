//! Parameter checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "FDLPCKPT" | version | config_len | config (JSON, UTF-8) | tensor_count
//! per tensor: name_len | name | ndim | dim… | f64 LE values, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::config::EnhancerConfig;
use super::params::{EnhancerParams, Tensor};
use super::train::TrainRecord;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FDLPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &EnhancerParams, config: &EnhancerConfig) -> Result<Vec<u8>> {
    params.check_shapes(config)?;
    let json =
        serde_json::to_vec(config).map_err(|e| Error::invalid(format!("config encoding: {e}")))?;
    let mut out = Vec::with_capacity(64 + json.len() + params.num_values() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, json.len() as u32);
    out.extend_from_slice(&json);
    put_u32(&mut out, params.tensors.len() as u32);
    for t in &params.tensors {
        put_u32(&mut out, t.name.len() as u32);
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u32(&mut out, d as u32);
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
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

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Inverse of [`encode_checkpoint`]; `path` only labels errors.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(EnhancerParams, EnhancerConfig)> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(r.bad("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.bad(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u32()? as usize;
    let config: EnhancerConfig =
        serde_json::from_slice(r.take(len)?).map_err(|e| r.bad(format!("config block: {e}")))?;
    config.validate()?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| r.bad("tensor name is not UTF-8"))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(
            len.checked_mul(8)
                .ok_or_else(|| r.bad("tensor too large"))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(r.bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let params = EnhancerParams { tensors };
    params.check_shapes(&config)?;
    if !params.is_finite() {
        return Err(r.bad("non-finite parameter values"));
    }
    Ok((params, config))
}

pub fn save_checkpoint(
    path: &Path,
    params: &EnhancerParams,
    config: &EnhancerConfig,
) -> Result<()> {
    let bytes = encode_checkpoint(params, config)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(EnhancerParams, EnhancerConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// One `epoch train_loss val_loss` line per record.
pub fn write_loss_history(path: &Path, history: &[TrainRecord]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in history {
        writeln!(f, "{} {:.10e} {:.10e}", r.epoch, r.train_loss, r.val_loss)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_loss_history(path: &Path) -> Result<Vec<TrainRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize| Error::Malformed {
        path: path.to_path_buf(),
        reason: format!("line {line}: expected `epoch train_loss val_loss`"),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(i + 1));
            }
            Ok(TrainRecord {
                epoch: f[0].parse().map_err(|_| bad(i + 1))?,
                train_loss: f[1].parse().map_err(|_| bad(i + 1))?,
                val_loss: f[2].parse().map_err(|_| bad(i + 1))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut c = EnhancerConfig::desk();
        c.input_offset = -3.25;
        c.input_spread = 1.5;
        let p = EnhancerParams::init(&c, 11).unwrap();
        let bytes = encode_checkpoint(&p, &c).unwrap();
        let (p2, c2) = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
        assert_eq!(c, c2);
        for (a, b) in p.tensors.iter().zip(&p2.tensors) {
            assert_eq!(a.name, b.name);
            assert!(a
                .data
                .iter()
                .zip(&b.data)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_corruption() {
        let c = EnhancerConfig::desk();
        let p = EnhancerParams::init(&c, 1).unwrap();
        let bytes = encode_checkpoint(&p, &c).unwrap();
        let path = Path::new("x.ckpt");
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3], path),
            Err(Error::Malformed { .. })
        ));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_checkpoint(&wrong, path).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra, path).is_err());
    }

    #[test]
    fn loss_history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.txt");
        let h = vec![
            TrainRecord {
                epoch: 0,
                train_loss: 1.5,
                val_loss: 1.75,
            },
            TrainRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.625,
            },
        ];
        write_loss_history(&path, &h).unwrap();
        assert_eq!(read_loss_history(&path).unwrap(), h);
    }
}

//! Frame-level log features from envelope matrices.

use crate::error::{Error, Result};
use crate::fdlp::{EnvelopeMatrix, Grid};

/// Integration window and hop in envelope samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub window: usize,
    pub shift: usize,
}

impl Default for FrameSpec {
    /// 25 ms windows every 10 ms at 400 envelope samples per second.
    fn default() -> Self {
        FrameSpec {
            window: 10,
            shift: 4,
        }
    }
}

impl FrameSpec {
    pub fn for_rate(envelope_rate: u32) -> Result<Self> {
        let r = envelope_rate as f64;
        let spec = FrameSpec {
            window: (0.025 * r).round() as usize,
            shift: (0.010 * r).round() as usize,
        };
        if spec.window == 0 || spec.shift == 0 {
            return Err(Error::invalid(format!(
                "envelope rate {envelope_rate} Hz is too low for 10 ms frames"
            )));
        }
        Ok(spec)
    }

    /// Frames that fit in `valid` samples.
    pub fn frame_count(&self, valid: usize) -> usize {
        if valid < self.window {
            0
        } else {
            (valid - self.window) / self.shift + 1
        }
    }
}

/// F×Q log features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: Grid,
    pub spec: FrameSpec,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn num_coeffs(&self) -> usize {
        self.frames.cols()
    }

    /// All parts stacked in order.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let cols = parts.first().map_or(0, |p| p.num_coeffs());
        let spec = parts.first().map_or_else(FrameSpec::default, |p| p.spec);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.num_coeffs() != cols && p.num_frames() > 0 {
                return Err(Error::shape(
                    format!("{cols} columns"),
                    format!("{} columns", p.num_coeffs()),
                ));
            }
            rows += p.num_frames();
            data.extend_from_slice(p.frames.as_slice());
        }
        Ok(FeatureMatrix {
            frames: Grid::from_vec(rows, cols, data)?,
            spec,
        })
    }
}

/// Mean of each window of valid envelope rows, then `ln max(·, floor)`.
pub fn integrate(env: &EnvelopeMatrix, spec: FrameSpec, floor: f64) -> Result<FeatureMatrix> {
    if spec.window == 0 || spec.shift == 0 {
        return Err(Error::invalid("frame window and shift must be positive"));
    }
    if !(floor > 0.0) {
        return Err(Error::invalid("log floor must be positive"));
    }
    let q = env.shape().1;
    let f = spec.frame_count(env.valid_points());
    let values = env.values();
    let mut frames = Grid::zeros(f, q);
    for i in 0..f {
        let start = i * spec.shift;
        for b in 0..q {
            let sum: f64 = (start..start + spec.window).map(|r| values.get(r, b)).sum();
            frames.set(i, b, (sum / spec.window as f64).max(floor).ln());
        }
    }
    Ok(FeatureMatrix { frames, spec })
}

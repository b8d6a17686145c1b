use crate::error::{Error, Result};
use crate::fdlp::{clamped_gain, EnvelopeMatrix, GainMatrix, Grid};

/// Channels whose variance over time falls below this are left out of the
/// decorrelation term.
pub const MIN_CHANNEL_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub mse: f64,
    pub decorrelation: f64,
    /// Bands skipped by the decorrelation term for lack of variance.
    pub excluded_channels: Vec<usize>,
    /// dL/d(enhanced log envelope), which equals dL/d(log gain). Rows past
    /// the valid length are zero.
    pub grad: Grid,
}

/// Log-domain quantities a loss evaluation needs, precomputed once per
/// training segment.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTarget {
    /// `ln max(reverb, floor)`
    pub log_reverb: Grid,
    /// `ln` of the clamped clean/reverb gain.
    pub log_gain_target: Grid,
    pub valid_rows: usize,
}

impl LossTarget {
    pub fn new(
        reverb: &EnvelopeMatrix,
        clean: &EnvelopeMatrix,
        envelope_floor: f64,
        gain_floor: f64,
    ) -> Result<Self> {
        let target = clamped_gain(clean, reverb, gain_floor)?;
        let (t, q) = target.shape();
        let log_target = target.values().as_slice().iter().map(|g| g.ln()).collect();
        Ok(LossTarget {
            log_reverb: reverb.log_floored(envelope_floor),
            log_gain_target: Grid::from_vec(t, q, log_target)?,
            valid_rows: reverb.valid_points().min(clean.valid_points()),
        })
    }
}

/// Decorrelation-regularized log-envelope MSE of a predicted gain.
pub fn loss(
    predicted: &GainMatrix,
    reverb: &EnvelopeMatrix,
    clean: &EnvelopeMatrix,
    reg_weight: f64,
    envelope_floor: f64,
    gain_floor: f64,
) -> Result<LossValue> {
    let target = LossTarget::new(reverb, clean, envelope_floor, gain_floor)?;
    let (t, q) = predicted.shape();
    let log_gain = Grid::from_vec(
        t,
        q,
        predicted
            .values()
            .as_slice()
            .iter()
            .map(|g| g.ln())
            .collect(),
    )?;
    loss_from_log_gain(&log_gain, &target, reg_weight)
}

pub fn loss_from_log_gain(
    log_gain: &Grid,
    target: &LossTarget,
    reg_weight: f64,
) -> Result<LossValue> {
    if log_gain.shape() != target.log_gain_target.shape() {
        return Err(Error::shape(
            format!("{:?}", target.log_gain_target.shape()),
            format!("{:?}", log_gain.shape()),
        ));
    }
    if !(reg_weight >= 0.0) {
        return Err(Error::invalid("regularization weight must be non-negative"));
    }
    let (t_all, q) = log_gain.shape();
    let t = target.valid_rows;
    let mut grad = Grid::zeros(t_all, q);
    if t == 0 {
        return Ok(LossValue {
            total: 0.0,
            mse: 0.0,
            decorrelation: 0.0,
            excluded_channels: (0..q).collect(),
            grad,
        });
    }
    let n = (t * q) as f64;
    let mut mse = 0.0;
    for r in 0..t {
        for j in 0..q {
            let e = log_gain.get(r, j) - target.log_gain_target.get(r, j);
            mse += e * e / n;
            grad.set(r, j, 2.0 * e / n);
        }
    }
    let (decorrelation, excluded, d_enh) = decorrelation(log_gain, &target.log_reverb, t);
    for r in 0..t {
        for j in 0..q {
            let g = grad.get(r, j) + reg_weight * d_enh[j * t + r];
            grad.set(r, j, g);
        }
    }
    Ok(LossValue {
        total: mse + reg_weight * decorrelation,
        mse,
        decorrelation,
        excluded_channels: excluded,
        grad,
    })
}

/// Mean squared off-diagonal correlation between the band trajectories of
/// `log_gain + log_reverb` over the first `t` rows, with its gradient laid
/// out `[Q][t]`.
fn decorrelation(log_gain: &Grid, log_reverb: &Grid, t: usize) -> (f64, Vec<usize>, Vec<f64>) {
    let q = log_gain.cols();
    let tf = t as f64;
    let mut z = vec![0.0; q * t];
    let mut spread = vec![0.0; q];
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for j in 0..q {
        let ch = &mut z[j * t..(j + 1) * t];
        for (r, v) in ch.iter_mut().enumerate() {
            *v = log_gain.get(r, j) + log_reverb.get(r, j);
        }
        let mean = ch.iter().sum::<f64>() / tf;
        ch.iter_mut().for_each(|v| *v -= mean);
        let var = ch.iter().map(|v| v * v).sum::<f64>() / tf;
        if var < MIN_CHANNEL_VARIANCE {
            excluded.push(j);
            ch.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let s = var.sqrt();
        ch.iter_mut().for_each(|v| *v /= s);
        spread[j] = s;
        kept.push(j);
    }
    let mut grad = vec![0.0; q * t];
    if kept.len() < 2 {
        return (0.0, excluded, grad);
    }
    let pairs = (kept.len() * (kept.len() - 1)) as f64;
    let mut corr = vec![0.0; q * q];
    let mut d = 0.0;
    for (a, &i) in kept.iter().enumerate() {
        for &j in &kept[a + 1..] {
            let c = z[i * t..(i + 1) * t]
                .iter()
                .zip(&z[j * t..(j + 1) * t])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / tf;
            corr[i * q + j] = c;
            corr[j * q + i] = c;
            d += 2.0 * c * c / pairs;
        }
    }
    for &i in &kept {
        let mut dz = vec![0.0; t];
        for &j in &kept {
            let c = corr[i * q + j];
            if j == i || c == 0.0 {
                continue;
            }
            let k = 4.0 * c / (pairs * tf);
            for (o, zj) in dz.iter_mut().zip(&z[j * t..(j + 1) * t]) {
                *o += k * zj;
            }
        }
        // Through the variance normalization, then the mean removal.
        let zi = &z[i * t..(i + 1) * t];
        let proj = zi.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>() / tf;
        let du: Vec<f64> = dz
            .iter()
            .zip(zi)
            .map(|(g, zv)| (g - zv * proj) / spread[i])
            .collect();
        let mean = du.iter().sum::<f64>() / tf;
        for (o, v) in grad[i * t..(i + 1) * t].iter_mut().zip(du) {
            *o = v - mean;
        }
    }
    (d.min(1.0), excluded, grad)
}

//! Numerical primitives: orthonormal DCT-II, analytic-signal envelopes,
//! autocorrelation, Levinson-Durbin recursion and all-pole envelope
//! evaluation. Everything here is 64-bit and free of shared state.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A mono sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// All-pole model `g² / |A(e^{jω})|²` with `A(z) = Σ a[k] z^{-k}`, `a[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    coeffs: Vec<f64>,
    gain: f64,
}

impl LpModel {
    pub fn new(coeffs: Vec<f64>, gain: f64) -> Result<Self> {
        if coeffs.first() != Some(&1.0) {
            return Err(Error::invalid("LP coefficients must start with a[0] = 1"));
        }
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::invalid(format!(
                "LP gain must be positive, got {gain}"
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite LP coefficient"));
        }
        Ok(LpModel { coeffs, gain })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }
}

fn fft_forward(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(buf.len()).process(buf);
}

fn fft_inverse(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_inverse(buf.len()).process(buf);
}

fn dct_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal DCT-II, computed with one N-point complex FFT (Makhoul's
/// even/odd reordering).
pub fn dct_ii(signal: &[f64]) -> Result<Vec<f64>> {
    let n = signal.len();
    if n == 0 {
        return Err(Error::invalid("dct_ii of an empty sequence"));
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        v[i].re = signal[2 * i];
    }
    for i in 0..n / 2 {
        v[n - 1 - i].re = signal[2 * i + 1];
    }
    fft_forward(&mut v);
    Ok(v.iter()
        .enumerate()
        .map(|(k, vk)| {
            let w = Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64));
            (w * vk).re * dct_scale(k, n)
        })
        .collect())
}

/// Inverse of [`dct_ii`] (orthonormal DCT-III).
pub fn idct_ii(coeffs: &[f64]) -> Result<Vec<f64>> {
    let n = coeffs.len();
    if n == 0 {
        return Err(Error::invalid("idct_ii of an empty sequence"));
    }
    let unscaled: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c / dct_scale(k, n))
        .collect();
    let mut v: Vec<Complex64> = (0..n)
        .map(|k| {
            let mirror = if k == 0 { 0.0 } else { unscaled[n - k] };
            let w = Complex64::from_polar(1.0, PI * k as f64 / (2.0 * n as f64));
            w * Complex64::new(unscaled[k], -mirror)
        })
        .collect();
    fft_inverse(&mut v);
    let mut out = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        out[2 * i] = v[i].re / n as f64;
    }
    for i in 0..n / 2 {
        out[2 * i + 1] = v[n - 1 - i].re / n as f64;
    }
    Ok(out)
}

/// Squared magnitude of the analytic signal (one-sided spectrum doubling).
pub fn analytic_envelope(signal: &[f64]) -> Result<Vec<f64>> {
    let n = signal.len();
    if n == 0 {
        return Err(Error::invalid("analytic_envelope of an empty sequence"));
    }
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    let half = n / 2;
    for (k, b) in buf.iter_mut().enumerate() {
        let h = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *b *= h;
    }
    fft_inverse(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(buf.iter().map(|c| (c * scale).norm_sqr()).collect())
}

/// Biased autocorrelation `r[k] = Σ x[n] x[n+k] / N` for lags `0..=max_lag`.
pub fn autocorr(sequence: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = sequence.len();
    if max_lag >= n {
        return Err(Error::invalid(format!(
            "autocorrelation lag {max_lag} needs more than {n} samples"
        )));
    }
    Ok((0..=max_lag)
        .map(|k| {
            sequence[..n - k]
                .iter()
                .zip(&sequence[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect())
}

/// Solves the Toeplitz normal equations for the order `r.len() - 1`
/// predictor. The returned gain is the square root of the final
/// prediction-error power.
pub fn levinson_durbin(r: &[f64]) -> Result<LpModel> {
    let Some(&r0) = r.first() else {
        return Err(Error::invalid("empty autocorrelation"));
    };
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::invalid(format!("r[0] must be positive, got {r0}")));
    }
    let p = r.len() - 1;
    let mut a = vec![0.0; p + 1];
    a[0] = 1.0;
    let mut prev = a.clone();
    let mut err = r0;
    for i in 1..=p {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        prev[..i].copy_from_slice(&a[..i]);
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            return Err(Error::NumericalDegeneracy {
                order: i,
                context: format!("prediction error {err:e} with reflection coefficient {k}"),
            });
        }
    }
    LpModel::new(a, err.sqrt())
}

/// Evaluates `g² / |A(e^{jω})|²` at `ω_m = π m / M`, `m = 0..M`.
pub fn all_pole_envelope(model: &LpModel, num_points: usize) -> Result<Vec<f64>> {
    if num_points == 0 {
        return Err(Error::invalid("all_pole_envelope needs at least one point"));
    }
    let order = model.order();
    // FFT length is a multiple of 2M large enough to hold A without aliasing.
    let stride = (order + 1).div_ceil(2 * num_points).max(1);
    let len = 2 * num_points * stride;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (b, &c) in buf.iter_mut().zip(model.coeffs()) {
        b.re = c;
    }
    fft_forward(&mut buf);
    let g2 = model.gain() * model.gain();
    Ok((0..num_points)
        .map(|m| g2 / buf[m * stride].norm_sqr())
        .collect())
}

/// Full linear convolution via FFT.
pub fn linear_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    // Trailing zeros of either input contribute nothing; dropping them lets
    // short impulse responses take the exact direct path.
    let trim = |v: &[f64]| v.len() - v.iter().rev().take_while(|&&s| s == 0.0).count();
    let (x_full, h_full) = (x.len(), h.len());
    let (x, h) = (&x[..trim(x).max(1)], &h[..trim(h).max(1)]);
    if x.len() < x_full || h.len() < h_full {
        let mut out = linear_convolve(x, h);
        out.resize(out_len, 0.0);
        return out;
    }
    if x.len().min(h.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &xi) in x.iter().enumerate() {
            for (j, &hj) in h.iter().enumerate() {
                out[i + j] += xi * hj;
            }
        }
        return out;
    }
    let len = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut a = vec![Complex64::new(0.0, 0.0); len];
    let mut b = a.clone();
    for (d, &s) in a.iter_mut().zip(x) {
        d.re = s;
    }
    for (d, &s) in b.iter_mut().zip(h) {
        d.re = s;
    }
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.iter().take(out_len).map(|c| c.re / len as f64).collect()
}

/// Frequency (Hz) of the largest spectral peak of a mean-removed
/// sequence within `[f_lo, f_hi]`, refined by parabolic interpolation on a
/// zero-padded FFT.
pub fn dominant_frequency(sequence: &[f64], rate: f64, f_lo: f64, f_hi: f64) -> f64 {
    let n = sequence.len();
    if n == 0 {
        return 0.0;
    }
    let mean = sequence.iter().sum::<f64>() / n as f64;
    let len = (16 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (b, &v) in buf.iter_mut().zip(sequence) {
        b.re = v - mean;
    }
    fft_forward(&mut buf);
    let df = rate / len as f64;
    let lo = ((f_lo / df).ceil() as usize).max(1);
    let hi = ((f_hi / df).floor() as usize).min(len / 2 - 1);
    if lo >= hi {
        return 0.0;
    }
    let mag: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
    let k = (lo..=hi)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .unwrap();
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 {
        0.5 * (a - c) / denom
    } else {
        0.0
    };
    (k as f64 + shift) * df
}

/// Zeroes every DFT bin outside `[f_lo, f_hi]` Hz; the result is real.
pub fn band_limit(signal: &[f64], sample_rate: u32, f_lo: f64, f_hi: f64) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    let df = sample_rate as f64 / n as f64;
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * df;
        if f < f_lo || f > f_hi {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    fft_inverse(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

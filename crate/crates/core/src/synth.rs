//! Synthetic clean material: tones, click trains, amplitude-modulated
//! band-limited noise and a syllable-like burst generator.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsp::band_limit;

pub fn tone(freq: f64, amplitude: f64, len: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    (0..len)
        .map(|n| amplitude * (2.0 * PI * freq * n as f64 / fs).cos())
        .collect()
}

/// Unit impulses every `period` seconds starting at `offset` seconds.
pub fn click_train(period: f64, offset: f64, len: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    let mut t = offset;
    while ((t * fs).round() as usize) < len {
        out[(t * fs).round() as usize] = 1.0;
        t += period;
    }
    out
}

fn gaussian_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Gaussian noise limited to `[f_lo, f_hi]` and multiplied by
/// `1 + depth · sin(2π f_mod t)`, normalized to unit RMS before modulation.
pub fn am_band_noise(
    f_lo: f64,
    f_hi: f64,
    mod_hz: f64,
    depth: f64,
    len: usize,
    sample_rate: u32,
    seed: u64,
) -> Vec<f64> {
    let carrier = normalize_rms(
        band_limit(&gaussian_noise(len, seed), sample_rate, f_lo, f_hi),
        0.1,
    );
    let fs = sample_rate as f64;
    carrier
        .into_iter()
        .enumerate()
        .map(|(n, c)| c * (1.0 + depth * (2.0 * PI * mod_hz * n as f64 / fs).sin()))
        .collect()
}

/// Band-limited noise whose amplitude follows `modulator`.
pub fn modulated_band_noise(
    modulator: &[f64],
    f_lo: f64,
    f_hi: f64,
    sample_rate: u32,
    seed: u64,
) -> Vec<f64> {
    let noise = gaussian_noise(modulator.len(), seed);
    let shaped: Vec<f64> = noise.iter().zip(modulator).map(|(a, m)| a * m).collect();
    band_limit(&shaped, sample_rate, f_lo, f_hi)
}

fn normalize_rms(mut x: Vec<f64>, target: f64) -> Vec<f64> {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        for v in &mut x {
            *v *= target / rms;
        }
    }
    x
}

/// On/off envelope with raised-cosine ramps: bursts of 80–300 ms separated
/// by 60–400 ms of silence.
pub fn burst_envelope(len: usize, sample_rate: u32, ramp_seconds: f64, seed: u64) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = vec![0.0; len];
    let ramp = (ramp_seconds * fs).max(1.0);
    let mut start = rng.gen_range(0.02..0.2) * fs;
    while start < len as f64 {
        let dur = rng.gen_range(0.08..0.3) * fs;
        let level = rng.gen_range(0.3..1.0);
        let end = (start + dur).min(len as f64);
        for (n, e) in env
            .iter_mut()
            .enumerate()
            .take(end as usize)
            .skip(start as usize)
        {
            let t = n as f64;
            let up = ((t - start) / ramp).min(1.0);
            let down = ((end - t) / ramp).min(1.0);
            let w = up.min(down).clamp(0.0, 1.0);
            *e = level * 0.5 * (1.0 - (PI * w).cos());
        }
        start = end + rng.gen_range(0.06..0.4) * fs;
    }
    env
}

/// Syllable-like test material: voiced bursts (harmonic complexes with
/// random pitch and spectral tilt) and fricative bursts (high-pass noise)
/// separated by silences. Peak level stays well inside [-1, 1].
pub fn speech_like(sample_rate: u32, len: usize, seed: u64) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let mut out = vec![0.0; len];
    let mut start = (rng.gen_range(0.02..0.2) * fs) as usize;
    while start < len {
        let dur = (rng.gen_range(0.08..0.3) * fs) as usize;
        let end = (start + dur).min(len);
        let n = end - start;
        let ramp = (0.012 * fs) as usize;
        let level = rng.gen_range(0.05..0.3);
        let burst: Vec<f64> = if rng.gen_bool(0.7) {
            let f0 = rng.gen_range(90.0..260.0);
            let tilt = rng.gen_range(0.6..1.4);
            let glide = rng.gen_range(-0.3..0.3);
            let phases: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let harmonics = ((6800.0 / f0) as usize).min(64);
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    let phase = 2.0 * PI * f0 * (t + 0.5 * glide * t * t);
                    (1..=harmonics)
                        .map(|h| (h as f64).powf(-tilt) * (h as f64 * phase + phases[h - 1]).sin())
                        .sum::<f64>()
                })
                .collect()
        } else {
            let lo = rng.gen_range(1500.0..4000.0);
            let noise = gaussian_noise(n, rng.gen());
            band_limit(&noise, sample_rate, lo, 7000.0)
        };
        let burst = normalize_rms(burst, level);
        for (i, v) in burst.into_iter().enumerate() {
            let w = (i.min(n - 1 - i) as f64 / ramp as f64).min(1.0);
            out[start + i] = v * 0.5 * (1.0 - (PI * w).cos());
        }
        start = end + (rng.gen_range(0.06..0.4) * fs) as usize;
    }
    for v in &mut out {
        *v = v.clamp(-0.99, 0.99);
    }
    out
}

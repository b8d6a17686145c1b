//! Synthetic room impulse responses and clean/reverberant pairs.
//!
//! The RIR model is a unit direct-path impulse followed by zero-mean
//! Gaussian noise whose amplitude decays as `exp(-6.9 t / T60)`, i.e. the
//! energy falls by 60 dB after T60 seconds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{linear_convolve, Signal};
use crate::error::{Error, Result};
use crate::synth;

/// Decay constant: `ln(10^3)`, amplitude factor for 60 dB of energy decay.
pub const DECAY_60DB: f64 = 6.907755278982137;

pub const DEFAULT_EARLY_BOUNDARY: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirSpec {
    pub t60: f64,
    pub direct_delay: f64,
    pub length: f64,
    pub seed: u64,
    pub sample_rate: u32,
    /// Reverberant-tail energy relative to the unit direct path
    /// (1.0 is a 0 dB direct-to-reverberant ratio).
    pub tail_energy: f64,
}

impl RirSpec {
    pub fn new(t60: f64, seed: u64) -> Self {
        RirSpec {
            t60,
            direct_delay: 0.0,
            length: t60.max(0.05),
            seed,
            sample_rate: 16000,
            tail_energy: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t60 > 0.0) || !self.t60.is_finite() {
            return Err(Error::invalid(format!(
                "t60 must be positive, got {}",
                self.t60
            )));
        }
        if !(self.direct_delay >= 0.0) || !(self.direct_delay < self.length) {
            return Err(Error::invalid(format!(
                "direct delay {} must lie in [0, length {})",
                self.direct_delay, self.length
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(self.tail_energy >= 0.0) || !self.tail_energy.is_finite() {
            return Err(Error::invalid(
                "tail energy must be finite and non-negative",
            ));
        }
        Ok(())
    }

    fn delay_samples(&self) -> usize {
        (self.direct_delay * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub samples: Vec<f64>,
    pub spec: RirSpec,
}

impl Rir {
    pub fn direct_index(&self) -> usize {
        self.spec.delay_samples()
    }

    pub fn energy_between(&self, from: f64, to: f64) -> f64 {
        let fs = self.spec.sample_rate as f64;
        let lo = ((from * fs).round() as usize).min(self.samples.len());
        let hi = ((to * fs).round() as usize).min(self.samples.len());
        self.samples[lo..hi].iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverbPair {
    pub clean: Signal,
    pub reverberant: Signal,
    pub rir: Rir,
    pub clean_index: usize,
}

pub fn synth_rir(spec: &RirSpec) -> Result<Rir> {
    spec.validate()?;
    let fs = spec.sample_rate as f64;
    let len = ((spec.length * fs).round() as usize).max(1);
    let delay = spec.delay_samples();
    let mut samples = vec![0.0; len];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tail_sum = 0.0;
    for (i, s) in samples.iter_mut().enumerate().skip(delay + 1) {
        let t = (i - delay) as f64 / fs;
        let v = rng.sample::<f64, _>(StandardNormal) * (-DECAY_60DB * t / spec.t60).exp();
        tail_sum += v * v;
        *s = v;
    }
    let scale = if tail_sum > 0.0 {
        (spec.tail_energy / tail_sum).sqrt()
    } else {
        0.0
    };
    for s in samples.iter_mut().skip(delay + 1) {
        // The direct path stays the strict global maximum.
        *s = (*s * scale).clamp(-0.99, 0.99);
    }
    if delay < len {
        samples[delay] = 1.0;
    }
    Ok(Rir {
        samples,
        spec: spec.clone(),
    })
}

/// Linear convolution truncated to the clean signal's length.
pub fn convolve_truncate(clean: &Signal, rir: &Rir) -> Result<Signal> {
    if clean.sample_rate != rir.spec.sample_rate {
        return Err(Error::RateMismatch {
            expected: clean.sample_rate,
            actual: rir.spec.sample_rate,
        });
    }
    let mut out = linear_convolve(&clean.samples, &rir.samples);
    out.truncate(clean.len());
    Signal::new(out, clean.sample_rate)
}

/// Splits at `direct_delay + boundary`; the two parts sum to the input.
pub fn split_early_late(rir: &Rir, boundary: f64) -> Result<(Rir, Rir)> {
    let fs = rir.spec.sample_rate as f64;
    let total = rir.samples.len() as f64 / fs;
    if !(boundary > 0.0 && boundary < total) {
        return Err(Error::invalid(format!(
            "early/late boundary {boundary} s outside (0, {total})"
        )));
    }
    let cut = (rir.direct_index() + (boundary * fs).round() as usize).min(rir.samples.len());
    let mut early = rir.samples.clone();
    let mut late = vec![0.0; rir.samples.len()];
    late[cut..].copy_from_slice(&rir.samples[cut..]);
    early[cut..].iter_mut().for_each(|v| *v = 0.0);
    Ok((
        Rir {
            samples: early,
            spec: rir.spec.clone(),
        },
        Rir {
            samples: late,
            spec: rir.spec.clone(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Every clean signal with every RIR, clean-major order.
    Exhaustive,
    /// Each clean signal with `per_clean` distinct RIRs drawn by the
    /// pairing seed.
    Random { per_clean: usize },
}

/// One dataset entry before convolution: which clean signal meets which RIR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairPlan {
    pub clean_index: usize,
    pub rir_index: usize,
}

pub fn plan_pairs(
    num_clean: usize,
    num_rirs: usize,
    pairing: Pairing,
    pairing_seed: u64,
) -> Result<Vec<PairPlan>> {
    if num_clean == 0 || num_rirs == 0 {
        return Err(Error::invalid(
            "dataset needs at least one clean signal and one RIR",
        ));
    }
    Ok(match pairing {
        Pairing::Exhaustive => (0..num_clean)
            .flat_map(|c| {
                (0..num_rirs).map(move |r| PairPlan {
                    clean_index: c,
                    rir_index: r,
                })
            })
            .collect(),
        Pairing::Random { per_clean } => {
            if per_clean == 0 || per_clean > num_rirs {
                return Err(Error::invalid(format!(
                    "cannot draw {per_clean} distinct RIRs out of {num_rirs}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(pairing_seed);
            let all: Vec<usize> = (0..num_rirs).collect();
            (0..num_clean)
                .flat_map(|c| {
                    all.choose_multiple(&mut rng, per_clean)
                        .map(|&r| PairPlan {
                            clean_index: c,
                            rir_index: r,
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        }
    })
}

pub fn make_dataset(
    clean_signals: &[Signal],
    rir_specs: &[RirSpec],
    pairing: Pairing,
    pairing_seed: u64,
) -> Result<Vec<ReverbPair>> {
    let plan = plan_pairs(clean_signals.len(), rir_specs.len(), pairing, pairing_seed)?;
    let rirs = rir_specs
        .par_iter()
        .map(synth_rir)
        .collect::<Result<Vec<_>>>()?;
    plan.par_iter()
        .map(|p| {
            let clean = &clean_signals[p.clean_index];
            let rir = &rirs[p.rir_index];
            Ok(ReverbPair {
                clean: clean.clone(),
                reverberant: convolve_truncate(clean, rir)?,
                rir: rir.clone(),
                clean_index: p.clean_index,
            })
        })
        .collect()
}

/// `count` specs with T60 uniform in `[t60_lo, t60_hi]` and per-spec seeds
/// derived from `seed`.
pub fn random_rir_specs(
    count: usize,
    t60_lo: f64,
    t60_hi: f64,
    sample_rate: u32,
    seed: u64,
) -> Vec<RirSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t60 = if t60_hi > t60_lo {
                rng.gen_range(t60_lo..=t60_hi)
            } else {
                t60_lo
            };
            RirSpec {
                sample_rate,
                ..RirSpec::new(t60, rng.gen())
            }
        })
        .collect()
}

/// `count` syllable-like clean signals of `seconds` each, signal `i` paired
/// with its own RIR whose T60 is uniform in `[t60_lo, t60_hi]`.
pub fn synthetic_pairs(
    count: usize,
    seconds: f64,
    t60_lo: f64,
    t60_hi: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<ReverbPair>> {
    if count == 0 || !(seconds > 0.0) {
        return Err(Error::invalid(
            "synthetic corpus needs a positive count and duration",
        ));
    }
    let len = (seconds * sample_rate as f64).round() as usize;
    let specs = random_rir_specs(count, t60_lo, t60_hi, sample_rate, seed ^ 0x0052_4952);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let clean = Signal::new(
                synth::speech_like(
                    sample_rate,
                    len,
                    seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                ),
                sample_rate,
            )?;
            let rir = synth_rir(&specs[i])?;
            Ok(ReverbPair {
                reverberant: convolve_truncate(&clean, &rir)?,
                clean,
                rir,
                clean_index: i,
            })
        })
        .collect()
}

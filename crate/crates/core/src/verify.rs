//! Self-contained model-assumption and numerical checks.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dsp::{
    all_pole_envelope, analytic_envelope, autocorr, band_limit, dct_ii, dominant_frequency,
    idct_ii, levinson_durbin, linear_convolve, LpModel, Signal,
};
use crate::enhancer::{
    forward_cached, held_out_report, loss_and_grad, loss_from_log_gain, EnhancerConfig,
    EnhancerParams, TrainingExample,
};
use crate::error::Result;
use crate::fdlp::{EnvelopeMatrix, FdlpAnalyzer, FdlpConfig, Grid, Segment};
use crate::reverb::{
    convolve_truncate, split_early_late, synth_rir, RirSpec, DEFAULT_EARLY_BOUNDARY,
};
use crate::synth;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured < threshold`.
    pub fn below(
        name: impl Into<String>,
        measured: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        Check {
            name: name.into(),
            measured,
            threshold,
            passed: measured < threshold,
            detail: detail.into(),
        }
    }

    /// Passes when `measured >= threshold`.
    pub fn at_least(
        name: impl Into<String>,
        measured: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        Check {
            name: name.into(),
            measured,
            threshold,
            passed: measured >= threshold,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.4e}, threshold {:.4e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(
            f,
            "{} of {} checks passed",
            self.checks.len() - self.failures(),
            self.checks.len()
        )
    }
}

fn gaussian(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
fn dense_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    x
}

/// DCT round trip, Levinson-Durbin against a dense Toeplitz solve, and the
/// all-pole envelope against direct polynomial evaluation.
pub fn numeric_core_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for n in [1usize, 2, 7, 64, 1000, 4096, 32000] {
        let x = gaussian(n, &mut rng);
        let y = idct_ii(&dct_ii(&x)?)?;
        worst = worst.max(rel_l2(&y, &x));
    }
    let dct = Check::below(
        "dct round trip",
        worst,
        1e-9,
        "relative L2, lengths 1 to 32000",
    );

    let mut worst_ld = 0.0f64;
    for p in 1..=32 {
        let x = gaussian(8 * p + 64, &mut rng);
        let r = autocorr(&x, p)?;
        let model = levinson_durbin(&r)?;
        let toeplitz = (0..p)
            .map(|i| (0..p).map(|j| r[i.abs_diff(j)]).collect())
            .collect();
        let rhs: Vec<f64> = (1..=p).map(|k| -r[k]).collect();
        let dense = dense_solve(toeplitz, rhs);
        worst_ld = worst_ld.max(rel_l2(&model.coeffs()[1..], &dense));
    }
    let ld = Check::below(
        "levinson-durbin vs dense solve",
        worst_ld,
        1e-8,
        "relative L2, orders 1 to 32",
    );

    let mut worst_ap = 0.0f64;
    for p in [1usize, 4, 16, 40, 160] {
        let x = gaussian(4 * p + 32, &mut rng);
        let model: LpModel = levinson_durbin(&autocorr(&x, p)?)?;
        let m = 800;
        let env = all_pole_envelope(&model, m)?;
        for (i, v) in env.iter().enumerate() {
            let w = PI * i as f64 / m as f64;
            let (re, im) = model
                .coeffs()
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(re, im), (k, a)| {
                    (re + a * (w * k as f64).cos(), im - a * (w * k as f64).sin())
                });
            let direct = model.gain().powi(2) / (re * re + im * im);
            worst_ap = worst_ap.max((v - direct).abs() / direct);
        }
    }
    let ap = Check::below(
        "all-pole envelope vs direct evaluation",
        worst_ap,
        1e-10,
        "max relative error",
    );
    Ok(vec![dct, ld, ap])
}

/// The 4 Hz modulation of AM band noise must appear in the FDLP envelope at
/// the same frequency the analytic-signal envelope shows.
pub fn fdlp_modulation_check(config: &FdlpConfig, seed: u64) -> Result<Check> {
    let analyzer = FdlpAnalyzer::new(config.clone())?;
    let n = config.segment_len();
    let (f_lo, f_hi) = (900.0, 1300.0);
    let x = synth::am_band_noise(f_lo, f_hi, 4.0, 0.8, n, config.sample_rate, seed);
    let env = analyzer.envelopes(&Segment {
        index: 0,
        samples: x.clone(),
        valid_len: n,
    })?;
    let band = analyzer
        .windows()
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.center_hz - 1100.0)
                .abs()
                .total_cmp(&(b.1.center_hz - 1100.0).abs())
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let fdlp = dominant_frequency(
        &env.values().column(band),
        config.envelope_rate as f64,
        1.0,
        20.0,
    );
    let oracle = dominant_frequency(
        &analytic_envelope(&x)?,
        config.sample_rate as f64,
        1.0,
        20.0,
    );
    Ok(Check::below(
        "fdlp modulation frequency",
        (fdlp - oracle).abs(),
        0.5,
        format!("fdlp {fdlp:.3} Hz, analytic {oracle:.3} Hz"),
    ))
}

/// Setup of the envelope-convolution experiment: a burst-modulated tone at
/// `center_hz`, band-limited to each bandwidth, reverberated by
/// `realizations` independent RIRs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionModelSetup {
    pub center_hz: f64,
    pub bandwidths: Vec<f64>,
    pub t60: f64,
    pub realizations: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for ConvolutionModelSetup {
    fn default() -> Self {
        ConvolutionModelSetup {
            center_hz: 1000.0,
            bandwidths: vec![400.0, 200.0, 100.0],
            t60: 0.3,
            realizations: 16,
            seconds: 2.0,
            sample_rate: 16000,
            seed: 1,
        }
    }
}

impl ConvolutionModelSetup {
    fn len(&self) -> usize {
        (self.seconds * self.sample_rate as f64).round() as usize
    }

    fn band(&self, x: &[f64], bandwidth: f64) -> Vec<f64> {
        band_limit(
            x,
            self.sample_rate,
            self.center_hz - bandwidth / 2.0,
            self.center_hz + bandwidth / 2.0,
        )
    }

    fn source(&self, bandwidth: f64) -> Vec<f64> {
        let n = self.len();
        let fs = self.sample_rate as f64;
        let m = synth::burst_envelope(n, self.sample_rate, 0.05, self.seed);
        let x: Vec<f64> = m
            .iter()
            .enumerate()
            .map(|(i, a)| a * (2.0 * PI * self.center_hz * i as f64 / fs).cos())
            .collect();
        self.band(&x, bandwidth)
    }

    fn rirs(&self) -> Result<Vec<crate::reverb::Rir>> {
        (0..self.realizations)
            .map(|k| {
                synth_rir(&RirSpec {
                    sample_rate: self.sample_rate,
                    ..RirSpec::new(
                        self.t60,
                        self.seed.wrapping_mul(7919).wrapping_add(100 + k as u64),
                    )
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionModelPoint {
    pub bandwidth: f64,
    /// `‖a − c·b‖ / ‖a‖` for the least-squares scale `c`.
    pub rel_error: f64,
    pub scale: f64,
}

fn fitted_error(a: &[f64], b: &[f64]) -> (f64, f64) {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let bb: f64 = b.iter().map(|y| y * y).sum();
    let c = ab / bb.max(f64::MIN_POSITIVE);
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - c * y).powi(2)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    ((num / den.max(f64::MIN_POSITIVE)).sqrt(), c)
}

/// Compares the summed reverberant envelopes `Σ env(x * h_k)` with the
/// envelope-convolution model `env(x) * Σ env(h_k,band)` after a
/// least-squares scale fit. Summing over RIR realizations averages out the
/// random-phase cross terms the model ignores.
pub fn envelope_convolution_model(
    setup: &ConvolutionModelSetup,
) -> Result<Vec<ConvolutionModelPoint>> {
    let n = setup.len();
    let rirs = setup.rirs()?;
    setup
        .bandwidths
        .par_iter()
        .map(|&bw| {
            let x = setup.source(bw);
            let clean = Signal::new(x.clone(), setup.sample_rate)?;
            let mut observed = vec![0.0; n];
            let mut rir_env = vec![0.0; n];
            for rir in &rirs {
                let r = convolve_truncate(&clean, rir)?;
                for (o, v) in observed.iter_mut().zip(analytic_envelope(&r.samples)?) {
                    *o += v;
                }
                let mut h = rir.samples.clone();
                h.resize(n, 0.0);
                for (o, v) in rir_env
                    .iter_mut()
                    .zip(analytic_envelope(&setup.band(&h, bw))?)
                {
                    *o += v;
                }
            }
            let mut model = linear_convolve(&analytic_envelope(&x)?, &rir_env);
            model.truncate(n);
            let (rel_error, scale) = fitted_error(&observed, &model);
            Ok(ConvolutionModelPoint {
                bandwidth: bw,
                rel_error,
                scale,
            })
        })
        .collect()
}

/// Error below 15 % for every bandwidth up to 200 Hz, and error falling
/// as the bandwidth shrinks.
pub fn envelope_convolution_checks(points: &[ConvolutionModelPoint]) -> Vec<Check> {
    let mut out: Vec<Check> = points
        .iter()
        .filter(|p| p.bandwidth <= 200.0)
        .map(|p| {
            Check::below(
                format!("envelope convolution model at {} Hz", p.bandwidth),
                p.rel_error,
                0.15,
                format!("fitted scale {:.4e}", p.scale),
            )
        })
        .collect();
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.bandwidth.total_cmp(&a.bandwidth));
    let increases = sorted
        .windows(2)
        .filter(|w| w[1].rel_error >= w[0].rel_error)
        .count();
    let trace: Vec<String> = sorted
        .iter()
        .map(|p| format!("{} Hz: {:.4}", p.bandwidth, p.rel_error))
        .collect();
    out.push(Check::below(
        "envelope convolution error shrinks with bandwidth",
        increases as f64,
        0.5,
        format!("non-decreasing steps; {}", trace.join(", ")),
    ));
    out
}

/// `env(x * h)` against `env(x * h_early) + env(x * h_late)`, both summed
/// over RIR realizations, relative L2.
pub fn early_late_additivity(setup: &ConvolutionModelSetup, bandwidth: f64) -> Result<Check> {
    let n = setup.len();
    let x = Signal::new(setup.source(bandwidth), setup.sample_rate)?;
    let mut whole = vec![0.0; n];
    let mut parts = vec![0.0; n];
    for rir in setup.rirs()? {
        let (early, late) = split_early_late(&rir, DEFAULT_EARLY_BOUNDARY)?;
        for (o, v) in whole
            .iter_mut()
            .zip(analytic_envelope(&convolve_truncate(&x, &rir)?.samples)?)
        {
            *o += v;
        }
        let e = analytic_envelope(&convolve_truncate(&x, &early)?.samples)?;
        let l = analytic_envelope(&convolve_truncate(&x, &late)?.samples)?;
        for ((o, a), b) in parts.iter_mut().zip(e).zip(l) {
            *o += a + b;
        }
    }
    Ok(Check::below(
        "early/late envelope additivity",
        rel_l2(&parts, &whole),
        0.2,
        format!("{bandwidth} Hz band, t60 {} s, boundary 50 ms", setup.t60),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Largest relative error per tensor.
    pub per_tensor: Vec<(String, f64)>,
    pub worst: f64,
}

/// Analytic gradients against central differences (step 1e-5) for every
/// parameter, on a random `steps`-row input whose clean target lies within
/// a factor e^±0.3 of the reverberant envelope.
pub fn gradient_check(config: &EnhancerConfig, steps: usize, seed: u64) -> Result<GradientCheck> {
    let q = config.num_bands;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reverb: Vec<f64> = (0..steps * q)
        .map(|_| rng.gen_range(-6.0f64..0.0).exp())
        .collect();
    let clean: Vec<f64> = reverb
        .iter()
        .map(|v| v * rng.gen_range(-0.3f64..0.3).exp())
        .collect();
    let mut config = config.clone();
    config.input_offset = -3.0;
    config.input_spread = 1.7;
    let ex = TrainingExample::new(
        EnvelopeMatrix::full(Grid::from_vec(steps, q, reverb)?)?,
        EnvelopeMatrix::full(Grid::from_vec(steps, q, clean)?)?,
        &config,
    )?;
    let mut params = EnhancerParams::init(&config, seed)?;
    if let Some(scale) = params.tensors.last_mut() {
        for (k, v) in scale.data.iter_mut().enumerate() {
            *v = 0.5 + 0.05 * k as f64;
        }
    }
    let (_, grads) = loss_and_grad(&ex, &params, &config)?;
    let loss_at = |p: &EnhancerParams| -> Result<f64> {
        let lg = forward_cached(&ex.reverb, p, &config, None)?;
        Ok(loss_from_log_gain(&lg, &ex.target, config.reg_weight)?.total)
    };
    let h = 1e-5;
    let mut per_tensor = Vec::new();
    for ti in 0..params.tensors.len() {
        let mut worst = 0.0f64;
        for k in 0..params.tensors[ti].data.len() {
            let orig = params.tensors[ti].data[k];
            params.tensors[ti].data[k] = orig + h;
            let up = loss_at(&params)?;
            params.tensors[ti].data[k] = orig - h;
            let down = loss_at(&params)?;
            params.tensors[ti].data[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors[ti].data[k];
            worst =
                worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
        per_tensor.push((params.tensors[ti].name.clone(), worst));
    }
    let worst = per_tensor.iter().map(|t| t.1).fold(0.0, f64::max);
    Ok(GradientCheck { per_tensor, worst })
}

/// Relative log-MSE reduction from enhancement on held-out examples; passes
/// at 20 %.
pub fn enhancement_check(
    examples: &[TrainingExample],
    params: &EnhancerParams,
    config: &EnhancerConfig,
) -> Result<Check> {
    let r = held_out_report(examples, params, config)?;
    Ok(Check::at_least(
        "held-out log-MSE reduction",
        r.reduction(),
        0.2,
        format!(
            "reverberant {:.6}, enhanced {:.6}, {} segments",
            r.reverberant_mse,
            r.enhanced_mse,
            examples.len()
        ),
    ))
}

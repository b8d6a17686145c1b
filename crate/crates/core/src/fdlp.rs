//! FDLP sub-band envelope extraction.
//!
//! A 2 s segment is transformed with one full-length DCT; each mel band is
//! cut out of the DCT sequence with a triangular window, and linear
//! prediction on the windowed coefficients gives an all-pole model whose
//! frequency response, read as a function of time, is the band's squared
//! Hilbert envelope.

use serde::{Deserialize, Serialize};

use crate::dsp::{all_pole_envelope, autocorr, dct_ii, levinson_durbin, Signal};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdlpConfig {
    pub sample_rate: u32,
    pub segment_seconds: f64,
    pub envelope_rate: u32,
    pub num_bands: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub lp_order_per_band: usize,
    /// Lower clamp for gain targets; the upper clamp is its reciprocal.
    pub gain_floor: f64,
    /// Floor applied before every logarithm of an envelope, and the value
    /// of silent-band envelopes.
    pub envelope_floor: f64,
}

impl Default for FdlpConfig {
    fn default() -> Self {
        FdlpConfig {
            sample_rate: 16000,
            segment_seconds: 2.0,
            envelope_rate: 400,
            num_bands: 36,
            fmin: 200.0,
            fmax: 6500.0,
            lp_order_per_band: 160,
            gain_floor: 1e-3,
            envelope_floor: 1e-8,
        }
    }
}

impl FdlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.envelope_rate == 0 {
            return Err(Error::invalid("sample and envelope rates must be positive"));
        }
        if !(self.segment_seconds > 0.0) {
            return Err(Error::invalid("segment length must be positive"));
        }
        let samples = self.segment_seconds * self.sample_rate as f64;
        let points = self.segment_seconds * self.envelope_rate as f64;
        if samples.fract() != 0.0 || points.fract() != 0.0 || points < 1.0 {
            return Err(Error::invalid(
                "segment length must be a whole number of samples and envelope points",
            ));
        }
        if !self.sample_rate.is_multiple_of(self.envelope_rate) {
            return Err(Error::invalid("envelope rate must divide the sample rate"));
        }
        if self.num_bands == 0 {
            return Err(Error::invalid("need at least one band"));
        }
        if !(self.fmin > 0.0 && self.fmin < self.fmax && self.fmax < self.sample_rate as f64 / 2.0)
        {
            return Err(Error::invalid(format!(
                "band edges must satisfy 0 < fmin < fmax < fs/2, got {}..{}",
                self.fmin, self.fmax
            )));
        }
        if self.lp_order_per_band == 0 {
            return Err(Error::invalid("LP order must be at least 1"));
        }
        if !(self.gain_floor > 0.0 && self.gain_floor < 1.0) {
            return Err(Error::invalid("gain floor must lie in (0, 1)"));
        }
        if !(self.envelope_floor > 0.0) {
            return Err(Error::invalid("envelope floor must be positive"));
        }
        Ok(())
    }

    /// Samples per segment (32000 by default).
    pub fn segment_len(&self) -> usize {
        (self.segment_seconds * self.sample_rate as f64) as usize
    }

    /// Envelope points per segment (800 by default).
    pub fn points_per_segment(&self) -> usize {
        (self.segment_seconds * self.envelope_rate as f64) as usize
    }

    pub fn samples_per_point(&self) -> usize {
        (self.sample_rate / self.envelope_rate) as usize
    }

    pub fn gain_cap(&self) -> f64 {
        1.0 / self.gain_floor
    }
}

/// Dense row-major matrix; rows are time, columns are bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{rows}x{cols} = {} values", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    fn check_same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }
}

/// T×Q non-negative sub-band envelopes of one segment. Rows at or beyond
/// `valid_points` come from zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeMatrix {
    values: Grid,
    valid_points: usize,
}

impl EnvelopeMatrix {
    pub fn new(values: Grid, valid_points: usize) -> Result<Self> {
        if valid_points > values.rows() {
            return Err(Error::invalid(format!(
                "valid length {valid_points} exceeds {} rows",
                values.rows()
            )));
        }
        if let Some(v) = values
            .as_slice()
            .iter()
            .find(|v| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(format!(
                "envelope value {v} is not finite and non-negative"
            )));
        }
        Ok(EnvelopeMatrix {
            values,
            valid_points,
        })
    }

    /// Full-length matrix with every row valid.
    pub fn full(values: Grid) -> Result<Self> {
        let rows = values.rows();
        Self::new(values, rows)
    }

    pub fn values(&self) -> &Grid {
        &self.values
    }

    pub fn into_values(self) -> Grid {
        self.values
    }

    pub fn valid_points(&self) -> usize {
        self.valid_points
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    /// Natural log of each entry after flooring.
    pub fn log_floored(&self, floor: f64) -> Grid {
        let data = self
            .values
            .as_slice()
            .iter()
            .map(|&v| v.max(floor).ln())
            .collect();
        Grid {
            rows: self.values.rows,
            cols: self.values.cols,
            data,
        }
    }
}

/// Strictly positive multiplicative envelope gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    values: Grid,
}

impl GainMatrix {
    pub fn new(values: Grid) -> Result<Self> {
        if let Some(v) = values
            .as_slice()
            .iter()
            .find(|v| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(format!(
                "gain {v} is not finite and positive"
            )));
        }
        Ok(GainMatrix { values })
    }

    pub fn values(&self) -> &Grid {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        GainMatrix {
            values: Grid::filled(rows, cols, 1.0),
        }
    }
}

/// A fixed-length analysis block; samples past `valid_len` are padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub index: usize,
    pub samples: Vec<f64>,
    pub valid_len: usize,
}

impl Segment {
    pub fn is_partial(&self) -> bool {
        self.valid_len < self.samples.len()
    }
}

/// Splits a signal into consecutive non-overlapping segments, zero-padding
/// the last one.
pub fn segment(signal: &Signal, config: &FdlpConfig) -> Result<Vec<Segment>> {
    if signal.is_empty() {
        return Err(Error::invalid("cannot segment an empty signal"));
    }
    if signal.sample_rate != config.sample_rate {
        return Err(Error::RateMismatch {
            expected: config.sample_rate,
            actual: signal.sample_rate,
        });
    }
    let len = config.segment_len();
    Ok(signal
        .samples
        .chunks(len)
        .enumerate()
        .map(|(index, chunk)| {
            let mut samples = chunk.to_vec();
            samples.resize(len, 0.0);
            Segment {
                index,
                samples,
                valid_len: chunk.len(),
            }
        })
        .collect())
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular weights over a contiguous run of DCT bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BandWindow {
    pub start_bin: usize,
    pub weights: Vec<f64>,
    pub center_hz: f64,
    pub center_bin: usize,
}

impl BandWindow {
    pub fn weight(&self, bin: usize) -> f64 {
        bin.checked_sub(self.start_bin)
            .and_then(|i| self.weights.get(i).copied())
            .unwrap_or(0.0)
    }

    pub fn end_bin(&self) -> usize {
        self.start_bin + self.weights.len()
    }
}

/// Mel-spaced triangular windows over the bins of a segment-length DCT.
/// DCT bin k sits at `k · fs / (2N)` Hz. Each window peaks at exactly 1.
pub fn mel_band_windows(config: &FdlpConfig) -> Vec<BandWindow> {
    let n = config.segment_len();
    let bin_hz = config.sample_rate as f64 / (2.0 * n as f64);
    let (mlo, mhi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax));
    let q = config.num_bands;
    let edges: Vec<f64> = (0..q + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (q + 1) as f64))
        .collect();
    (0..q)
        .map(|b| {
            // The outermost slopes reach one bin past fmin/fmax so the
            // boundary bins keep a positive weight.
            let lo = if b == 0 { edges[0] - bin_hz } else { edges[b] };
            let hi = if b == q - 1 {
                edges[q + 1] + bin_hz
            } else {
                edges[b + 2]
            };
            let center = edges[b + 1];
            let start_bin = (lo / bin_hz).floor() as usize + 1;
            let end_bin = ((hi / bin_hz).ceil() as usize).min(n);
            let mut weights: Vec<f64> = (start_bin..end_bin)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    }
                    .max(0.0)
                })
                .collect();
            let (peak_idx, peak) = weights
                .iter()
                .copied()
                .enumerate()
                .fold((0, 0.0), |acc, (i, w)| if w > acc.1 { (i, w) } else { acc });
            for w in &mut weights {
                *w /= peak;
            }
            BandWindow {
                start_bin,
                weights,
                center_hz: center,
                center_bin: start_bin + peak_idx,
            }
        })
        .collect()
}

/// Precomputed band windows for one configuration.
#[derive(Debug, Clone)]
pub struct FdlpAnalyzer {
    config: FdlpConfig,
    windows: Vec<BandWindow>,
}

impl FdlpAnalyzer {
    pub fn new(config: FdlpConfig) -> Result<Self> {
        config.validate()?;
        let windows = mel_band_windows(&config);
        Ok(FdlpAnalyzer { config, windows })
    }

    pub fn config(&self) -> &FdlpConfig {
        &self.config
    }

    pub fn windows(&self) -> &[BandWindow] {
        &self.windows
    }

    /// Envelope matrix of one segment. The scale matches the squared
    /// Hilbert envelope of the band signal `idct(w_q · X)`: each band's mean
    /// over time equals twice the band's mean power.
    pub fn envelopes(&self, segment: &Segment) -> Result<EnvelopeMatrix> {
        let n = self.config.segment_len();
        if segment.samples.len() != n {
            return Err(Error::shape(
                format!("{n}-sample segment"),
                format!("{} samples", segment.samples.len()),
            ));
        }
        let spectrum = dct_ii(&segment.samples)?;
        let t = self.config.points_per_segment();
        let q = self.windows.len();
        let mut values = Grid::zeros(t, q);
        for (b, window) in self.windows.iter().enumerate() {
            let band = self
                .band_envelope(&spectrum, window, t)
                .map_err(|e| match e {
                    Error::NumericalDegeneracy { order, context } => Error::NumericalDegeneracy {
                        order,
                        context: format!("band {b}: {context}"),
                    },
                    other => other,
                })?;
            for (row, v) in band.into_iter().enumerate() {
                values.set(row, b, v);
            }
        }
        let valid = segment.valid_len * t / n;
        EnvelopeMatrix::new(values, valid)
    }

    fn band_envelope(
        &self,
        spectrum: &[f64],
        window: &BandWindow,
        points: usize,
    ) -> Result<Vec<f64>> {
        let windowed: Vec<f64> = spectrum[window.start_bin..window.end_bin()]
            .iter()
            .zip(&window.weights)
            .map(|(x, w)| x * w)
            .collect();
        let support = windowed.len();
        let order = self.config.lp_order_per_band.min(support.saturating_sub(1));
        let mut r = autocorr(&windowed, order)?;
        // Normalize by the segment length rather than the band support so
        // that r[0] is the band's mean power per sample.
        let rescale = support as f64 / spectrum.len() as f64;
        for v in &mut r {
            *v *= rescale;
        }
        if !(r[0] > f64::MIN_POSITIVE) {
            return Ok(vec![self.config.envelope_floor; points]);
        }
        let model = levinson_durbin(&r)?;
        Ok(all_pole_envelope(&model, points)?
            .into_iter()
            .map(|v| 2.0 * v)
            .collect())
    }
}

/// One-shot form of [`FdlpAnalyzer::envelopes`].
pub fn fdlp_envelopes(segment: &Segment, config: &FdlpConfig) -> Result<EnvelopeMatrix> {
    FdlpAnalyzer::new(config.clone())?.envelopes(segment)
}

/// Entrywise `clean / (reverb + ε)` clamped to `[gain_floor, 1/gain_floor]`.
pub fn gain_targets(
    clean: &EnvelopeMatrix,
    reverb: &EnvelopeMatrix,
    config: &FdlpConfig,
) -> Result<GainMatrix> {
    clamped_gain(clean, reverb, config.gain_floor)
}

/// [`gain_targets`] with an explicit floor.
pub fn clamped_gain(
    clean: &EnvelopeMatrix,
    reverb: &EnvelopeMatrix,
    floor: f64,
) -> Result<GainMatrix> {
    clean.values.check_same_shape(&reverb.values)?;
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::invalid(format!("gain floor {floor} outside (0, 1)")));
    }
    let data = clean
        .values
        .as_slice()
        .iter()
        .zip(reverb.values.as_slice())
        .map(|(c, r)| (c / (r + f64::MIN_POSITIVE)).clamp(floor, 1.0 / floor))
        .collect();
    GainMatrix::new(Grid::from_vec(clean.values.rows, clean.values.cols, data)?)
}

/// Entrywise product of reverberant envelopes and gains.
pub fn apply_gain(reverb: &EnvelopeMatrix, gain: &GainMatrix) -> Result<EnvelopeMatrix> {
    reverb.values.check_same_shape(&gain.values)?;
    let data = reverb
        .values
        .as_slice()
        .iter()
        .zip(gain.values.as_slice())
        .map(|(r, g)| r * g)
        .collect();
    EnvelopeMatrix::new(
        Grid::from_vec(reverb.values.rows, reverb.values.cols, data)?,
        reverb.valid_points,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{analytic_envelope, idct_ii};
    use crate::synth;
    use proptest::prelude::*;

    fn cfg() -> FdlpConfig {
        FdlpConfig::default()
    }

    fn seg(samples: Vec<f64>) -> Segment {
        let valid_len = samples.len();
        Segment {
            index: 0,
            samples,
            valid_len,
        }
    }

    fn sig(n: usize) -> Signal {
        Signal::new(vec![0.1; n], 16000).unwrap()
    }

    #[test]
    fn default_constants() {
        let c = cfg();
        c.validate().unwrap();
        assert_eq!(c.segment_len(), 32000);
        assert_eq!(c.points_per_segment(), 800);
        assert_eq!(c.samples_per_point(), 40);
        assert_eq!(c.gain_cap(), 1000.0);
    }

    #[test]
    fn segmentation_examples() {
        let c = cfg();
        let s = segment(&sig(64000), &c).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|x| !x.is_partial()));

        let s = segment(&sig(40000), &c).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].valid_len, 8000);
        assert_eq!(s[1].samples.len(), 32000);
        assert!(s[1].samples[8000..].iter().all(|&v| v == 0.0));

        let s = segment(&sig(16000), &c).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].valid_len, 16000);

        assert!(segment(&Signal::new(vec![], 16000).unwrap(), &c).is_err());
        assert!(matches!(
            segment(&Signal::new(vec![0.0; 10], 8000).unwrap(), &c),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn mel_windows_contract() {
        let c = cfg();
        let w = mel_band_windows(&c);
        assert_eq!(w.len(), 36);
        assert!(w.windows(2).all(|p| p[1].center_hz > p[0].center_hz));
        assert!(w[0].center_hz >= 200.0);
        assert!(w[35].center_hz <= 6500.0);
        for b in &w {
            let peak = b.weights.iter().copied().fold(0.0, f64::max);
            assert_eq!(peak, 1.0);
        }
        for pair in w.windows(2) {
            assert!(pair[0].weight(pair[1].center_bin) < 1.0);
        }
        let bin_hz = 16000.0 / 64000.0;
        let first = (200.0 / bin_hz) as usize;
        let last = (6500.0 / bin_hz) as usize;
        let min_cover = (first..=last)
            .map(|k| w.iter().map(|b| b.weight(k)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!(min_cover > 0.0);
    }

    fn band_signal(x: &[f64], window: &BandWindow) -> Vec<f64> {
        let spectrum = dct_ii(x).unwrap();
        let masked: Vec<f64> = spectrum
            .iter()
            .enumerate()
            .map(|(k, v)| v * window.weight(k))
            .collect();
        idct_ii(&masked).unwrap()
    }

    fn band_of(windows: &[BandWindow], hz: f64) -> usize {
        windows
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1.center_hz - hz)
                    .abs()
                    .total_cmp(&(b.1.center_hz - hz).abs())
            })
            .unwrap()
            .0
    }

    #[test]
    fn tone_gives_flat_envelope_in_its_band() {
        let an = FdlpAnalyzer::new(cfg()).unwrap();
        let x = synth::tone(1000.0, 0.5, 32000, 16000);
        let env = an.envelopes(&seg(x.clone())).unwrap();
        let b = band_of(an.windows(), 1000.0);
        let col = env.values().column(b);
        let interior = &col[80..720];
        let (mn, mx) = interior
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, z), &v| (a.min(v), z.max(v)));
        assert!(mx / mn < 1.5, "max/min = {}", mx / mn);
        let tone_level: f64 = interior.iter().sum::<f64>() / interior.len() as f64;
        // Oracle: squared Hilbert envelope of the band signal.
        let oracle = analytic_envelope(&band_signal(&x, &an.windows()[b])).unwrap();
        let oracle_level = oracle[3200..28800].iter().sum::<f64>() / 25600.0;
        assert!((tone_level / oracle_level - 1.0).abs() < 0.1);
        for far in [band_of(an.windows(), 250.0), band_of(an.windows(), 6000.0)] {
            let level = env.values().column(far).iter().sum::<f64>() / 800.0;
            assert!(level < 1e-3 * tone_level, "band {far}: {level}");
        }
    }

    // Maxima of a 21-point neighbourhood above 30% of the global peak.
    fn peak_positions(col: &[f64]) -> Vec<usize> {
        let max = col.iter().copied().fold(0.0, f64::max);
        (0..col.len())
            .filter(|&i| {
                let lo = i.saturating_sub(10);
                let hi = (i + 11).min(col.len());
                col[i] > 0.3 * max && col[lo..hi].iter().all(|&v| v <= col[i])
            })
            .collect()
    }

    #[test]
    fn click_train_peaks_are_100_points_apart() {
        let an = FdlpAnalyzer::new(cfg()).unwrap();
        let x = synth::click_train(0.25, 0.125, 32000, 16000);
        let env = an.envelopes(&seg(x.clone())).unwrap();
        for b in [5, 15, 30] {
            let peaks = peak_positions(&env.values().column(b));
            assert_eq!(peaks.len(), 8, "band {b}: {peaks:?}");
            for (i, p) in peaks.iter().enumerate() {
                assert!(p.abs_diff(50 + 100 * i) <= 2, "band {b}: {peaks:?}");
            }
            // Oracle peaks (decimated to the envelope rate) agree.
            let oracle = analytic_envelope(&band_signal(&x, &an.windows()[b])).unwrap();
            let decimated: Vec<f64> = oracle.iter().step_by(40).copied().collect();
            let oracle_peaks = peak_positions(&decimated);
            assert_eq!(oracle_peaks.len(), peaks.len());
            for (a, o) in peaks.iter().zip(&oracle_peaks) {
                assert!(a.abs_diff(*o) <= 2);
            }
        }
    }

    #[test]
    fn am_noise_modulation_frequency_is_recovered() {
        let an = FdlpAnalyzer::new(cfg()).unwrap();
        let x = synth::am_band_noise(900.0, 1300.0, 4.0, 0.8, 32000, 16000, 7);
        let env = an.envelopes(&seg(x)).unwrap();
        let b = band_of(an.windows(), 1100.0);
        let f = crate::dsp::dominant_frequency(&env.values().column(b)[40..760], 400.0, 0.5, 50.0);
        assert!((f - 4.0).abs() <= 0.5, "{f}");
    }

    #[test]
    fn silent_segment_gives_floor_envelopes() {
        let c = cfg();
        let env = fdlp_envelopes(&seg(vec![0.0; 32000]), &c).unwrap();
        assert!(env
            .values()
            .as_slice()
            .iter()
            .all(|&v| v == c.envelope_floor));
    }

    #[test]
    fn envelopes_are_deterministic_and_partial_valid_length() {
        let an = FdlpAnalyzer::new(cfg()).unwrap();
        let x = synth::am_band_noise(300.0, 5000.0, 3.0, 0.5, 32000, 16000, 1);
        let a = an.envelopes(&seg(x.clone())).unwrap();
        let b = an.envelopes(&seg(x)).unwrap();
        assert_eq!(a, b);
        assert!(a
            .values()
            .as_slice()
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite()));
        let partial = Segment {
            index: 1,
            samples: vec![0.0; 32000],
            valid_len: 8000,
        };
        assert_eq!(an.envelopes(&partial).unwrap().valid_points(), 200);
        assert!(an.envelopes(&seg(vec![0.0; 100])).is_err());
    }

    // Click trains are left out: their envelope peaks are about one grid
    // point wide, so the 800-point sum is not a faithful integral.
    #[test]
    fn envelope_area_tracks_band_energy() {
        let an = FdlpAnalyzer::new(cfg()).unwrap();
        let signals = [
            synth::am_band_noise(200.0, 6500.0, 4.0, 0.9, 32000, 16000, 2),
            synth::tone(1000.0, 0.3, 32000, 16000),
            synth::speech_like(16000, 32000, 4),
        ];
        let expected = 2.0 * 800.0 / 32000.0;
        for x in signals {
            let spectrum = dct_ii(&x).unwrap();
            let env = an.envelopes(&seg(x)).unwrap();
            let energies: Vec<f64> = an
                .windows()
                .iter()
                .map(|w| {
                    (w.start_bin..w.end_bin())
                        .map(|k| (w.weight(k) * spectrum[k]).powi(2))
                        .sum()
                })
                .collect();
            let top = energies.iter().copied().fold(0.0, f64::max);
            for (b, &energy) in energies.iter().enumerate() {
                // Leakage-only bands have edge-impulse envelopes that the
                // 800-point grid cannot integrate.
                if energy < 1e-3 * top {
                    continue;
                }
                let area: f64 = env.values().column(b).iter().sum();
                assert!(
                    (area / energy / expected - 1.0).abs() < 0.1,
                    "band {b}: ratio {}",
                    area / energy / expected
                );
            }
        }
    }

    fn env_from(rows: usize, cols: usize, f: impl Fn(usize) -> f64) -> EnvelopeMatrix {
        EnvelopeMatrix::full(Grid::from_vec(rows, cols, (0..rows * cols).map(f).collect()).unwrap())
            .unwrap()
    }

    #[test]
    fn gain_target_examples() {
        let c = cfg();
        let clean = env_from(4, 3, |i| 0.1 + i as f64);
        let g = gain_targets(&clean, &clean, &c).unwrap();
        assert!(g.values().as_slice().iter().all(|&v| v == 1.0));
        let double = env_from(4, 3, |i| 2.0 * (0.1 + i as f64));
        let g = gain_targets(&clean, &double, &c).unwrap();
        assert!(g.values().as_slice().iter().all(|&v| v == 0.5));
        let zero = env_from(1, 1, |_| 0.0);
        let one = env_from(1, 1, |_| 1.0);
        assert_eq!(
            gain_targets(&one, &zero, &c).unwrap().values().get(0, 0),
            1000.0
        );
        assert_eq!(
            gain_targets(&zero, &one, &c).unwrap().values().get(0, 0),
            1e-3
        );
        assert!(matches!(
            gain_targets(&clean, &one, &c),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn apply_gain_examples() {
        let env = env_from(5, 2, |i| i as f64);
        assert_eq!(apply_gain(&env, &GainMatrix::ones(5, 2)).unwrap(), env);
        let half = GainMatrix::new(Grid::filled(5, 2, 0.5)).unwrap();
        let out = apply_gain(&env, &half).unwrap();
        for (a, b) in out.values().as_slice().iter().zip(env.values().as_slice()) {
            assert_eq!(*a, b * 0.5);
        }
        assert!(apply_gain(&env, &GainMatrix::ones(2, 5)).is_err());
    }

    proptest! {
        #[test]
        fn gain_round_trip(values in proptest::collection::vec((1e-2f64..10.0, 1e-2f64..10.0), 12)) {
            let c = cfg();
            let clean = env_from(4, 3, |i| values[i].0);
            let reverb = env_from(4, 3, |i| values[i].1);
            let g = gain_targets(&clean, &reverb, &c).unwrap();
            let back = apply_gain(&reverb, &g).unwrap();
            for i in 0..12 {
                let (cv, rv) = values[i];
                if cv > 10.0 * c.gain_floor && rv > 10.0 * c.gain_floor {
                    let b = back.values().as_slice()[i];
                    prop_assert!((b - cv).abs() / cv < 1e-6);
                }
            }
        }
    }
}

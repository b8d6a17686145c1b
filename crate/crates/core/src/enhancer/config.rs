use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel_time: usize,
    pub kernel_band: usize,
}

impl ConvSpec {
    pub const fn new(filters: usize, kernel_time: usize, kernel_band: usize) -> Self {
        ConvSpec {
            filters,
            kernel_time,
            kernel_band,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalePreset {
    Full,
    Desk,
}

impl std::str::FromStr for ScalePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ScalePreset::Full),
            "desk" => Ok(ScalePreset::Desk),
            other => Err(Error::invalid(format!("unknown scale preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Architecture and training hyperparameters of the gain predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancerConfig {
    pub scale: ScalePreset,
    pub num_bands: usize,
    pub conv_layers: Vec<ConvSpec>,
    /// The last entry is the number of bands.
    pub lstm_sizes: Vec<usize>,
    pub reg_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Initial value of the per-band scale applied to the last LSTM output.
    pub output_scale_init: f64,
    /// Log-envelope standardization: `(ln env - offset) / spread`.
    pub input_offset: f64,
    pub input_spread: f64,
    pub envelope_floor: f64,
    pub gain_floor: f64,
}

impl EnhancerConfig {
    /// 32/32/64/64 conv filters (41×5, 41×5, 21×3, 21×3) and 1024/1024/36
    /// LSTM cells.
    pub fn full() -> Self {
        EnhancerConfig {
            scale: ScalePreset::Full,
            num_bands: 36,
            conv_layers: vec![
                ConvSpec::new(32, 41, 5),
                ConvSpec::new(32, 41, 5),
                ConvSpec::new(64, 21, 3),
                ConvSpec::new(64, 21, 3),
            ],
            lstm_sizes: vec![1024, 1024, 36],
            reg_weight: 0.05,
            epochs: 10,
            batch_size: 1,
            seed: 0,
            adam: AdamConfig::default(),
            output_scale_init: 4.0,
            input_offset: 0.0,
            input_spread: 1.0,
            envelope_floor: 1e-8,
            gain_floor: 1e-3,
        }
    }

    /// Small model for desk-scale training and gradient checks.
    pub fn desk() -> Self {
        EnhancerConfig {
            scale: ScalePreset::Desk,
            conv_layers: vec![ConvSpec::new(4, 9, 3), ConvSpec::new(4, 9, 3)],
            lstm_sizes: vec![32, 36],
            ..Self::full()
        }
    }

    pub fn preset(scale: ScalePreset) -> Self {
        match scale {
            ScalePreset::Full => Self::full(),
            ScalePreset::Desk => Self::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bands == 0 {
            return Err(Error::invalid("enhancer needs at least one band"));
        }
        if self.lstm_sizes.last() != Some(&self.num_bands) {
            return Err(Error::invalid(format!(
                "last LSTM layer must have {} cells, got {:?}",
                self.num_bands, self.lstm_sizes
            )));
        }
        if self.lstm_sizes.contains(&0) {
            return Err(Error::invalid("LSTM layers need at least one cell"));
        }
        for (i, c) in self.conv_layers.iter().enumerate() {
            if c.filters == 0 || c.kernel_time % 2 == 0 || c.kernel_band % 2 == 0 {
                return Err(Error::invalid(format!(
                    "conv layer {i}: kernels must be odd and filters positive, got {c:?}"
                )));
            }
        }
        if !(self.reg_weight >= 0.0) {
            return Err(Error::invalid("regularization weight must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.input_spread > 0.0) || !self.input_offset.is_finite() {
            return Err(Error::invalid(
                "input standardization must be finite with positive spread",
            ));
        }
        if !(self.envelope_floor > 0.0) || !(self.gain_floor > 0.0 && self.gain_floor < 1.0) {
            return Err(Error::invalid(
                "floors must be positive (gain floor below 1)",
            ));
        }
        let a = &self.adam;
        if !(a.step_size > 0.0)
            || !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || !(a.epsilon > 0.0)
        {
            return Err(Error::invalid(format!(
                "invalid Adam hyperparameters {a:?}"
            )));
        }
        Ok(())
    }

    /// Channels leaving the conv stack (1 when there are no conv layers).
    pub fn conv_out_channels(&self) -> usize {
        self.conv_layers.last().map_or(1, |c| c.filters)
    }

    pub fn lstm_input_size(&self) -> usize {
        self.conv_out_channels() * self.num_bands
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        EnhancerConfig::full().validate().unwrap();
        EnhancerConfig::desk().validate().unwrap();
        assert_eq!(EnhancerConfig::desk().lstm_input_size(), 4 * 36);
        assert_eq!(EnhancerConfig::full().lstm_input_size(), 64 * 36);
        assert_eq!(EnhancerConfig::full().reg_weight, 0.05);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut c = EnhancerConfig::desk();
        c.lstm_sizes = vec![32, 30];
        assert!(c.validate().is_err());
        let mut c = EnhancerConfig::desk();
        c.conv_layers[0].kernel_time = 8;
        assert!(c.validate().is_err());
        let mut c = EnhancerConfig::desk();
        c.reg_weight = -1.0;
        assert!(c.validate().is_err());
        assert!("huge".parse::<ScalePreset>().is_err());
        assert_eq!("desk".parse::<ScalePreset>().unwrap(), ScalePreset::Desk);
    }
}

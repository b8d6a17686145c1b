//! TOML run configuration merged with command-line flags.

use std::path::{Path, PathBuf};

use fdlp_core::enhancer::ScalePreset;
use fdlp_core::io::FeatureFormat;
use fdlp_core::FdlpConfig;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 lets the thread pool pick.
    pub workers: usize,
    pub scale: ScalePreset,
    pub epochs: usize,
    pub output: PathBuf,
    pub format: String,
    pub gain_dump: bool,
    pub fdlp: FdlpConfig,
    pub simulate: SimulateConfig,
    pub train: TrainConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 0,
            scale: ScalePreset::Desk,
            epochs: 10,
            output: PathBuf::from("out"),
            format: "binary".into(),
            gain_dump: false,
            fdlp: FdlpConfig::default(),
            simulate: SimulateConfig::default(),
            train: TrainConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub t60: Vec<f64>,
    pub direct_delay: f64,
    pub tail_energy: f64,
    /// 0 pairs every clean signal with every RIR.
    pub rirs_per_clean: usize,
    /// Syllable-like clean signals generated when no clean WAVs are given.
    pub synthetic: usize,
    pub synthetic_seconds: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            t60: vec![0.3, 0.5, 0.7],
            direct_delay: 0.0,
            tail_energy: 1.0,
            rirs_per_clean: 0,
            synthetic: 0,
            synthetic_seconds: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub step_size: f64,
    pub batch_size: usize,
    pub reg_weight: f64,
    pub output_scale_init: f64,
    /// Trailing share of manifest pairs held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let e = fdlp_core::EnhancerConfig::desk();
        TrainConfig {
            step_size: e.adam.step_size,
            batch_size: e.batch_size,
            reg_weight: e.reg_weight,
            output_scale_init: e.output_scale_init,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub held_out_pairs: usize,
    pub t60_min: f64,
    pub t60_max: f64,
    pub gradient_steps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            held_out_pairs: 10,
            t60_min: 0.3,
            t60_max: 0.7,
            gradient_steps: 12,
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub scale: Option<ScalePreset>,
    pub epochs: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
    pub gain_dump: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Invalid(format!("{}: {}", p.display(), e.message())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = flags.seed {
            config.seed = v;
        }
        if let Some(v) = flags.workers {
            config.workers = v;
        }
        if let Some(v) = flags.scale {
            config.scale = v;
        }
        if let Some(v) = flags.epochs {
            config.epochs = v;
        }
        if let Some(v) = &flags.output {
            config.output = v.clone();
        }
        if let Some(v) = &flags.format {
            config.format = v.clone();
        }
        config.gain_dump |= flags.gain_dump;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.fdlp.validate()?;
        self.feature_format()?;
        let s = &self.simulate;
        if s.t60.is_empty() || s.t60.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(CliError::Invalid(format!(
                "simulate.t60 must be positive values, got {:?}",
                s.t60
            )));
        }
        if !(s.direct_delay >= 0.0) || !(s.tail_energy >= 0.0) || !(s.synthetic_seconds > 0.0) {
            return Err(CliError::Invalid(
                "simulate.direct_delay and tail_energy must be non-negative, synthetic_seconds positive".into(),
            ));
        }
        if s.rirs_per_clean > s.t60.len() {
            return Err(CliError::Invalid(format!(
                "simulate.rirs_per_clean {} exceeds the {} configured RIRs",
                s.rirs_per_clean,
                s.t60.len()
            )));
        }
        if !(0.0..1.0).contains(&self.train.validation_fraction) {
            return Err(CliError::Invalid(
                "train.validation_fraction must lie in [0, 1)".into(),
            ));
        }
        let v = &self.verify;
        if v.held_out_pairs == 0
            || v.gradient_steps == 0
            || !(v.t60_min > 0.0 && v.t60_max >= v.t60_min)
        {
            return Err(CliError::Invalid(
                "verify settings must be positive with t60_min <= t60_max".into(),
            ));
        }
        self.enhancer().validate()?;
        Ok(())
    }

    pub fn feature_format(&self) -> Result<FeatureFormat, CliError> {
        Ok(self.format.parse()?)
    }

    /// Enhancer preset with the training overrides applied.
    pub fn enhancer(&self) -> fdlp_core::EnhancerConfig {
        let mut e = fdlp_core::EnhancerConfig::preset(self.scale);
        e.num_bands = self.fdlp.num_bands;
        if let Some(last) = e.lstm_sizes.last_mut() {
            *last = self.fdlp.num_bands;
        }
        e.epochs = self.epochs;
        e.seed = self.seed;
        e.adam.step_size = self.train.step_size;
        e.batch_size = self.train.batch_size;
        e.reg_weight = self.train.reg_weight;
        e.output_scale_init = self.train.output_scale_init;
        e.envelope_floor = self.fdlp.envelope_floor;
        e.gain_floor = self.fdlp.gain_floor;
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("sed = 3").is_err());
        assert!(parse("[fdlp]\nbands = 20").is_err());
        assert!(parse("[train]\nlr = 0.1").is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = 5\nepochs = 3\n[simulate]\nt60 = [0.4]\n").unwrap();
        let flags = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let c = RunConfig::load(Some(&p), &flags).unwrap();
        assert_eq!(
            (c.seed, c.epochs, c.simulate.t60.clone()),
            (9, 3, vec![0.4])
        );
    }

    #[test]
    fn invalid_values_fail_before_work() {
        let mut c = RunConfig::default();
        c.simulate.t60 = vec![0.0];
        assert!(matches!(c.validate(), Err(CliError::Invalid(_))));
        let c = RunConfig {
            format: "hdf5".into(),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}

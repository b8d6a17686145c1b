use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::EnhancerConfig;
use crate::error::{Error, Result};

/// Named, shaped block of parameters stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Every trainable tensor of the gain predictor, in a fixed order:
/// `conv{l}.weight [out, in, kt, kq]`, `conv{l}.bias [out]` per conv layer,
/// then `lstm{l}.w_in [4H, D]`, `lstm{l}.w_rec [4H, H]`, `lstm{l}.bias [4H]`
/// per LSTM layer (gate rows ordered input, forget, cell, output), then
/// `output.scale [Q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerParams {
    pub tensors: Vec<Tensor>,
}

pub(crate) fn layout(config: &EnhancerConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut in_ch = 1;
    for (l, c) in config.conv_layers.iter().enumerate() {
        out.push((
            format!("conv{l}.weight"),
            vec![c.filters, in_ch, c.kernel_time, c.kernel_band],
        ));
        out.push((format!("conv{l}.bias"), vec![c.filters]));
        in_ch = c.filters;
    }
    let mut input = config.lstm_input_size();
    for (l, &h) in config.lstm_sizes.iter().enumerate() {
        out.push((format!("lstm{l}.w_in"), vec![4 * h, input]));
        out.push((format!("lstm{l}.w_rec"), vec![4 * h, h]));
        out.push((format!("lstm{l}.bias"), vec![4 * h]));
        input = h;
    }
    out.push(("output.scale".to_string(), vec![config.num_bands]));
    out
}

impl EnhancerParams {
    /// All-zero tensors with the shapes `config` implies.
    pub fn zeros(config: &EnhancerConfig) -> Result<Self> {
        config.validate()?;
        Ok(EnhancerParams {
            tensors: layout(config)
                .into_iter()
                .map(|(name, shape)| Tensor::zeros(name, shape))
                .collect(),
        })
    }

    /// He-normal conv kernels, uniform `±1/√fan_in` LSTM weights, zero
    /// biases except a forget-gate bias of 1.
    pub fn init(config: &EnhancerConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &mut params.tensors {
            let kind = t.name.rsplit('.').next().unwrap_or_default().to_string();
            match kind.as_str() {
                "weight" => {
                    let fan_in: usize = t.shape[1..].iter().product();
                    let std = (2.0 / fan_in as f64).sqrt();
                    for v in &mut t.data {
                        *v = std * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                "w_in" | "w_rec" => {
                    let bound = 1.0 / (t.shape[1] as f64).sqrt();
                    for v in &mut t.data {
                        *v = rng.gen_range(-bound..bound);
                    }
                }
                "bias" if t.name.starts_with("lstm") => {
                    let h = t.shape[0] / 4;
                    t.data[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
                }
                "scale" => t
                    .data
                    .iter_mut()
                    .for_each(|v| *v = config.output_scale_init),
                _ => {}
            }
        }
        Ok(params)
    }

    /// Zeroes the last LSTM layer, which pins every predicted gain to 1.
    pub fn zero_final_layer(&mut self, config: &EnhancerConfig) {
        let last = config.lstm_sizes.len() - 1;
        let prefix = format!("lstm{last}.");
        for t in &mut self.tensors {
            if t.name.starts_with(&prefix) {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn check_shapes(&self, config: &EnhancerConfig) -> Result<()> {
        let expected = layout(config);
        if expected.len() != self.tensors.len() {
            return Err(Error::shape(
                format!("{} tensors", expected.len()),
                format!("{} tensors", self.tensors.len()),
            ));
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name
                || *shape != t.shape
                || t.data.len() != shape.iter().product::<usize>()
            {
                return Err(Error::shape(
                    format!("{name} {shape:?}"),
                    format!("{} {:?}", t.name, t.shape),
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        EnhancerParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &EnhancerParams, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }
}

use super::config::EnhancerConfig;
use super::layers::{
    conv_backward, conv_forward, lstm_backward, lstm_forward, ConvShape, LstmCache,
};
use super::params::{EnhancerParams, Tensor};
use crate::error::{Error, Result};
use crate::fdlp::{apply_gain, EnvelopeMatrix, GainMatrix, Grid};

/// Activations kept by [`forward_cached`] for [`backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    steps: usize,
    /// Input of each conv layer, `[C][T][Q]`; entry 0 is the standardized
    /// log envelope.
    conv_inputs: Vec<Vec<f64>>,
    conv_pre: Vec<Vec<f64>>,
    /// Input of each LSTM layer, `[T][D]`.
    lstm_inputs: Vec<Vec<f64>>,
    lstm: Vec<LstmCache>,
    log_gain: Option<Grid>,
}

impl ForwardCache {
    pub fn is_empty(&self) -> bool {
        self.log_gain.is_none()
    }

    pub fn log_gain(&self) -> Option<&Grid> {
        self.log_gain.as_ref()
    }
}

fn check_finite(data: &[f64], layer: usize, name: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericOverflow {
            layer,
            name: name.to_string(),
        })
    }
}

fn check_input(env: &EnvelopeMatrix, config: &EnhancerConfig) -> Result<()> {
    config.validate()?;
    let (t, q) = env.shape();
    if q != config.num_bands || t == 0 {
        return Err(Error::invalid(format!(
            "envelope is {t}x{q}, enhancer expects Tx{} with T > 0",
            config.num_bands
        )));
    }
    Ok(())
}

/// `(ln max(env, floor) - offset) / spread`, laid out as one `[T][Q]` plane.
pub fn standardized_input(env: &EnvelopeMatrix, config: &EnhancerConfig) -> Vec<f64> {
    env.log_floored(config.envelope_floor)
        .into_vec()
        .into_iter()
        .map(|v| (v - config.input_offset) / config.input_spread)
        .collect()
}

/// Log-gain `T×Q` for `env`, recording activations in `cache` when given.
pub fn forward_cached(
    env: &EnvelopeMatrix,
    params: &EnhancerParams,
    config: &EnhancerConfig,
    cache: Option<&mut ForwardCache>,
) -> Result<Grid> {
    check_input(env, config)?;
    params.check_shapes(config)?;
    let (t, q) = env.shape();
    let mut tensors = params.tensors.iter();
    let mut next = || -> &Tensor { tensors.next().expect("layout checked") };

    let mut layer = 0;
    let mut x = standardized_input(env, config);
    let mut channels = 1;
    let mut conv_inputs = Vec::new();
    let mut conv_pre = Vec::new();
    for spec in &config.conv_layers {
        let (w, b) = (next(), next());
        let shape = ConvShape {
            in_ch: channels,
            out_ch: spec.filters,
            kt: spec.kernel_time,
            kq: spec.kernel_band,
            t,
            q,
        };
        let pre = conv_forward(&x, &w.data, &b.data, shape);
        check_finite(&pre, layer, &format!("conv{layer}"))?;
        let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        if cache.is_some() {
            conv_inputs.push(std::mem::replace(&mut x, act));
            conv_pre.push(pre);
        } else {
            x = act;
        }
        channels = spec.filters;
        layer += 1;
    }

    // [C][T][Q] -> [T][C·Q]
    let d = channels * q;
    let mut seq = vec![0.0; t * d];
    for c in 0..channels {
        for tt in 0..t {
            seq[tt * d + c * q..tt * d + (c + 1) * q]
                .copy_from_slice(&x[(c * t + tt) * q..(c * t + tt + 1) * q]);
        }
    }

    let mut input = d;
    let mut lstm_inputs = Vec::new();
    let mut lstm_caches = Vec::new();
    for (l, &h) in config.lstm_sizes.iter().enumerate() {
        let (w_in, w_rec, bias) = (next(), next(), next());
        let c = lstm_forward(&seq, t, input, h, &w_in.data, &w_rec.data, &bias.data);
        check_finite(&c.hidden, layer, &format!("lstm{l}"))?;
        let out = c.hidden.clone();
        if cache.is_some() {
            lstm_inputs.push(std::mem::replace(&mut seq, out));
            lstm_caches.push(c);
        } else {
            seq = out;
        }
        input = h;
        layer += 1;
    }

    let scale = next();
    let data: Vec<f64> = seq
        .chunks(q)
        .flat_map(|row| row.iter().zip(&scale.data).map(|(h, s)| h * s))
        .collect();
    check_finite(&data, layer, "output")?;
    let log_gain = Grid::from_vec(t, q, data)?;
    if let Some(cache) = cache {
        *cache = ForwardCache {
            steps: t,
            conv_inputs,
            conv_pre,
            lstm_inputs,
            lstm: lstm_caches,
            log_gain: Some(log_gain.clone()),
        };
    }
    Ok(log_gain)
}

/// Predicted gains `exp(log_gain)`.
pub fn forward(
    env: &EnvelopeMatrix,
    params: &EnhancerParams,
    config: &EnhancerConfig,
) -> Result<GainMatrix> {
    let log_gain = forward_cached(env, params, config, None)?;
    gain_from_log(log_gain)
}

pub(crate) fn gain_from_log(log_gain: Grid) -> Result<GainMatrix> {
    let (t, q) = log_gain.shape();
    let data: Vec<f64> = log_gain.into_vec().into_iter().map(f64::exp).collect();
    let layer = usize::MAX;
    if let Some(v) = data.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NumericOverflow {
            layer,
            name: format!("exp output ({v})"),
        });
    }
    GainMatrix::new(Grid::from_vec(t, q, data)?)
}

/// Dereverberated envelopes: `env` times the predicted gain.
pub fn enhance(
    env: &EnvelopeMatrix,
    params: &EnhancerParams,
    config: &EnhancerConfig,
) -> Result<EnvelopeMatrix> {
    apply_gain(env, &forward(env, params, config)?)
}

/// Reverse-mode gradients of a scalar loss w.r.t. every parameter, given
/// the loss gradient w.r.t. the log-gain output of the cached forward pass.
pub fn backward(
    params: &EnhancerParams,
    config: &EnhancerConfig,
    cache: &ForwardCache,
    grad_log_gain: &Grid,
) -> Result<EnhancerParams> {
    let log_gain = cache.log_gain.as_ref().ok_or_else(|| {
        Error::ContractViolation("backward called without a recorded forward pass".into())
    })?;
    params.check_shapes(config)?;
    if grad_log_gain.shape() != log_gain.shape() {
        return Err(Error::shape(
            format!("{:?}", log_gain.shape()),
            format!("{:?}", grad_log_gain.shape()),
        ));
    }
    let t = cache.steps;
    let q = config.num_bands;
    let mut grads = params.zeros_like();
    let n_conv = config.conv_layers.len();
    let n_lstm = config.lstm_sizes.len();
    let scale_idx = 2 * n_conv + 3 * n_lstm;

    let last_hidden = &cache.lstm[n_lstm - 1].hidden;
    let scale = &params.tensors[scale_idx].data;
    let g = grad_log_gain.as_slice();
    let mut d_hidden = vec![0.0; t * q];
    for tt in 0..t {
        for j in 0..q {
            let k = tt * q + j;
            grads.tensors[scale_idx].data[j] += g[k] * last_hidden[k];
            d_hidden[k] = g[k] * scale[j];
        }
    }

    let mut input = config.lstm_input_size();
    let mut inputs: Vec<usize> = Vec::with_capacity(n_lstm);
    for &h in &config.lstm_sizes {
        inputs.push(input);
        input = h;
    }
    for l in (0..n_lstm).rev() {
        let base = 2 * n_conv + 3 * l;
        let h = config.lstm_sizes[l];
        let lg = lstm_backward(
            &cache.lstm_inputs[l],
            t,
            inputs[l],
            h,
            &params.tensors[base].data,
            &params.tensors[base + 1].data,
            &cache.lstm[l],
            &d_hidden,
            l > 0 || n_conv > 0,
        );
        grads.tensors[base].data = lg.w_in;
        grads.tensors[base + 1].data = lg.w_rec;
        grads.tensors[base + 2].data = lg.bias;
        match lg.input {
            Some(dx) => d_hidden = dx,
            None => break,
        }
    }
    if n_conv == 0 {
        return Ok(grads);
    }

    // [T][C·Q] -> [C][T][Q]
    let channels = config.conv_out_channels();
    let d = channels * q;
    let mut d_act = vec![0.0; channels * t * q];
    for c in 0..channels {
        for tt in 0..t {
            d_act[(c * t + tt) * q..(c * t + tt + 1) * q]
                .copy_from_slice(&d_hidden[tt * d + c * q..tt * d + (c + 1) * q]);
        }
    }
    for l in (0..n_conv).rev() {
        let spec = config.conv_layers[l];
        let in_ch = if l == 0 {
            1
        } else {
            config.conv_layers[l - 1].filters
        };
        let d_pre: Vec<f64> = d_act
            .iter()
            .zip(&cache.conv_pre[l])
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect();
        let shape = ConvShape {
            in_ch,
            out_ch: spec.filters,
            kt: spec.kernel_time,
            kq: spec.kernel_band,
            t,
            q,
        };
        let cg = conv_backward(
            &cache.conv_inputs[l],
            &params.tensors[2 * l].data,
            &d_pre,
            shape,
            l > 0,
        );
        grads.tensors[2 * l].data = cg.weight;
        grads.tensors[2 * l + 1].data = cg.bias;
        if let Some(di) = cg.input {
            d_act = di;
        }
    }
    Ok(grads)
}

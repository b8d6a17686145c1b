use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::config::EnhancerConfig;
use super::loss::{loss_from_log_gain, LossTarget};
use super::model::{backward, enhance, forward_cached, ForwardCache};
use super::params::EnhancerParams;
use crate::dsp::Signal;
use crate::error::{Error, Result};
use crate::fdlp::{segment, EnvelopeMatrix, FdlpAnalyzer, FdlpConfig};
use crate::reverb::ReverbPair;

/// One 2 s segment: reverberant envelopes and the matching loss target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub reverb: EnvelopeMatrix,
    pub clean: EnvelopeMatrix,
    pub target: LossTarget,
}

impl TrainingExample {
    pub fn new(
        reverb: EnvelopeMatrix,
        clean: EnvelopeMatrix,
        config: &EnhancerConfig,
    ) -> Result<Self> {
        let target = LossTarget::new(&reverb, &clean, config.envelope_floor, config.gain_floor)?;
        Ok(TrainingExample {
            reverb,
            clean,
            target,
        })
    }
}

/// Envelope pairs for every segment of every pair, in pair order.
pub fn examples_from_pairs(
    pairs: &[ReverbPair],
    fdlp: &FdlpConfig,
    config: &EnhancerConfig,
) -> Result<Vec<TrainingExample>> {
    let signals: Vec<(&Signal, &Signal)> =
        pairs.iter().map(|p| (&p.clean, &p.reverberant)).collect();
    examples_from_signals(&signals, fdlp, config)
}

/// As [`examples_from_pairs`] for `(clean, reverberant)` signal pairs.
pub fn examples_from_signals(
    pairs: &[(&Signal, &Signal)],
    fdlp: &FdlpConfig,
    config: &EnhancerConfig,
) -> Result<Vec<TrainingExample>> {
    let analyzer = FdlpAnalyzer::new(fdlp.clone())?;
    let per_pair: Vec<Result<Vec<TrainingExample>>> = pairs
        .par_iter()
        .map(|(clean, reverberant)| {
            if clean.len() != reverberant.len() {
                return Err(Error::shape(
                    format!("{} reverberant samples", clean.len()),
                    reverberant.len(),
                ));
            }
            let clean = segment(clean, fdlp)?;
            let reverb = segment(reverberant, fdlp)?;
            clean
                .iter()
                .zip(&reverb)
                .map(|(c, r)| {
                    TrainingExample::new(analyzer.envelopes(r)?, analyzer.envelopes(c)?, config)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for p in per_pair {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Configuration with the fitted input standardization.
    pub config: EnhancerConfig,
    /// Parameters with the lowest validation loss.
    pub best: EnhancerParams,
    pub best_epoch: usize,
    pub last: EnhancerParams,
    pub history: Vec<TrainRecord>,
}

/// Mean and standard deviation of the floored log envelope over the valid
/// rows of all examples.
pub fn fit_input_stats(examples: &[TrainingExample], floor: f64) -> (f64, f64) {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for ex in examples {
        let q = ex.reverb.shape().1;
        let rows = ex.reverb.valid_points();
        for v in &ex.reverb.values().as_slice()[..rows * q] {
            let l = v.max(floor).ln();
            n += 1;
            sum += l;
            sq += l * l;
        }
    }
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    (mean, if var > 1e-12 { var.sqrt() } else { 1.0 })
}

/// Loss and parameter gradient on one example.
pub fn loss_and_grad(
    example: &TrainingExample,
    params: &EnhancerParams,
    config: &EnhancerConfig,
) -> Result<(f64, EnhancerParams)> {
    let mut cache = ForwardCache::default();
    let log_gain = forward_cached(&example.reverb, params, config, Some(&mut cache))?;
    let l = loss_from_log_gain(&log_gain, &example.target, config.reg_weight)?;
    let grads = backward(params, config, &cache, &l.grad)?;
    Ok((l.total, grads))
}

pub fn evaluate(
    examples: &[TrainingExample],
    params: &EnhancerParams,
    config: &EnhancerConfig,
) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let losses: Vec<Result<f64>> = examples
        .par_iter()
        .map(|ex| {
            let lg = forward_cached(&ex.reverb, params, config, None)?;
            Ok(loss_from_log_gain(&lg, &ex.target, config.reg_weight)?.total)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / examples.len() as f64)
}

/// Adam training over shuffled segments. `on_epoch` sees every record with
/// the parameters that produced it, so callers can checkpoint as they go.
pub fn train(
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    config: &EnhancerConfig,
    mut on_epoch: impl FnMut(&TrainRecord, &EnhancerParams, &EnhancerConfig) -> Result<()>,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut config = config.clone();
    let (offset, spread) = fit_input_stats(train_set, config.envelope_floor);
    config.input_offset = offset;
    config.input_spread = spread;
    config.validate()?;

    let mut params = EnhancerParams::init(&config, config.seed)?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7261_696e);
    let eval_val = |p: &EnhancerParams, c: &EnhancerConfig| {
        if val_set.is_empty() {
            Ok(f64::NAN)
        } else {
            evaluate(val_set, p, c)
        }
    };

    let initial = TrainRecord {
        epoch: 0,
        train_loss: evaluate(train_set, &params, &config)?,
        val_loss: eval_val(&params, &config)?,
    };
    on_epoch(&initial, &params, &config)?;
    let mut history = vec![initial];
    let mut best = (params.clone(), 0usize, selection_loss(&initial));

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut running = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<(f64, EnhancerParams)>> = batch
                .par_iter()
                .map(|&i| loss_and_grad(&train_set[i], &params, &config))
                .collect();
            let mut grads = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (l, g) = r?;
                running += l;
                grads.add_scaled(&g, scale);
            }
            adam_step(&mut params, &grads, &mut state, &config.adam)?;
        }
        let record = TrainRecord {
            epoch,
            train_loss: running / train_set.len() as f64,
            val_loss: eval_val(&params, &config)?,
        };
        if !record.train_loss.is_finite() {
            return Err(Error::NumericOverflow {
                layer: usize::MAX,
                name: format!("training loss at epoch {epoch}"),
            });
        }
        on_epoch(&record, &params, &config)?;
        if selection_loss(&record) < best.2 {
            best = (params.clone(), epoch, selection_loss(&record));
        }
        history.push(record);
    }
    Ok(TrainOutcome {
        config,
        best: best.0,
        best_epoch: best.1,
        last: params,
        history,
    })
}

fn selection_loss(r: &TrainRecord) -> f64 {
    if r.val_loss.is_nan() {
        r.train_loss
    } else {
        r.val_loss
    }
}

/// Mean squared difference of floored natural-log envelopes over the rows
/// valid in both matrices.
pub fn log_mse(a: &EnvelopeMatrix, b: &EnvelopeMatrix, floor: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let q = a.shape().1;
    let rows = a.valid_points().min(b.valid_points());
    if rows == 0 || q == 0 {
        return Ok(0.0);
    }
    let n = (rows * q) as f64;
    Ok(a.values().as_slice()[..rows * q]
        .iter()
        .zip(&b.values().as_slice()[..rows * q])
        .map(|(x, y)| (x.max(floor).ln() - y.max(floor).ln()).powi(2))
        .sum::<f64>()
        / n)
}

/// Averaged log-MSE to clean before and after enhancement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOutReport {
    pub reverberant_mse: f64,
    pub enhanced_mse: f64,
}

impl HeldOutReport {
    /// Fractional reduction of the log-MSE achieved by enhancement.
    pub fn reduction(&self) -> f64 {
        1.0 - self.enhanced_mse / self.reverberant_mse
    }
}

pub fn held_out_report(
    examples: &[TrainingExample],
    params: &EnhancerParams,
    config: &EnhancerConfig,
) -> Result<HeldOutReport> {
    if examples.is_empty() {
        return Err(Error::invalid("no held-out examples"));
    }
    let rows: Vec<Result<(f64, f64)>> = examples
        .par_iter()
        .map(|ex| {
            let enhanced = enhance(&ex.reverb, params, config)?;
            Ok((
                log_mse(&ex.reverb, &ex.clean, config.envelope_floor)?,
                log_mse(&enhanced, &ex.clean, config.envelope_floor)?,
            ))
        })
        .collect();
    let (mut r, mut e) = (0.0, 0.0);
    for row in rows {
        let (a, b) = row?;
        r += a;
        e += b;
    }
    let n = examples.len() as f64;
    Ok(HeldOutReport {
        reverberant_mse: r / n,
        enhanced_mse: e / n,
    })
}

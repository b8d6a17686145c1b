//! Convolutional-recurrent envelope gain predictor.
//!
//! Log envelopes pass through a same-padded conv stack with ReLU, are
//! flattened per time step, run through unidirectional LSTMs, scaled per
//! band and exponentiated into a gain.

mod adam;
mod checkpoint;
mod config;
mod layers;
mod loss;
mod model;
mod params;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_loss_history, save_checkpoint,
    write_loss_history, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{AdamConfig, ConvSpec, EnhancerConfig, ScalePreset};
pub use loss::{loss, loss_from_log_gain, LossTarget, LossValue, MIN_CHANNEL_VARIANCE};
pub use model::{backward, enhance, forward, forward_cached, standardized_input, ForwardCache};
pub use params::{EnhancerParams, Tensor};
pub use train::{
    evaluate, examples_from_pairs, examples_from_signals, fit_input_stats, held_out_report,
    log_mse, loss_and_grad, train, HeldOutReport, TrainOutcome, TrainRecord, TrainingExample,
};

#[cfg(test)]
mod tests;

//! FDLP sub-band envelope dereverberation.
//!
//! The pipeline: segment audio into 2 s blocks, extract 800×36 FDLP
//! envelope matrices, predict a multiplicative envelope gain with a
//! convolutional-recurrent network, and integrate the enhanced envelopes
//! into 25 ms / 10 ms log features.

pub mod dsp;
pub mod enhancer;
pub mod error;
pub mod fdlp;
pub mod features;
pub mod io;
pub mod reverb;
pub mod synth;
pub mod verify;

pub use dsp::{LpModel, Signal};
pub use enhancer::{EnhancerConfig, EnhancerParams, TrainRecord};
pub use error::{Error, ErrorKind, Result};
pub use fdlp::{EnvelopeMatrix, FdlpAnalyzer, FdlpConfig, GainMatrix, Grid, Segment};
pub use features::{FeatureMatrix, FrameSpec};

//! Fixtures shared by the benchmarks.

use fdlp_core::enhancer::{examples_from_pairs, EnhancerConfig, TrainingExample};
use fdlp_core::fdlp::{segment, FdlpConfig, Segment};
use fdlp_core::reverb::synthetic_pairs;

/// One full reverberant 2 s segment.
pub fn reverberant_segment() -> Segment {
    let pair = &synthetic_pairs(1, 2.0, 0.5, 0.5, 16000, 1).expect("synthetic pair")[0];
    segment(&pair.reverberant, &FdlpConfig::default())
        .expect("segment")
        .remove(0)
}

pub fn training_example(config: &EnhancerConfig) -> TrainingExample {
    let pairs = synthetic_pairs(1, 2.0, 0.5, 0.5, 16000, 2).expect("synthetic pair");
    examples_from_pairs(&pairs, &FdlpConfig::default(), config)
        .expect("examples")
        .remove(0)
}

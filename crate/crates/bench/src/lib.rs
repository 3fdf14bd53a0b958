//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nmnf_core::forecaster::{build, ForecasterConfig, FutureInput};
use nmnf_core::grammar::Sample;
use nmnf_core::memory::MemoryConfig;
use nmnf_core::{ForecasterParams, Tensor};

/// The compact desk-scale configuration used throughout the benchmarks.
pub fn bench_config() -> ForecasterConfig {
    ForecasterConfig {
        num_classes: 8,
        feature_dim: 16,
        hidden_visual: 32,
        hidden_label: 16,
        mem_visual: MemoryConfig { slots: 10, slot_dim: 32 },
        mem_label: MemoryConfig { slots: 8, slot_dim: 16 },
        decoder_hidden: 32,
        persist_memory: false,
        future_visual_input: FutureInput::Zeros,
    }
}

pub fn bench_model(seed: u64) -> ForecasterParams {
    build(&bench_config(), seed).expect("valid bench config")
}

/// A random sequence matching [`bench_config`].
pub fn bench_sample(len: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..8)).collect();
    let data: Vec<f64> = (0..len * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    Sample { labels, features: Tensor::matrix(len, 16, data).expect("static shape") }
}

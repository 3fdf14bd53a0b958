//! Dual-memory recurrent forecaster for action sequences.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: rank-1/2 tensors on a reverse-mode gradient tape
//! - [`gradcheck`]: finite-difference verification of tape gradients
//! - [`recurrent`]: LSTM cell, two-layer MLP, dense softmax head
//! - [`memory`]: external slot memory with attention read and blended write
//! - [`forecaster`]: the dual-stream model, ablation variants, rollout
//! - [`checkpoint`]: text checkpoints for model parameters
//! - [`grammar`]: synthetic action grammars and feature synthesis
//! - [`dataio`]: binary feature files, label files, grammar files, corpora
//! - [`harness`]: training loop, evaluation protocol, ablation/sensitivity
//!   runners and report emission
//! - [`config`]: the structured config file shared by the CLI subcommands

pub mod checkpoint;
pub mod config;
pub mod dataio;
pub mod error;
pub mod forecaster;
pub mod gradcheck;
pub mod grammar;
pub mod harness;
pub mod memory;
pub mod recurrent;
pub mod tensor;

pub use error::{Error, Result};
pub use forecaster::{ForecasterConfig, ForecasterParams, RolloutPolicy, Variant};
pub use gradcheck::GradCheckReport;
pub use grammar::{ActionGrammar, ComposedGrammar, FeaturePrototypes, Sample};
pub use harness::{EvalProtocol, EvalReport, EvalRow, TrainConfig, TrainReport};
pub use memory::{MemoryConfig, MemoryParams, MemoryState, ReadResult};
pub use tensor::{Tape, Tensor, TensorId};

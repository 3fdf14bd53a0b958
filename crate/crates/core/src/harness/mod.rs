//! Training, the observed/predicted evaluation protocol, ablation and
//! sensitivity runners, and report emission.

pub mod eval;
pub mod report;
pub mod runner;
pub mod train;

pub use eval::{
    evaluate, evaluate_with, frame_accuracy, windows, EvalProtocol, LabelSource, ModelPredictor,
    SequencePredictor,
};
pub use report::{EvalReport, EvalRow, RunMeta};
pub use runner::{run_ablations, run_sensitivity};
pub use train::{clip_global_norm, train, TrainConfig, TrainReport};

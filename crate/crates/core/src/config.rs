//! The structured config file shared by the CLI subcommands: one TOML
//! document with `[forecaster]`, `[train]`, `[protocol]` and `[corpus]`
//! tables. Every key is optional and falls back to its default; unknown keys
//! are errors.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forecaster::{ForecasterConfig, FutureInput};
use crate::harness::{EvalProtocol, TrainConfig};
use crate::memory::MemoryConfig;

/// Partial forecaster dimensions; unset keys resolve to the reference
/// defaults. Class count and feature width normally come from the corpus.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecasterSettings {
    pub num_classes: Option<usize>,
    pub feature_dim: Option<usize>,
    pub hidden_visual: Option<usize>,
    pub hidden_label: Option<usize>,
    pub mem_visual: Option<MemoryConfig>,
    pub mem_label: Option<MemoryConfig>,
    pub decoder_hidden: Option<usize>,
    pub persist_memory: Option<bool>,
    pub future_visual_input: Option<FutureInput>,
}

impl ForecasterSettings {
    /// Resolves against the reference defaults, with the data's class count
    /// and feature width filled in. Explicit settings win but must agree
    /// with the data.
    pub fn resolve(&self, num_classes: usize, feature_dim: usize) -> Result<ForecasterConfig> {
        for (name, set, data) in [
            ("num_classes", self.num_classes, num_classes),
            ("feature_dim", self.feature_dim, feature_dim),
        ] {
            if let Some(v) = set {
                if v != data {
                    return Err(Error::Config(format!(
                        "config {name} = {v} disagrees with the corpus ({data})"
                    )));
                }
            }
        }
        let mut cfg = ForecasterConfig::paper_defaults(num_classes, feature_dim);
        if let Some(v) = self.hidden_visual {
            cfg.hidden_visual = v;
            cfg.mem_visual.slot_dim = v;
        }
        if let Some(v) = self.hidden_label {
            cfg.hidden_label = v;
            cfg.mem_label.slot_dim = v;
        }
        if let Some(v) = self.mem_visual {
            cfg.mem_visual = v;
        }
        if let Some(v) = self.mem_label {
            cfg.mem_label = v;
        }
        if let Some(v) = self.decoder_hidden {
            cfg.decoder_hidden = v;
        }
        if let Some(v) = self.persist_memory {
            cfg.persist_memory = v;
        }
        if let Some(v) = self.future_visual_input {
            cfg.future_visual_input = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Corpus generation settings.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSettings {
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub sequence_len: usize,
    pub feature_dim: usize,
    pub noise_std: f64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            train_sequences: 200,
            test_sequences: 50,
            sequence_len: 120,
            feature_dim: 16,
            noise_std: 0.5,
        }
    }
}

/// The whole config file.
#[derive(Clone, Debug, Default, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub forecaster: ForecasterSettings,
    pub train: TrainConfig,
    pub protocol: EvalProtocol,
    pub corpus: CorpusSettings,
}

pub fn load_config(path: &Path) -> Result<AppConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: AppConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.train.validate()?;
    cfg.protocol.validate()?;
    Ok(cfg)
}

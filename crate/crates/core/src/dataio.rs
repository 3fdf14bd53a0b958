//! On-disk formats.
//!
//! - Feature file: magic `NMNF`, u32 version (1), u32 T, u32 D, then `T*D`
//!   little-endian 32-bit floats, row-major. Values are widened to 64-bit on
//!   load; synthesized features are already quantized to 32-bit precision,
//!   so the round-trip is bitwise.
//! - Label file: plain text, one base-10 class id per line, `\n` newlines.
//! - Grammar file: TOML with the [`ActionGrammar`] keys (or a composed
//!   grammar with `menu` and `branches` tables); all invariants are enforced
//!   on load.
//! - Corpus directory: `meta.toml` plus `train/` and `test/` holding
//!   `seq_NNNN.nmnf` / `seq_NNNN.labels` pairs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grammar::{ActionGrammar, ComposedGrammar, Sample};
use crate::tensor::Tensor;

const FEATURE_MAGIC: &[u8; 4] = b"NMNF";
const FEATURE_VERSION: u32 = 1;

fn format_err(path: &Path, offset: u64, detail: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), offset, detail: detail.into() }
}

/// Writes a `T x D` feature tensor. Values are stored as 32-bit floats.
pub fn write_features(path: &Path, features: &Tensor) -> Result<()> {
    if features.rank() != 2 {
        return Err(Error::dim("write_features", format!("expected matrix, got {:?}", features.shape)));
    }
    let (t, d) = (features.rows(), features.cols());
    let mut bytes = Vec::with_capacity(16 + t * d * 4);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(t as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in &features.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Reads a feature file, validating magic, version, header and payload size.
pub fn read_features(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 || &bytes[0..4] != FEATURE_MAGIC {
        return Err(format_err(path, 0, "bad magic, expected NMNF"));
    }
    if bytes.len() < 8 {
        return Err(format_err(path, 4, "truncated before version"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(format_err(path, 4, format!("unsupported version {version}")));
    }
    if bytes.len() < 16 {
        return Err(format_err(path, 8, "truncated before shape header"));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if t == 0 || d == 0 {
        return Err(format_err(path, 8, format!("degenerate shape {t}x{d}")));
    }
    let expected = 16 + t * d * 4;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            bytes.len().min(expected) as u64,
            format!("payload is {} bytes, header {t}x{d} wants {expected}", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity(t * d);
    for i in 0..t * d {
        let off = 16 + i * 4;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(path, off as u64, format!("non-finite value {v}")));
        }
        data.push(v as f64);
    }
    Tensor::matrix(t, d, data)
}

/// Writes labels, one base-10 id per line.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads a label file. Every line must be a base-10 class id.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)
        .map_err(|e| format_err(path, 0, format!("not readable as text: {e}")))?;
    if text.is_empty() {
        return Err(format_err(path, 0, "empty label file"));
    }
    if !text.ends_with('\n') {
        return Err(format_err(path, text.len() as u64, "missing trailing newline"));
    }
    let mut labels = Vec::new();
    let mut offset = 0u64;
    for line in text[..text.len() - 1].split('\n') {
        let l: usize = line
            .parse()
            .map_err(|_| format_err(path, offset, format!("bad label line {line:?}")))?;
        labels.push(l);
        offset += line.len() as u64 + 1;
    }
    Ok(labels)
}

/// Grammar file content: either a plain grammar or a composed one.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum GrammarFile {
    Composed(ComposedGrammar),
    Plain(ActionGrammar),
}

impl GrammarFile {
    pub fn num_classes(&self) -> usize {
        match self {
            GrammarFile::Plain(g) => g.num_classes(),
            GrammarFile::Composed(g) => g.num_classes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GrammarFile::Plain(g) => g.validate(),
            GrammarFile::Composed(g) => g.validate(),
        }
    }

    pub fn sampler(&self) -> &dyn crate::grammar::LabelSampler {
        match self {
            GrammarFile::Plain(g) => g,
            GrammarFile::Composed(g) => g,
        }
    }
}

pub fn write_grammar(path: &Path, grammar: &GrammarFile) -> Result<()> {
    let text = toml::to_string_pretty(grammar)
        .map_err(|e| Error::Config(format!("cannot serialize grammar: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_grammar(path: &Path) -> Result<GrammarFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| format_err(path, 0, format!("not readable as text: {e}")))?;
    let grammar: GrammarFile = toml::from_str(&text)
        .map_err(|e| format_err(path, e.span().map(|s| s.start as u64).unwrap_or(0), e.to_string()))?;
    grammar.validate()?;
    Ok(grammar)
}

/// Corpus-wide facts recorded by `generate` and consumed by `train`/`eval`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusMeta {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub sequence_len: usize,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub noise_std: f64,
    pub seed: u64,
}

/// Writes a full corpus: meta, grammar echo, and per-sequence files.
pub fn write_corpus(
    dir: &Path,
    meta: &CorpusMeta,
    grammar: &GrammarFile,
    train: &[Sample],
    test: &[Sample],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta_text = toml::to_string_pretty(meta)
        .map_err(|e| Error::Config(format!("cannot serialize corpus meta: {e}")))?;
    fs::write(dir.join("meta.toml"), meta_text)?;
    write_grammar(&dir.join("grammar.toml"), grammar)?;
    for (sub, samples) in [("train", train), ("test", test)] {
        let subdir = dir.join(sub);
        fs::create_dir_all(&subdir)?;
        for (i, sample) in samples.iter().enumerate() {
            write_features(&subdir.join(format!("seq_{i:04}.nmnf")), &sample.features)?;
            write_labels(&subdir.join(format!("seq_{i:04}.labels")), &sample.labels)?;
        }
    }
    Ok(())
}

pub fn read_corpus_meta(dir: &Path) -> Result<CorpusMeta> {
    let path = dir.join("meta.toml");
    let text = fs::read_to_string(&path)
        .map_err(|e| format_err(&path, 0, format!("not readable as text: {e}")))?;
    toml::from_str(&text)
        .map_err(|e| format_err(&path, e.span().map(|s| s.start as u64).unwrap_or(0), e.to_string()))
}

/// Loads one split (`train` or `test`), pairing feature and label files by
/// sequence number in sorted order.
pub fn read_split(dir: &Path, split: &str) -> Result<Vec<Sample>> {
    let subdir = dir.join(split);
    let mut stems: Vec<PathBuf> = fs::read_dir(&subdir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "nmnf").unwrap_or(false))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Protocol(format!(
            "no sequences found in {}",
            subdir.display()
        )));
    }
    let mut samples = Vec::with_capacity(stems.len());
    for feat_path in stems {
        let label_path = feat_path.with_extension("labels");
        let features = read_features(&feat_path)?;
        let labels = read_labels(&label_path)?;
        if labels.len() != features.rows() {
            return Err(format_err(
                &label_path,
                0,
                format!("{} labels but {} feature rows", labels.len(), features.rows()),
            ));
        }
        samples.push(Sample { labels, features });
    }
    Ok(samples)
}

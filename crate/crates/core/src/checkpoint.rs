//! Text checkpoints: one document mapping parameter name to shape and flat
//! 64-bit values.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is bitwise exact. Loading validates the variant and every
//! parameter shape against the caller's config and fails on missing or
//! extra parameters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forecaster::{ForecasterConfig, ForecasterParams, Variant};

const HEADER: &str = "NMNC v1";

fn format_err(path: &Path, offset: u64, detail: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), offset, detail: detail.into() }
}

pub fn save(path: &Path, params: &ForecasterParams) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "{HEADER}");
    let _ = writeln!(text, "variant {}", params.variant.code());
    for (name, tensor) in params.named() {
        let _ = write!(text, "tensor {name}");
        for d in &tensor.shape {
            let _ = write!(text, " {d}");
        }
        text.push('\n');
        let mut first = true;
        for v in &tensor.data {
            if !first {
                text.push(' ');
            }
            let _ = write!(text, "{v}");
            first = false;
        }
        text.push('\n');
    }
    text.push_str("end\n");
    fs::write(path, text)?;
    Ok(())
}

pub fn load(path: &Path, config: &ForecasterConfig) -> Result<ForecasterParams> {
    let text = fs::read_to_string(path)
        .map_err(|e| format_err(path, 0, format!("not readable as text: {e}")))?;
    let mut offset = 0u64;
    let mut lines = text.split_inclusive('\n').map(move |line| {
        let at = offset;
        offset += line.len() as u64;
        (at, line.strip_suffix('\n').unwrap_or(line))
    });

    let (at, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 0, "empty checkpoint"))?;
    if header != HEADER {
        return Err(format_err(path, at, format!("bad header {header:?}, expected {HEADER:?}")));
    }
    let (at, variant_line) = lines
        .next()
        .ok_or_else(|| format_err(path, 0, "missing variant line"))?;
    let variant_code = variant_line
        .strip_prefix("variant ")
        .ok_or_else(|| format_err(path, at, format!("expected variant line, got {variant_line:?}")))?;
    let variant = Variant::parse(variant_code)
        .map_err(|e| format_err(path, at, e.to_string()))?;

    let mut entries: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    let mut saw_end = false;
    while let Some((at, line)) = lines.next() {
        if line == "end" {
            saw_end = true;
            break;
        }
        let rest = line
            .strip_prefix("tensor ")
            .ok_or_else(|| format_err(path, at, format!("expected tensor line, got {line:?}")))?;
        let mut parts = rest.split(' ');
        let name = parts
            .next()
            .filter(|n| !n.is_empty())
            .ok_or_else(|| format_err(path, at, "tensor line without a name"))?
            .to_string();
        let shape: Vec<usize> = parts
            .map(|p| p.parse::<usize>().map_err(|_| format_err(path, at, format!("bad dimension {p:?}"))))
            .collect::<Result<_>>()?;
        let (dat, data_line) = lines
            .next()
            .ok_or_else(|| format_err(path, at, format!("tensor {name} truncated before data")))?;
        let data: Vec<f64> = data_line
            .split(' ')
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| format_err(path, dat, format!("bad float {p:?} in tensor {name}")))
            })
            .collect::<Result<_>>()?;
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(format_err(
                path,
                dat,
                format!("tensor {name}: shape {shape:?} wants {numel} values, found {}", data.len()),
            ));
        }
        entries.push((name, shape, data));
    }
    if !saw_end {
        return Err(format_err(path, text.len() as u64, "missing end marker"));
    }

    // Validate against the expected structure for this variant and config.
    let mut params = ForecasterParams::skeleton(variant, config)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape.clone()))
        .collect();
    if entries.len() != expected.len() {
        let have: Vec<&String> = entries.iter().map(|(n, _, _)| n).collect();
        let want: Vec<&String> = expected.iter().map(|(n, _)| n).collect();
        return Err(format_err(
            path,
            0,
            format!("parameter set mismatch: checkpoint has {have:?}, config wants {want:?}"),
        ));
    }
    for (slot, entry) in params.named_mut().into_iter().zip(entries) {
        let (name, tensor) = slot;
        let (entry_name, shape, data) = entry;
        if name != entry_name {
            return Err(format_err(
                path,
                0,
                format!("unexpected parameter {entry_name:?}, wanted {name:?}"),
            ));
        }
        if tensor.shape != shape {
            return Err(format_err(
                path,
                0,
                format!("parameter {name}: shape {shape:?} does not match config {:?}", tensor.shape),
            ));
        }
        tensor.data = data;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::build_ablation;
    use crate::memory::MemoryConfig;
    use crate::forecaster::FutureInput;

    fn cfg() -> ForecasterConfig {
        ForecasterConfig {
            num_classes: 3,
            feature_dim: 4,
            hidden_visual: 5,
            hidden_label: 3,
            mem_visual: MemoryConfig { slots: 4, slot_dim: 5 },
            mem_label: MemoryConfig { slots: 3, slot_dim: 3 },
            decoder_hidden: 4,
            persist_memory: false,
            future_visual_input: FutureInput::Zeros,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = build_ablation(Variant::Full, &cfg(), 5).unwrap();
        save(&path, &params).unwrap();
        let back = load(&path, &cfg()).unwrap();
        assert_eq!(back.variant, Variant::Full);
        for ((na, ta), (nb, tb)) in params.named().iter().zip(back.named().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data, tb.data, "{na} not bitwise identical");
        }
        // Saving again reproduces the bytes.
        let path2 = dir.path().join("model2.ckpt");
        save(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = build_ablation(Variant::LabelOnly, &cfg(), 5).unwrap();
        save(&path, &params).unwrap();
        let mut other = cfg();
        other.hidden_label = 4;
        other.mem_label.slot_dim = 4;
        assert!(matches!(load(&path, &other), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_parameter_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = build_ablation(Variant::Full, &cfg(), 5).unwrap();
        save(&path, &params).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // Drop one tensor (two lines).
        let mut lines: Vec<&str> = text.lines().collect();
        let idx = lines.iter().position(|l| l.starts_with("tensor head.bias")).unwrap();
        lines.drain(idx..idx + 2);
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(load(&path, &cfg()), Err(Error::Format { .. })));
    }

    #[test]
    fn extra_parameter_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = build_ablation(Variant::Full, &cfg(), 5).unwrap();
        save(&path, &params).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let with_extra = text.replace("end\n", "tensor bogus.weight 2\n0.5 0.5\nend\n");
        std::fs::write(&path, with_extra).unwrap();
        assert!(matches!(load(&path, &cfg()), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, "WRONG v9\n").unwrap();
        assert!(matches!(load(&path, &cfg()), Err(Error::Format { .. })));
    }
}

//! The observed-% / predicted-% evaluation protocol.
//!
//! For every protocol cell the model observes a prefix of each sequence
//! (ground-truth labels on the label stream), rolls out greedily over the
//! prediction window, and is scored by frame-wise accuracy. Sequences too
//! short for a cell are skipped and counted; a cell where everything was
//! skipped is a protocol error.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecaster::{predict_sequence, CarriedMemory, ForecasterParams, RolloutPolicy};
use crate::grammar::{corrupt_labels, Sample};
use crate::harness::report::{EvalReport, EvalRow};

/// Fractions of each sequence to observe and to predict.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub observed_fractions: Vec<f64>,
    pub predicted_fractions: Vec<f64>,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            observed_fractions: vec![0.2, 0.3],
            predicted_fractions: vec![0.1, 0.2, 0.3, 0.5],
        }
    }
}

impl EvalProtocol {
    /// A single-cell protocol (the ablation and sensitivity setting).
    pub fn single_cell(obs: f64, pred: f64) -> Self {
        EvalProtocol { observed_fractions: vec![obs], predicted_fractions: vec![pred] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.observed_fractions.is_empty() || self.predicted_fractions.is_empty() {
            return Err(Error::Config("protocol needs observed and predicted fractions".into()));
        }
        for &f in self.observed_fractions.iter().chain(&self.predicted_fractions) {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("fraction {f} outside (0, 1)")));
            }
        }
        for &o in &self.observed_fractions {
            for &p in &self.predicted_fractions {
                if o + p > 1.0 {
                    return Err(Error::Config(format!(
                        "observed {o} + predicted {p} exceeds the sequence"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Observed and predicted frame ranges for one sequence: the model observes
/// `floor(obs_frac * T)` frames (at least one) and predicts the next
/// `floor(pred_frac * T)`.
pub fn windows(total_len: usize, obs_frac: f64, pred_frac: f64) -> Result<(Range<usize>, Range<usize>)> {
    if total_len == 0 {
        return Err(Error::Protocol("empty sequence".into()));
    }
    for &f in &[obs_frac, pred_frac] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Protocol(format!("fraction {f} outside (0, 1)")));
        }
    }
    if obs_frac + pred_frac > 1.0 {
        return Err(Error::Protocol(format!(
            "observed {obs_frac} + predicted {pred_frac} exceeds the sequence"
        )));
    }
    let t_obs = ((obs_frac * total_len as f64).floor() as usize).max(1);
    let t_pred = (pred_frac * total_len as f64).floor() as usize;
    if t_pred == 0 {
        return Err(Error::Protocol(format!(
            "prediction window is empty for length {total_len} at fraction {pred_frac}"
        )));
    }
    if t_obs + t_pred > total_len {
        return Err(Error::Protocol(format!(
            "windows {t_obs}+{t_pred} exceed sequence length {total_len}"
        )));
    }
    Ok((0..t_obs, t_obs..t_obs + t_pred))
}

/// Fraction of positions with an exact class match.
pub fn frame_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::Contract(format!(
            "frame_accuracy needs equal nonzero lengths, got {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Label-stream source for the observed window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LabelSource {
    GroundTruth,
    /// Segment-consistent corruption of the observed labels with
    /// probability `p` per segment (the sensitivity analysis).
    Corrupted { p: f64, seed: u64 },
}

impl LabelSource {
    fn labels_for(
        &self,
        sample: &Sample,
        sample_idx: usize,
        obs: &Range<usize>,
        num_classes: usize,
    ) -> Result<Vec<usize>> {
        let truth = &sample.labels[obs.clone()];
        match *self {
            LabelSource::GroundTruth => Ok(truth.to_vec()),
            LabelSource::Corrupted { p, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (sample_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                corrupt_labels(truth, num_classes, p, &mut rng)
            }
        }
    }
}

/// Anything that can continue a sequence after an observed window.
///
/// `predict` is called once per (sequence, observed window) with the longest
/// horizon any cell needs; shorter cells are scored on prefixes, so
/// implementations must be prefix-consistent (greedy rollouts are).
pub trait SequencePredictor {
    fn predict(
        &mut self,
        sample: &Sample,
        obs: Range<usize>,
        observe_labels: &[usize],
        horizon: usize,
    ) -> Result<Vec<usize>>;
}

/// The real predictor: observe, then greedy rollout. Threads slot matrices
/// across sequences when the model was configured with `persist_memory`.
pub struct ModelPredictor<'a> {
    params: &'a ForecasterParams,
    carried: Option<CarriedMemory>,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(params: &'a ForecasterParams) -> Self {
        ModelPredictor { params, carried: None }
    }
}

impl SequencePredictor for ModelPredictor<'_> {
    fn predict(
        &mut self,
        sample: &Sample,
        obs: Range<usize>,
        observe_labels: &[usize],
        horizon: usize,
    ) -> Result<Vec<usize>> {
        let carry = if self.params.config.persist_memory { self.carried.as_ref() } else { None };
        let (classes, memory) = predict_sequence(
            self.params,
            sample,
            observe_labels,
            obs,
            horizon,
            &RolloutPolicy::Greedy,
            carry,
        )?;
        if self.params.config.persist_memory {
            self.carried = Some(memory);
        }
        Ok(classes)
    }
}

/// Per-cell accumulator.
struct CellAcc {
    obs_frac: f64,
    pred_frac: f64,
    acc_sum: f64,
    included: usize,
    skipped: usize,
    class_hits: Vec<usize>,
    class_totals: Vec<usize>,
}

/// Runs the protocol grid with an arbitrary predictor. `variant` and `seed`
/// only tag the report rows.
pub fn evaluate_with(
    predictor: &mut dyn SequencePredictor,
    test: &[Sample],
    protocol: &EvalProtocol,
    source: LabelSource,
    num_classes: usize,
    variant: &str,
    seed: u64,
) -> Result<EvalReport> {
    protocol.validate()?;
    if test.is_empty() {
        return Err(Error::Protocol("empty test set".into()));
    }
    let mut cells: Vec<CellAcc> = Vec::new();
    for &o in &protocol.observed_fractions {
        for &p in &protocol.predicted_fractions {
            cells.push(CellAcc {
                obs_frac: o,
                pred_frac: p,
                acc_sum: 0.0,
                included: 0,
                skipped: 0,
                class_hits: vec![0; num_classes],
                class_totals: vec![0; num_classes],
            });
        }
    }

    for (sample_idx, sample) in test.iter().enumerate() {
        for (oi, &obs_frac) in protocol.observed_fractions.iter().enumerate() {
            // Cells of this observed fraction that fit this sequence.
            let mut valid: Vec<(usize, Range<usize>)> = Vec::new();
            let mut obs_range: Option<Range<usize>> = None;
            for (pi, &pred_frac) in protocol.predicted_fractions.iter().enumerate() {
                let cell_idx = oi * protocol.predicted_fractions.len() + pi;
                match windows(sample.len(), obs_frac, pred_frac) {
                    Ok((o, p)) => {
                        obs_range = Some(o);
                        valid.push((cell_idx, p));
                    }
                    Err(_) => cells[cell_idx].skipped += 1,
                }
            }
            let Some(obs_range) = obs_range else { continue };
            let horizon = valid.iter().map(|(_, p)| p.len()).max().unwrap();
            let observe_labels =
                source.labels_for(sample, sample_idx, &obs_range, num_classes)?;
            let predicted =
                predictor.predict(sample, obs_range.clone(), &observe_labels, horizon)?;
            for (cell_idx, pred_range) in valid {
                let truth = &sample.labels[pred_range.clone()];
                let guess = &predicted[..pred_range.len()];
                let cell = &mut cells[cell_idx];
                cell.acc_sum += frame_accuracy(guess, truth)?;
                cell.included += 1;
                for (g, &t) in guess.iter().zip(truth) {
                    cell.class_totals[t] += 1;
                    if *g == t {
                        cell.class_hits[t] += 1;
                    }
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        if cell.included == 0 {
            return Err(Error::Protocol(format!(
                "every sequence was skipped at cell obs={} pred={} ({} skipped)",
                cell.obs_frac, cell.pred_frac, cell.skipped
            )));
        }
        if cell.skipped > 0 {
            log::warn!(
                "cell obs={} pred={}: skipped {} of {} sequences",
                cell.obs_frac,
                cell.pred_frac,
                cell.skipped,
                cell.included + cell.skipped
            );
        }
        let present: Vec<usize> =
            (0..num_classes).filter(|&c| cell.class_totals[c] > 0).collect();
        let macro_accuracy = present
            .iter()
            .map(|&c| cell.class_hits[c] as f64 / cell.class_totals[c] as f64)
            .sum::<f64>()
            / present.len().max(1) as f64;
        rows.push(EvalRow {
            variant: variant.to_string(),
            seed,
            observed_frac: cell.obs_frac,
            predicted_frac: cell.pred_frac,
            accuracy: cell.acc_sum / cell.included as f64,
            num_sequences: cell.included,
            macro_accuracy,
            skipped: cell.skipped,
        });
    }
    Ok(EvalReport { rows, runs: Vec::new() })
}

/// Evaluates a trained model over the protocol grid with ground-truth
/// observed labels. Model parameters are immutable here by construction.
pub fn evaluate(
    params: &ForecasterParams,
    test: &[Sample],
    protocol: &EvalProtocol,
) -> Result<EvalReport> {
    let mut predictor = ModelPredictor::new(params);
    evaluate_with(
        &mut predictor,
        test,
        protocol,
        LabelSource::GroundTruth,
        params.config.num_classes,
        params.variant.code(),
        0,
    )
}

//! Evaluation reports: the canonical CSV plus a structured summary carrying
//! the extra columns (macro accuracy, skip counts, parameter counts).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One protocol cell for one (variant, seed).
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct EvalRow {
    pub variant: String,
    pub seed: u64,
    pub observed_frac: f64,
    pub predicted_frac: f64,
    /// Frame-wise accuracy averaged over sequences (the canonical metric).
    pub accuracy: f64,
    pub num_sequences: usize,
    /// Mean per-class accuracy over the classes present in the cell.
    pub macro_accuracy: f64,
    pub skipped: usize,
}

/// Per-(variant, seed) training facts for the summary.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RunMeta {
    pub variant: String,
    pub seed: u64,
    pub num_params: usize,
    pub epochs_run: usize,
    pub final_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub runs: Vec<RunMeta>,
}

impl EvalReport {
    /// Deterministic order: variant, seed, observed, predicted.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.variant, a.seed)
                .cmp(&(&b.variant, b.seed))
                .then(a.observed_frac.total_cmp(&b.observed_frac))
                .then(a.predicted_frac.total_cmp(&b.predicted_frac))
        });
        self.runs.sort_by(|a, b| (&a.variant, a.seed).cmp(&(&b.variant, b.seed)));
    }

    pub fn merge(mut reports: Vec<EvalReport>) -> EvalReport {
        let mut out = EvalReport::default();
        for r in reports.iter_mut() {
            out.rows.append(&mut r.rows);
            out.runs.append(&mut r.runs);
        }
        out.sort();
        out
    }

    /// The canonical CSV. Header is exactly
    /// `variant,seed,observed_frac,predicted_frac,accuracy,num_sequences`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seed,observed_frac,predicted_frac,accuracy,num_sequences\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.variant, r.seed, r.observed_frac, r.predicted_frac, r.accuracy, r.num_sequences
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Structured summary with every column, as TOML.
    pub fn summary_toml(&self) -> Result<String> {
        #[derive(serde::Serialize)]
        struct Summary<'a> {
            cell: &'a [EvalRow],
            run: &'a [RunMeta],
        }
        toml::to_string_pretty(&Summary { cell: &self.rows, run: &self.runs })
            .map_err(|e| Error::Evaluation(format!("cannot serialize summary: {e}")))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.summary_toml()?)?;
        Ok(())
    }

    /// Mean accuracy over seeds for one variant and cell.
    pub fn mean_accuracy(&self, variant: &str, obs: f64, pred: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| {
                r.variant == variant
                    && (r.observed_frac - obs).abs() < 1e-12
                    && (r.predicted_frac - pred).abs() < 1e-12
            })
            .map(|r| r.accuracy)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: &str, seed: u64, obs: f64, pred: f64, acc: f64) -> EvalRow {
        EvalRow {
            variant: variant.into(),
            seed,
            observed_frac: obs,
            predicted_frac: pred,
            accuracy: acc,
            num_sequences: 50,
            macro_accuracy: acc,
            skipped: 0,
        }
    }

    #[test]
    fn csv_header_is_exact() {
        let report = EvalReport { rows: vec![row("full", 1, 0.3, 0.5, 0.875)], runs: vec![] };
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "variant,seed,observed_frac,predicted_frac,accuracy,num_sequences"
        );
        assert_eq!(lines.next().unwrap(), "full,1,0.3,0.5,0.875,50");
    }

    #[test]
    fn merge_sorts_deterministically() {
        let a = EvalReport { rows: vec![row("full", 2, 0.3, 0.5, 0.9)], runs: vec![] };
        let b = EvalReport {
            rows: vec![row("a", 1, 0.3, 0.5, 0.2), row("a", 1, 0.2, 0.1, 0.3)],
            runs: vec![],
        };
        let merged = EvalReport::merge(vec![a, b]);
        let order: Vec<(String, u64, f64, f64)> = merged
            .rows
            .iter()
            .map(|r| (r.variant.clone(), r.seed, r.observed_frac, r.predicted_frac))
            .collect();
        assert_eq!(
            order,
            vec![
                ("a".into(), 1, 0.2, 0.1),
                ("a".into(), 1, 0.3, 0.5),
                ("full".into(), 2, 0.3, 0.5),
            ]
        );
    }

    #[test]
    fn mean_accuracy_averages_over_seeds() {
        let report = EvalReport {
            rows: vec![row("full", 1, 0.3, 0.5, 0.8), row("full", 2, 0.3, 0.5, 0.6)],
            runs: vec![],
        };
        assert_eq!(report.mean_accuracy("full", 0.3, 0.5), Some(0.7));
        assert_eq!(report.mean_accuracy("b", 0.3, 0.5), None);
    }
}

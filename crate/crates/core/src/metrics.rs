//! Confusion-matrix evaluation for the three-class sentiment task: accuracy,
//! per-class precision/recall/F1, and macro averages. The report-level F1 is
//! the harmonic mean of macro precision and macro recall.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::SentimentLabel;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label vectors differ in length: truth {truth}, predicted {predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("cannot evaluate an empty label vector")]
    EmptyInput,
}

/// 3x3 tally of (true label, predicted label) pairs; rows are truth.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(
        truth: &[SentimentLabel],
        predicted: &[SentimentLabel],
    ) -> Result<Self, MetricsError> {
        if truth.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch {
                truth: truth.len(),
                predicted: predicted.len(),
            });
        }
        if truth.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let mut counts = [[0u64; 3]; 3];
        for (t, p) in truth.iter().zip(predicted) {
            counts[t.index()][p.index()] += 1;
        }
        Ok(Self { counts })
    }

    pub fn count(&self, truth: SentimentLabel, predicted: SentimentLabel) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Examples whose true label is `label` (row sum).
    pub fn support(&self, label: SentimentLabel) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    /// Examples predicted as `label` (column sum).
    pub fn predicted_total(&self, label: SentimentLabel) -> u64 {
        self.counts.iter().map(|row| row[label.index()]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }
}

/// Precision/recall/F1 for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: SentimentLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Evaluation summary; `precision`/`recall` are macro averages over the three
/// classes and `f1` is their harmonic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Score `predicted` against `truth`.
///
/// Per class, precision is diagonal over column sum and recall diagonal over
/// row sum, both 0 when the denominator is empty.
pub fn evaluate(
    truth: &[SentimentLabel],
    predicted: &[SentimentLabel],
) -> Result<EvalReport, MetricsError> {
    let cm = ConfusionMatrix::from_pairs(truth, predicted)?;
    Ok(report_from_confusion(&cm))
}

pub fn report_from_confusion(cm: &ConfusionMatrix) -> EvalReport {
    let per_class: Vec<ClassMetrics> = SentimentLabel::ALL
        .iter()
        .map(|&label| {
            let tp = cm.count(label, label);
            let precision = ratio(tp, cm.predicted_total(label));
            let recall = ratio(tp, cm.support(label));
            ClassMetrics {
                label,
                precision,
                recall,
                f1: harmonic_mean(precision, recall),
                support: cm.support(label),
            }
        })
        .collect();

    let macro_precision = per_class.iter().map(|c| c.precision).sum::<f64>() / 3.0;
    let macro_recall = per_class.iter().map(|c| c.recall).sum::<f64>() / 3.0;

    EvalReport {
        accuracy: ratio(cm.correct(), cm.total()),
        precision: macro_precision,
        recall: macro_recall,
        f1: harmonic_mean(macro_precision, macro_recall),
        per_class,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentLabel::{Negative as N, Neutral as U, Positive as P};

    #[test]
    fn perfect_classifier_scores_one() {
        let truth = vec![P, N, U, P, N, U];
        let report = evaluate(&truth, &truth).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.f1, 1.0);
        for c in &report.per_class {
            assert_eq!(c.f1, 1.0);
            assert_eq!(c.support, 2);
        }
    }

    #[test]
    fn six_example_case_matches_hand_computation() {
        let truth = vec![P, P, N, N, U, U];
        let predicted = vec![P, N, N, N, U, P];
        let report = evaluate(&truth, &predicted).unwrap();

        assert!((report.accuracy - 4.0 / 6.0).abs() < 1e-9);
        let per: Vec<(f64, f64)> = report
            .per_class
            .iter()
            .map(|c| (c.precision, c.recall))
            .collect();
        assert!((per[0].0 - 0.5).abs() < 1e-9);
        assert!((per[1].0 - 2.0 / 3.0).abs() < 1e-9);
        assert!((per[2].0 - 1.0).abs() < 1e-9);
        assert!((per[0].1 - 0.5).abs() < 1e-9);
        assert!((per[1].1 - 1.0).abs() < 1e-9);
        assert!((per[2].1 - 0.5).abs() < 1e-9);

        assert!((report.precision - 13.0 / 18.0).abs() < 1e-9);
        assert!((report.recall - 2.0 / 3.0).abs() < 1e-9);
        // harmonic mean of 13/18 and 12/18 = 52/75
        assert!((report.f1 - 52.0 / 75.0).abs() < 1e-9);
    }

    #[test]
    fn total_misclassification_scores_zero() {
        let truth = vec![P; 5];
        let predicted = vec![N; 5];
        let report = evaluate(&truth, &predicted).unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.precision, 0.0);
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            evaluate(&[P, N], &[P]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(evaluate(&[], &[]), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn report_serializes_contract_keys() {
        let report = evaluate(&[P, N, U], &[P, N, U]).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        let obj = json.as_object().unwrap();
        assert_eq!(obj.len(), 5);
        for key in ["accuracy", "precision", "recall", "f1", "per_class"] {
            assert!(obj.contains_key(key), "missing key {key}");
        }
        assert_eq!(json["per_class"][0]["label"], "POSITIVE");
    }
}

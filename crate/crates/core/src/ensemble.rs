//! Stacking of three base sentiment classifiers.
//!
//! Two schemes are provided: majority vote with a designated tiebreaker model
//! for three-way disagreements, and a multinomial logistic-regression
//! meta-learner trained on one-hot encodings of the base predictions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of sentiment classes.
pub const NUM_CLASSES: usize = 3;
/// Number of stacked base models.
pub const NUM_BASE_MODELS: usize = 3;
/// One-hot feature width: one block of `NUM_CLASSES` per base model.
pub const FEATURE_DIM: usize = NUM_BASE_MODELS * NUM_CLASSES;

/// Three-class sentiment label with a stable integer encoding
/// (POSITIVE=0, NEGATIVE=1, NEUTRAL=2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
    ];

    pub fn index(self) -> usize {
        match self {
            SentimentLabel::Positive => 0,
            SentimentLabel::Negative => 1,
            SentimentLabel::Neutral => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "POSITIVE",
            SentimentLabel::Negative => "NEGATIVE",
            SentimentLabel::Neutral => "NEUTRAL",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown sentiment label {0:?} (expected POSITIVE, NEGATIVE or NEUTRAL)")]
pub struct ParseLabelError(String);

impl FromStr for SentimentLabel {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "POSITIVE" => Ok(SentimentLabel::Positive),
            "NEGATIVE" => Ok(SentimentLabel::Negative),
            "NEUTRAL" => Ok(SentimentLabel::Neutral),
            _ => Err(ParseLabelError(s.to_string())),
        }
    }
}

impl TryFrom<String> for SentimentLabel {
    type Error = ParseLabelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SentimentLabel> for String {
    fn from(label: SentimentLabel) -> Self {
        label.as_str().to_string()
    }
}

/// One base model's prediction for one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub model_id: String,
    pub label: SentimentLabel,
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("duplicate prediction for example {example_id} from base model {model_index}")]
    DuplicatePrediction {
        example_id: String,
        model_index: usize,
    },
    #[error("missing prediction for example {example_id} from base model {model_index}")]
    MissingPrediction {
        example_id: String,
        model_index: usize,
    },
    #[error("stack2 prediction requires a trained meta-learner model")]
    MissingModel,
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),
    #[error("training loss became non-finite at epoch {epoch}")]
    NumericalFailure { epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Label agreed on by at least two models; when all three disagree, the label
/// of the designated tiebreaker model.
pub fn majority_vote(preds: [SentimentLabel; 3], tiebreaker_index: usize) -> SentimentLabel {
    assert!(tiebreaker_index < 3, "tiebreaker_index must be 0, 1 or 2");
    if preds[0] == preds[1] || preds[0] == preds[2] {
        preds[0]
    } else if preds[1] == preds[2] {
        preds[1]
    } else {
        preds[tiebreaker_index]
    }
}

/// Concatenated one-hot encodings of the three base predictions, in fixed
/// model order.
pub fn encode_features(preds: [SentimentLabel; 3]) -> [f64; FEATURE_DIM] {
    let mut features = [0.0; FEATURE_DIM];
    for (m, label) in preds.iter().enumerate() {
        features[m * NUM_CLASSES + label.index()] = 1.0;
    }
    features
}

/// Gradient-descent settings for the meta-learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    /// Retained for future stochastic variants; full-batch training from zero
    /// initialization does not consume it.
    pub seed: u64,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 1000,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

/// Hyperparameters plus the training loss of the returned weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    pub final_loss: f64,
}

/// Multinomial logistic-regression meta-learner. `weights` has one row per
/// class and `feature_dim + 1` columns, the last being the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLearnerModel {
    pub feature_dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub hyperparams: TrainMeta,
}

impl MetaLearnerModel {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(json: &str) -> serde_json::Result<Self> {
        serde_json::from_str(json)
    }
}

fn softmax_logits(weights: &[Vec<f64>], features: &[f64]) -> [f64; NUM_CLASSES] {
    let mut logits = [0.0f64; NUM_CLASSES];
    for (c, row) in weights.iter().enumerate() {
        let (w, bias) = row.split_at(row.len() - 1);
        logits[c] = bias[0] + w.iter().zip(features).map(|(wj, xj)| wj * xj).sum::<f64>();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
    logits
}

fn l2_term(weights: &[Vec<f64>], l2: f64) -> f64 {
    // Bias column is not penalized.
    0.5 * l2
        * weights
            .iter()
            .map(|row| row[..row.len() - 1].iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
}

/// Mean cross-entropy of `weights` on the batch, plus the L2 penalty
/// (`0.5 * l2 * ||W||^2`, bias excluded).
pub fn evaluate_loss(
    weights: &[Vec<f64>],
    features: &[Vec<f64>],
    labels: &[SentimentLabel],
    l2: f64,
) -> f64 {
    let n = features.len() as f64;
    let mut ce = 0.0;
    for (x, y) in features.iter().zip(labels) {
        let probs = softmax_logits(weights, x);
        ce -= probs[y.index()].max(f64::MIN_POSITIVE).ln();
    }
    ce / n + l2_term(weights, l2)
}

/// Analytic gradient of [`evaluate_loss`] with respect to every weight,
/// including bias entries.
pub fn loss_gradient(
    weights: &[Vec<f64>],
    features: &[Vec<f64>],
    labels: &[SentimentLabel],
    l2: f64,
) -> Vec<Vec<f64>> {
    let dim = weights[0].len() - 1;
    let n = features.len() as f64;
    let mut grad = vec![vec![0.0f64; dim + 1]; NUM_CLASSES];
    for (x, y) in features.iter().zip(labels) {
        let probs = softmax_logits(weights, x);
        for c in 0..NUM_CLASSES {
            let delta = probs[c] - if y.index() == c { 1.0 } else { 0.0 };
            let row = &mut grad[c];
            for (j, xj) in x.iter().enumerate() {
                row[j] += delta * xj;
            }
            row[dim] += delta;
        }
    }
    for (c, row) in grad.iter_mut().enumerate() {
        for (j, g) in row.iter_mut().enumerate() {
            *g /= n;
            if j < dim {
                *g += l2 * weights[c][j];
            }
        }
    }
    grad
}

/// Fit the multinomial logistic-regression meta-learner by full-batch gradient
/// descent from zero-initialized weights.
pub fn train_meta_learner(
    features: &[Vec<f64>],
    labels: &[SentimentLabel],
    hyperparams: &TrainHyperparams,
) -> Result<MetaLearnerModel, EnsembleError> {
    if features.is_empty() {
        return Err(EnsembleError::InvalidTrainingSet(
            "training set is empty".into(),
        ));
    }
    if features.len() != labels.len() {
        return Err(EnsembleError::InvalidTrainingSet(format!(
            "feature rows ({}) and labels ({}) differ",
            features.len(),
            labels.len()
        )));
    }
    if features.len() < NUM_CLASSES {
        return Err(EnsembleError::InvalidTrainingSet(format!(
            "need at least {NUM_CLASSES} rows, got {}",
            features.len()
        )));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(EnsembleError::InvalidTrainingSet(
            "feature rows are empty".into(),
        ));
    }
    if let Some(bad) = features.iter().find(|row| row.len() != dim) {
        return Err(EnsembleError::InvalidTrainingSet(format!(
            "ragged feature rows: expected {dim} columns, found {}",
            bad.len()
        )));
    }

    let mut weights = vec![vec![0.0f64; dim + 1]; NUM_CLASSES];
    for epoch in 0..hyperparams.epochs {
        let grad = loss_gradient(&weights, features, labels, hyperparams.l2_penalty);
        for (wrow, grow) in weights.iter_mut().zip(&grad) {
            for (w, g) in wrow.iter_mut().zip(grow) {
                *w -= hyperparams.learning_rate * g;
            }
        }
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(EnsembleError::NumericalFailure { epoch });
        }
    }

    let final_loss = evaluate_loss(&weights, features, labels, hyperparams.l2_penalty);
    if !final_loss.is_finite() {
        return Err(EnsembleError::NumericalFailure {
            epoch: hyperparams.epochs,
        });
    }

    Ok(MetaLearnerModel {
        feature_dim: dim,
        weights,
        hyperparams: TrainMeta {
            learning_rate: hyperparams.learning_rate,
            epochs: hyperparams.epochs,
            l2_penalty: hyperparams.l2_penalty,
            seed: hyperparams.seed,
            final_loss,
        },
    })
}

/// Class probabilities and argmax label for one feature vector; ties resolve
/// to the lowest class index.
pub fn predict_meta(
    model: &MetaLearnerModel,
    features: &[f64],
) -> Result<(SentimentLabel, [f64; NUM_CLASSES]), EnsembleError> {
    if features.len() != model.feature_dim {
        return Err(EnsembleError::DimensionMismatch {
            expected: model.feature_dim,
            got: features.len(),
        });
    }
    let probs = softmax_logits(&model.weights, features);
    let mut best = 0usize;
    for c in 1..NUM_CLASSES {
        if probs[c] > probs[best] {
            best = c;
        }
    }
    Ok((
        SentimentLabel::from_index(best).expect("class index in range"),
        probs,
    ))
}

/// Stacking scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackMode {
    Stack1,
    Stack2,
}

impl fmt::Display for StackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StackMode::Stack1 => f.write_str("stack1"),
            StackMode::Stack2 => f.write_str("stack2"),
        }
    }
}

/// Join three per-model prediction sets into per-example label triples, sorted
/// by example id. Every example must be covered exactly once by every model.
pub fn align_base_predictions(
    base_preds: &[Vec<PredictionRecord>; NUM_BASE_MODELS],
) -> Result<Vec<(String, [SentimentLabel; NUM_BASE_MODELS])>, EnsembleError> {
    let mut by_example: BTreeMap<String, [Option<SentimentLabel>; NUM_BASE_MODELS]> =
        BTreeMap::new();
    for (m, records) in base_preds.iter().enumerate() {
        for record in records {
            let slots = by_example.entry(record.example_id.clone()).or_default();
            if slots[m].is_some() {
                return Err(EnsembleError::DuplicatePrediction {
                    example_id: record.example_id.clone(),
                    model_index: m,
                });
            }
            slots[m] = Some(record.label);
        }
    }
    by_example
        .into_iter()
        .map(|(example_id, slots)| {
            let mut labels = [SentimentLabel::Positive; NUM_BASE_MODELS];
            for (m, slot) in slots.iter().enumerate() {
                labels[m] = slot.ok_or_else(|| EnsembleError::MissingPrediction {
                    example_id: example_id.clone(),
                    model_index: m,
                })?;
            }
            Ok((example_id, labels))
        })
        .collect()
}

/// Apply the chosen stacking scheme to every example, returning
/// `(example_id, label)` pairs sorted by example id.
pub fn stack_predict(
    mode: StackMode,
    base_preds: &[Vec<PredictionRecord>; NUM_BASE_MODELS],
    tiebreaker_index: usize,
    model: Option<&MetaLearnerModel>,
) -> Result<Vec<(String, SentimentLabel)>, EnsembleError> {
    if tiebreaker_index >= NUM_BASE_MODELS {
        return Err(EnsembleError::InvalidArgument(format!(
            "tiebreaker_index must be below {NUM_BASE_MODELS}, got {tiebreaker_index}"
        )));
    }
    let aligned = align_base_predictions(base_preds)?;
    match mode {
        StackMode::Stack1 => Ok(aligned
            .into_iter()
            .map(|(id, triple)| (id, majority_vote(triple, tiebreaker_index)))
            .collect()),
        StackMode::Stack2 => {
            let model = model.ok_or(EnsembleError::MissingModel)?;
            aligned
                .into_iter()
                .map(|(id, triple)| {
                    let (label, _) = predict_meta(model, &encode_features(triple))?;
                    Ok((id, label))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentLabel::{Negative as N, Neutral as U, Positive as P};

    #[test]
    fn label_round_trip_and_parsing() {
        for label in SentimentLabel::ALL {
            assert_eq!(SentimentLabel::from_index(label.index()), Some(label));
            assert_eq!(label.as_str().parse::<SentimentLabel>().unwrap(), label);
        }
        assert_eq!("positive".parse::<SentimentLabel>().unwrap(), P);
        assert_eq!(" Neutral ".parse::<SentimentLabel>().unwrap(), U);
        assert!("meh".parse::<SentimentLabel>().is_err());
        assert_eq!(serde_json::to_string(&N).unwrap(), "\"NEGATIVE\"");
        assert_eq!(
            serde_json::from_str::<SentimentLabel>("\"neutral\"").unwrap(),
            U
        );
    }

    #[test]
    fn vote_two_agree() {
        assert_eq!(majority_vote([P, P, N], 0), P);
        assert_eq!(majority_vote([P, N, P], 1), P);
        assert_eq!(majority_vote([N, P, P], 0), P);
    }

    #[test]
    fn vote_all_distinct_falls_to_tiebreaker() {
        assert_eq!(majority_vote([P, N, U], 0), P);
        assert_eq!(majority_vote([P, N, U], 1), N);
        assert_eq!(majority_vote([P, N, U], 2), U);
    }

    #[test]
    fn vote_unanimous() {
        assert_eq!(majority_vote([U, U, U], 2), U);
    }

    #[test]
    fn encode_is_one_hot_per_block() {
        assert_eq!(
            encode_features([P, P, P]),
            [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(
            encode_features([N, U, P]),
            [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]
        );
        let sum: f64 = encode_features([U, N, N]).iter().sum();
        assert_eq!(sum, 3.0);
    }

    #[test]
    fn zero_model_predicts_uniform_positive() {
        let model = MetaLearnerModel {
            feature_dim: FEATURE_DIM,
            weights: vec![vec![0.0; FEATURE_DIM + 1]; NUM_CLASSES],
            hyperparams: TrainMeta {
                learning_rate: 0.1,
                epochs: 0,
                l2_penalty: 0.0,
                seed: 0,
                final_loss: (3.0f64).ln(),
            },
        };
        let (label, probs) = predict_meta(&model, &encode_features([N, U, N])).unwrap();
        assert_eq!(label, P);
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let model = MetaLearnerModel {
            feature_dim: FEATURE_DIM,
            weights: vec![vec![0.0; FEATURE_DIM + 1]; NUM_CLASSES],
            hyperparams: TrainMeta {
                learning_rate: 0.1,
                epochs: 0,
                l2_penalty: 0.0,
                seed: 0,
                final_loss: 0.0,
            },
        };
        assert!(matches!(
            predict_meta(&model, &[1.0, 0.0]),
            Err(EnsembleError::DimensionMismatch { expected: 9, got: 2 })
        ));
    }

    #[test]
    fn train_rejects_degenerate_inputs() {
        let hp = TrainHyperparams::default();
        assert!(matches!(
            train_meta_learner(&[], &[], &hp),
            Err(EnsembleError::InvalidTrainingSet(_))
        ));
        let features = vec![vec![1.0, 0.0]; 2];
        let labels = vec![P, N];
        assert!(matches!(
            train_meta_learner(&features, &labels, &hp),
            Err(EnsembleError::InvalidTrainingSet(_))
        ));
        let ragged = vec![vec![1.0, 0.0], vec![1.0], vec![0.0, 1.0]];
        assert!(matches!(
            train_meta_learner(&ragged, &[P, N, U], &hp),
            Err(EnsembleError::InvalidTrainingSet(_))
        ));
    }

    #[test]
    fn identical_labels_dominate_predictions() {
        let features: Vec<Vec<f64>> = (0..12)
            .map(|i| encode_features([SentimentLabel::ALL[i % 3], N, U]).to_vec())
            .collect();
        let labels = vec![N; 12];
        let model = train_meta_learner(&features, &labels, &TrainHyperparams::default()).unwrap();
        for triple in [[P, P, P], [N, U, P], [U, U, U]] {
            let (label, _) = predict_meta(&model, &encode_features(triple)).unwrap();
            assert_eq!(label, N);
        }
    }

    #[test]
    fn scaling_weights_preserves_argmax() {
        let features = vec![
            encode_features([P, N, U]).to_vec(),
            encode_features([N, N, U]).to_vec(),
            encode_features([U, P, P]).to_vec(),
            encode_features([P, P, U]).to_vec(),
        ];
        let labels = vec![P, N, U, P];
        let model = train_meta_learner(&features, &labels, &TrainHyperparams::default()).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let mut scaled = model.clone();
            for row in scaled.weights.iter_mut() {
                for w in row.iter_mut() {
                    *w *= c;
                }
            }
            for x in &features {
                let (orig, _) = predict_meta(&model, x).unwrap();
                let (after, _) = predict_meta(&scaled, x).unwrap();
                assert_eq!(orig, after);
            }
        }
    }

    #[test]
    fn stack_predict_requires_model_for_stack2() {
        let preds = |model_id: &str| -> Vec<PredictionRecord> {
            vec![PredictionRecord {
                example_id: "e1".into(),
                model_id: model_id.into(),
                label: P,
            }]
        };
        let base = [preds("m0"), preds("m1"), preds("m2")];
        assert!(matches!(
            stack_predict(StackMode::Stack2, &base, 0, None),
            Err(EnsembleError::MissingModel)
        ));
    }

    #[test]
    fn stack_predict_reports_missing_example() {
        let mk = |model_id: &str, ids: &[&str]| -> Vec<PredictionRecord> {
            ids.iter()
                .map(|id| PredictionRecord {
                    example_id: (*id).into(),
                    model_id: model_id.into(),
                    label: P,
                })
                .collect()
        };
        let base = [
            mk("m0", &["e1", "e2"]),
            mk("m1", &["e1"]),
            mk("m2", &["e1", "e2"]),
        ];
        match stack_predict(StackMode::Stack1, &base, 0, None) {
            Err(EnsembleError::MissingPrediction {
                example_id,
                model_index,
            }) => {
                assert_eq!(example_id, "e2");
                assert_eq!(model_index, 1);
            }
            other => panic!("expected MissingPrediction, got {other:?}"),
        }
    }

    #[test]
    fn stack_predict_detects_duplicates() {
        let rec = |id: &str| PredictionRecord {
            example_id: id.into(),
            model_id: "m0".into(),
            label: P,
        };
        let base = [vec![rec("e1"), rec("e1")], vec![rec("e1")], vec![rec("e1")]];
        assert!(matches!(
            stack_predict(StackMode::Stack1, &base, 0, None),
            Err(EnsembleError::DuplicatePrediction { .. })
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let features = vec![
            encode_features([P, N, U]).to_vec(),
            encode_features([N, N, U]).to_vec(),
            encode_features([U, P, P]).to_vec(),
        ];
        let model = train_meta_learner(&features, &[P, N, U], &TrainHyperparams::default()).unwrap();
        let json = model.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let obj = value.as_object().unwrap();
        assert_eq!(obj.len(), 3);
        for key in ["feature_dim", "weights", "hyperparams"] {
            assert!(obj.contains_key(key), "missing key {key}");
        }
        let back = MetaLearnerModel::from_json(&json).unwrap();
        assert_eq!(back, model);
    }
}

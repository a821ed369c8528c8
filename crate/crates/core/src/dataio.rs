//! Dataset ingestion and preparation: rating-to-sentiment mapping, class
//! balancing by down-sampling, stratified train/test splitting, and synthetic
//! review/base-classifier generation for desk-scale runs.
//!
//! CSV schema for labeled examples is
//! `example_id,review_headline,review_text,rating[,label]`; a missing label is
//! derived from the rating, and headline and body are joined with a single
//! space on read.

use std::collections::HashSet;
use std::io;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::ensemble::{PredictionRecord, SentimentLabel};
use crate::streams::substream;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("rating {0} outside the 1..=5 scale")]
    InvalidRating(u8),
    #[error("no {0} examples present")]
    MissingClass(SentimentLabel),
    #[error("test_fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("invalid synthetic model spec: {0}")]
    InvalidModelSpec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One review with its sentiment label and, when known, the 1-5 user rating
/// the label was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub example_id: String,
    pub text: String,
    pub rating: Option<u8>,
    pub label: SentimentLabel,
}

/// Stratified train/test partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub split_seed: u64,
}

/// Map a 1-5 star rating onto a sentiment class: 4-5 positive, 1-2 negative,
/// 3 neutral.
pub fn rating_to_label(rating: u8) -> Result<SentimentLabel, DataError> {
    match rating {
        4 | 5 => Ok(SentimentLabel::Positive),
        1 | 2 => Ok(SentimentLabel::Negative),
        3 => Ok(SentimentLabel::Neutral),
        other => Err(DataError::InvalidRating(other)),
    }
}

fn class_indices(examples: &[LabeledExample]) -> [Vec<usize>; 3] {
    let mut per_class: [Vec<usize>; 3] = Default::default();
    for (i, example) in examples.iter().enumerate() {
        per_class[example.label.index()].push(i);
    }
    per_class
}

/// Down-sample every class to the smallest class count, keeping a seeded
/// uniform subsample of each class. Output preserves input order.
pub fn downsample_balance(
    examples: &[LabeledExample],
    seed: u64,
) -> Result<Vec<LabeledExample>, DataError> {
    let mut per_class = class_indices(examples);
    for (label, indices) in SentimentLabel::ALL.iter().zip(&per_class) {
        if indices.is_empty() {
            return Err(DataError::MissingClass(*label));
        }
    }
    let target = per_class.iter().map(Vec::len).min().expect("three classes");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut retained = vec![false; examples.len()];
    for indices in per_class.iter_mut() {
        indices.shuffle(&mut rng);
        for &i in indices.iter().take(target) {
            retained[i] = true;
        }
    }
    Ok(examples
        .iter()
        .zip(&retained)
        .filter(|(_, keep)| **keep)
        .map(|(example, _)| example.clone())
        .collect())
}

/// Stratified split: per class, `round_half_up(count * test_fraction)`
/// examples go to test via a seeded within-class shuffle; the remainder stays
/// in train. Both halves preserve input order.
pub fn stratified_split(
    examples: &[LabeledExample],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitDataset, DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    let mut per_class = class_indices(examples);
    for (label, indices) in SentimentLabel::ALL.iter().zip(&per_class) {
        if indices.is_empty() {
            return Err(DataError::MissingClass(*label));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; examples.len()];
    for indices in per_class.iter_mut() {
        let n_test = (indices.len() as f64 * test_fraction + 0.5).floor() as usize;
        indices.shuffle(&mut rng);
        for &i in indices.iter().take(n_test) {
            in_test[i] = true;
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (example, is_test) in examples.iter().zip(&in_test) {
        if *is_test {
            test.push(example.clone());
        } else {
            train.push(example.clone());
        }
    }
    Ok(SplitDataset {
        train,
        test,
        split_seed: seed,
    })
}

#[derive(Debug, Deserialize)]
struct RawExampleRow {
    example_id: String,
    #[serde(default)]
    review_headline: String,
    #[serde(default)]
    review_text: String,
    #[serde(default)]
    rating: Option<u8>,
    #[serde(default)]
    label: Option<String>,
}

/// Read labeled examples from CSV.
///
/// A row must carry a label, a rating, or both; when both are present they
/// must agree with the rating mapping. Example ids must be unique.
pub fn read_examples_csv<R: io::Read>(reader: R) -> Result<Vec<LabeledExample>, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut examples = Vec::new();

    let mut records = rdr.records();
    while let Some(record) = records.next() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: RawExampleRow = record.deserialize(Some(&headers))?;

        let malformed = |message: String| DataError::MalformedRow { line, message };

        if !seen_ids.insert(row.example_id.clone()) {
            return Err(malformed(format!(
                "duplicate example_id {:?}",
                row.example_id
            )));
        }

        let derived = match row.rating {
            Some(r) => Some(rating_to_label(r).map_err(|e| malformed(e.to_string()))?),
            None => None,
        };
        let explicit = match &row.label {
            Some(s) if !s.trim().is_empty() => {
                Some(s.parse::<SentimentLabel>().map_err(|e| malformed(e.to_string()))?)
            }
            _ => None,
        };
        let label = match (explicit, derived) {
            (Some(l), Some(d)) if l != d => {
                return Err(malformed(format!(
                    "label {l} conflicts with rating {} (maps to {d})",
                    row.rating.unwrap()
                )));
            }
            (Some(l), _) => l,
            (None, Some(d)) => d,
            (None, None) => {
                return Err(malformed("row has neither label nor rating".into()));
            }
        };

        let text = match (row.review_headline.is_empty(), row.review_text.is_empty()) {
            (false, false) => format!("{} {}", row.review_headline, row.review_text),
            (false, true) => row.review_headline,
            _ => row.review_text,
        };

        examples.push(LabeledExample {
            example_id: row.example_id,
            text,
            rating: row.rating,
            label,
        });
    }
    Ok(examples)
}

/// Write labeled examples using the canonical CSV schema. The combined text
/// goes to `review_text` and the headline column is left empty.
pub fn write_examples_csv<W: io::Write>(
    examples: &[LabeledExample],
    writer: W,
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["example_id", "review_headline", "review_text", "rating", "label"])?;
    for example in examples {
        let rating = example.rating.map(|r| r.to_string()).unwrap_or_default();
        wtr.write_record([
            example.example_id.as_str(),
            "",
            example.text.as_str(),
            rating.as_str(),
            example.label.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read base-model predictions (`example_id,model_id,label`; label matching is
/// case-insensitive).
pub fn read_predictions_csv<R: io::Read>(reader: R) -> Result<Vec<PredictionRecord>, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for record in rdr.deserialize::<PredictionRecord>() {
        records.push(record?);
    }
    Ok(records)
}

pub fn write_predictions_csv<W: io::Write>(
    records: &[PredictionRecord],
    writer: W,
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for record in records {
        wtr.serialize(record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Accuracy and error profile of one synthetic base classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModelSpec {
    pub model_id: String,
    /// Probability of emitting the true label.
    pub accuracy: f64,
    /// Unnormalized weights, per class, used to pick the wrong label on an
    /// error; the true label's weight is ignored. `[1.0; 3]` is uniform.
    pub confusion_bias: [f64; 3],
}

impl SyntheticModelSpec {
    pub fn uniform(model_id: impl Into<String>, accuracy: f64) -> Self {
        Self {
            model_id: model_id.into(),
            accuracy,
            confusion_bias: [1.0; 3],
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if !(self.accuracy.is_finite() && (0.0..=1.0).contains(&self.accuracy)) {
            return Err(DataError::InvalidModelSpec(format!(
                "{}: accuracy {} outside [0, 1]",
                self.model_id, self.accuracy
            )));
        }
        if self.confusion_bias.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DataError::InvalidModelSpec(format!(
                "{}: confusion weights must be non-negative",
                self.model_id
            )));
        }
        // Every class needs at least one positively weighted wrong label.
        for label in SentimentLabel::ALL {
            let wrong_mass: f64 = (0..3)
                .filter(|&j| j != label.index())
                .map(|j| self.confusion_bias[j])
                .sum();
            if wrong_mass <= 0.0 {
                return Err(DataError::InvalidModelSpec(format!(
                    "{}: no wrong label has positive weight when truth is {label}",
                    self.model_id
                )));
            }
        }
        Ok(())
    }
}

/// Generate `class_counts[c]` placeholder reviews per class, with ratings
/// drawn from the class's rating bucket.
pub fn generate_synthetic_reviews(class_counts: [usize; 3], seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(class_counts.iter().sum());
    let mut serial = 0usize;
    for (label, &count) in SentimentLabel::ALL.iter().zip(&class_counts) {
        for _ in 0..count {
            let rating = match label {
                SentimentLabel::Positive => rng.random_range(4..=5u8),
                SentimentLabel::Negative => rng.random_range(1..=2u8),
                SentimentLabel::Neutral => 3,
            };
            examples.push(LabeledExample {
                example_id: format!("synth-{serial:06}"),
                text: format!("placeholder {} review number {serial}", label.as_str()),
                rating: Some(rating),
                label: *label,
            });
            serial += 1;
        }
    }
    examples
}

/// Simulate base-model predictions over `examples`: each model emits the true
/// label with its configured accuracy, otherwise a wrong label drawn by its
/// confusion weights. Each model consumes its own RNG substream, so adding a
/// model never perturbs the others.
pub fn generate_synthetic_predictions(
    examples: &[LabeledExample],
    specs: &[SyntheticModelSpec],
    seed: u64,
) -> Result<Vec<PredictionRecord>, DataError> {
    for spec in specs {
        spec.validate()?;
    }
    let mut records = Vec::with_capacity(examples.len() * specs.len());
    for (m, spec) in specs.iter().enumerate() {
        let mut rng = substream(seed, m as u64);
        for example in examples {
            let label = if rng.random::<f64>() < spec.accuracy {
                example.label
            } else {
                let wrong: Vec<usize> =
                    (0..3).filter(|&j| j != example.label.index()).collect();
                let w0 = spec.confusion_bias[wrong[0]];
                let w1 = spec.confusion_bias[wrong[1]];
                let pick = rng.random::<f64>() * (w0 + w1);
                let idx = if pick < w0 { wrong[0] } else { wrong[1] };
                SentimentLabel::from_index(idx).expect("index below 3")
            };
            records.push(PredictionRecord {
                example_id: example.example_id.clone(),
                model_id: spec.model_id.clone(),
                label,
            });
        }
    }
    Ok(records)
}

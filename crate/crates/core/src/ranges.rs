//! Percentile ranges of same-class predictions and their agreement with
//! curated clinical intervals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::evidence::KnowledgeBase;
use crate::model::ProbabilityModel;
use crate::stats::percentile_sorted;

/// Below this many same-class records the report is flagged as low confidence.
pub const MIN_CLASS_SAMPLES: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum RangeError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no records are predicted in class {0}")]
    EmptyClass(u8),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("percentile span must satisfy 0 <= low <= high <= 1")]
    BadSpan,
}

/// Closed interval `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Self {
        debug_assert!(low <= high, "inverted interval");
        Self { low, high }
    }

    pub fn len(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// Percentile span used for the "AI-observed" range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileSpan {
    pub low: f64,
    pub high: f64,
}

impl PercentileSpan {
    pub const INTERQUARTILE: Self = Self { low: 0.25, high: 0.75 };
    pub const WIDE: Self = Self { low: 0.10, high: 0.90 };
}

impl Default for PercentileSpan {
    fn default() -> Self {
        Self::INTERQUARTILE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRange {
    pub interval: Interval,
    pub n: usize,
}

/// Percentile interval of each requested feature over the records the model
/// assigns to `predicted_class`.
pub fn compute_ai_ranges(
    model: &dyn ProbabilityModel,
    dataset: &Dataset,
    predicted_class: u8,
    features: &[usize],
    span: PercentileSpan,
) -> Result<BTreeMap<usize, ClassRange>, RangeError> {
    if dataset.is_empty() {
        return Err(RangeError::EmptyDataset);
    }
    if !(0.0 <= span.low && span.low <= span.high && span.high <= 1.0) {
        return Err(RangeError::BadSpan);
    }
    let d = dataset.schema().d();
    if let Some(&bad) = features.iter().find(|&&f| f >= d) {
        return Err(RangeError::UnknownFeature(format!("#{bad}")));
    }
    let members: Vec<&[f64]> = dataset
        .records()
        .iter()
        .filter(|r| model.predict_class(&r.values) == predicted_class)
        .map(|r| r.values.as_slice())
        .collect();
    if members.is_empty() {
        return Err(RangeError::EmptyClass(predicted_class));
    }
    Ok(features
        .iter()
        .map(|&f| {
            let mut col: Vec<f64> = members.iter().map(|v| v[f]).collect();
            col.sort_by(f64::total_cmp);
            let interval = Interval::new(percentile_sorted(&col, span.low), percentile_sorted(&col, span.high));
            (f, ClassRange { interval, n: col.len() })
        })
        .collect())
}

/// Interval Jaccard index `|a ∩ b| / |a ∪ b|`.
///
/// A zero-length interval scores 1 when its point lies inside the other
/// interval and 0 otherwise.
pub fn range_overlap(a: Interval, b: Interval) -> f64 {
    match (a.len() == 0.0, b.len() == 0.0) {
        (true, true) => f64::from(u8::from(a.low == b.low)),
        (true, false) => f64::from(u8::from(b.contains(a.low))),
        (false, true) => f64::from(u8::from(a.contains(b.low))),
        (false, false) => {
            let inter = (a.high.min(b.high) - a.low.max(b.low)).max(0.0);
            let union = a.high.max(b.high) - a.low.min(b.low);
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub feature: String,
    pub ai_low: f64,
    pub ai_high: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sci_high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    pub n_class_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRangeReport {
    pub predicted_class: u8,
    pub features: Vec<FeatureRange>,
    /// Set when the same-class pool is smaller than [`MIN_CLASS_SAMPLES`].
    pub low_confidence: bool,
}

/// Ranges for the requested features, paired with the knowledge base
/// interval that matches the predicted class: the diagnostic interval for
/// class 1 and the normal interval for class 0.
pub fn build_range_report(
    model: &dyn ProbabilityModel,
    dataset: &Dataset,
    predicted_class: u8,
    top_features: &[usize],
    kb: &KnowledgeBase,
) -> Result<FeatureRangeReport, RangeError> {
    if top_features.is_empty() {
        return Ok(FeatureRangeReport {
            predicted_class,
            features: Vec::new(),
            low_confidence: false,
        });
    }
    let ranges = compute_ai_ranges(model, dataset, predicted_class, top_features, PercentileSpan::default())?;
    let schema = dataset.schema();
    let mut low_confidence = false;
    let features = top_features
        .iter()
        .map(|&f| {
            let name = schema.feature(f).name.clone();
            let r = ranges[&f];
            low_confidence |= r.n < MIN_CLASS_SAMPLES;
            let sci = kb.scientific_interval(&name, predicted_class);
            FeatureRange {
                ai_low: r.interval.low,
                ai_high: r.interval.high,
                sci_low: sci.map(|s| s.low),
                sci_high: sci.map(|s| s.high),
                overlap: sci.map(|s| range_overlap(r.interval, s)),
                n_class_samples: r.n,
                feature: name,
            }
        })
        .collect();
    Ok(FeatureRangeReport {
        predicted_class,
        features,
        low_confidence,
    })
}

/// Resolves feature names against the dataset schema.
pub fn feature_indices(dataset: &Dataset, names: &[&str]) -> Result<Vec<usize>, RangeError> {
    names
        .iter()
        .map(|n| {
            dataset
                .schema()
                .index_of(n)
                .ok_or_else(|| RangeError::UnknownFeature(n.to_string()))
        })
        .collect()
}

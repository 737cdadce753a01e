//! Gradient-boosted tree classifier with probability output.
//!
//! Training minimises logistic loss with Newton leaf values. Split search is
//! an exhaustive scan over midpoints of sorted unique values, so a fit is a
//! pure function of the data and the seeds in [`TrainConfig`] / [`SplitConfig`].

mod tree;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{validate_values, DataError, Dataset};
use crate::schema::FeatureSchema;

pub use tree::{Node, Tree};
use tree::{TreeBuilder, TreeParams};

/// Version tag written into every model file.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data has {0} records; at least 2 are required")]
    TooFewRecords(usize),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("record {0} has no label")]
    MissingLabel(u64),
    #[error("holdout fraction must lie strictly between 0 and 1, got {0}")]
    BadHoldout(f64),
    #[error("split leaves the {0} partition empty")]
    EmptyPartition(&'static str),
    #[error("invalid input: {0}")]
    Input(#[from] DataError),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
}

/// Anything that maps a raw feature vector to P(class = 1).
///
/// Callers are responsible for passing vectors of the right length; use
/// [`RiskModel::predict_proba`] at API boundaries where input is untrusted.
pub trait ProbabilityModel: Sync {
    fn probability(&self, x: &[f64]) -> f64;

    /// Class 1 iff the probability reaches 0.5.
    fn predict_class(&self, x: &[f64]) -> u8 {
        u8::from(self.probability(x) >= 0.5)
    }
}

impl<M: ProbabilityModel + ?Sized> ProbabilityModel for &M {
    fn probability(&self, x: &[f64]) -> f64 {
        (**self).probability(x)
    }
}

/// Adapter turning a closure into a [`ProbabilityModel`].
pub struct FnModel<F>(pub F);

impl<F> ProbabilityModel for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn probability(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub l2: f64,
    pub min_samples_leaf: usize,
    /// Row fraction drawn per tree; 1.0 disables subsampling.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            l2: 1.0,
            min_samples_leaf: 1,
            subsample: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub holdout: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            holdout: 0.4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub feature_names: Vec<String>,
    /// Initial log-odds, the prior of the training labels.
    pub base_score: f64,
    pub train_base_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitConfig>,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
}

/// Trained ensemble. Immutable once built; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub version: u32,
    pub config: TrainConfig,
    pub trees: Vec<Tree>,
    pub metadata: TrainMetadata,
}

impl RiskModel {
    pub fn n_features(&self) -> usize {
        self.metadata.feature_names.len()
    }

    fn margin(&self, x: &[f64]) -> f64 {
        self.metadata.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Checked probability for untrusted input.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_input(x)?;
        Ok(self.probability(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8, ModelError> {
        self.check_input(x)?;
        Ok(self.predict_class(x))
    }

    fn check_input(&self, x: &[f64]) -> Result<(), DataError> {
        if x.len() != self.n_features() {
            return Err(DataError::Length {
                id: 0,
                expected: self.n_features(),
                found: x.len(),
            });
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                id: 0,
                column: self.metadata.feature_names[j].clone(),
            });
        }
        Ok(())
    }

    pub fn accuracy(&self, dataset: &Dataset, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows
            .iter()
            .filter(|&&i| {
                let r = &dataset.records()[i];
                r.label == Some(self.predict_class(&r.values))
            })
            .count();
        hits as f64 / rows.len() as f64
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: RiskModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version(model.version));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Checks that the model was trained on the given schema.
    pub fn matches_schema(&self, schema: &FeatureSchema) -> bool {
        self.metadata.feature_names.iter().map(String::as_str).eq(schema.names())
    }
}

impl ProbabilityModel for RiskModel {
    fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stratified holdout split. Returns `(train, test)` row indices, each sorted.
///
/// Within each class the rows are shuffled with `seed` and
/// `round(holdout * n_class)` go to the test partition.
pub fn stratified_split(
    labels: &[u8],
    split: SplitConfig,
) -> Result<(Vec<usize>, Vec<usize>), ModelError> {
    if !(split.holdout > 0.0 && split.holdout < 1.0) {
        return Err(ModelError::BadHoldout(split.holdout));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1u8] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        let n_test = (split.holdout * rows.len() as f64).round() as usize;
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    if train.is_empty() {
        return Err(ModelError::EmptyPartition("training"));
    }
    if test.is_empty() {
        return Err(ModelError::EmptyPartition("test"));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn labels_of(dataset: &Dataset) -> Result<Vec<u8>, ModelError> {
    dataset
        .records()
        .iter()
        .map(|r| r.label.ok_or(ModelError::MissingLabel(r.id)))
        .collect()
}

/// Trains on a stratified `1 - holdout` share of `dataset` and records the
/// accuracy on the held-out rows.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    split: SplitConfig,
) -> Result<RiskModel, ModelError> {
    let labels = labels_of(dataset)?;
    check_trainable(&labels)?;
    let (train_rows, test_rows) = stratified_split(&labels, split)?;
    let mut model = fit_rows(dataset, &labels, &train_rows, config)?;
    model.metadata.split = Some(split);
    model.metadata.n_test = test_rows.len();
    model.metadata.test_accuracy = Some(model.accuracy(dataset, &test_rows));
    tracing::info!(
        n_train = train_rows.len(),
        n_test = test_rows.len(),
        accuracy = model.metadata.test_accuracy,
        "trained risk model"
    );
    Ok(model)
}

/// Trains on every record without a holdout.
pub fn fit(dataset: &Dataset, config: &TrainConfig) -> Result<RiskModel, ModelError> {
    let labels = labels_of(dataset)?;
    check_trainable(&labels)?;
    let rows: Vec<usize> = (0..labels.len()).collect();
    fit_rows(dataset, &labels, &rows, config)
}

fn check_trainable(labels: &[u8]) -> Result<(), ModelError> {
    if labels.len() < 2 {
        return Err(ModelError::TooFewRecords(labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

fn fit_rows(
    dataset: &Dataset,
    labels: &[u8],
    rows: &[usize],
    config: &TrainConfig,
) -> Result<RiskModel, ModelError> {
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| dataset.records()[i].values.clone()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| f64::from(labels[i])).collect();
    let positives = y.iter().sum::<f64>();
    if positives == 0.0 || positives == y.len() as f64 {
        return Err(ModelError::SingleClass);
    }
    let base_rate = positives / y.len() as f64;
    let base_score = (base_rate / (1.0 - base_rate)).ln();

    let params = TreeParams {
        max_depth: config.max_depth,
        l2: config.l2,
        min_samples_leaf: config.min_samples_leaf,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut margin = vec![base_score; x.len()];
    let mut grad = vec![0.0; x.len()];
    let mut hess = vec![0.0; x.len()];
    let mut trees = Vec::with_capacity(config.n_trees);
    let all: Vec<usize> = (0..x.len()).collect();
    for _ in 0..config.n_trees {
        for i in 0..x.len() {
            let p = sigmoid(margin[i]);
            grad[i] = p - y[i];
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let sample = if config.subsample < 1.0 {
            let n = ((config.subsample * x.len() as f64).round() as usize).clamp(1, x.len());
            let mut s = all.clone();
            s.shuffle(&mut rng);
            s.truncate(n);
            s.sort_unstable();
            s
        } else {
            all.clone()
        };
        let tree = TreeBuilder::new(&x, &grad, &hess, params).build(sample, config.learning_rate);
        for (m, row) in margin.iter_mut().zip(&x) {
            *m += tree.predict(row);
        }
        trees.push(tree);
    }

    Ok(RiskModel {
        version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        trees,
        metadata: TrainMetadata {
            feature_names: dataset.schema().names().map(str::to_string).collect(),
            base_score,
            train_base_rate: base_rate,
            split: None,
            n_train: rows.len(),
            n_test: 0,
            test_accuracy: None,
        },
    })
}

/// Validates a record's values against the schema and returns the checked
/// probability. Convenience for service handlers.
pub fn predict_record(
    model: &RiskModel,
    schema: &FeatureSchema,
    id: u64,
    values: &[f64],
) -> Result<f64, ModelError> {
    validate_values(schema, id, values)?;
    model.predict_proba(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PatientRecord;
    use crate::schema::{FeatureDef, HealthyDirection};

    fn two_feature_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureDef::new("Glucose", "mg/dL", true, HealthyDirection::Decrease),
            FeatureDef::new("Noise", "", true, HealthyDirection::None),
        ])
        .unwrap()
    }

    /// 200 records, label 1 iff Glucose > 120.
    fn glucose_rule_dataset() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        use rand::Rng;
        let records = (0..200)
            .map(|i| {
                let g: f64 = rng.random_range(60.0..200.0);
                let n: f64 = rng.random_range(0.0..1.0);
                PatientRecord {
                    id: i,
                    values: vec![g.round(), n],
                    label: Some(u8::from(g.round() > 120.0)),
                }
            })
            .collect();
        Dataset::new(two_feature_schema(), records).unwrap()
    }

    #[test]
    fn glucose_rule_is_learned() {
        let ds = glucose_rule_dataset();
        let m = train(&ds, &TrainConfig::default(), SplitConfig::default()).unwrap();
        assert!(m.metadata.test_accuracy.unwrap() >= 0.95);
        let p = m.predict_proba(&[200.0, 0.5]).unwrap();
        assert!(p > 0.5, "p = {p}");
        assert_eq!(m.predict_proba(&[200.0, 0.5]).unwrap().to_bits(), p.to_bits());
    }

    #[test]
    fn prior_only_model_returns_base_rate() {
        let ds = glucose_rule_dataset();
        let cfg = TrainConfig {
            n_trees: 0,
            ..TrainConfig::default()
        };
        let m = fit(&ds, &cfg).unwrap();
        let rate = ds.records().iter().filter(|r| r.label == Some(1)).count() as f64 / 200.0;
        for x in [[0.0, 0.0], [500.0, 3.0]] {
            assert!((m.predict_proba(&x).unwrap() - rate).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_features_predict_majority() {
        let records = (0..30)
            .map(|i| PatientRecord {
                id: i,
                values: vec![5.0, 5.0],
                label: Some(u8::from(i % 3 == 0)),
            })
            .collect();
        let ds = Dataset::new(two_feature_schema(), records).unwrap();
        let m = fit(&ds, &TrainConfig::default()).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(m.predict(&[5.0, 5.0]).unwrap(), 0);
        assert_eq!(m.predict(&[100.0, -3.0]).unwrap(), 0);
    }

    #[test]
    fn rejects_single_class_and_small_data() {
        let schema = two_feature_schema();
        let one = Dataset::new(
            schema.clone(),
            vec![PatientRecord {
                id: 0,
                values: vec![1.0, 1.0],
                label: Some(1),
            }],
        )
        .unwrap();
        assert!(matches!(
            train(&one, &TrainConfig::default(), SplitConfig::default()),
            Err(ModelError::TooFewRecords(1))
        ));
        let empty = Dataset::new(schema.clone(), vec![]).unwrap();
        assert!(matches!(fit(&empty, &TrainConfig::default()), Err(ModelError::TooFewRecords(0))));
        let same = Dataset::new(
            schema,
            (0..5)
                .map(|i| PatientRecord {
                    id: i,
                    values: vec![i as f64, 0.0],
                    label: Some(1),
                })
                .collect(),
        )
        .unwrap();
        assert!(matches!(fit(&same, &TrainConfig::default()), Err(ModelError::SingleClass)));
    }

    #[test]
    fn split_errors() {
        let labels = [0, 1, 0, 1];
        assert!(matches!(
            stratified_split(&labels, SplitConfig { holdout: 1.0, seed: 1 }),
            Err(ModelError::BadHoldout(_))
        ));
        assert!(matches!(
            stratified_split(&labels, SplitConfig { holdout: 0.1, seed: 1 }),
            Err(ModelError::EmptyPartition("test"))
        ));
        assert!(matches!(
            stratified_split(&labels, SplitConfig { holdout: 0.9, seed: 1 }),
            Err(ModelError::EmptyPartition("training"))
        ));
    }

    #[test]
    fn checked_prediction_rejects_bad_input() {
        let m = fit(&glucose_rule_dataset(), &TrainConfig { n_trees: 3, ..Default::default() }).unwrap();
        assert!(m.predict_proba(&[1.0]).is_err());
        assert!(m.predict_proba(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let m = fit(&glucose_rule_dataset(), &TrainConfig { n_trees: 5, ..Default::default() }).unwrap();
        let text = m.to_json().unwrap();
        let back = RiskModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        let bumped = text.replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(RiskModel::from_json(&bumped), Err(ModelError::Version(9))));
    }

    #[test]
    fn subsampling_is_seeded() {
        let ds = glucose_rule_dataset();
        let cfg = TrainConfig {
            n_trees: 10,
            subsample: 0.5,
            ..Default::default()
        };
        let a = fit(&ds, &cfg).unwrap().to_json().unwrap();
        let b = fit(&ds, &cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = fit(&ds, &TrainConfig { seed: 1, ..cfg }).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }
}

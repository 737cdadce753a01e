//! Immutable engine state shared by every request, and the view-models
//! built from it.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use riskscope_core::data::load_dataset;
use riskscope_core::evidence::{EvidenceEntry, EvidenceKind, KnowledgeBase};
use riskscope_core::explain::{Explainer, FaithfulnessReport, PerturbationConfig, SelectionConfig};
use riskscope_core::ranges::{build_range_report, FeatureRangeReport};
use riskscope_core::recommend::{recommend, RecommendOutcome, SearchSpace, StepRules};
use riskscope_core::router::{
    ActiveView, GrammarParser, MatcherConfig, PromptCorpus, Router, TfidfMatcher, ViewTag,
};
use riskscope_core::stats::Histogram;
use riskscope_core::{Dataset, FeatureSchema, PatientRecord, ProbabilityModel, RiskModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ServiceConfig;
use crate::StartupError;

/// Warning and critical thresholds for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub warning: f64,
    pub critical: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdBands(pub BTreeMap<String, BandThresholds>);

impl ThresholdBands {
    pub fn from_json(text: &str, schema: &FeatureSchema) -> Result<Self, String> {
        let bands: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        for (name, b) in &bands.0 {
            if schema.index_of(name).is_none() {
                return Err(format!("unknown feature `{name}`"));
            }
            if !(b.warning.is_finite() && b.critical.is_finite() && b.warning < b.critical) {
                return Err(format!("`{name}`: warning must be finite and below critical"));
            }
        }
        Ok(bands)
    }

    /// Warning band `[warning, critical)` and critical band from `critical` up.
    pub fn bands_for(&self, feature: &str) -> Vec<Band> {
        match self.0.get(feature) {
            Some(b) => vec![
                Band {
                    level: BandLevel::Warning,
                    low: b.warning,
                    high: Some(b.critical),
                },
                Band {
                    level: BandLevel::Critical,
                    low: b.critical,
                    high: None,
                },
            ],
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandLevel {
    Warning,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub level: BandLevel,
    pub low: f64,
    /// Open-ended when absent.
    pub high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePanel {
    pub name: String,
    pub unit: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
    pub bands: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub patient: u64,
    pub probability: f64,
    pub risk_percent: f64,
    pub predicted_class: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientView {
    pub id: u64,
    pub risk: Prediction,
    pub features: Vec<FeaturePanel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceView {
    pub patient: u64,
    pub seed: u64,
    pub method: String,
    /// Features by decreasing `|phi|` of the selected attribution.
    pub ranking: Vec<RankedFeature>,
    pub report: FaithfulnessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangesView {
    pub patient: u64,
    pub method: String,
    pub report: FeatureRangeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub patient: u64,
    pub probability: f64,
    pub outcome: RecommendOutcome,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EngineError {
    #[error("patient {0} not found")]
    UnknownPatient(u64),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Failed(String),
}

type ImportanceSlot = Arc<OnceLock<Result<ImportanceView, String>>>;

pub struct Engine {
    pub schema: FeatureSchema,
    pub dataset: Dataset,
    pub model: RiskModel,
    pub kb: KnowledgeBase,
    pub router: Router,
    pub rules: StepRules,
    pub bands: ThresholdBands,
    pub explainer: Explainer,
    pub space: SearchSpace,
    /// Artifact name to `sha256:` digest, reported by the health endpoint.
    pub checksums: BTreeMap<String, String>,
    importance_cache: Mutex<HashMap<(u64, u64), ImportanceSlot>>,
}

fn file_checksum(path: &Path) -> Result<String, std::io::Error> {
    let bytes = std::fs::read(path)?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
}

fn artifact(name: &'static str) -> impl Fn(String) -> StartupError {
    move |message| StartupError::Artifact { name, message }
}

impl Engine {
    /// Loads and validates every artifact; the first failure is reported by
    /// artifact name.
    pub fn load(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        let schema = FeatureSchema::pima();
        let dataset = load_dataset(&cfg.dataset, schema.clone()).map_err(|e| artifact("dataset")(e.to_string()))?;
        let model = RiskModel::load(&cfg.model).map_err(|e| artifact("model")(e.to_string()))?;
        if !model.matches_schema(&schema) {
            return Err(artifact("model")("feature names do not match the dataset schema".into()));
        }
        let kb = KnowledgeBase::load(&cfg.evidence).map_err(|e| artifact("evidence")(e.to_string()))?;
        let corpus = PromptCorpus::load(&cfg.corpus).map_err(|e| artifact("corpus")(e.to_string()))?;
        let matcher_cfg = MatcherConfig::load(&cfg.router).map_err(|e| artifact("router")(e.to_string()))?;
        let rules = StepRules::load(&cfg.step_rules, &schema).map_err(|e| artifact("step_rules")(e.to_string()))?;
        let bands_text = std::fs::read_to_string(&cfg.thresholds).map_err(|e| artifact("thresholds")(e.to_string()))?;
        let bands = ThresholdBands::from_json(&bands_text, &schema).map_err(artifact("thresholds"))?;

        let mut checksums = BTreeMap::new();
        for (name, path) in [
            ("model", &cfg.model),
            ("dataset", &cfg.dataset),
            ("corpus", &cfg.corpus),
            ("router", &cfg.router),
            ("step_rules", &cfg.step_rules),
            ("thresholds", &cfg.thresholds),
        ] {
            checksums.insert(name.to_string(), file_checksum(path).map_err(|e| artifact(name)(e.to_string()))?);
        }
        checksums.insert("evidence".to_string(), kb.checksum().to_string());

        Self::assemble(schema, dataset, model, kb, &corpus, matcher_cfg, rules, bands, checksums)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        schema: FeatureSchema,
        dataset: Dataset,
        model: RiskModel,
        kb: KnowledgeBase,
        corpus: &PromptCorpus,
        matcher_cfg: MatcherConfig,
        rules: StepRules,
        bands: ThresholdBands,
        checksums: BTreeMap<String, String>,
    ) -> Result<Self, StartupError> {
        let parser = GrammarParser::new(schema.clone(), &GrammarParser::pima_synonyms());
        let router = Router::new(Box::new(TfidfMatcher::fit(corpus)), Box::new(parser), matcher_cfg)
            .map_err(|e| artifact("router")(e.to_string()))?;
        let explainer = Explainer::from_dataset(&dataset);
        let space = SearchSpace::from_dataset(&dataset);
        Ok(Self {
            schema,
            dataset,
            model,
            kb,
            router,
            rules,
            bands,
            explainer,
            space,
            checksums,
            importance_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn record(&self, id: u64) -> Result<&PatientRecord, EngineError> {
        self.dataset.record(id).ok_or(EngineError::UnknownPatient(id))
    }

    pub fn prediction(&self, id: u64) -> Result<Prediction, EngineError> {
        let r = self.record(id)?;
        let p = self.model.probability(&r.values);
        Ok(Prediction {
            patient: id,
            probability: p,
            risk_percent: (p * 1000.0).round() / 10.0,
            predicted_class: self.model.predict_class(&r.values),
        })
    }

    pub fn patient_view(&self, id: u64) -> Result<PatientView, EngineError> {
        let r = self.record(id)?;
        let features = self
            .schema
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let s = self.dataset.summary(j);
                FeaturePanel {
                    name: f.name.clone(),
                    unit: f.unit.clone(),
                    value: r.values[j],
                    min: s.min,
                    max: s.max,
                    histogram: s.histogram.clone(),
                    bands: self.bands.bands_for(&f.name),
                }
            })
            .collect();
        Ok(PatientView {
            id,
            risk: self.prediction(id)?,
            features,
        })
    }

    /// Faithfulness-selected attribution for the patient. Results are cached
    /// per `(patient, seed)` since they are deterministic; concurrent callers
    /// for the same key wait for a single computation.
    pub fn importance(&self, id: u64, seed: u64) -> Result<ImportanceView, EngineError> {
        let r = self.record(id)?;
        let slot = self
            .importance_cache
            .lock()
            .expect("cache lock")
            .entry((id, seed))
            .or_default()
            .clone();
        slot.get_or_init(|| self.compute_importance(r, seed))
            .clone()
            .map_err(EngineError::Failed)
    }

    fn compute_importance(&self, r: &PatientRecord, seed: u64) -> Result<ImportanceView, String> {
        let sel = SelectionConfig::for_features(self.schema.d());
        let cfg = PerturbationConfig {
            seed,
            ..PerturbationConfig::default()
        };
        let report = self
            .explainer
            .select(&self.model, &r.values, r.id, &sel, &cfg)
            .map_err(|e| e.to_string())?;
        let phi = &report.selected_attribution().phi;
        let ranking = riskscope_core::explain::magnitude_order(phi)
            .into_iter()
            .map(|j| RankedFeature {
                feature: self.schema.feature(j).name.clone(),
                phi: phi[j],
            })
            .collect();
        Ok(ImportanceView {
            patient: r.id,
            seed,
            method: report.selected.clone(),
            ranking,
            report,
        })
    }

    /// Ranges for the top-K features of the selected attribution, compared
    /// within the patient's predicted class.
    pub fn ranges(&self, id: u64, seed: u64) -> Result<RangesView, EngineError> {
        let importance = self.importance(id, seed)?;
        let k = importance.report.k;
        let top: Vec<usize> = importance
            .ranking
            .iter()
            .take(k)
            .filter_map(|f| self.schema.index_of(&f.feature))
            .collect();
        let class = self.prediction(id)?.predicted_class;
        let report = build_range_report(&self.model, &self.dataset, class, &top, &self.kb)
            .map_err(|e| EngineError::Failed(e.to_string()))?;
        Ok(RangesView {
            patient: id,
            method: importance.method,
            report,
        })
    }

    /// Ranges for the given features and class without a patient.
    pub fn class_ranges(&self, class: u8, features: &[usize]) -> Result<FeatureRangeReport, EngineError> {
        build_range_report(&self.model, &self.dataset, class, features, &self.kb)
            .map_err(|e| EngineError::Failed(e.to_string()))
    }

    pub fn recommendation(&self, id: u64) -> Result<RecommendationView, EngineError> {
        let r = self.record(id)?;
        let outcome = recommend(&self.model, id, &r.values, &self.schema, &self.space, &self.rules)
            .map_err(|e| EngineError::Failed(e.to_string()))?;
        Ok(RecommendationView {
            patient: id,
            probability: self.model.probability(&r.values),
            outcome,
        })
    }

    pub fn canonical_feature(&self, name: &str) -> Result<String, EngineError> {
        self.schema
            .index_of_ignore_case(name)
            .map(|j| self.schema.feature(j).name.clone())
            .ok_or_else(|| EngineError::UnknownFeature(name.to_string()))
    }

    pub fn evidence(&self, feature: &str, kind: EvidenceKind) -> Result<&EvidenceEntry, EngineError> {
        let name = self.canonical_feature(feature)?;
        self.kb.get(&name, kind).map_err(|e| EngineError::NotFound(e.to_string()))
    }

    /// Serialized data of a dashboard view for the patient, identical to the
    /// payload of the matching endpoint, plus the features the view attaches
    /// evidence to.
    pub fn active_view(&self, tag: ViewTag, patient: Option<u64>) -> ActiveView {
        let Some(id) = patient else {
            return ActiveView::empty(tag);
        };
        let built: Result<(serde_json::Value, Vec<String>), EngineError> = match tag {
            ViewTag::Record => self
                .patient_view(id)
                .map(|v| (serde_json::to_value(v).expect("view serializes"), Vec::new())),
            ViewTag::Importance => self.importance(id, 0).map(|v| {
                let feats = v.ranking.iter().take(v.report.k).map(|f| f.feature.clone()).collect();
                (serde_json::to_value(v).expect("view serializes"), feats)
            }),
            ViewTag::Ranges => self.ranges(id, 0).map(|v| {
                let feats = v.report.features.iter().map(|f| f.feature.clone()).collect();
                (serde_json::to_value(v).expect("view serializes"), feats)
            }),
            ViewTag::Recommendation => self.recommendation(id).map(|v| {
                let feats = match &v.outcome {
                    RecommendOutcome::Planned { candidate, .. } => {
                        candidate.changes.iter().map(|c| c.name.clone()).collect()
                    }
                    _ => Vec::new(),
                };
                (serde_json::to_value(v).expect("view serializes"), feats)
            }),
        };
        match built {
            Ok((data, features)) => ActiveView { tag, data, features },
            Err(_) => ActiveView::empty(tag),
        }
    }
}

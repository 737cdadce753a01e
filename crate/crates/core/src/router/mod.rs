//! Two-stage query routing.
//!
//! A query is first matched against a corpus of example prompts. When the
//! best similarity clears the calibrated threshold, the deterministic grammar
//! extracts a command; otherwise the query goes to the external language
//! model together with a bounded context pack.

mod calibrate;
mod context;
mod fallback;
mod grammar;
mod matcher;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibrate::{
    calibrate_items, calibrate_scores, calibrate_threshold, routing_accuracy, Calibration, LabeledItem, ScoredItem,
};
pub use context::{
    build_context, enforce_budget, ActiveView, ContextPack, PatientValue, Turn, ViewTag, MAX_PACK_BYTES, MAX_TURNS,
};
pub use fallback::{
    fallback_answer, ChatClient, ChatRequest, ClientError, FallbackAnswer, HttpChatClient, Provenance, SYSTEM_PREAMBLE,
};
pub use grammar::{CommandArgs, CommandParser, GrammarParser, ParseFailure, ParsedCommand};
pub use matcher::{normalize, EmbeddingMatcher, EmbeddingProvider, SemanticMatcher, TfidfMatcher};

/// Minimum number of example prompts per intent.
pub const MIN_PROMPTS_PER_INTENT: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum RouterError {
    #[error("query has no matchable content")]
    EmptyText,
    #[error("prompt corpus is empty")]
    EmptyCorpus,
    #[error("invalid prompt corpus: {0}")]
    Corpus(String),
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    BadThreshold(f64),
    #[error("calibration set must contain both in-scope and out-of-scope items")]
    SingleClassCalibration,
    #[error("io error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

impl From<std::io::Error> for RouterError {
    fn from(e: std::io::Error) -> Self {
        RouterError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RouterError {
    fn from(e: serde_json::Error) -> Self {
        RouterError::Json(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Predict,
    ExplainImportance,
    ExplainRange,
    Counterfactual,
    Recommendation,
    DataSummary,
    EvidenceRequest,
}

impl Intent {
    pub const ALL: [Intent; 7] = [
        Intent::Predict,
        Intent::ExplainImportance,
        Intent::ExplainRange,
        Intent::Counterfactual,
        Intent::Recommendation,
        Intent::DataSummary,
        Intent::EvidenceRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Predict => "predict",
            Intent::ExplainImportance => "explain_importance",
            Intent::ExplainRange => "explain_range",
            Intent::Counterfactual => "counterfactual",
            Intent::Recommendation => "recommendation",
            Intent::DataSummary => "data_summary",
            Intent::EvidenceRequest => "evidence_request",
        }
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub text: String,
    pub intent: Intent,
}

/// Example prompts labeled with their intent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CorpusEntry>", into = "Vec<CorpusEntry>")]
pub struct PromptCorpus {
    entries: Vec<CorpusEntry>,
}

impl PromptCorpus {
    /// Checks that every intent has at least [`MIN_PROMPTS_PER_INTENT`]
    /// prompts and that no normalized prompt appears twice.
    pub fn new(entries: Vec<CorpusEntry>) -> Result<Self, RouterError> {
        if entries.is_empty() {
            return Err(RouterError::EmptyCorpus);
        }
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            let norm = normalize(&e.text);
            if norm.is_empty() {
                return Err(RouterError::Corpus(format!("prompt `{}` has no content", e.text)));
            }
            if !seen.insert(norm) {
                return Err(RouterError::Corpus(format!("duplicate prompt `{}`", e.text)));
            }
        }
        for intent in Intent::ALL {
            let n = entries.iter().filter(|e| e.intent == intent).count();
            if n < MIN_PROMPTS_PER_INTENT {
                return Err(RouterError::Corpus(format!(
                    "intent {intent} has {n} prompts, need at least {MIN_PROMPTS_PER_INTENT}"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RouterError> {
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<CorpusEntry> = serde_json::from_str(&text)?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }
}

impl TryFrom<Vec<CorpusEntry>> for PromptCorpus {
    type Error = RouterError;

    fn try_from(v: Vec<CorpusEntry>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PromptCorpus> for Vec<CorpusEntry> {
    fn from(c: PromptCorpus) -> Self {
        c.entries
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vectorizer {
    #[default]
    CharNgramTfidf,
    ExternalEmbedding,
}

/// Matcher settings persisted next to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub vectorizer: Vectorizer,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl MatcherConfig {
    pub fn new(threshold: f64) -> Result<Self, RouterError> {
        let cfg = Self {
            vectorizer: Vectorizer::CharNgramTfidf,
            threshold,
            calibration: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RouterError> {
        if self.threshold > 0.0 && self.threshold < 1.0 {
            Ok(())
        } else {
            Err(RouterError::BadThreshold(self.threshold))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RouterError> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RouterError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Grammar,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub route: Route,
    /// Intent of the nearest prompt, present whenever matching succeeded.
    pub intent: Option<Intent>,
    pub similarity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<ParsedCommand>,
    /// Set when the similarity cleared the threshold but the grammar could
    /// not extract the required arguments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demoted: Option<String>,
}

pub struct Router {
    matcher: Box<dyn SemanticMatcher>,
    parser: Box<dyn CommandParser>,
    config: MatcherConfig,
}

impl Router {
    pub fn new(
        matcher: Box<dyn SemanticMatcher>,
        parser: Box<dyn CommandParser>,
        config: MatcherConfig,
    ) -> Result<Self, RouterError> {
        config.validate()?;
        Ok(Self {
            matcher,
            parser,
            config,
        })
    }

    /// TF-IDF matcher over `corpus` with the grammar for `schema`.
    pub fn tfidf(
        corpus: &PromptCorpus,
        schema: crate::schema::FeatureSchema,
        config: MatcherConfig,
    ) -> Result<Self, RouterError> {
        let parser = GrammarParser::new(schema, &GrammarParser::pima_synonyms());
        Self::new(Box::new(TfidfMatcher::fit(corpus)), Box::new(parser), config)
    }

    pub fn config(&self) -> &MatcherConfig {
        &self.config
    }

    pub fn threshold(&self) -> f64 {
        self.config.threshold
    }

    /// Matching score for a query without parsing.
    pub fn score(&self, query: &str) -> Option<(Intent, f64)> {
        self.matcher.match_intent(query).ok()
    }

    /// Routes a query. Every input yields a decision: unmatched or empty
    /// text goes to the fallback with similarity 0.
    pub fn route(&self, query: &str, session_patient: Option<u64>) -> RouteDecision {
        let decision = match self.matcher.match_intent(query) {
            Err(_) => RouteDecision {
                route: Route::Fallback,
                intent: None,
                similarity: 0.0,
                command: None,
                demoted: None,
            },
            Ok((intent, similarity)) if similarity < self.config.threshold => RouteDecision {
                route: Route::Fallback,
                intent: Some(intent),
                similarity,
                command: None,
                demoted: None,
            },
            Ok((intent, similarity)) => match self.parser.parse(query, intent, session_patient) {
                Ok(cmd) => RouteDecision {
                    route: Route::Grammar,
                    intent: Some(intent),
                    similarity,
                    command: Some(cmd),
                    demoted: None,
                },
                Err(f) => RouteDecision {
                    route: Route::Fallback,
                    intent: Some(intent),
                    similarity,
                    command: None,
                    demoted: Some(format!("missing {}", f.missing)),
                },
            },
        };
        tracing::debug!(
            route = ?decision.route,
            intent = ?decision.intent,
            similarity = decision.similarity,
            "routed query"
        );
        decision
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSchema;

    fn corpus() -> PromptCorpus {
        let mut entries = Vec::new();
        for intent in Intent::ALL {
            for i in 0..3 {
                entries.push(CorpusEntry {
                    text: format!("{} please variant {}", intent.as_str().replace('_', " "), ["a", "b", "c"][i]),
                    intent,
                });
            }
        }
        PromptCorpus::new(entries).unwrap()
    }

    #[test]
    fn corpus_validation() {
        let short = vec![CorpusEntry {
            text: "predict".into(),
            intent: Intent::Predict,
        }];
        assert!(matches!(PromptCorpus::new(short), Err(RouterError::Corpus(_))));
        let mut dup = corpus().entries().to_vec();
        dup.push(dup[0].clone());
        assert!(matches!(PromptCorpus::new(dup), Err(RouterError::Corpus(_))));
        assert_eq!(PromptCorpus::new(vec![]), Err(RouterError::EmptyCorpus));
    }

    #[test]
    fn threshold_bounds() {
        assert!(MatcherConfig::new(0.0).is_err());
        assert!(MatcherConfig::new(1.0).is_err());
        assert!(MatcherConfig::new(0.5).is_ok());
    }

    #[test]
    fn routing_is_total() {
        let r = Router::tfidf(&corpus(), FeatureSchema::pima(), MatcherConfig::new(0.5).unwrap()).unwrap();
        let d = r.route("", None);
        assert_eq!(d.route, Route::Fallback);
        assert_eq!(d.similarity, 0.0);
        let d = r.route("predict please variant a for patient 4", None);
        assert_eq!(d.route, Route::Grammar);
        assert_eq!(d.command.unwrap().args.patient_id, Some(4));
        let d = r.route("predict please variant a", None);
        assert_eq!(d.route, Route::Fallback);
        assert!(d.similarity >= 0.5);
        assert_eq!(d.demoted.as_deref(), Some("missing patient_id"));
    }

    #[test]
    fn intent_serde() {
        assert_eq!(serde_json::to_string(&Intent::ExplainRange).unwrap(), "\"explain_range\"");
        for i in Intent::ALL {
            assert_eq!(serde_json::to_string(&i).unwrap(), format!("\"{i}\""));
        }
    }
}

//! Deterministic per-intent argument grammar.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Intent;
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandArgs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCommand {
    pub action: Intent,
    pub args: CommandArgs,
}

/// Why a matched query could not be turned into a command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub missing: String,
}

pub trait CommandParser: Send + Sync {
    fn parse(&self, text: &str, intent: Intent, session_patient: Option<u64>) -> Result<ParsedCommand, ParseFailure>;
}

const PATIENT_CUES: [&str; 6] = ["patient", "id", "record", "no", "number", "#"];

/// Keyword grammar: integers become patient ids (or counts after "top"),
/// feature names and synonyms resolve against the schema, and class words
/// map to 0/1.
pub struct GrammarParser {
    schema: FeatureSchema,
    /// Lower-case phrase to canonical feature name, longest phrases first.
    synonyms: Vec<(Vec<String>, String)>,
}

impl GrammarParser {
    pub fn new(schema: FeatureSchema, extra_synonyms: &BTreeMap<String, String>) -> Self {
        let mut table: BTreeMap<String, String> = schema
            .names()
            .map(|n| (n.to_lowercase(), n.to_string()))
            .collect();
        for (phrase, name) in extra_synonyms {
            if schema.index_of(name).is_some() {
                table.insert(phrase.to_lowercase(), name.clone());
            }
        }
        let mut synonyms: Vec<(Vec<String>, String)> = table
            .into_iter()
            .map(|(p, n)| (p.split_whitespace().map(str::to_string).collect(), n))
            .collect();
        synonyms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        Self { schema, synonyms }
    }

    /// Synonyms for the diabetes-screening schema.
    pub fn pima_synonyms() -> BTreeMap<String, String> {
        [
            ("glucose", "Glucose"),
            ("sugar", "Glucose"),
            ("blood sugar", "Glucose"),
            ("plasma glucose", "Glucose"),
            ("blood pressure", "BloodPressure"),
            ("bp", "BloodPressure"),
            ("diastolic", "BloodPressure"),
            ("pressure", "BloodPressure"),
            ("skin", "SkinThickness"),
            ("skin thickness", "SkinThickness"),
            ("skinfold", "SkinThickness"),
            ("triceps", "SkinThickness"),
            ("insulin", "Insulin"),
            ("bmi", "BMI"),
            ("body mass", "BMI"),
            ("body mass index", "BMI"),
            ("weight", "BMI"),
            ("pedigree", "DiabetesPedigreeFunction"),
            ("family history", "DiabetesPedigreeFunction"),
            ("diabetes pedigree", "DiabetesPedigreeFunction"),
            ("age", "Age"),
            ("old", "Age"),
            ("pregnancies", "Pregnancies"),
            ("pregnancy", "Pregnancies"),
            ("pregnant", "Pregnancies"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn tokens(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        let flush = |cur: &mut String, out: &mut Vec<String>| {
            if !cur.is_empty() {
                out.push(std::mem::take(cur));
            }
        };
        for ch in text.chars().flat_map(char::to_lowercase) {
            if ch.is_alphanumeric() {
                // Split "id39" style tokens at the letter/digit boundary.
                if let Some(last) = cur.chars().last() {
                    if last.is_ascii_digit() != ch.is_ascii_digit() {
                        flush(&mut cur, &mut out);
                    }
                }
                cur.push(ch);
            } else {
                flush(&mut cur, &mut out);
                if ch == '#' {
                    out.push("#".into());
                }
            }
        }
        flush(&mut cur, &mut out);
        out
    }

    fn find_feature(&self, tokens: &[String]) -> Option<String> {
        for (phrase, name) in &self.synonyms {
            if tokens.windows(phrase.len()).any(|w| w == phrase.as_slice()) {
                return Some(name.clone());
            }
        }
        None
    }

    fn find_class(tokens: &[String]) -> Option<u8> {
        for (i, t) in tokens.iter().enumerate() {
            let next = tokens.get(i + 1).map(String::as_str);
            match (t.as_str(), next) {
                ("class", Some("1")) | ("class", Some("one")) => return Some(1),
                ("class", Some("0")) | ("class", Some("zero")) => return Some(0),
                ("positive", _) | ("diabetic", _) => return Some(1),
                ("negative", _) | ("healthy", _) | ("nondiabetic", _) => return Some(0),
                ("non", Some("diabetic")) => return Some(0),
                ("high", Some("risk")) => return Some(1),
                ("low", Some("risk")) => return Some(0),
                _ => {}
            }
        }
        None
    }

    fn numbers(tokens: &[String]) -> (Option<u64>, Option<usize>, Vec<u64>) {
        let mut patient = None;
        let mut count = None;
        let mut loose = Vec::new();
        for (i, t) in tokens.iter().enumerate() {
            let Ok(n) = t.parse::<u64>() else { continue };
            let prev = i.checked_sub(1).map(|j| tokens[j].as_str());
            match prev {
                Some("top") | Some("first") => count = Some(n as usize),
                Some("class") => {}
                Some(p) if PATIENT_CUES.contains(&p) && patient.is_none() => patient = Some(n),
                _ => loose.push(n),
            }
        }
        (patient, count, loose)
    }
}

impl CommandParser for GrammarParser {
    fn parse(&self, text: &str, intent: Intent, session_patient: Option<u64>) -> Result<ParsedCommand, ParseFailure> {
        let tokens = Self::tokens(text);
        let (cued, count, loose) = Self::numbers(&tokens);
        let needs_patient = matches!(
            intent,
            Intent::Predict | Intent::ExplainImportance | Intent::Counterfactual | Intent::Recommendation
        );
        let patient_id = cued
            .or_else(|| if needs_patient && loose.len() == 1 { Some(loose[0]) } else { None })
            .or(session_patient);
        let feature = self.find_feature(&tokens);
        let mut args = CommandArgs {
            patient_id,
            count,
            ..Default::default()
        };
        let missing = |what: &str| ParseFailure { missing: what.into() };
        match intent {
            Intent::Predict | Intent::Counterfactual | Intent::Recommendation => {
                args.patient_id.ok_or_else(|| missing("patient_id"))?;
            }
            Intent::ExplainImportance => {
                args.patient_id.ok_or_else(|| missing("patient_id"))?;
                args.feature = feature;
            }
            Intent::ExplainRange => {
                args.feature = feature;
                args.class = Self::find_class(&tokens);
                if args.patient_id.is_none() && args.class.is_none() {
                    return Err(missing("patient_id or class"));
                }
            }
            Intent::DataSummary => {
                args.feature = feature;
                args.class = Self::find_class(&tokens);
            }
            Intent::EvidenceRequest => {
                args.feature = Some(feature.ok_or_else(|| missing("feature"))?);
            }
        }
        Ok(ParsedCommand { action: intent, args })
    }
}

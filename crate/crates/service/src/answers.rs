//! Fixed text templates for grammar-routed chat commands. Every number in
//! an answer comes from an engine output.

use std::fmt::Write;

use riskscope_core::evidence::{EvidenceEntry, EvidenceKind};
use riskscope_core::recommend::{filter_immutable, generate_counterfactual, CounterfactualOutcome, RecommendOutcome};
use riskscope_core::router::{Intent, ParsedCommand, ViewTag};
use riskscope_core::ranges::FeatureRangeReport;
use serde_json::Value;

use crate::engine::{Engine, EngineError};

/// Result of executing a parsed command.
#[derive(Debug, Clone, PartialEq)]
pub struct Executed {
    pub text: String,
    /// View the answer corresponds to, with its payload.
    pub view: Option<(ViewTag, Value)>,
    pub evidence: Option<EvidenceEntry>,
    /// Patient the command was about, if any.
    pub patient: Option<u64>,
}

impl Executed {
    fn text(text: String, patient: Option<u64>) -> Self {
        Self {
            text,
            view: None,
            evidence: None,
            patient,
        }
    }
}

fn class_word(class: u8) -> &'static str {
    if class == 1 {
        "diabetic"
    } else {
        "non-diabetic"
    }
}

fn describe_ranges(engine: &Engine, report: &FeatureRangeReport) -> String {
    let class = report.predicted_class;
    let sci_name = if class == 1 { "diagnostic" } else { "normal" };
    let mut out = String::new();
    for f in &report.features {
        let unit = engine
            .schema
            .index_of(&f.feature)
            .map(|j| engine.schema.feature(j).unit.clone())
            .unwrap_or_default();
        let _ = write!(
            out,
            "\n- {}: patients predicted {} mostly have {:.1} to {:.1} {}",
            f.feature,
            class_word(class),
            f.ai_low,
            f.ai_high,
            unit
        );
        match (f.sci_low, f.sci_high, f.overlap) {
            (Some(lo), Some(hi), Some(ov)) => {
                let _ = write!(out, "; the {sci_name} range is {lo:.1} to {hi:.1} (overlap {ov:.2}).");
            }
            _ => out.push_str("; no scientific range is on file."),
        }
    }
    if report.low_confidence {
        out.push_str("\nFewer than 10 patients share this prediction, so these ranges are uncertain.");
    }
    out
}

fn step_verb(feature: &str, delta: f64) -> String {
    if delta < 0.0 {
        format!("Lower {feature} by {:.1}", -delta)
    } else {
        format!("Raise {feature} by {delta:.1}")
    }
}

/// Runs `cmd` against the engine and renders the answer. `view` is the
/// dashboard view active when the query was sent.
pub fn execute(engine: &Engine, cmd: &ParsedCommand, view: ViewTag) -> Result<Executed, EngineError> {
    let args = &cmd.args;
    let feature = args.feature.as_deref();
    match cmd.action {
        Intent::Predict => {
            let id = args.patient_id.unwrap_or_default();
            let p = engine.prediction(id)?;
            Ok(Executed::text(
                format!(
                    "Patient {id} has a predicted diabetes risk of {:.1}% and is predicted {}.",
                    p.risk_percent,
                    class_word(p.predicted_class)
                ),
                Some(id),
            ))
        }
        Intent::ExplainImportance => {
            let id = args.patient_id.unwrap_or_default();
            let v = engine.importance(id, 0)?;
            let score = v.report.selected_report().score.unwrap_or_default();
            let text = match feature {
                Some(name) => {
                    let (rank, f) = v
                        .ranking
                        .iter()
                        .enumerate()
                        .find(|(_, f)| f.feature == name)
                        .ok_or_else(|| EngineError::UnknownFeature(name.to_string()))?;
                    format!(
                        "For patient {id}, {name} has an attribution of {:+.4} and ranks {} of {} ({}).",
                        f.phi,
                        rank + 1,
                        v.ranking.len(),
                        v.method
                    )
                }
                None => {
                    let n = args.count.unwrap_or(v.report.k).clamp(1, v.ranking.len());
                    let list: Vec<String> = v
                        .ranking
                        .iter()
                        .take(n)
                        .map(|f| format!("{} ({:+.4})", f.feature, f.phi))
                        .collect();
                    format!(
                        "The most influential factors for patient {id} are {}. Explainer: {} (faithfulness {:.4}).",
                        list.join(", "),
                        v.method,
                        score
                    )
                }
            };
            Ok(Executed {
                text,
                view: Some((ViewTag::Importance, serde_json::to_value(&v).expect("view serializes"))),
                evidence: None,
                patient: Some(id),
            })
        }
        Intent::ExplainRange => {
            if let Some(id) = args.patient_id {
                let report = match feature {
                    Some(name) => {
                        let j = engine.schema.index_of(name).ok_or_else(|| EngineError::UnknownFeature(name.into()))?;
                        let class = engine.prediction(id)?.predicted_class;
                        engine.class_ranges(class, &[j])?
                    }
                    None => engine.ranges(id, 0)?.report,
                };
                let text = format!("Feature ranges for patient {id}:{}", describe_ranges(engine, &report));
                let data = serde_json::to_value(engine.ranges(id, 0)?).expect("view serializes");
                Ok(Executed {
                    text,
                    view: Some((ViewTag::Ranges, data)),
                    evidence: None,
                    patient: Some(id),
                })
            } else {
                let class = args.class.unwrap_or(1);
                let features: Vec<usize> = match feature {
                    Some(name) => vec![engine.schema.index_of(name).ok_or_else(|| EngineError::UnknownFeature(name.into()))?],
                    None => engine
                        .kb
                        .range_features()
                        .into_iter()
                        .filter_map(|n| engine.schema.index_of(n))
                        .collect(),
                };
                let report = engine.class_ranges(class, &features)?;
                Ok(Executed::text(
                    format!("Feature ranges for class {class}:{}", describe_ranges(engine, &report)),
                    None,
                ))
            }
        }
        Intent::Counterfactual => {
            let id = args.patient_id.unwrap_or_default();
            let r = engine.record(id)?;
            let text = match generate_counterfactual(&engine.model, &r.values, &engine.schema, &engine.space) {
                CounterfactualOutcome::NoChangeNeeded => {
                    format!("Patient {id} is already predicted non-diabetic; no change is needed.")
                }
                CounterfactualOutcome::NoFeasiblePlan => format!(
                    "No change to the modifiable factors within the observed ranges flips the prediction for patient {id}."
                ),
                CounterfactualOutcome::Found(cands) => match filter_immutable(cands, &engine.schema).first() {
                    None => format!(
                        "No change to the modifiable factors within the observed ranges flips the prediction for patient {id}."
                    ),
                    Some(c) => {
                        let parts: Vec<String> = c
                            .changes
                            .iter()
                            .map(|ch| format!("{} from {:.1} to {:.1}", ch.name, ch.from, ch.to))
                            .collect();
                        format!(
                            "Changing {} would lower the risk of patient {id} to {:.1}% and flip the prediction to non-diabetic.",
                            parts.join(" and "),
                            c.probability_after * 100.0
                        )
                    }
                },
            };
            Ok(Executed::text(text, Some(id)))
        }
        Intent::Recommendation => {
            let id = args.patient_id.unwrap_or_default();
            let v = engine.recommendation(id)?;
            let text = match &v.outcome {
                RecommendOutcome::NoChangeNeeded => {
                    format!("Patient {id} is already predicted non-diabetic; no change is needed.")
                }
                RecommendOutcome::NoFeasiblePlan => {
                    format!("No feasible plan over the modifiable factors was found for patient {id}.")
                }
                RecommendOutcome::Planned { plan, .. } => {
                    let mut t = format!(
                        "Plan for patient {id} (current risk {:.1}%, prediction flips at step {}):",
                        v.probability * 100.0,
                        plan.flips_at_step
                    );
                    for (i, s) in plan.steps.iter().enumerate() {
                        let verb = step_verb(&s.feature, s.delta);
                        let badge = serde_json::to_value(s.feasibility).expect("badge serializes");
                        let _ = write!(
                            t,
                            "\n{}. {verb} to {:.1} ({}); risk after this step {:.1}%.",
                            i + 1,
                            s.cumulative_value,
                            badge.as_str().unwrap_or_default(),
                            s.predicted_probability_after * 100.0
                        );
                    }
                    if !plan.horizon_note.is_empty() {
                        let _ = write!(t, "\n{}", plan.horizon_note);
                    }
                    t
                }
            };
            Ok(Executed {
                text,
                view: Some((ViewTag::Recommendation, serde_json::to_value(&v).expect("view serializes"))),
                evidence: None,
                patient: Some(id),
            })
        }
        Intent::DataSummary => {
            let ds = &engine.dataset;
            let n = ds.len();
            let text = match (feature, args.class) {
                (Some(name), _) => {
                    let j = engine.schema.index_of(name).ok_or_else(|| EngineError::UnknownFeature(name.into()))?;
                    let s = ds.summary(j);
                    let unit = &engine.schema.feature(j).unit;
                    format!(
                        "{name} across {n} patients: mean {:.1} {unit}, standard deviation {:.1}, range {:.1} to {:.1}.",
                        s.mean, s.std, s.min, s.max
                    )
                }
                (None, Some(c)) => {
                    let k = ds.records().iter().filter(|r| r.label == Some(c)).count();
                    format!("{k} of {n} patients have outcome {c} ({}).", class_word(c))
                }
                (None, None) => {
                    let pos = ds.records().iter().filter(|r| r.label == Some(1)).count();
                    let names: Vec<&str> = engine.schema.names().collect();
                    format!(
                        "The dataset has {n} patients, {pos} of them with diabetes ({:.1}%), described by {} features: {}.",
                        100.0 * pos as f64 / n.max(1) as f64,
                        names.len(),
                        names.join(", ")
                    )
                }
            };
            Ok(Executed::text(text, args.patient_id))
        }
        Intent::EvidenceRequest => {
            let name = feature.unwrap_or_default();
            let wanted = if view == ViewTag::Ranges {
                EvidenceKind::Range
            } else {
                EvidenceKind::Importance
            };
            let entry = engine
                .evidence(name, wanted)
                .or_else(|_| engine.evidence(name, EvidenceKind::Importance))?
                .clone();
            let mut text = entry.summary.clone();
            for c in &entry.citations {
                let _ = write!(text, "\n[{}] {} ({}). {}", c.marker, c.title, c.year, c.locator);
            }
            Ok(Executed {
                text,
                view: None,
                evidence: Some(entry),
                patient: args.patient_id,
            })
        }
    }
}

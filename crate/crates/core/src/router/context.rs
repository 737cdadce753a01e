//! Bounded context bundle sent along with fallback queries.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::PatientRecord;
use crate::evidence::{EvidenceEntry, EvidenceKind, KnowledgeBase};
use crate::schema::FeatureSchema;

/// Most recent turns carried in a pack.
pub const MAX_TURNS: usize = 3;
/// Upper bound on the serialized pack.
pub const MAX_PACK_BYTES: usize = 32 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub user: String,
    pub system: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewTag {
    #[default]
    Record,
    Importance,
    Ranges,
    Recommendation,
}

impl ViewTag {
    /// Evidence kind shown next to this view.
    pub fn evidence_kind(self) -> EvidenceKind {
        match self {
            ViewTag::Importance => EvidenceKind::Importance,
            _ => EvidenceKind::Range,
        }
    }
}

impl std::str::FromStr for ViewTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(ViewTag::Record),
            "importance" => Ok(ViewTag::Importance),
            "ranges" => Ok(ViewTag::Ranges),
            "recommendation" => Ok(ViewTag::Recommendation),
            other => Err(format!("unknown view `{other}`")),
        }
    }
}

/// What the dashboard currently displays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveView {
    pub tag: ViewTag,
    /// The serialized view payload as sent to the UI.
    pub data: Value,
    /// Features the view shows evidence buttons for.
    #[serde(default)]
    pub features: Vec<String>,
}

impl ActiveView {
    pub fn empty(tag: ViewTag) -> Self {
        Self {
            tag,
            data: Value::Null,
            features: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientValue {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPack {
    pub recent_turns: Vec<Turn>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<u64>,
    pub patient_values: Vec<PatientValue>,
    pub active_view: ActiveView,
    pub evidence_excerpts: Vec<EvidenceEntry>,
    /// Parts removed to respect the size bound, in removal order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truncated: Vec<String>,
}

impl ContextPack {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pack serializes")
    }

    pub fn byte_len(&self) -> usize {
        self.to_json().len()
    }
}

/// Assembles the pack: the last [`MAX_TURNS`] turns in order, every patient
/// value with its unit, the active view, and the view's evidence entries.
/// The result is trimmed to [`MAX_PACK_BYTES`].
pub fn build_context(
    turns: &[Turn],
    patient: Option<(&PatientRecord, &FeatureSchema)>,
    active_view: ActiveView,
    kb: &KnowledgeBase,
) -> ContextPack {
    let recent_turns = turns[turns.len().saturating_sub(MAX_TURNS)..].to_vec();
    let (patient_id, patient_values) = match patient {
        Some((record, schema)) => (
            Some(record.id),
            schema
                .features()
                .iter()
                .zip(&record.values)
                .map(|(f, &value)| PatientValue {
                    name: f.name.clone(),
                    value,
                    unit: f.unit.clone(),
                })
                .collect(),
        ),
        None => (None, Vec::new()),
    };
    let kind = active_view.tag.evidence_kind();
    let evidence_excerpts = active_view
        .features
        .iter()
        .filter_map(|f| kb.get(f, kind).ok().cloned())
        .collect();
    let mut pack = ContextPack {
        recent_turns,
        patient_id,
        patient_values,
        active_view,
        evidence_excerpts,
        truncated: Vec::new(),
    };
    enforce_budget(&mut pack, MAX_PACK_BYTES);
    pack
}

fn strip_histograms(v: &mut Value) -> bool {
    let mut changed = false;
    match v {
        Value::Object(map) => {
            for key in ["histogram", "bins", "edges", "counts"] {
                changed |= map.remove(key).is_some();
            }
            for child in map.values_mut() {
                changed |= strip_histograms(child);
            }
        }
        Value::Array(items) => {
            for child in items {
                changed |= strip_histograms(child);
            }
        }
        _ => {}
    }
    changed
}

/// Shrinks the pack until it fits: oldest turns go first, then histogram
/// detail in the view data, then evidence excerpts from the end, then the
/// view data itself. Patient values are never removed.
pub fn enforce_budget(pack: &mut ContextPack, max_bytes: usize) {
    while pack.byte_len() > max_bytes {
        if !pack.recent_turns.is_empty() {
            pack.recent_turns.remove(0);
            pack.truncated.push("oldest_turn".into());
        } else if strip_histograms(&mut pack.active_view.data) {
            pack.truncated.push("histogram_detail".into());
        } else if pack.evidence_excerpts.pop().is_some() {
            pack.truncated.push("evidence_excerpt".into());
        } else if !pack.active_view.data.is_null() {
            pack.active_view.data = Value::Null;
            pack.truncated.push("view_data".into());
        } else {
            break;
        }
    }
}

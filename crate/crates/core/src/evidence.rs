//! Read-only store of manually verified clinical evidence.
//!
//! The store is a single versioned JSON document. Its `checksum` field is the
//! SHA-256 of the canonical serialization of `version` and `entries`, so any
//! edit must be followed by re-verification and a checksum refresh
//! (`riskscope kb-lint --write-checksum`). Entries are served verbatim; this
//! module never composes text.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ranges::Interval;

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("cannot read knowledge base {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("knowledge base is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("knowledge base failed validation:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
    #[error("checksum mismatch: file declares {declared}, content hashes to {actual}")]
    Checksum { declared: String, actual: String },
    #[error("no {kind} evidence for `{feature}`")]
    NotFound { feature: String, kind: EvidenceKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceKind {
    Importance,
    Range,
}

impl fmt::Display for EvidenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvidenceKind::Importance => "importance",
            EvidenceKind::Range => "range",
        })
    }
}

impl std::str::FromStr for EvidenceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "importance" => Ok(EvidenceKind::Importance),
            "range" => Ok(EvidenceKind::Range),
            other => Err(format!("unknown evidence kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceType {
    Journal,
    Guideline,
    SystematicReview,
    Epidemiological,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub marker: u32,
    pub title: String,
    pub source_type: SourceType,
    pub year: u16,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePayload {
    pub normal: Interval,
    pub diagnostic: Interval,
    pub units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub feature: String,
    pub kind: EvidenceKind,
    /// Text with inline `[n]` markers.
    pub summary: String,
    pub citations: Vec<Citation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangePayload>,
}

impl EvidenceEntry {
    /// Inline `[n]` markers in order of first appearance.
    pub fn markers(&self) -> Vec<u32> {
        inline_markers(&self.summary)
    }
}

/// Extracts the numbers of every `[digits]` token.
pub fn inline_markers(text: &str) -> Vec<u32> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        rest = &rest[open + 1..];
        if let Some(close) = rest.find(']') {
            let inner = &rest[..close];
            if !inner.is_empty() && inner.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(n) = inner.parse() {
                    if !out.contains(&n) {
                        out.push(n);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct KbFile {
    version: String,
    #[serde(default)]
    checksum: String,
    entries: Vec<EvidenceEntry>,
}

#[derive(Serialize)]
struct Canonical<'a> {
    version: &'a str,
    entries: &'a [EvidenceEntry],
}

/// SHA-256 over the canonical serialization, prefixed with `sha256:`.
pub fn compute_checksum(version: &str, entries: &[EvidenceEntry]) -> String {
    let bytes = serde_json::to_vec(&Canonical { version, entries }).expect("entries serialize");
    format!("sha256:{}", hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    version: String,
    checksum: String,
    entries: Vec<EvidenceEntry>,
    index: HashMap<(String, EvidenceKind), usize>,
}

impl KnowledgeBase {
    pub fn from_json(text: &str) -> Result<Self, EvidenceError> {
        let file: KbFile = serde_json::from_str(text)?;
        let problems = validate_entries(&file.entries);
        if !problems.is_empty() {
            return Err(EvidenceError::Schema(problems));
        }
        let actual = compute_checksum(&file.version, &file.entries);
        if file.checksum != actual {
            return Err(EvidenceError::Checksum {
                declared: file.checksum,
                actual,
            });
        }
        let index = file
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.feature.clone(), e.kind), i))
            .collect();
        Ok(Self {
            version: file.version,
            checksum: file.checksum,
            entries: file.entries,
            index,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvidenceError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| EvidenceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Recomputes the checksum from the in-memory entries.
    pub fn content_checksum(&self) -> String {
        compute_checksum(&self.version, &self.entries)
    }

    pub fn entries(&self) -> &[EvidenceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, feature: &str, kind: EvidenceKind) -> Result<&EvidenceEntry, EvidenceError> {
        self.index
            .get(&(feature.to_string(), kind))
            .map(|&i| &self.entries[i])
            .ok_or_else(|| EvidenceError::NotFound {
                feature: feature.to_string(),
                kind,
            })
    }

    /// Interval compared against a class's observed range: the diagnostic
    /// interval for class 1, the normal interval for class 0.
    pub fn scientific_interval(&self, feature: &str, class: u8) -> Option<Interval> {
        let payload = self.get(feature, EvidenceKind::Range).ok()?.range.as_ref()?;
        Some(if class == 1 { payload.diagnostic } else { payload.normal })
    }

    pub fn range_features(&self) -> BTreeSet<&str> {
        self.entries
            .iter()
            .filter(|e| e.kind == EvidenceKind::Range)
            .map(|e| e.feature.as_str())
            .collect()
    }
}

/// Loads the raw document, validates it and rewrites its checksum field.
/// Returns the new checksum.
pub fn refresh_checksum(path: impl AsRef<Path>) -> Result<String, EvidenceError> {
    let path = path.as_ref();
    let io = |source| EvidenceError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file: KbFile = serde_json::from_str(&fs::read_to_string(path).map_err(io)?)?;
    let problems = validate_entries(&file.entries);
    if !problems.is_empty() {
        return Err(EvidenceError::Schema(problems));
    }
    file.checksum = compute_checksum(&file.version, &file.entries);
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(path, text).map_err(io)?;
    Ok(file.checksum)
}

/// Entry-level problems; empty when the entries are valid.
pub fn validate_entries(entries: &[EvidenceEntry]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut keys = BTreeSet::new();
    for (i, e) in entries.iter().enumerate() {
        let tag = format!("entry #{i} ({}/{})", e.feature, e.kind);
        if !keys.insert((e.feature.clone(), e.kind)) {
            problems.push(format!("{tag}: duplicate feature/kind key"));
        }
        if e.summary.trim().is_empty() {
            problems.push(format!("{tag}: empty summary"));
        }
        let mut seen = BTreeSet::new();
        for c in &e.citations {
            if !seen.insert(c.marker) {
                problems.push(format!("{tag}: citation marker [{}] declared twice", c.marker));
            }
        }
        for m in e.markers() {
            if !seen.contains(&m) {
                problems.push(format!(
                    "{tag}: marker [{m}] has no citation ({} declared)",
                    e.citations.len()
                ));
            }
        }
        match (e.kind, &e.range) {
            (EvidenceKind::Range, None) => problems.push(format!("{tag}: range entry without range payload")),
            (EvidenceKind::Range, Some(r)) => {
                for (name, iv) in [("normal", r.normal), ("diagnostic", r.diagnostic)] {
                    if !(iv.low <= iv.high) || !iv.low.is_finite() || !iv.high.is_finite() {
                        problems.push(format!("{tag}: {name} interval has low > high or is not finite"));
                    }
                }
            }
            (EvidenceKind::Importance, Some(_)) => {
                problems.push(format!("{tag}: importance entry carries a range payload"))
            }
            (EvidenceKind::Importance, None) => {}
        }
    }
    problems
}

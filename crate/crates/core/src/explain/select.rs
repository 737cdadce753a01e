//! Picks the most faithful explainer for one instance.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::faithfulness::{faithfulness, magnitude_order, top_k_set};
use super::lime::{explain_lime, lime_method_id, LimeConfig};
use super::shap::{explain_kernel_shap, sample_background, KERNEL_SHAP_ID};
use super::{sub_seed, Attribution, ExplainError, PerturbationConfig};
use crate::data::{Dataset, PatientRecord, Standardizer};
use crate::model::ProbabilityModel;

const LIME_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Candidate {
    Lime { kernel_width: f64 },
    KernelShap,
}

impl Candidate {
    pub fn method_id(&self) -> String {
        match self {
            Candidate::Lime { kernel_width } => lime_method_id(*kernel_width),
            Candidate::KernelShap => KERNEL_SHAP_ID.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Top-k horizon of the faithfulness curve.
    pub k: usize,
    /// Scores closer than this are treated as tied.
    pub delta: f64,
    /// Candidates in registration order; later ties lose to earlier ones.
    pub candidates: Vec<Candidate>,
}

impl SelectionConfig {
    pub const DEFAULT_DELTA: f64 = 0.01;
    pub const LIME_WIDTHS: [f64; 4] = [0.25, 0.50, 0.75, 1.0];

    /// Four surrogate widths plus Kernel SHAP, `K = ⌊d/2⌋` (at least 1).
    pub fn for_features(d: usize) -> Self {
        let mut candidates: Vec<Candidate> = Self::LIME_WIDTHS
            .iter()
            .map(|&w| Candidate::Lime { kernel_width: w })
            .collect();
        candidates.push(Candidate::KernelShap);
        Self {
            k: (d / 2).max(1),
            delta: Self::DEFAULT_DELTA,
            candidates,
        }
    }

    fn validate(&self, d: usize) -> Result<(), ExplainError> {
        if self.k == 0 || self.k > d {
            return Err(ExplainError::BadK { k: self.k, d });
        }
        if self.candidates.is_empty() {
            return Err(ExplainError::NoCandidates);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub method_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub curve: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribution: Option<Attribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub target: u64,
    pub k: usize,
    pub delta: f64,
    pub candidates: Vec<CandidateReport>,
    pub selected: String,
    pub tiebreak_used: bool,
}

impl FaithfulnessReport {
    pub fn selected_report(&self) -> &CandidateReport {
        self.candidates
            .iter()
            .find(|c| c.method_id == self.selected && c.attribution.is_some())
            .expect("selected candidate has an attribution")
    }

    pub fn selected_attribution(&self) -> &Attribution {
        self.selected_report().attribution.as_ref().expect("checked above")
    }
}

/// Winner among successfully scored candidates, given as `(score, phi)` in
/// registration order. Returns the index and whether the tiebreak decided.
///
/// Candidates within `delta` of the best score are tied. Among those, the
/// one whose top-K set has the highest Jaccard index with the consensus
/// top-K (features ordered by mean magnitude rank over all candidates) wins;
/// equal Jaccard values fall back to registration order.
pub fn choose_candidate(entries: &[(f64, &[f64])], k: usize, delta: f64) -> (usize, bool) {
    assert!(!entries.is_empty(), "no scored candidates");
    let best = entries
        .iter()
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..entries.len())
        .filter(|&i| best - entries[i].0 < delta || entries[i].0 == best)
        .collect();
    if tied.len() == 1 {
        return (tied[0], false);
    }

    let d = entries[0].1.len();
    let mut mean_rank = vec![0.0; d];
    for (_, phi) in entries {
        for (rank, &feature) in magnitude_order(phi).iter().enumerate() {
            mean_rank[feature] += rank as f64 / entries.len() as f64;
        }
    }
    let mut consensus: Vec<usize> = (0..d).collect();
    consensus.sort_by(|&a, &b| mean_rank[a].total_cmp(&mean_rank[b]).then(a.cmp(&b)));
    let consensus: BTreeSet<usize> = consensus.into_iter().take(k).collect();

    let mut winner = tied[0];
    let mut winner_j = f64::NEG_INFINITY;
    for &i in &tied {
        let own = top_k_set(entries[i].1, k);
        let j = own.intersection(&consensus).count() as f64 / own.union(&consensus).count() as f64;
        if j > winner_j {
            winner = i;
            winner_j = j;
        }
    }
    (winner, true)
}

/// Standardizer and Kernel SHAP background shared by every request against
/// one dataset.
#[derive(Debug, Clone)]
pub struct Explainer {
    pub standardizer: Standardizer,
    pub background: Vec<Vec<f64>>,
    pub lime: LimeConfig,
}

impl Explainer {
    pub const BACKGROUND_SIZE: usize = 100;
    pub const BACKGROUND_SEED: u64 = 42;

    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::with_background(dataset, Self::BACKGROUND_SIZE, Self::BACKGROUND_SEED)
    }

    pub fn with_background(dataset: &Dataset, size: usize, seed: u64) -> Self {
        let rows: Vec<Vec<f64>> = dataset.records().iter().map(|r| r.values.clone()).collect();
        Self {
            standardizer: dataset.standardizer(),
            background: sample_background(&rows, size, seed),
            lime: LimeConfig::default(),
        }
    }

    pub fn attribution(
        &self,
        model: &dyn ProbabilityModel,
        x: &[f64],
        target: u64,
        candidate: Candidate,
        seed: u64,
    ) -> Result<Attribution, ExplainError> {
        match candidate {
            Candidate::Lime { kernel_width } => {
                let cfg = LimeConfig {
                    seed: sub_seed(seed, LIME_STREAM),
                    ..self.lime
                };
                explain_lime(model, &self.standardizer, x, target, kernel_width, &cfg)
            }
            Candidate::KernelShap => {
                explain_kernel_shap(model, x, target, &self.background).map(|r| r.attribution)
            }
        }
    }

    /// Scores every candidate under the same perturbation seed and picks one.
    pub fn select(
        &self,
        model: &dyn ProbabilityModel,
        x: &[f64],
        target: u64,
        sel: &SelectionConfig,
        cfg: &PerturbationConfig,
    ) -> Result<FaithfulnessReport, ExplainError> {
        sel.validate(self.standardizer.d())?;
        cfg.validate()?;

        let candidates: Vec<CandidateReport> = sel
            .candidates
            .iter()
            .map(|&c| {
                let method_id = c.method_id();
                let scored = self.attribution(model, x, target, c, cfg.seed).and_then(|a| {
                    faithfulness(model, &self.standardizer, x, &a, sel.k, cfg).map(|s| (a, s))
                });
                match scored {
                    Ok((a, (score, curve))) => CandidateReport {
                        method_id,
                        score: Some(score),
                        curve,
                        attribution: Some(a),
                        error: None,
                    },
                    Err(e) => {
                        tracing::warn!(method = %method_id, error = %e, "explainer failed");
                        CandidateReport {
                            method_id,
                            score: None,
                            curve: Vec::new(),
                            attribution: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect();

        let scored: Vec<(usize, f64, &[f64])> = candidates
            .iter()
            .enumerate()
            .filter_map(|(i, c)| Some((i, c.score?, c.attribution.as_ref()?.phi.as_slice())))
            .collect();
        if scored.is_empty() {
            return Err(ExplainError::AllCandidatesFailed(
                candidates
                    .iter()
                    .map(|c| (c.method_id.clone(), c.error.clone().unwrap_or_default()))
                    .collect(),
            ));
        }
        let entries: Vec<(f64, &[f64])> = scored.iter().map(|&(_, s, p)| (s, p)).collect();
        let (pick, tiebreak_used) = choose_candidate(&entries, sel.k, sel.delta);
        let selected = candidates[scored[pick].0].method_id.clone();

        Ok(FaithfulnessReport {
            target,
            k: sel.k,
            delta: sel.delta,
            candidates,
            selected,
            tiebreak_used,
        })
    }
}

/// One-shot selection for a dataset record. The Kernel SHAP background is a
/// fixed-seed sample of the dataset; `cfg.seed` drives every other draw.
pub fn select_explainer(
    model: &dyn ProbabilityModel,
    dataset: &Dataset,
    record: &PatientRecord,
    sel: &SelectionConfig,
    cfg: &PerturbationConfig,
) -> Result<FaithfulnessReport, ExplainError> {
    Explainer::from_dataset(dataset).select(model, &record.values, record.id, sel, cfg)
}

//! Local attributions and faithfulness-driven explainer selection.
//!
//! Two attribution families are provided: a weighted linear surrogate fitted
//! on Gaussian perturbations ([`explain_lime`]) and Shapley values solved
//! exactly over every coalition ([`explain_kernel_shap`]). Each candidate is
//! scored by how much the model output moves when its top-ranked features are
//! perturbed ([`faithfulness`]), and [`select_explainer`] keeps the best one.
//!
//! All perturbations are drawn in z-score units of the reference dataset and
//! mapped back to raw units before the model is called.

mod faithfulness;
mod lime;
mod select;
mod shap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use faithfulness::{
    faithfulness, fudge_score, jaccard_rankings, magnitude_order, top_k_mask, top_k_set,
};
pub use lime::{explain_lime, LimeConfig};
pub use select::{
    choose_candidate, select_explainer, Candidate, CandidateReport, Explainer, FaithfulnessReport,
    SelectionConfig,
};
pub use shap::{explain_kernel_shap, sample_background, KernelShapResult, MAX_EXACT_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("kernel width must be positive, got {0}")]
    BadKernelWidth(f64),
    #[error("perturbation design is degenerate: {0}")]
    DegenerateDesign(&'static str),
    #[error("background sample is empty")]
    EmptyBackground,
    #[error("exact Shapley enumeration supports at most {max} features, got {found}")]
    TooManyFeatures { max: usize, found: usize },
    #[error("k = {k} is outside 1..={d}")]
    BadK { k: usize, d: usize },
    #[error("noise scale must be positive, got {0}")]
    BadSigma(f64),
    #[error("sample count must be at least 1")]
    BadSampleCount,
    #[error("expected {expected} values, found {found}")]
    Length { expected: usize, found: usize },
    #[error("non-finite attribution for feature {0}")]
    NonFinite(usize),
    #[error("no explainer candidates configured")]
    NoCandidates,
    #[error("every explainer failed: {}", .0.iter().map(|(m, e)| format!("{m}: {e}")).collect::<Vec<_>>().join("; "))]
    AllCandidatesFailed(Vec<(String, String)>),
    #[error("linear solve failed")]
    Singular,
}

/// Signed per-feature importance for one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    pub method_id: String,
    pub target: u64,
}

impl Attribution {
    pub fn new(phi: Vec<f64>, method_id: impl Into<String>, target: u64) -> Result<Self, ExplainError> {
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(ExplainError::NonFinite(i));
        }
        Ok(Self {
            phi,
            method_id: method_id.into(),
            target,
        })
    }

    pub fn d(&self) -> usize {
        self.phi.len()
    }
}

/// Binary feature selector; `true` means the feature is perturbed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask(pub Vec<bool>);

impl FeatureMask {
    pub fn zeros(d: usize) -> Self {
        Self(vec![false; d])
    }

    pub fn from_indices(d: usize, indices: &[usize]) -> Self {
        let mut m = vec![false; d];
        for &i in indices {
            m[i] = true;
        }
        Self(m)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// Entries as 0/1 values.
    pub fn as_bits(&self) -> Vec<u8> {
        self.0.iter().map(|&b| u8::from(b)).collect()
    }
}

/// Gaussian noise used by the fudge score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    /// Noise standard deviation in z-score units.
    pub sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl PerturbationConfig {
    pub const DEFAULT_SIGMA: f64 = 0.05;
    pub const SELECTION_SAMPLES: usize = 1000;

    pub fn new(sigma: f64, n_samples: usize, seed: u64) -> Result<Self, ExplainError> {
        let cfg = Self {
            sigma,
            n_samples,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExplainError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ExplainError::BadSigma(self.sigma));
        }
        if self.n_samples == 0 {
            return Err(ExplainError::BadSampleCount);
        }
        Ok(())
    }
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            sigma: Self::DEFAULT_SIGMA,
            n_samples: Self::SELECTION_SAMPLES,
            seed: 0,
        }
    }
}

/// Derives an independent stream seed from a request seed.
pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    // SplitMix64 finaliser.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

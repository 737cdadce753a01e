//! Weighted linear surrogate fitted to perturbations around one instance.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Attribution, ExplainError};
use crate::data::Standardizer;
use crate::model::ProbabilityModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// L2 penalty on slope coefficients (the intercept is not penalised).
    pub ridge: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            ridge: 1e-6,
            seed: 0,
        }
    }
}

pub fn lime_method_id(kernel_width: f64) -> String {
    format!("lime_w{kernel_width:.2}")
}

/// Fits `f(x + δ) ≈ β₀ + β·δ` where `δ ~ N(0, I)` in z-score units, weighting
/// each sample by `exp(-r²/w²)` with `r` the root-mean-square coordinate
/// distance. The first sample is the instance itself. `phi = β`, i.e. the
/// change in probability per standard deviation of each feature.
pub fn explain_lime(
    model: &dyn ProbabilityModel,
    standardizer: &Standardizer,
    x: &[f64],
    target: u64,
    kernel_width: f64,
    cfg: &LimeConfig,
) -> Result<Attribution, ExplainError> {
    if !(kernel_width > 0.0 && kernel_width.is_finite()) {
        return Err(ExplainError::BadKernelWidth(kernel_width));
    }
    let d = standardizer.d();
    if x.len() != d {
        return Err(ExplainError::Length {
            expected: d,
            found: x.len(),
        });
    }
    if cfg.n_samples < 2 {
        return Err(ExplainError::DegenerateDesign("fewer than two perturbation samples"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_samples;
    let mut design = DMatrix::<f64>::zeros(n, d + 1);
    let mut y = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    let mut xp = vec![0.0; d];
    for i in 0..n {
        design[(i, 0)] = 1.0;
        let mut r2 = 0.0;
        for j in 0..d {
            let delta: f64 = if i == 0 { 0.0 } else { StandardNormal.sample(&mut rng) };
            design[(i, j + 1)] = delta;
            xp[j] = x[j] + delta * standardizer.scale[j];
            r2 += delta * delta;
        }
        y[i] = model.probability(&xp);
        w[i] = (-(r2 / d as f64) / (kernel_width * kernel_width)).exp();
    }

    let total: f64 = w.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(ExplainError::DegenerateDesign("all kernel weights vanish"));
    }
    w /= total;
    let first = design.row(0).clone_owned();
    if (1..n).all(|i| design.row(i) == first) {
        return Err(ExplainError::DegenerateDesign("all perturbations are identical"));
    }

    // Normal equations (XᵀWX + λI') β = XᵀWy.
    let mut weighted = design.clone();
    for i in 0..n {
        weighted.row_mut(i).scale_mut(w[i]);
    }
    let mut gram = design.transpose() * &weighted;
    for j in 1..=d {
        gram[(j, j)] += cfg.ridge;
    }
    let rhs = weighted.transpose() * &y;
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or(ExplainError::Singular)?;

    Attribution::new(beta.iter().skip(1).copied().collect(), lime_method_id(kernel_width), target)
}

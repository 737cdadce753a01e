//! Fudge score, top-k masks and the faithfulness curve.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Attribution, ExplainError, FeatureMask, PerturbationConfig};
use crate::data::Standardizer;
use crate::model::ProbabilityModel;

/// Mean absolute change of the model output when the masked features get
/// Gaussian noise: `(1/N) Σ |f(x) - f(x + ε_n ⊙ m)|`.
///
/// Every draw samples all `d` coordinates regardless of the mask, so masks
/// evaluated under the same seed share their noise.
pub fn fudge_score(
    model: &dyn ProbabilityModel,
    standardizer: &Standardizer,
    x: &[f64],
    mask: &FeatureMask,
    cfg: &PerturbationConfig,
) -> Result<f64, ExplainError> {
    cfg.validate()?;
    let d = standardizer.d();
    check_len(d, x.len())?;
    check_len(d, mask.len())?;
    if mask.count() == 0 {
        return Ok(0.0);
    }

    let noise = Normal::new(0.0, cfg.sigma).map_err(|_| ExplainError::BadSigma(cfg.sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fx = model.probability(x);
    let mut eps = vec![0.0; d];
    let mut xp = x.to_vec();
    let mut total = 0.0;
    for _ in 0..cfg.n_samples {
        for e in eps.iter_mut() {
            *e = noise.sample(&mut rng);
        }
        for j in 0..d {
            xp[j] = if mask.0[j] {
                x[j] + eps[j] * standardizer.scale[j]
            } else {
                x[j]
            };
        }
        total += (fx - model.probability(&xp)).abs();
    }
    Ok(total / cfg.n_samples as f64)
}

/// Feature indices sorted by decreasing |phi|; equal magnitudes keep the
/// lower index first.
pub fn magnitude_order(phi: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..phi.len()).collect();
    idx.sort_by(|&a, &b| phi[b].abs().total_cmp(&phi[a].abs()).then(a.cmp(&b)));
    idx
}

pub fn top_k_set(phi: &[f64], k: usize) -> BTreeSet<usize> {
    magnitude_order(phi).into_iter().take(k).collect()
}

/// Mask with ones at the `k` largest |phi_i|.
pub fn top_k_mask(phi: &Attribution, k: usize) -> Result<FeatureMask, ExplainError> {
    let d = phi.d();
    if k == 0 || k > d {
        return Err(ExplainError::BadK { k, d });
    }
    let top: Vec<usize> = magnitude_order(&phi.phi).into_iter().take(k).collect();
    Ok(FeatureMask::from_indices(d, &top))
}

/// Area under the fudge curve for k = 1..=K. Returns the sum and the
/// per-k values.
pub fn faithfulness(
    model: &dyn ProbabilityModel,
    standardizer: &Standardizer,
    x: &[f64],
    phi: &Attribution,
    k_max: usize,
    cfg: &PerturbationConfig,
) -> Result<(f64, Vec<f64>), ExplainError> {
    let d = phi.d();
    if k_max == 0 || k_max > d {
        return Err(ExplainError::BadK { k: k_max, d });
    }
    let curve = (1..=k_max)
        .map(|k| fudge_score(model, standardizer, x, &top_k_mask(phi, k)?, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((curve.iter().sum(), curve))
}

/// Jaccard index of the top-K feature sets of two attributions.
pub fn jaccard_rankings(phi_a: &[f64], phi_b: &[f64], k: usize) -> f64 {
    let a = top_k_set(phi_a, k);
    let b = top_k_set(phi_b, k);
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

fn check_len(expected: usize, found: usize) -> Result<(), ExplainError> {
    if expected != found {
        return Err(ExplainError::Length { expected, found });
    }
    Ok(())
}

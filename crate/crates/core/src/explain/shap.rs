//! Kernel SHAP solved over the full coalition lattice.
//!
//! With `d` small enough to enumerate all `2^d` coalitions, the Shapley
//! kernel regression has no sampling error: the weighted least-squares
//! solution under the efficiency constraint equals the exact Shapley values
//! of the interventional value function
//! `v(S) = mean_b f(x_S, b_{not S})` over the background sample.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Attribution, ExplainError};
use crate::model::ProbabilityModel;

pub const KERNEL_SHAP_ID: &str = "kernel_shap";

/// Upper bound on `d` for exact enumeration (65 536 coalitions).
pub const MAX_EXACT_FEATURES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelShapResult {
    pub attribution: Attribution,
    /// `v(∅)`, the mean prediction over the background.
    pub base_value: f64,
    /// `v(all)`, the prediction at `x`.
    pub prediction: f64,
}

/// Draws up to `n` distinct rows with a fixed seed, kept in row order.
pub fn sample_background(rows: &[Vec<f64>], n: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= n {
        return rows.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, rows.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| rows[i].clone()).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coalition values for every subset bitmask `0..2^d`.
fn coalition_values(model: &dyn ProbabilityModel, x: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let d = x.len();
    let mut z = vec![0.0; d];
    (0..1usize << d)
        .map(|s| {
            let sum: f64 = background
                .iter()
                .map(|b| {
                    for j in 0..d {
                        z[j] = if s >> j & 1 == 1 { x[j] } else { b[j] };
                    }
                    model.probability(&z)
                })
                .sum();
            sum / background.len() as f64
        })
        .collect()
}

pub fn explain_kernel_shap(
    model: &dyn ProbabilityModel,
    x: &[f64],
    target: u64,
    background: &[Vec<f64>],
) -> Result<KernelShapResult, ExplainError> {
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeatures {
            max: MAX_EXACT_FEATURES,
            found: d,
        });
    }
    if d == 0 {
        return Err(ExplainError::Length { expected: 1, found: 0 });
    }
    if let Some(b) = background.iter().find(|b| b.len() != d) {
        return Err(ExplainError::Length {
            expected: d,
            found: b.len(),
        });
    }

    let v = coalition_values(model, x, background);
    let full = (1usize << d) - 1;
    let base = v[0];
    let prediction = v[full];
    let total = prediction - base;

    let phi = if d == 1 {
        vec![total]
    } else {
        solve_constrained(d, &v, total)?
    };
    Ok(KernelShapResult {
        attribution: Attribution::new(phi, KERNEL_SHAP_ID, target)?,
        base_value: base,
        prediction,
    })
}

/// Minimises `Σ_S k(S) (v(S) - v(∅) - Σ_{i∈S} φ_i)²` subject to
/// `Σ φ = v(all) - v(∅)` by eliminating the last coordinate.
fn solve_constrained(d: usize, v: &[f64], total: f64) -> Result<Vec<f64>, ExplainError> {
    let last = d - 1;
    let m = d - 1;
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut row = vec![0.0; m];
    let full = (1usize << d) - 1;
    for s in 1..full {
        let size = s.count_ones() as usize;
        let weight = (d - 1) as f64 / (binomial(d, size) * size as f64 * (d - size) as f64);
        let has_last = (s >> last & 1) as f64;
        for (j, r) in row.iter_mut().enumerate() {
            *r = (s >> j & 1) as f64 - has_last;
        }
        let t = v[s] - v[0] - has_last * total;
        for a in 0..m {
            if row[a] == 0.0 {
                continue;
            }
            rhs[a] += weight * row[a] * t;
            for b in 0..m {
                gram[(a, b)] += weight * row[a] * row[b];
            }
        }
    }
    let sol = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or(ExplainError::Singular)?;
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FnModel;

    /// Shapley values from the subset formula, independent of the kernel solve.
    fn brute_force(model: &dyn ProbabilityModel, x: &[f64], bg: &[Vec<f64>]) -> Vec<f64> {
        let d = x.len();
        let v = coalition_values(model, x, bg);
        let fact = |n: usize| (1..=n).fold(1.0, |a, k| a * k as f64);
        (0..d)
            .map(|i| {
                (0..1usize << d)
                    .filter(|s| s >> i & 1 == 0)
                    .map(|s| {
                        let k = s.count_ones() as usize;
                        fact(k) * fact(d - k - 1) / fact(d) * (v[s | 1 << i] - v[s])
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_subset_formula_on_interactions() {
        let m = FnModel(|x: &[f64]| {
            let z = 0.8 * x[0] * x[1] - 0.3 * x[2] + 0.2 * x[3].sin() + 0.1 * x[0] * x[2] * x[3];
            1.0 / (1.0 + (-z).exp())
        });
        let bg = vec![
            vec![0.0, 1.0, -1.0, 0.5],
            vec![1.0, -0.5, 0.3, 0.0],
            vec![-0.7, 0.2, 0.9, -1.2],
        ];
        let x = [1.2, -0.4, 0.6, 2.0];
        let r = explain_kernel_shap(&m, &x, 0, &bg).unwrap();
        let oracle = brute_force(&m, &x, &bg);
        for (a, b) in r.attribution.phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let sum: f64 = r.attribution.phi.iter().sum();
        assert!((sum + r.base_value - m.probability(&x)).abs() < 1e-12);
    }

    #[test]
    fn additive_model_closed_form() {
        let g1 = |v: f64| 0.1 * v;
        let g2 = |v: f64| 0.05 * v * v;
        let m = FnModel(move |x: &[f64]| g1(x[0]) + g2(x[1]));
        let bg = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![1.0, 3.0]];
        let x = [1.5, 2.0];
        let r = explain_kernel_shap(&m, &x, 0, &bg).unwrap();
        let mean = |f: &dyn Fn(f64) -> f64, j: usize| bg.iter().map(|b| f(b[j])).sum::<f64>() / 3.0;
        assert!((r.attribution.phi[0] - (g1(1.5) - mean(&g1, 0))).abs() < 1e-12);
        assert!((r.attribution.phi[1] - (g2(2.0) - mean(&g2, 1))).abs() < 1e-12);
    }

    #[test]
    fn instance_equal_to_background_gives_zero() {
        let m = FnModel(|x: &[f64]| 0.3 + 0.1 * x[0] - 0.2 * x[1] * x[2]);
        let x = vec![1.0, 2.0, 3.0];
        let r = explain_kernel_shap(&m, &x, 0, std::slice::from_ref(&x)).unwrap();
        assert!(r.attribution.phi.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn symmetry_axiom() {
        let m = FnModel(|x: &[f64]| 0.5 + 0.1 * (x[0] + x[1]) + 0.05 * x[0] * x[1]);
        let bg = vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
        let r = explain_kernel_shap(&m, &[2.0, 2.0], 0, &bg).unwrap();
        assert!((r.attribution.phi[0] - r.attribution.phi[1]).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let m = FnModel(|_: &[f64]| 0.5);
        assert_eq!(
            explain_kernel_shap(&m, &[1.0], 0, &[]).unwrap_err(),
            ExplainError::EmptyBackground
        );
        let wide = vec![0.0; MAX_EXACT_FEATURES + 1];
        assert!(matches!(
            explain_kernel_shap(&m, &wide, 0, std::slice::from_ref(&wide)),
            Err(ExplainError::TooManyFeatures { .. })
        ));
    }

    #[test]
    fn single_feature() {
        let m = FnModel(|x: &[f64]| 0.2 * x[0]);
        let r = explain_kernel_shap(&m, &[3.0], 0, &[vec![1.0]]).unwrap();
        assert!((r.attribution.phi[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn background_sampling_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let a = sample_background(&rows, 10, 3);
        assert_eq!(a.len(), 10);
        assert_eq!(a, sample_background(&rows, 10, 3));
        assert_eq!(sample_background(&rows, 100, 3).len(), 50);
    }
}

//! Small descriptive statistics used across the crate.

use serde::{Deserialize, Serialize};

/// Linear-interpolation percentile between closest ranks ("type 7").
///
/// `q` is in `[0, 1]`. `sorted` must be ascending and non-empty.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sorts a copy of `values` and returns the `q` percentile.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Equal-width histogram over `[min, max]`. The last bin is closed on the
/// right so every value lands in exactly one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        if values.is_empty() {
            return Self {
                edges: vec![0.0, 0.0],
                counts: vec![0],
            };
        }
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if min == max {
            return Self {
                edges: vec![min, max],
                counts: vec![values.len() as u64],
            };
        }
        let width = (max - min) / bins as f64;
        let edges = (0..=bins)
            .map(|i| if i == bins { max } else { min + width * i as f64 })
            .collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            counts[Self::bin_index(v, min, width, bins)] += 1;
        }
        Self { edges, counts }
    }

    fn bin_index(v: f64, min: f64, width: f64, bins: usize) -> usize {
        (((v - min) / width).floor() as usize).min(bins - 1)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.25), 25.75);
        assert_eq!(percentile(&v, 0.75), 75.25);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
    }

    #[test]
    fn percentile_single_value() {
        assert_eq!(percentile(&[4.0], 0.25), 4.0);
    }

    #[test]
    fn histogram_conserves_counts() {
        let v = [0.0, 1.0, 1.0, 2.5, 10.0, 10.0];
        let h = Histogram::build(&v, 4);
        assert_eq!(h.total(), 6);
        assert_eq!(h.counts, vec![3, 1, 0, 2]);
        assert_eq!(h.edges.len(), 5);
        let flat = Histogram::build(&[3.0; 5], 10);
        assert_eq!(flat.counts, vec![5]);
    }

    #[test]
    fn std_dev_population() {
        assert!((std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]) - 2.0).abs() < 1e-12);
    }
}

//! Seeded generator for a synthetic cohort with the diabetes-screening layout.
//!
//! Class sizes, value ranges, zero-coded missing values and class-conditional
//! means follow the published summary statistics of the public screening
//! table. Features are drawn independently given the class, so the cohort is
//! only a stand-in for demos and tests; it carries no real patients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::data::{Dataset, PatientRecord};
use crate::schema::FeatureSchema;

/// Positive share in the public table (268 of 768).
const POSITIVE_SHARE: f64 = 268.0 / 768.0;

struct Marginal {
    /// (mean, sd) for class 0 and class 1.
    params: [(f64, f64); 2],
    zero_share: f64,
    lo: f64,
    hi: f64,
    decimals: i32,
    log_normal: bool,
}

const MARGINALS: [Marginal; 8] = [
    // Pregnancies
    Marginal { params: [(3.3, 3.0), (4.9, 3.7)], zero_share: 0.0, lo: 0.0, hi: 17.0, decimals: 0, log_normal: false },
    // Glucose
    Marginal { params: [(110.0, 24.0), (142.0, 29.0)], zero_share: 0.0065, lo: 44.0, hi: 199.0, decimals: 0, log_normal: false },
    // BloodPressure
    Marginal { params: [(70.9, 11.9), (75.3, 12.3)], zero_share: 0.0456, lo: 24.0, hi: 122.0, decimals: 0, log_normal: false },
    // SkinThickness
    Marginal { params: [(27.2, 10.0), (33.0, 10.3)], zero_share: 0.2956, lo: 7.0, hi: 99.0, decimals: 0, log_normal: false },
    // Insulin
    Marginal { params: [(130.0, 100.0), (206.0, 132.0)], zero_share: 0.487, lo: 14.0, hi: 846.0, decimals: 0, log_normal: true },
    // BMI
    Marginal { params: [(30.9, 6.5), (35.4, 6.6)], zero_share: 0.0143, lo: 18.2, hi: 67.1, decimals: 1, log_normal: false },
    // DiabetesPedigreeFunction
    Marginal { params: [(0.43, 0.30), (0.55, 0.37)], zero_share: 0.0, lo: 0.078, hi: 2.42, decimals: 3, log_normal: true },
    // Age
    Marginal { params: [(31.2, 11.7), (37.1, 11.0)], zero_share: 0.0, lo: 21.0, hi: 81.0, decimals: 0, log_normal: false },
];

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

fn draw(m: &Marginal, class: usize, rng: &mut ChaCha8Rng) -> f64 {
    if m.zero_share > 0.0 && rng.random::<f64>() < m.zero_share {
        return 0.0;
    }
    let (mean, sd) = m.params[class];
    let raw = if m.log_normal {
        // Moment-matched log-normal.
        let s2 = (1.0 + (sd / mean).powi(2)).ln();
        LogNormal::new(mean.ln() - 0.5 * s2, s2.sqrt())
            .expect("valid log-normal")
            .sample(rng)
    } else {
        Normal::new(mean, sd).expect("valid normal").sample(rng)
    };
    round_to(raw.clamp(m.lo, m.hi), m.decimals)
}

/// Draws `n` records (class-1 share matching the public table) using the
/// Pima schema. Record ids are row indices.
pub fn pima_like(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = (n as f64 * POSITIVE_SHARE).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n_pos)).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| PatientRecord {
            id: i as u64,
            values: MARGINALS
                .iter()
                .map(|m| draw(m, label as usize, &mut rng))
                .collect(),
            label: Some(label),
        })
        .collect();
    Dataset::new(FeatureSchema::pima(), records).expect("generated values are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let a = pima_like(768, 7);
        assert_eq!(a.len(), 768);
        let pos = a.records().iter().filter(|r| r.label == Some(1)).count();
        assert_eq!(pos, 268);
        let b = pima_like(768, 7);
        assert_eq!(a.records(), b.records());
        for (j, m) in MARGINALS.iter().enumerate() {
            let s = a.summary(j);
            assert!(s.max <= m.hi);
            assert!(s.min >= 0.0);
        }
    }
}

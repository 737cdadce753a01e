use std::sync::OnceLock;

use proptest::prelude::*;
use riskscope_core::model::{fit, stratified_split, train, SplitConfig, TrainConfig};
use riskscope_core::stats::Histogram;
use riskscope_core::{synthetic, ProbabilityModel, RiskModel};

fn small_model() -> &'static RiskModel {
    static MODEL: OnceLock<RiskModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = TrainConfig {
            n_trees: 20,
            ..TrainConfig::default()
        };
        fit(&synthetic::pima_like(300, 9), &cfg).unwrap()
    })
}

fn feature_vector() -> impl Strategy<Value = Vec<f64>> {
    (
        0.0..17.0f64,
        0.0..200.0f64,
        0.0..122.0f64,
        0.0..99.0f64,
        0.0..846.0f64,
        0.0..67.0f64,
        0.07..2.5f64,
        21.0..81.0f64,
    )
        .prop_map(|(a, b, c, d, e, f, g, h)| vec![a, b, c, d, e, f, g, h])
}

proptest! {
    #[test]
    fn split_keeps_class_ratio(labels in prop::collection::vec(0u8..2, 4..400), holdout in 0.1..0.9f64, seed: u64) {
        let n1 = labels.iter().filter(|&&l| l == 1).count();
        let n0 = labels.len() - n1;
        prop_assume!(n0 >= 2 && n1 >= 2);
        let Ok((train_rows, test_rows)) = stratified_split(&labels, SplitConfig { holdout, seed }) else {
            return Ok(());
        };
        prop_assert_eq!(train_rows.len() + test_rows.len(), labels.len());
        for (class, n) in [(0u8, n0), (1u8, n1)] {
            let in_test = test_rows.iter().filter(|&&i| labels[i] == class).count() as f64;
            prop_assert!((in_test - holdout * n as f64).abs() <= 1.0);
        }
        let mut all: Vec<usize> = train_rows.iter().chain(&test_rows).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
    }

    #[test]
    fn class_follows_half_threshold(x in feature_vector()) {
        let m = small_model();
        let p = m.predict_proba(&x).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(m.predict(&x).unwrap(), u8::from(p >= 0.5));
        prop_assert_eq!(m.predict_class(&x), u8::from(p >= 0.5));
    }

    #[test]
    fn histogram_places_every_value_once(values in prop::collection::vec(-1e3..1e3f64, 1..300), bins in 1usize..40) {
        let h = Histogram::build(&values, bins);
        prop_assert_eq!(h.total(), values.len() as u64);
        prop_assert_eq!(h.edges.len(), h.counts.len() + 1);
        for &v in &values {
            let hits = (0..h.counts.len())
                .filter(|&i| {
                    let last = i + 1 == h.counts.len();
                    h.edges[i] <= v && (v < h.edges[i + 1] || (last && v <= h.edges[i + 1]))
                })
                .count();
            prop_assert_eq!(hits, 1);
        }
    }
}

#[test]
fn retraining_is_byte_identical() {
    let data = synthetic::pima_like(240, 3);
    let cfg = TrainConfig {
        n_trees: 15,
        ..TrainConfig::default()
    };
    let a = train(&data, &cfg, SplitConfig::default()).unwrap();
    let b = train(&data, &cfg, SplitConfig::default()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn saved_model_predicts_identically() {
    let m = small_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = RiskModel::load(&path).unwrap();
    for r in synthetic::pima_like(50, 4).records() {
        assert_eq!(m.probability(&r.values), back.probability(&r.values));
    }
}

#[test]
fn wrong_length_is_rejected() {
    assert!(small_model().predict_proba(&[1.0, 2.0]).is_err());
}
